#pragma once

#include <Eigen/Core>
#include <cmath>
#include <numbers>

namespace pih {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Unit quaternion, Hamilton convention, scalar part first.
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion identity() { return {}; }

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Vec3 vec() const { return {x, y, z}; }

  Quaternion normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }

  Quaternion operator-() const { return {-w, -x, -y, -z}; }

  bool operator==(const Quaternion&) const = default;
};

struct Pose {
  Vec3 position = Vec3::Zero();
  Quaternion orientation;
};

inline constexpr double kDegToRad = std::numbers::pi / 180.0;

// Below this vector-part norm the log map returns zero.
inline constexpr double kLogEpsilon = 1e-12;

/// Flips sign so that w >= 0. q and -q encode the same rotation.
inline Quaternion canonicalize(const Quaternion& q) { return q.w < 0.0 ? -q : q; }

inline Quaternion quat_conjugate(const Quaternion& q) { return {q.w, -q.x, -q.y, -q.z}; }

/// Hamilton product a*b, renormalized.
inline Quaternion quat_multiply(const Quaternion& a, const Quaternion& b) {
  Quaternion r{a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
               a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
               a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
               a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
  return r.normalized();
}

inline Quaternion quat_from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 u = axis.normalized();
  const double s = std::sin(0.5 * angle);
  return Quaternion{std::cos(0.5 * angle), u.x() * s, u.y() * s, u.z() * s}.normalized();
}

/// Rotation composed as Rz(yaw) * Ry(pitch) * Rx(roll).
inline Quaternion quat_from_rpy(double roll, double pitch, double yaw) {
  const double cr = std::cos(0.5 * roll), sr = std::sin(0.5 * roll);
  const double cp = std::cos(0.5 * pitch), sp = std::sin(0.5 * pitch);
  const double cy = std::cos(0.5 * yaw), sy = std::sin(0.5 * yaw);
  Quaternion q{cr * cp * cy + sr * sp * sy,
               sr * cp * cy - cr * sp * sy,
               cr * sp * cy + sr * cp * sy,
               cr * cp * sy - sr * sp * cy};
  return q.normalized();
}

inline Mat3 quat_to_matrix(const Quaternion& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return m;
}

/// Shepperd's method; picks the largest diagonal term for stability.
inline Quaternion quat_from_matrix(const Mat3& m) {
  const double trace = m.trace();
  Quaternion q;
  if (trace > 0.0) {
    const double s = 2.0 * std::sqrt(1.0 + trace);
    q = {0.25 * s, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s, (m(1, 0) - m(0, 1)) / s};
  } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
    q = {(m(2, 1) - m(1, 2)) / s, 0.25 * s, (m(0, 1) + m(1, 0)) / s, (m(0, 2) + m(2, 0)) / s};
  } else if (m(1, 1) > m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2));
    q = {(m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, 0.25 * s, (m(1, 2) + m(2, 1)) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1));
    q = {(m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s, (m(1, 2) + m(2, 1)) / s, 0.25 * s};
  }
  return canonicalize(q.normalized());
}

inline Vec3 quat_rotate(const Quaternion& q, const Vec3& v) { return quat_to_matrix(q) * v; }

/// Log map of a unit quaternion: axis * arccos(w), after w >= 0 canonicalization.
/// The result norm is half the rotation angle and lies in [0, pi/2].
inline Vec3 quat_log(const Quaternion& q) {
  const Quaternion c = canonicalize(q);
  const Vec3 u = c.vec();
  const double un = u.norm();
  if (un <= kLogEpsilon) return Vec3::Zero();
  // atan2 is the well-conditioned form of arccos(w) for unit q.
  return u / un * std::atan2(un, c.w);
}

/// ||log(q_hole * conj(q_peg))||, in [0, pi/2].
inline double orientation_distance(const Quaternion& q_hole, const Quaternion& q_peg) {
  return quat_log(quat_multiply(q_hole, quat_conjugate(q_peg))).norm();
}

inline double position_distance(const Vec3& p_hole, const Vec3& p_peg) { return (p_hole - p_peg).norm(); }

inline double pose_distance(double d_q, double d_p) { return std::sqrt(d_q * d_q + d_p * d_p); }

/// a * b as rigid transforms.
inline Pose compose(const Pose& a, const Pose& b) {
  return {a.position + quat_rotate(a.orientation, b.position), quat_multiply(a.orientation, b.orientation)};
}

inline Pose inverse(const Pose& p) {
  const Quaternion qi = quat_conjugate(p.orientation);
  return {-quat_rotate(qi, p.position), qi};
}

}  // namespace pih
