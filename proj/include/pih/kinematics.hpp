#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include "json.hpp"

#include "pih/quatpose.hpp"

namespace pih {

inline constexpr int kNumJoints = 6;

using JointConfig = std::array<double, kNumJoints>;

/// Standard Denavit-Hartenberg row: Rz(theta) Tz(d) Tx(a) Rx(alpha).
struct DHRow {
  double a = 0.0;
  double d = 0.0;
  double alpha = 0.0;
  double theta_offset = 0.0;
};

struct JointLimit {
  double lower = -2.0 * std::numbers::pi;
  double upper = 2.0 * std::numbers::pi;
};

/// Initial joint configuration (67.5, -90, 90, -90, -90, 0) deg.
inline JointConfig initial_joints() {
  return {67.5 * kDegToRad, -90.0 * kDegToRad, 90.0 * kDegToRad,
          -90.0 * kDegToRad, -90.0 * kDegToRad, 0.0};
}

struct RobotModel {
  std::array<DHRow, kNumJoints> dh;
  std::array<JointLimit, kNumJoints> joint_limits;
  Pose tcp_offset;

  /// UR10e nominal DH table with a 0.15 m peg along the flange z axis.
  /// The peg frame is flipped about x so that a peg pointing straight down
  /// has identity orientation in the base frame.
  static RobotModel ur10e() {
    constexpr double half_pi = std::numbers::pi / 2.0;
    RobotModel m;
    m.dh = {DHRow{0.0, 0.1807, half_pi, 0.0},
            DHRow{-0.6127, 0.0, 0.0, 0.0},
            DHRow{-0.57155, 0.0, 0.0, 0.0},
            DHRow{0.0, 0.17415, half_pi, 0.0},
            DHRow{0.0, 0.11985, -half_pi, 0.0},
            DHRow{0.0, 0.11655, 0.0, 0.0}};
    m.tcp_offset = Pose{Vec3(0.0, 0.0, 0.15), quat_from_rpy(std::numbers::pi, 0.0, 157.5 * kDegToRad)};
    return m;
  }

  void validate() const {
    for (const auto& l : joint_limits) {
      if (!(l.lower < l.upper)) throw std::invalid_argument("robot model: joint limit lower must be < upper");
    }
    for (const auto& r : dh) {
      if (!std::isfinite(r.a) || !std::isfinite(r.d) || !std::isfinite(r.alpha) || !std::isfinite(r.theta_offset))
        throw std::invalid_argument("robot model: non-finite DH parameter");
    }
    if (std::abs(tcp_offset.orientation.norm() - 1.0) > 1e-9)
      throw std::invalid_argument("robot model: tcp_offset orientation is not a unit quaternion");
  }
};

inline Eigen::Matrix4d dh_transform(const DHRow& row, double joint) {
  const double th = joint + row.theta_offset;
  const double ct = std::cos(th), st = std::sin(th);
  const double ca = std::cos(row.alpha), sa = std::sin(row.alpha);
  Eigen::Matrix4d t;
  t << ct, -st * ca, st * sa, row.a * ct,
      st, ct * ca, -ct * sa, row.a * st,
      0.0, sa, ca, row.d,
      0.0, 0.0, 0.0, 1.0;
  return t;
}

/// Peg-tip pose in the robot base frame.
inline Pose forward_kinematics(const RobotModel& model, const JointConfig& joints) {
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  for (int i = 0; i < kNumJoints; ++i) t = t * dh_transform(model.dh[i], joints[i]);
  Eigen::Matrix4d tool = Eigen::Matrix4d::Identity();
  tool.topLeftCorner<3, 3>() = quat_to_matrix(model.tcp_offset.orientation);
  tool.topRightCorner<3, 1>() = model.tcp_offset.position;
  t = t * tool;
  return {t.topRightCorner<3, 1>(), quat_from_matrix(t.topLeftCorner<3, 3>())};
}

inline JointConfig clamp_joints(const RobotModel& model, const JointConfig& joints) {
  JointConfig out;
  for (int i = 0; i < kNumJoints; ++i)
    out[i] = std::clamp(joints[i], model.joint_limits[i].lower, model.joint_limits[i].upper);
  return out;
}

inline bool within_limits(const RobotModel& model, const JointConfig& joints) {
  for (int i = 0; i < kNumJoints; ++i)
    if (joints[i] < model.joint_limits[i].lower || joints[i] > model.joint_limits[i].upper) return false;
  return true;
}

// JSON schema:
// {"dh": [[a,d,alpha,theta_offset] x6], "joint_limits": [[lo,hi] x6],
//  "tcp_offset": {"position": [x,y,z], "orientation": [w,x,y,z]}}
inline nlohmann::json robot_model_to_json(const RobotModel& m) {
  nlohmann::json j;
  j["dh"] = nlohmann::json::array();
  for (const auto& r : m.dh) j["dh"].push_back({r.a, r.d, r.alpha, r.theta_offset});
  j["joint_limits"] = nlohmann::json::array();
  for (const auto& l : m.joint_limits) j["joint_limits"].push_back({l.lower, l.upper});
  const auto& p = m.tcp_offset.position;
  const auto& q = m.tcp_offset.orientation;
  j["tcp_offset"] = {{"position", {p.x(), p.y(), p.z()}}, {"orientation", {q.w, q.x, q.y, q.z}}};
  return j;
}

inline RobotModel robot_model_from_json(const nlohmann::json& j) {
  RobotModel m = RobotModel::ur10e();
  if (j.contains("dh")) {
    const auto& dh = j.at("dh");
    if (!dh.is_array() || dh.size() != kNumJoints) throw std::invalid_argument("robot model: 'dh' must have six rows");
    for (int i = 0; i < kNumJoints; ++i) {
      const auto& r = dh[i];
      if (!r.is_array() || r.size() != 4) throw std::invalid_argument("robot model: each 'dh' row needs 4 values");
      m.dh[i] = DHRow{r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>()};
    }
  }
  if (j.contains("joint_limits")) {
    const auto& jl = j.at("joint_limits");
    if (!jl.is_array() || jl.size() != kNumJoints)
      throw std::invalid_argument("robot model: 'joint_limits' must have six rows");
    for (int i = 0; i < kNumJoints; ++i) m.joint_limits[i] = {jl[i].at(0).get<double>(), jl[i].at(1).get<double>()};
  }
  if (j.contains("tcp_offset")) {
    const auto& t = j.at("tcp_offset");
    if (t.contains("position")) {
      const auto& p = t.at("position");
      m.tcp_offset.position = Vec3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
    }
    if (t.contains("orientation")) {
      const auto& q = t.at("orientation");
      m.tcp_offset.orientation =
          Quaternion{q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(), q.at(3).get<double>()}
              .normalized();
    }
  }
  m.validate();
  return m;
}

inline RobotModel load_robot_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open robot model file: " + path);
  return robot_model_from_json(nlohmann::json::parse(in));
}

}  // namespace pih
