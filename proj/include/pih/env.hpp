#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pih/kinematics.hpp"
#include "pih/quatpose.hpp"

namespace pih {

inline constexpr int kObsDim = 13;
inline constexpr int kActDim = kNumJoints;

// Sparse reward tiers and their thresholds.
inline constexpr double kAlignThreshold = 0.05;    // rad, on d_q
inline constexpr double kInsertThreshold = 0.003;  // m, on d_p
inline constexpr double kAlignReward = 2.6;
inline constexpr double kInsertReward = 10.0;

using Action = std::array<double, kActDim>;
using Observation = Eigen::Matrix<double, kObsDim, 1>;

struct Interval {
  double min = 0.0;
  double max = 0.0;
};

/// Hole pose randomization, per axis, relative to the nominal hole pose.
struct RandomizationRange {
  // Order: x, y, z (m), roll, pitch, yaw (rad).
  std::array<Interval, 6> axes{Interval{-0.2, 0.2},
                               Interval{-0.26, 0.26},
                               Interval{0.0, 0.16},
                               Interval{-25.0 * kDegToRad, 25.0 * kDegToRad},
                               Interval{-25.0 * kDegToRad, 25.0 * kDegToRad},
                               Interval{-25.0 * kDegToRad, 25.0 * kDegToRad}};
  std::array<bool, 6> enabled{true, true, true, true, true, true};

  static constexpr std::array<const char*, 6> kAxisNames{"x", "y", "z", "roll", "pitch", "yaw"};

  static RandomizationRange only(int axis) {
    RandomizationRange r;
    r.enabled.fill(false);
    r.enabled.at(axis) = true;
    return r;
  }

  static RandomizationRange none() {
    RandomizationRange r;
    r.enabled.fill(false);
    return r;
  }

  void validate() const {
    for (std::size_t i = 0; i < axes.size(); ++i)
      if (!(axes[i].min <= axes[i].max))
        throw std::invalid_argument(std::string("env.ranges.") + kAxisNames[i] + " min must be <= max");
  }

  /// Offset of `hole` from `base` per axis, and whether it falls inside every enabled interval
  /// (disabled axes must be zero).
  bool contains(const Pose& base, const Pose& hole, double tol = 1e-9) const;
};

/// Uniform sample on every enabled axis, composed onto `base`. Disabled axes contribute zero.
template <typename Rng>
Pose randomize_hole_pose(Rng& rng, const RandomizationRange& range, const Pose& base) {
  std::array<double, 6> s{};
  for (int i = 0; i < 6; ++i) {
    if (!range.enabled[i]) continue;
    std::uniform_real_distribution<double> u(range.axes[i].min, range.axes[i].max);
    s[i] = u(rng);
  }
  Pose p = base;
  p.position += Vec3(s[0], s[1], s[2]);
  p.orientation = quat_multiply(base.orientation, quat_from_rpy(s[3], s[4], s[5]));
  return p;
}

inline bool RandomizationRange::contains(const Pose& base, const Pose& hole, double tol) const {
  const Vec3 dp = hole.position - base.position;
  const Quaternion rel = canonicalize(quat_multiply(quat_conjugate(base.orientation), hole.orientation));
  const Mat3 m = quat_to_matrix(rel);
  // Recover roll/pitch/yaw of Rz*Ry*Rx.
  const double pitch = std::asin(std::clamp(-m(2, 0), -1.0, 1.0));
  const double roll = std::atan2(m(2, 1), m(2, 2));
  const double yaw = std::atan2(m(1, 0), m(0, 0));
  const std::array<double, 6> off{dp.x(), dp.y(), dp.z(), roll, pitch, yaw};
  for (int i = 0; i < 6; ++i) {
    const double lo = enabled[i] ? axes[i].min : 0.0;
    const double hi = enabled[i] ? axes[i].max : 0.0;
    if (off[i] < lo - tol || off[i] > hi + tol) return false;
  }
  return true;
}

struct EnvConfig {
  int num_envs = 256;
  int horizon = 256;
  std::uint64_t seed = 0;
  RandomizationRange range;
  Pose nominal_hole{Vec3(-0.13, -0.70, 0.20), Quaternion::identity()};
  std::array<double, kActDim> action_span{1.5, 1.5, 1.5, 1.5, 1.5, 1.5};  // rad per unit action
  double rate_limit = 0.05;                                                // rad per step per joint

  void validate() const {
    if (num_envs < 1) throw std::invalid_argument("env.num_envs must be >= 1");
    if (horizon < 1) throw std::invalid_argument("env.horizon must be >= 1");
    if (!(rate_limit > 0.0)) throw std::invalid_argument("env.rate_limit must be > 0");
    for (double s : action_span)
      if (!(s > 0.0)) throw std::invalid_argument("env.action_span entries must be > 0");
    range.validate();
  }
};

struct RewardTerms {
  double r_dense = 0.0;
  double r_sparse = 0.0;
  double d_q = 0.0;
  double d_p = 0.0;

  double total() const { return r_dense + r_sparse; }
  bool aligned() const { return d_q < kAlignThreshold; }
  bool inserted() const { return d_q < kAlignThreshold && d_p < kInsertThreshold; }
};

inline double sparse_reward(double d_q, double d_p) {
  if (d_q < kAlignThreshold && d_p < kInsertThreshold) return kInsertReward;
  if (d_q < kAlignThreshold) return kAlignReward;
  return 0.0;
}

inline double dense_reward(double d_q, double d_p) { return 1.0 - std::tanh(pose_distance(d_q, d_p)); }

inline RewardTerms compute_reward(const Pose& peg, const Pose& hole) {
  RewardTerms t;
  t.d_q = orientation_distance(hole.orientation, peg.orientation);
  t.d_p = position_distance(hole.position, peg.position);
  t.r_dense = dense_reward(t.d_q, t.d_p);
  t.r_sparse = sparse_reward(t.d_q, t.d_p);
  return t;
}

/// Affine map of a [-1,1] action onto joint targets around the initial configuration,
/// rate-limited from `current` and clamped into the joint limits.
inline JointConfig apply_action(const JointConfig& current, const Action& action, const RobotModel& model,
                                const std::array<double, kActDim>& span, double rate_limit) {
  const JointConfig init = initial_joints();
  JointConfig next;
  for (int i = 0; i < kNumJoints; ++i) {
    const double target = init[i] + std::clamp(action[i], -1.0, 1.0) * span[i];
    next[i] = current[i] + std::clamp(target - current[i], -rate_limit, rate_limit);
  }
  return clamp_joints(model, next);
}

struct EnvState {
  JointConfig joints = initial_joints();
  Pose hole_pose;
  Action last_action{};
  int step_count = 0;
  bool succeeded = false;
  bool aligned = false;
  bool done = false;
  RewardTerms last_terms;
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
  RewardTerms info;
};

inline Observation make_observation(const EnvState& s) {
  Observation o;
  o.segment<3>(0) = s.hole_pose.position;
  const Quaternion q = s.hole_pose.orientation;
  o.segment<4>(3) << q.w, q.x, q.y, q.z;
  for (int i = 0; i < kActDim; ++i) o[7 + i] = s.last_action[i];
  return o;
}

/// N independent peg-in-hole environments sharing one robot model and configuration.
/// Each environment draws hole poses from its own RNG stream derived from (seed, index, reset count).
class VecEnv {
 public:
  VecEnv(RobotModel model, EnvConfig config) : model_(std::move(model)), config_(std::move(config)) {
    config_.validate();
    model_.validate();
    states_.resize(config_.num_envs);
    reset_counts_.assign(config_.num_envs, 0);
  }

  int size() const { return static_cast<int>(states_.size()); }
  const EnvConfig& config() const { return config_; }
  const RobotModel& model() const { return model_; }
  const EnvState& state(int i) const { return states_.at(i); }

  /// Overrides the hole pose of one environment, keeping the rest of its state.
  void set_hole_pose(int i, const Pose& hole) {
    check_index(i);
    states_[i].hole_pose = hole;
    states_[i].last_terms = compute_reward(forward_kinematics(model_, states_[i].joints), hole);
  }

  Observation reset(int i) {
    check_index(i);
    std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(reset_counts_[i]++)};
    std::mt19937_64 rng(seq);
    EnvState& s = states_[i];
    s = EnvState{};
    s.hole_pose = randomize_hole_pose(rng, config_.range, config_.nominal_hole);
    s.last_terms = compute_reward(forward_kinematics(model_, s.joints), s.hole_pose);
    s.aligned = s.last_terms.aligned();
    return make_observation(s);
  }

  std::vector<Observation> reset_all() {
    std::vector<Observation> obs;
    obs.reserve(states_.size());
    for (int i = 0; i < size(); ++i) obs.push_back(reset(i));
    return obs;
  }

  /// Advances environment i. Finished environments hold their state and return zero reward.
  StepResult step_one(int i, const Action& action) {
    check_index(i);
    EnvState& s = states_[i];
    StepResult r;
    if (s.done) {
      r.obs = make_observation(s);
      r.reward = 0.0;
      r.done = true;
      r.info = s.last_terms;
      return r;
    }
    Action a;
    for (int k = 0; k < kActDim; ++k) a[k] = std::clamp(action[k], -1.0, 1.0);
    s.joints = apply_action(s.joints, a, model_, config_.action_span, config_.rate_limit);
    s.last_action = a;
    ++s.step_count;
    const RewardTerms t = compute_reward(forward_kinematics(model_, s.joints), s.hole_pose);
    s.last_terms = t;
    s.aligned = t.aligned();
    s.succeeded = t.inserted();
    s.done = s.succeeded || s.step_count >= config_.horizon;
    r.obs = make_observation(s);
    r.reward = t.r_dense + t.r_sparse;
    r.done = s.done;
    r.info = t;
    return r;
  }

  /// Steps every environment, results in index order.
  std::vector<StepResult> step(const std::vector<Action>& actions) {
    if (static_cast<int>(actions.size()) != size())
      throw std::invalid_argument("step: expected " + std::to_string(size()) + " actions, got " +
                                  std::to_string(actions.size()));
    std::vector<StepResult> out(actions.size());
    for (int i = 0; i < size(); ++i) out[i] = step_one(i, actions[i]);
    return out;
  }

  bool all_done() const {
    for (const auto& s : states_)
      if (!s.done) return false;
    return true;
  }

  int num_succeeded() const {
    int n = 0;
    for (const auto& s : states_) n += s.succeeded ? 1 : 0;
    return n;
  }

 private:
  void check_index(int i) const {
    if (i < 0 || i >= size()) throw std::out_of_range("env index " + std::to_string(i) + " out of range");
  }

  RobotModel model_;
  EnvConfig config_;
  std::vector<EnvState> states_;
  std::vector<std::uint64_t> reset_counts_;
};

inline double success_percentage(long n_success, long n_total) {
  if (n_total <= 0) throw std::invalid_argument("success_percentage: n_total must be > 0");
  if (n_success < 0 || n_success > n_total)
    throw std::invalid_argument("success_percentage: n_success must be in [0, n_total]");
  return 100.0 * static_cast<double>(n_success) / static_cast<double>(n_total);
}

}  // namespace pih
