#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "pih/checkpoint.hpp"
#include "pih/env.hpp"
#include "pih/trainer.hpp"

namespace pih {

/// Hole pose as given on the command line: position in m, roll/pitch/yaw in degrees.
struct HolePoseSpec {
  double x = 0.0, y = 0.0, z = 0.0;
  double roll_deg = 0.0, pitch_deg = 0.0, yaw_deg = 0.0;

  Pose to_pose() const {
    return {Vec3(x, y, z), quat_from_rpy(roll_deg * kDegToRad, pitch_deg * kDegToRad, yaw_deg * kDegToRad)};
  }

  bool operator==(const HolePoseSpec&) const = default;
};

struct TrajectoryRow {
  int step = 0;
  JointConfig joints{};
  Pose peg;
  double reward = 0.0;
  double d_q = 0.0;
  double d_p = 0.0;
};

struct TrajectoryMeta {
  std::string config_hash;
  std::string checkpoint_id;
  HolePoseSpec hole;
  bool aligned = false;
  bool inserted = false;
  double final_dq = 0.0;
  double final_dp = 0.0;
  bool extrapolated = false;  // hole pose outside the trained randomization range
};

struct Trajectory {
  TrajectoryMeta meta;
  std::vector<TrajectoryRow> rows;
};

/// One deterministic (mean-action) episode against a fixed hole pose. Row 0 is the initial state.
inline Trajectory rollout_trajectory(const GaussianPolicy& policy, const RobotModel& model, EnvConfig env,
                                     const HolePoseSpec& hole) {
  env.num_envs = 1;
  VecEnv venv(model, env);
  venv.reset(0);
  const Pose hp = hole.to_pose();
  venv.set_hole_pose(0, hp);

  Trajectory t;
  t.meta.hole = hole;
  t.meta.extrapolated = !env.range.contains(env.nominal_hole, hp, 1e-9);
  {
    const EnvState& s = venv.state(0);
    t.rows.push_back({0, s.joints, forward_kinematics(model, s.joints), 0.0, s.last_terms.d_q, s.last_terms.d_p});
  }
  while (!venv.state(0).done) {
    const VectorXd mean = policy.mean(make_observation(venv.state(0)));
    const StepResult r = venv.step_one(0, to_action(mean));
    const EnvState& s = venv.state(0);
    t.rows.push_back({s.step_count, s.joints, forward_kinematics(model, s.joints), r.reward, r.info.d_q, r.info.d_p});
  }
  const RewardTerms& last = venv.state(0).last_terms;
  t.meta.final_dq = last.d_q;
  t.meta.final_dp = last.d_p;
  t.meta.aligned = last.aligned();
  t.meta.inserted = last.inserted();
  return t;
}

// CSV body + JSON sidecar (<path>.meta.json). Doubles are printed with 17 significant digits,
// which round-trips exactly.

inline std::string trajectory_csv_header() {
  return "step,q1,q2,q3,q4,q5,q6,peg_x,peg_y,peg_z,peg_qw,peg_qx,peg_qy,peg_qz,reward,d_q,d_p\n";
}

inline std::string trajectory_csv(const Trajectory& t) {
  std::string out = trajectory_csv_header();
  char buf[64];
  for (const auto& r : t.rows) {
    out += std::to_string(r.step);
    auto put = [&](double v) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    };
    for (double q : r.joints) put(q);
    put(r.peg.position.x());
    put(r.peg.position.y());
    put(r.peg.position.z());
    put(r.peg.orientation.w);
    put(r.peg.orientation.x);
    put(r.peg.orientation.y);
    put(r.peg.orientation.z);
    put(r.reward);
    put(r.d_q);
    put(r.d_p);
    out += '\n';
  }
  return out;
}

inline nlohmann::json trajectory_meta_json(const TrajectoryMeta& m, std::size_t rows) {
  return {{"format", "pih-trajectory"},
          {"version", 1},
          {"config_hash", m.config_hash},
          {"checkpoint_id", m.checkpoint_id},
          {"hole_pose",
           {{"position", {m.hole.x, m.hole.y, m.hole.z}}, {"rpy_deg", {m.hole.roll_deg, m.hole.pitch_deg, m.hole.yaw_deg}}}},
          {"thresholds", {{"d_q_rad", kAlignThreshold}, {"d_p_m", kInsertThreshold}}},
          {"aligned", m.aligned},
          {"inserted", m.inserted},
          {"final_dq", m.final_dq},
          {"final_dp", m.final_dp},
          {"extrapolated", m.extrapolated},
          {"rows", rows}};
}

inline std::string trajectory_meta_path(const std::string& csv_path) { return csv_path + ".meta.json"; }

inline void write_trajectory(const Trajectory& t, const std::string& csv_path) {
  write_text_atomic(csv_path, trajectory_csv(t));
  write_text_atomic(trajectory_meta_path(csv_path), trajectory_meta_json(t.meta, t.rows.size()).dump(2) + "\n");
}

inline Trajectory read_trajectory(const std::string& csv_path) {
  Trajectory t;
  std::ifstream meta_in(trajectory_meta_path(csv_path));
  if (!meta_in) throw std::runtime_error("missing trajectory metadata " + trajectory_meta_path(csv_path));
  const nlohmann::json m = nlohmann::json::parse(meta_in);
  if (m.value("format", "") != "pih-trajectory") throw std::runtime_error("not a trajectory metadata file");
  t.meta.config_hash = m.at("config_hash").get<std::string>();
  t.meta.checkpoint_id = m.at("checkpoint_id").get<std::string>();
  const auto& hp = m.at("hole_pose");
  t.meta.hole = {hp.at("position")[0].get<double>(), hp.at("position")[1].get<double>(),
                 hp.at("position")[2].get<double>(), hp.at("rpy_deg")[0].get<double>(),
                 hp.at("rpy_deg")[1].get<double>(), hp.at("rpy_deg")[2].get<double>()};
  t.meta.aligned = m.at("aligned").get<bool>();
  t.meta.inserted = m.at("inserted").get<bool>();
  t.meta.final_dq = m.at("final_dq").get<double>();
  t.meta.final_dp = m.at("final_dp").get<double>();
  t.meta.extrapolated = m.at("extrapolated").get<bool>();

  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open trajectory " + csv_path);
  std::string line;
  std::getline(in, line);
  if (line + "\n" != trajectory_csv_header()) throw std::runtime_error("unexpected trajectory header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    std::getline(ss, cell, ',');
    TrajectoryRow r;
    r.step = std::stoi(cell);
    while (std::getline(ss, cell, ',')) v.push_back(std::strtod(cell.c_str(), nullptr));
    if (v.size() != 16) throw std::runtime_error("malformed trajectory row: " + line);
    for (int i = 0; i < kNumJoints; ++i) r.joints[i] = v[i];
    r.peg.position = Vec3(v[6], v[7], v[8]);
    r.peg.orientation = Quaternion{v[9], v[10], v[11], v[12]};
    r.reward = v[13];
    r.d_q = v[14];
    r.d_p = v[15];
    t.rows.push_back(r);
  }
  if (t.rows.size() != m.at("rows").get<std::size_t>()) throw std::runtime_error("trajectory row count mismatch");
  return t;
}

}  // namespace pih
