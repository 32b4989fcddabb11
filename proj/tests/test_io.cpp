#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "pih/checkpoint.hpp"
#include "pih/config.hpp"
#include "pih/trainer.hpp"
#include "pih/trajectory.hpp"

using namespace pih;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pih_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kMinimal = R"({"env": {"seed": 5}})";

}  // namespace

TEST(Config, MinimalConfigGetsDefaults) {
  const RunConfig c = config_from_json_text(kMinimal);
  EXPECT_EQ(c.env.seed, 5u);
  EXPECT_EQ(c.env.num_envs, 256);
  EXPECT_EQ(c.env.horizon, 256);
  EXPECT_EQ(c.ppo.epsilon, 0.2);
  EXPECT_EQ(c.robot_path, "default");
  EXPECT_NEAR(c.env.range.axes[5].max, 25.0 * kDegToRad, 1e-15);
}

TEST(Config, MissingSeedNamesField) {
  try {
    config_from_json_text(R"({"env": {"num_envs": 4}})", "cfg.json");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "env.seed");
    EXPECT_NE(std::string(e.what()).find("env.seed"), std::string::npos);
  }
}

TEST(Config, ErrorsAreLineAnchored) {
  const std::string text = "{\n  \"env\": {\n    \"seed\": 1,\n    \"horizon\": \"long\"\n  }\n}\n";
  try {
    config_from_json_text(text, "cfg.json");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg.json:4"), std::string::npos) << e.what();
  }
  try {
    config_from_json_text("{\n  \"env\": {\n    \"seed\": 1,,\n  }\n}\n", "bad.json");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.json:3"), std::string::npos) << e.what();
  }
}

TEST(Config, RejectsUnknownBlocksAndBadRanges) {
  EXPECT_THROW(config_from_json_text(R"({"env": {"seed": 1}, "extra": {}})"), ConfigError);
  EXPECT_THROW(config_from_json_text(R"({"env": {"seed": 1, "ranges": {"z": [0.2, 0.1]}}})"), ConfigError);
  EXPECT_THROW(config_from_json_text(R"({"env": {"seed": -3}})"), ConfigError);
  EXPECT_THROW(config_from_json_text(R"({"env": {"seed": 1}, "robot": "/no/such/robot.json"})"), ConfigError);
  EXPECT_THROW(config_from_json_text(R"({"env": {"seed": 1}, "ppo": {"minibatch_size": 7}})"), ConfigError);
}

TEST(Config, EnabledAxesAndDegrees) {
  const RunConfig c = config_from_json_text(
      R"({"env": {"seed": 1, "enabled": ["yaw"], "ranges": {"yaw": [-10, 10]}, "action_span": 1.2}})");
  EXPECT_FALSE(c.env.range.enabled[2]);
  EXPECT_TRUE(c.env.range.enabled[5]);
  EXPECT_NEAR(c.env.range.axes[5].min, -10.0 * kDegToRad, 1e-15);
  EXPECT_EQ(c.env.action_span[3], 1.2);
}

TEST(Config, ResolvedRoundTripKeepsHash) {
  const RunConfig c = config_from_json_text(
      R"({"env": {"seed": 9, "num_envs": 8, "enabled": {"z": true, "yaw": false}, "ranges": {"roll": [-12.5, 7.3]}},
          "ppo": {"learning_rate": 0.001}, "output": {"dir": "x", "experiment": "y"}})");
  const std::string h = config_hash(c);
  const RunConfig again = config_from_json_text(config_to_json(c).dump());
  EXPECT_EQ(config_hash(again), h);
  EXPECT_EQ(config_to_json(again).dump(), config_to_json(c).dump());
}

TEST(Config, HashIgnoresOutputButNotSeed) {
  RunConfig a = config_from_json_text(kMinimal);
  RunConfig b = a;
  b.output_dir = "elsewhere";
  b.experiment = "other";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.env.seed = 6;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, RobotFileAndInlineModel) {
  const fs::path dir = scratch_dir("robot");
  RobotModel m = RobotModel::ur10e();
  m.joint_limits[0] = {-1.0, 1.0};
  std::ofstream(dir / "arm.json") << robot_model_to_json(m).dump(2);
  std::ofstream(dir / "cfg.json") << R"({"env": {"seed": 1}, "robot": "arm.json"})";
  const RunConfig c = load_config((dir / "cfg.json").string());
  EXPECT_EQ(c.robot.joint_limits[0].upper, 1.0);
  // The resolved document carries the model inline, so it reloads without the file.
  fs::remove(dir / "arm.json");
  const RunConfig again = config_from_json_text(config_to_json(c).dump());
  EXPECT_EQ(config_hash(again), config_hash(c));
  EXPECT_EQ(again.robot.joint_limits[0].upper, 1.0);
}

TEST(Checkpoint, BitExactRoundTrip) {
  RunConfig cfg = config_from_json_text(R"({"env": {"seed": 3, "num_envs": 4}})");
  Checkpoint c = initial_checkpoint(cfg);
  // Awkward values: subnormal, negative zero, long mantissas.
  c.policy.trunk().weight(0)(0, 0) = 4.9406564584124654e-324;
  c.policy.trunk().weight(0)(1, 0) = -0.0;
  c.policy.trunk().bias(1)[0] = 0.1 + 0.2;
  c.value.net().bias(2)[0] = 1.0 / 3.0;
  c.epoch = 17;
  c.success_pct = 12.5;
  const fs::path dir = scratch_dir("ckpt");
  save_checkpoint(c, (dir / "c.json").string());
  const Checkpoint d = load_checkpoint((dir / "c.json").string());
  const VectorXd a = c.policy.flat_params(), b = d.policy.flat_params();
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
  const VectorXd va = c.value.net().flat_params(), vb = d.value.net().flat_params();
  EXPECT_EQ(std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)), 0);
  EXPECT_EQ(d.value.output_scale(), c.value.output_scale());
  EXPECT_EQ(d.id(), c.id());
  EXPECT_EQ(d.epoch, 17);
  EXPECT_EQ(d.config_hash, config_hash(cfg));
  EXPECT_EQ(config_hash(checkpoint_config(d)), config_hash(cfg));
}

TEST(Checkpoint, TamperedConfigDetected) {
  RunConfig cfg = config_from_json_text(kMinimal);
  Checkpoint c = initial_checkpoint(cfg);
  c.config["env"]["seed"] = 99;
  EXPECT_THROW(checkpoint_config(c), std::runtime_error);
}

TEST(Checkpoint, RejectsForeignDocuments) {
  const fs::path dir = scratch_dir("foreign");
  std::ofstream(dir / "x.json") << R"({"format": "something-else"})";
  EXPECT_THROW(load_checkpoint((dir / "x.json").string()), std::runtime_error);
  std::ofstream(dir / "y.json") << "{ not json";
  EXPECT_THROW(load_checkpoint((dir / "y.json").string()), std::runtime_error);
  EXPECT_THROW(load_checkpoint((dir / "missing.json").string()), std::runtime_error);
}

TEST(Metrics, CsvFormatting) {
  EXPECT_EQ(metrics_csv_header(), "epoch,mean_reward,success_pct,mean_dq,mean_dp,policy_loss,value_loss,clip_frac\n");
  EpochMetrics m;
  m.epoch = 3;
  m.mean_reward = 1.5;
  m.success_pct = 25.0;
  m.mean_dq = 0.01;
  m.mean_dp = 0.002;
  m.policy_loss = -0.001;
  m.value_loss = 2.0;
  m.clip_frac = 0.1;
  EXPECT_EQ(metrics_csv_row(m), "3,1.500000,25.0000,0.01000000,0.00200000,-0.00100000,2.000000,0.100000\n");
}

TEST(Train, TwoEpochsDeterministic) {
  RunConfig cfg = config_from_json_text(R"({"env": {"seed": 4, "num_envs": 4, "horizon": 8},
                                             "ppo": {"total_epochs": 2}})");
  const TrainResult a = train(cfg), b = train(cfg);
  ASSERT_EQ(a.metrics.size(), 2u);
  for (int i = 0; i < 2; ++i) EXPECT_EQ(metrics_csv_row(a.metrics[i]), metrics_csv_row(b.metrics[i]));
  EXPECT_EQ(a.last.id(), b.last.id());
  EXPECT_EQ(a.last.epoch, 2);
  EXPECT_GE(a.best.success_pct, 0.0);
}

TEST(Evaluate, ZeroEpisodesRejected) {
  RunConfig cfg = config_from_json_text(kMinimal);
  const Checkpoint c = initial_checkpoint(cfg);
  EXPECT_THROW(evaluate(c.policy, cfg.robot, cfg.env, 0, 1), std::invalid_argument);
}

TEST(Evaluate, UntrainedPolicyFailsSixDof) {
  RunConfig cfg = config_from_json_text(kMinimal);
  const Checkpoint c = initial_checkpoint(cfg);
  const EvalReport r = evaluate(c.policy, cfg.robot, cfg.env, 64, 11);
  EXPECT_LE(r.success_pct, 5.0);
  EXPECT_EQ(r.episodes, 64);
}

TEST(Trajectory, RoundTripAndConsistency) {
  RunConfig cfg = config_from_json_text(R"({"env": {"seed": 2, "horizon": 20}})");
  const Checkpoint c = initial_checkpoint(cfg);
  const HolePoseSpec hole{-0.131, -0.703, 0.21, 0.0, 0.0, 25.0};
  Trajectory t = rollout_trajectory(c.policy, cfg.robot, cfg.env, hole);
  t.meta.config_hash = c.config_hash;
  t.meta.checkpoint_id = c.id();
  ASSERT_EQ(t.rows.size(), 21u);
  EXPECT_EQ(t.rows.back().d_q, t.meta.final_dq);
  EXPECT_EQ(t.rows.back().d_p, t.meta.final_dp);
  EXPECT_FALSE(t.meta.extrapolated);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    EXPECT_EQ(t.rows[i].step, static_cast<int>(i));
    EXPECT_TRUE(within_limits(cfg.robot, t.rows[i].joints));
  }
  const fs::path dir = scratch_dir("traj");
  const std::string path = (dir / "t.csv").string();
  write_trajectory(t, path);
  const Trajectory u = read_trajectory(path);
  ASSERT_EQ(u.rows.size(), t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    EXPECT_EQ(u.rows[i].joints, t.rows[i].joints);
    EXPECT_EQ(u.rows[i].peg.position, t.rows[i].peg.position);
    EXPECT_EQ(u.rows[i].peg.orientation, t.rows[i].peg.orientation);
    EXPECT_EQ(u.rows[i].reward, t.rows[i].reward);
    EXPECT_EQ(u.rows[i].d_q, t.rows[i].d_q);
    EXPECT_EQ(u.rows[i].d_p, t.rows[i].d_p);
  }
  EXPECT_EQ(u.meta.hole, t.meta.hole);
  EXPECT_EQ(u.meta.config_hash, t.meta.config_hash);
  EXPECT_EQ(u.meta.final_dp, t.meta.final_dp);
  EXPECT_EQ(u.meta.inserted, t.meta.inserted);
}

TEST(Trajectory, ExtrapolationFlagged) {
  RunConfig cfg = config_from_json_text(R"({"env": {"seed": 2, "horizon": 4}})");
  const Checkpoint c = initial_checkpoint(cfg);
  const Trajectory t = rollout_trajectory(c.policy, cfg.robot, cfg.env, {-0.13, -0.70, 0.2, 0, 0, 60});
  EXPECT_TRUE(t.meta.extrapolated);
}
