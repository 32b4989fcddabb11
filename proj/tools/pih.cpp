// pih: train, evaluate and replay peg-in-hole insertion policies.
//
// Exit status: 0 success, 1 usage or configuration error, 2 runtime or numeric failure
// (replay also returns 2 when the rollout does not meet the insertion thresholds).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "pih/checkpoint.hpp"
#include "pih/config.hpp"
#include "pih/gradcheck.hpp"
#include "pih/trainer.hpp"
#include "pih/trajectory.hpp"

namespace fs = std::filesystem;
using namespace pih;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

constexpr const char* kOutputEnv = "PIH_OUTPUT_DIR";

// Mismatch between a checkpoint and the config or arguments it is used with.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path run_directory(const RunConfig& cfg) {
  const char* override_dir = std::getenv(kOutputEnv);
  const fs::path base = (override_dir && *override_dir) ? fs::path(override_dir) : fs::path(cfg.output_dir);
  return base / cfg.experiment;
}

void check_compatible(const Checkpoint& c, const RunConfig& cfg) {
  const auto& sizes = c.policy.trunk().sizes();
  if (sizes.front() != kObsDim || sizes.back() != kActDim)
    throw UsageError("checkpoint policy maps " + std::to_string(sizes.front()) + " -> " +
                     std::to_string(sizes.back()) + ", expected 13 -> 6");
  if (sizes.size() != 4 || sizes[1] != cfg.ppo.hidden || sizes[2] != cfg.ppo.hidden)
    throw UsageError("checkpoint hidden width does not match ppo.hidden = " + std::to_string(cfg.ppo.hidden));
}

int cmd_train(const std::string& config_path) {
  const RunConfig cfg = load_config(config_path);
  const fs::path dir = run_directory(cfg);
  fs::create_directories(dir);
  const std::string hash = config_hash(cfg);
  write_text_atomic((dir / "resolved_config.json").string(),
                    nlohmann::json{{"config_hash", hash}, {"config", config_to_json(cfg)}}.dump(2) + "\n");

  const fs::path csv_path = dir / "metrics.csv";
  std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
  csv << metrics_csv_header() << std::flush;

  std::fprintf(stderr, "training %s (config %s) -> %s\n", cfg.experiment.c_str(), hash.c_str(), dir.c_str());
  const TrainResult res = train(cfg, [&](const EpochMetrics& m, const Checkpoint& last, const Checkpoint& best) {
    csv << metrics_csv_row(m) << std::flush;
    save_checkpoint(last, (dir / "last.json").string());
    save_checkpoint(best, (dir / "best.json").string());
    std::fprintf(stderr, "epoch %4d  reward %9.3f  success %6.2f%%  d_q %.4f  d_p %.4f\n", m.epoch, m.mean_reward,
                 m.success_pct, m.mean_dq, m.mean_dp);
  });
  if (res.metrics.empty()) {
    save_checkpoint(res.last, (dir / "last.json").string());
    save_checkpoint(res.best, (dir / "best.json").string());
  }
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& config_path, int episodes) {
  const RunConfig cfg = load_config(config_path);
  const Checkpoint c = load_checkpoint(ckpt_path);
  check_compatible(c, cfg);
  if (episodes < 1) throw UsageError("--episodes must be >= 1");
  const std::uint64_t seed = derived_rng(cfg.env.seed, kEvalStream)();
  const EvalReport r = evaluate(c.policy, cfg.robot, cfg.env, episodes, seed);
  const nlohmann::json out = {{"config_hash", config_hash(cfg)},
                              {"checkpoint_id", c.id()},
                              {"checkpoint_config_hash", c.config_hash},
                              {"episodes", r.episodes},
                              {"successes", r.successes},
                              {"success_pct", r.success_pct},
                              {"mean_dq", r.mean_dq},
                              {"mean_dp", r.mean_dp},
                              {"max_dq", r.max_dq},
                              {"max_dp", r.max_dp},
                              {"mean_steps", r.mean_steps}};
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int cmd_replay(const std::string& ckpt_path, const std::vector<double>& pose, const std::string& out_path,
               const std::string& config_path) {
  const Checkpoint c = load_checkpoint(ckpt_path);
  const RunConfig cfg = checkpoint_config(c);
  if (!config_path.empty()) {
    const std::string given = config_hash(load_config(config_path));
    if (given != c.config_hash)
      throw UsageError("config hash " + given + " does not match checkpoint config hash " + c.config_hash);
  }
  check_compatible(c, cfg);
  for (double v : pose)
    if (!std::isfinite(v)) throw UsageError("--pose values must be finite");
  const HolePoseSpec hole{pose[0], pose[1], pose[2], pose[3], pose[4], pose[5]};

  Trajectory t = rollout_trajectory(c.policy, cfg.robot, cfg.env, hole);
  t.meta.config_hash = c.config_hash;
  t.meta.checkpoint_id = c.id();
  if (t.meta.extrapolated)
    std::fprintf(stderr, "warning: hole pose is outside the trained randomization range; the policy extrapolates\n");
  write_trajectory(t, out_path);
  std::fprintf(stderr, "%zu rows -> %s; final d_q %.6f rad, d_p %.6f m; %s\n", t.rows.size(), out_path.c_str(),
               t.meta.final_dq, t.meta.final_dp, t.meta.inserted ? "inserted" : "NOT inserted");
  return t.meta.inserted ? kExitOk : kExitRuntime;
}

int cmd_gradcheck(bool flip) {
  GradCheckOptions opt;
  opt.flip_derivative = flip;
  const GradCheckReport rep = run_gradcheck(opt);
  std::printf("net layer  max_rel_err_W  max_rel_err_b\n");
  for (const auto& l : rep.layers)
    std::printf("%3d %5d  %13.3e  %13.3e\n", l.net, l.layer, l.weight_error, l.bias_error);
  std::printf("max relative error %.3e (tolerance %.0e): %s\n", rep.max_error, opt.tolerance,
              rep.passed ? "PASS" : "FAIL");
  return rep.passed ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Peg-in-hole insertion with PPO on a kinematic UR10e"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, out_path, replay_config;
  int episodes = 100;
  std::vector<double> pose;
  bool flip = false;

  auto* train_cmd = app.add_subcommand("train", "Train a policy; artifacts go to <output_dir>/<experiment>");
  train_cmd->add_option("config", config_path, "Run config (JSON)")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Deterministic evaluation on freshly randomized hole poses");
  eval_cmd->add_option("checkpoint", ckpt_path, "Checkpoint file")->required();
  eval_cmd->add_option("config", config_path, "Run config (JSON)")->required();
  eval_cmd->add_option("--episodes", episodes, "Number of episodes")->required();

  auto* replay_cmd = app.add_subcommand("replay", "Export a deterministic trajectory for one hole pose");
  replay_cmd->add_option("checkpoint", ckpt_path, "Checkpoint file")->required();
  replay_cmd->add_option("--pose", pose, "Hole pose: x y z [m] roll pitch yaw [deg]")->required()->expected(6);
  replay_cmd->add_option("--out", out_path, "Trajectory CSV (metadata goes to FILE.meta.json)")->required();
  replay_cmd->add_option("--config", replay_config, "Refuse to run unless this config matches the checkpoint");

  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of network gradients");
  grad_cmd->add_flag("--flip-derivative", flip, "Inject a sign error into the tanh derivative");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(config_path);
    if (*eval_cmd) return cmd_eval(ckpt_path, config_path, episodes);
    if (*replay_cmd) return cmd_replay(ckpt_path, pose, out_path, replay_config);
    if (*grad_cmd) return cmd_gradcheck(flip);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
