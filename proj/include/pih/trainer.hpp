#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pih/checkpoint.hpp"
#include "pih/config.hpp"
#include "pih/env.hpp"
#include "pih/nn.hpp"
#include "pih/ppo.hpp"

namespace pih {

struct EpochMetrics {
  int epoch = 0;
  double mean_reward = 0.0;  // cumulative reward per environment, averaged
  double success_pct = 0.0;
  double mean_dq = 0.0;  // at episode end
  double mean_dp = 0.0;
  double mean_dhp = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_frac = 0.0;
};

inline std::string metrics_csv_header() {
  return "epoch,mean_reward,success_pct,mean_dq,mean_dp,policy_loss,value_loss,clip_frac\n";
}

inline std::string metrics_csv_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.6f,%.4f,%.8f,%.8f,%.8f,%.6f,%.6f\n", m.epoch, m.mean_reward, m.success_pct,
                m.mean_dq, m.mean_dp, m.policy_loss, m.value_loss, m.clip_frac);
  return buf;
}

/// Independent stream for one purpose of a run, derived from the run seed.
inline std::mt19937_64 derived_rng(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose, 0x9e3779b9u};
  return std::mt19937_64(seq);
}

enum RngPurpose : std::uint32_t { kInitStream = 1, kActionStream = 2, kShuffleStream = 3, kEvalStream = 4 };

inline Checkpoint initial_checkpoint(const RunConfig& cfg) {
  Checkpoint c;
  auto rng = derived_rng(cfg.env.seed, kInitStream);
  c.policy = GaussianPolicy(kObsDim, kActDim, cfg.ppo.hidden);
  c.policy.init(rng);
  c.policy.log_std().setConstant(cfg.ppo.init_log_std);
  c.policy.clamp_log_std();
  c.value = ValueNet(kObsDim, cfg.ppo.hidden, cfg.ppo.value_scale);
  c.value.init(rng);
  c.epoch = 0;
  c.success_pct = -1.0;
  c.config = config_to_json(cfg);
  c.config_hash = config_hash(cfg);
  return c;
}

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<EpochMetrics> metrics;
};

/// Called after every epoch with that epoch's metrics and the current last/best checkpoints.
using EpochCallback = std::function<void(const EpochMetrics&, const Checkpoint& last, const Checkpoint& best)>;

/// Epoch loop: reset every environment, collect one rollout of at most `horizon` steps,
/// GAE, PPO update. A checkpoint's `epoch` is the number of updates applied to it;
/// `success_pct` is the success of the rollout it collected (-1 if it has not collected one).
/// `best` keeps the latest parameters achieving the highest rollout success.
inline TrainResult train(const RunConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.env.validate();
  cfg.ppo.validate(cfg.env.num_envs, cfg.env.horizon);
  TrainResult out;
  Checkpoint current = initial_checkpoint(cfg);
  out.best = current;
  out.last = current;

  VecEnv venv(cfg.robot, cfg.env);
  auto action_rng = derived_rng(cfg.env.seed, kActionStream);
  auto shuffle_rng = derived_rng(cfg.env.seed, kShuffleStream);
  Optimizers opt;
  opt.policy.lr = cfg.ppo.learning_rate;
  opt.value.lr = cfg.ppo.learning_rate;
  const int n = venv.size();

  for (int epoch = 0; epoch < cfg.ppo.total_epochs; ++epoch) {
    venv.reset_all();
    const RolloutBuffer buf =
        collect_rollout(venv, current.policy, current.value, cfg.env.horizon, action_rng, cfg.ppo.success_bootstrap);

    EpochMetrics m;
    m.epoch = epoch;
    m.mean_reward = buf.rewards.sum() / n;
    m.success_pct = success_percentage(venv.num_succeeded(), n);
    for (int e = 0; e < n; ++e) {
      const RewardTerms& t = venv.state(e).last_terms;
      m.mean_dq += t.d_q / n;
      m.mean_dp += t.d_p / n;
      m.mean_dhp += pose_distance(t.d_q, t.d_p) / n;
    }

    current.success_pct = m.success_pct;
    if (out.best.success_pct < 0.0 || m.success_pct >= out.best.success_pct) out.best = current;

    const GaeResult gae = compute_gae(buf, cfg.ppo.gamma, cfg.ppo.lam);
    const PpoLosses losses = ppo_update(current.policy, current.value, buf, gae, cfg.ppo, opt, shuffle_rng);
    m.policy_loss = losses.policy_loss;
    m.value_loss = losses.value_loss;
    m.clip_frac = losses.clip_frac;

    current.epoch = epoch + 1;
    current.success_pct = -1.0;
    out.last = current;
    out.metrics.push_back(m);
    if (on_epoch) on_epoch(m, out.last, out.best);
  }
  return out;
}

struct EvalReport {
  int episodes = 0;
  int successes = 0;
  double success_pct = 0.0;
  double mean_dq = 0.0;
  double mean_dp = 0.0;
  double max_dq = 0.0;
  double max_dp = 0.0;
  double mean_steps = 0.0;
};

inline Action to_action(const VectorXd& v) {
  Action a;
  for (int i = 0; i < kActDim; ++i) a[i] = std::clamp(v[i], -1.0, 1.0);
  return a;
}

/// Deterministic evaluation: the Gaussian mean is executed, no sampling.
inline EvalReport evaluate(const GaussianPolicy& policy, const RobotModel& model, EnvConfig env, int episodes,
                           std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  env.num_envs = episodes;
  env.seed = seed;
  VecEnv venv(model, env);
  venv.reset_all();
  MatrixXd batch(kObsDim, episodes);
  std::vector<int> live;
  while (!venv.all_done()) {
    live.clear();
    for (int e = 0; e < episodes; ++e)
      if (!venv.state(e).done) live.push_back(e);
    batch.resize(kObsDim, static_cast<long>(live.size()));
    for (std::size_t k = 0; k < live.size(); ++k) batch.col(k) = make_observation(venv.state(live[k]));
    const MatrixXd means = policy.trunk().forward_batch(batch, nullptr);
    for (std::size_t k = 0; k < live.size(); ++k) venv.step_one(live[k], to_action(means.col(k)));
  }
  EvalReport r;
  r.episodes = episodes;
  r.successes = venv.num_succeeded();
  r.success_pct = success_percentage(r.successes, episodes);
  for (int e = 0; e < episodes; ++e) {
    const EnvState& s = venv.state(e);
    r.mean_dq += s.last_terms.d_q / episodes;
    r.mean_dp += s.last_terms.d_p / episodes;
    r.max_dq = std::max(r.max_dq, s.last_terms.d_q);
    r.max_dp = std::max(r.max_dp, s.last_terms.d_p);
    r.mean_steps += static_cast<double>(s.step_count) / episodes;
  }
  return r;
}

}  // namespace pih
