#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pih/env.hpp"
#include "pih/nn.hpp"

namespace pih {

/// Raised when a loss or gradient turns non-finite; the update is aborted.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PpoConfig {
  double epsilon = 0.2;
  double gamma = 0.99;
  double lam = 0.95;
  int update_epochs = 5;
  int minibatch_size = 0;  // 0 -> N*T/16
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;
  double learning_rate = 3e-4;
  int total_epochs = 200;
  int hidden = 64;
  double init_log_std = -0.5;
  bool success_bootstrap = true;
  double value_scale = 100.0;  // critic output multiplier

  int resolved_minibatch(int n, int t) const { return minibatch_size > 0 ? minibatch_size : std::max(1, n * t / 16); }

  void validate(int n, int t) const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("ppo.epsilon must be in (0,1)");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("ppo.gamma must be in (0,1]");
    if (!(lam > 0.0 && lam <= 1.0)) throw std::invalid_argument("ppo.lam must be in (0,1]");
    if (update_epochs < 1) throw std::invalid_argument("ppo.update_epochs must be >= 1");
    if (total_epochs < 0) throw std::invalid_argument("ppo.total_epochs must be >= 0");
    if (hidden < 1) throw std::invalid_argument("ppo.hidden must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("ppo.learning_rate must be > 0");
    if (!(value_scale > 0.0)) throw std::invalid_argument("ppo.value_scale must be > 0");
    if (!(max_grad_norm > 0.0)) throw std::invalid_argument("ppo.max_grad_norm must be > 0");
    const int mb = resolved_minibatch(n, t);
    if ((static_cast<long>(n) * t) % mb != 0) throw std::invalid_argument("ppo.minibatch_size must divide N*T");
  }
};

/// Per-(env, step) rollout storage. Sample (env e, step t) lives in column e*T + t.
struct RolloutBuffer {
  int num_envs = 0;
  int horizon = 0;
  MatrixXd obs;       // kObsDim x N*T
  MatrixXd actions;   // kActDim x N*T, pre-clamp draws
  VectorXd log_probs;
  VectorXd rewards;
  VectorXd values;
  std::vector<std::uint8_t> dones;  // terminal (insertion) flags
  std::vector<std::uint8_t> valid;  // false for masked steps after an environment finished
  VectorXd bootstrap;               // value used after each row's last step

  RolloutBuffer() = default;
  RolloutBuffer(int n, int t)
      : num_envs(n),
        horizon(t),
        obs(MatrixXd::Zero(kObsDim, static_cast<long>(n) * t)),
        actions(MatrixXd::Zero(kActDim, static_cast<long>(n) * t)),
        log_probs(VectorXd::Zero(static_cast<long>(n) * t)),
        rewards(VectorXd::Zero(static_cast<long>(n) * t)),
        values(VectorXd::Zero(static_cast<long>(n) * t)),
        dones(static_cast<std::size_t>(n) * t, 0),
        valid(static_cast<std::size_t>(n) * t, 0),
        bootstrap(VectorXd::Zero(n)) {}

  long index(int env, int t) const { return static_cast<long>(env) * horizon + t; }
  long size() const { return static_cast<long>(num_envs) * horizon; }
  long num_valid() const { return std::count(valid.begin(), valid.end(), std::uint8_t{1}); }
};

/// Steps `venv` for up to T steps with actions sampled from `policy`. Finished
/// environments are masked; collection stops early once all are done.
template <typename Rng>
RolloutBuffer collect_rollout(VecEnv& venv, const GaussianPolicy& policy, const ValueNet& value_net, int T,
                              Rng& rng, bool success_bootstrap = true) {
  const int n = venv.size();
  RolloutBuffer buf(n, T);
  std::vector<int> live;
  MatrixXd batch;
  for (int t = 0; t < T; ++t) {
    live.clear();
    for (int e = 0; e < n; ++e)
      if (!venv.state(e).done) live.push_back(e);
    if (live.empty()) break;
    batch.resize(kObsDim, static_cast<long>(live.size()));
    for (std::size_t k = 0; k < live.size(); ++k) batch.col(k) = make_observation(venv.state(live[k]));
    const MatrixXd means = policy.trunk().forward_batch(batch, nullptr);
    const MatrixXd vals = value_net.value_batch(batch, nullptr);
    for (std::size_t k = 0; k < live.size(); ++k) {
      const int e = live[k];
      const long i = buf.index(e, t);
      const auto s = policy.sample_from_mean(means.col(k), rng);
      Action a;
      for (int j = 0; j < kActDim; ++j) a[j] = s.action[j];
      buf.obs.col(i) = batch.col(k);
      buf.actions.col(i) = s.raw;
      buf.log_probs[i] = s.log_prob;
      buf.values[i] = vals(0, k);
      const StepResult r = venv.step_one(e, a);
      buf.rewards[i] = r.reward;
      buf.dones[i] = (venv.state(e).succeeded && !success_bootstrap) ? 1 : 0;
      buf.valid[i] = 1;
    }
  }
  // Tails cut by the horizon bootstrap V(s_T). An inserted peg stays seated, so with
  // success_bootstrap the insertion step is treated as a cut as well; otherwise it is terminal.
  for (int e = 0; e < n; ++e) {
    const EnvState& s = venv.state(e);
    buf.bootstrap[e] = (s.succeeded && !success_bootstrap) ? 0.0 : value_net.value(make_observation(s));
  }
  return buf;
}

struct GaeResult {
  VectorXd advantages;
  VectorXd returns;
};

/// Backward GAE recursion over each environment row:
///   delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)
///   A_t = delta_t + gamma * lam * (1 - done_t) * A_{t+1}
/// V(s_T) is the row's bootstrap value. Masked steps are left at zero.
inline GaeResult compute_gae(const RolloutBuffer& buf, double gamma, double lam) {
  GaeResult g{VectorXd::Zero(buf.size()), VectorXd::Zero(buf.size())};
  for (int e = 0; e < buf.num_envs; ++e) {
    double next_adv = 0.0;
    double next_value = buf.bootstrap[e];
    int last = buf.horizon - 1;
    while (last >= 0 && !buf.valid[buf.index(e, last)]) --last;
    for (int t = last; t >= 0; --t) {
      const long i = buf.index(e, t);
      const double nonterminal = buf.dones[i] ? 0.0 : 1.0;
      const double delta = buf.rewards[i] + gamma * next_value * nonterminal - buf.values[i];
      next_adv = delta + gamma * lam * nonterminal * next_adv;
      g.advantages[i] = next_adv;
      g.returns[i] = next_adv + buf.values[i];
      next_value = buf.values[i];
    }
  }
  return g;
}

/// Normalizes to zero mean, unit (population) std over the selected entries.
inline void normalize_advantages(VectorXd& adv, const std::vector<long>& idx) {
  if (idx.empty()) return;
  double mean = 0.0;
  for (long i : idx) mean += adv[i];
  mean /= static_cast<double>(idx.size());
  double var = 0.0;
  for (long i : idx) var += (adv[i] - mean) * (adv[i] - mean);
  var /= static_cast<double>(idx.size());
  const double sd = std::sqrt(var) + 1e-8;
  for (long i : idx) adv[i] = (adv[i] - mean) / sd;
}

struct PpoLosses {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  double approx_kl = 0.0;
};

/// Loss terms and gradients of one minibatch. Gradients are accumulated into the tapes.
struct MinibatchResult {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  long clipped = 0;
  double approx_kl = 0.0;
  VectorXd log_std_grad;
};

/// Clipped surrogate loss -mean(min(R*A, clip(R,1-eps,1+eps)*A)) with R = exp(logp - logp_old),
/// plus value MSE and entropy; gradients of (policy + value_coef*value - entropy_coef*entropy).
inline MinibatchResult ppo_minibatch(const GaussianPolicy& policy, const ValueNet& value_net, const MatrixXd& obs,
                                     const MatrixXd& actions, const VectorXd& old_log_probs,
                                     const VectorXd& advantages, const VectorXd& returns, const PpoConfig& cfg,
                                     GradientTape& policy_tape, GradientTape& value_tape) {
  const long b = obs.cols();
  const double inv_b = 1.0 / static_cast<double>(b);
  MinibatchResult r;

  ForwardCache pc;
  const MatrixXd means = policy.trunk().forward_batch(obs, &pc);
  const VectorXd logp = policy.log_prob_batch(means, actions);
  const VectorXd inv_var = (-2.0 * policy.log_std()).array().exp();
  const MatrixXd diff = actions - means;

  VectorXd dlogp(b);  // d(policy_loss)/d(logp_i)
  for (long i = 0; i < b; ++i) {
    const double ratio = std::exp(logp[i] - old_log_probs[i]);
    const double a = advantages[i];
    const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon);
    const double unclipped = ratio * a;
    const double clipped = clipped_ratio * a;
    r.policy_loss -= std::min(unclipped, clipped) * inv_b;
    // The clipped branch is constant in theta; gradient flows only through the unclipped branch.
    dlogp[i] = (unclipped <= clipped) ? -a * ratio * inv_b : 0.0;
    if (std::abs(ratio - 1.0) > cfg.epsilon) ++r.clipped;
    r.approx_kl += (old_log_probs[i] - logp[i]) * inv_b;
  }
  // d logp / d mean = (a - mu) / sigma^2 ; d logp / d log_std = (a - mu)^2 / sigma^2 - 1
  const MatrixXd up = (diff.array().colwise() * inv_var.array()).matrix() * dlogp.asDiagonal();
  policy.trunk().backward(pc, up, policy_tape);
  r.log_std_grad = ((diff.array().square().colwise() * inv_var.array()) - 1.0).matrix() * dlogp;
  r.entropy = policy.entropy();
  r.log_std_grad.array() -= cfg.entropy_coef;

  ForwardCache vc;
  const MatrixXd v = value_net.value_batch(obs, &vc);
  const Eigen::RowVectorXd verr = v.row(0) - returns.transpose();
  r.value_loss = verr.squaredNorm() * inv_b;
  const MatrixXd vup = (2.0 * cfg.value_coef * inv_b) * verr;
  value_net.backward(vc, vup, value_tape);

  if (!std::isfinite(r.policy_loss) || !std::isfinite(r.value_loss))
    throw NumericError("non-finite PPO loss (policy " + std::to_string(r.policy_loss) + ", value " +
                       std::to_string(r.value_loss) + ")");
  return r;
}

struct Optimizers {
  AdamState policy;
  AdamState value;
};

/// update_epochs passes over shuffled minibatches of the valid samples in `buf`.
template <typename Rng>
PpoLosses ppo_update(GaussianPolicy& policy, ValueNet& value_net, const RolloutBuffer& buf, const GaeResult& gae,
                     const PpoConfig& cfg, Optimizers& opt, Rng& rng) {
  std::vector<long> idx;
  idx.reserve(buf.size());
  for (long i = 0; i < buf.size(); ++i)
    if (buf.valid[i]) idx.push_back(i);
  PpoLosses out;
  if (idx.empty()) return out;

  VectorXd adv = gae.advantages;
  normalize_advantages(adv, idx);

  const long mb = cfg.resolved_minibatch(buf.num_envs, buf.horizon);
  GradientTape ptape = policy.trunk().make_tape();
  GradientTape vtape = value_net.net().make_tape();
  long batches = 0, samples = 0, clipped = 0;

  for (int epoch = 0; epoch < cfg.update_epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (long start = 0; start < static_cast<long>(idx.size()); start += mb) {
      const long len = std::min<long>(mb, static_cast<long>(idx.size()) - start);
      MatrixXd o(kObsDim, len), a(kActDim, len);
      VectorXd lp(len), ad(len), ret(len);
      for (long k = 0; k < len; ++k) {
        const long i = idx[start + k];
        o.col(k) = buf.obs.col(i);
        a.col(k) = buf.actions.col(i);
        lp[k] = buf.log_probs[i];
        ad[k] = adv[i];
        ret[k] = gae.returns[i];
      }
      ptape.zero();
      vtape.zero();
      const MinibatchResult r = ppo_minibatch(policy, value_net, o, a, lp, ad, ret, cfg, ptape, vtape);

      VectorXd pg(policy.num_params());
      pg << Mlp::flatten(ptape), r.log_std_grad;
      VectorXd vg = Mlp::flatten(vtape);
      const double norm = std::sqrt(pg.squaredNorm() + vg.squaredNorm());
      if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
      if (norm > cfg.max_grad_norm) {
        const double s = cfg.max_grad_norm / (norm + 1e-12);
        pg *= s;
        vg *= s;
      }
      VectorXd pp = policy.flat_params();
      adam_step(opt.policy, pp, pg);
      policy.set_flat_params(pp);
      policy.clamp_log_std();
      VectorXd vp = value_net.net().flat_params();
      adam_step(opt.value, vp, vg);
      value_net.net().set_flat_params(vp);

      out.policy_loss += r.policy_loss;
      out.value_loss += r.value_loss;
      out.entropy += r.entropy;
      out.approx_kl += r.approx_kl;
      clipped += r.clipped;
      samples += len;
      ++batches;
    }
  }
  out.policy_loss /= static_cast<double>(batches);
  out.value_loss /= static_cast<double>(batches);
  out.entropy /= static_cast<double>(batches);
  out.approx_kl /= static_cast<double>(batches);
  out.clip_frac = static_cast<double>(clipped) / static_cast<double>(samples);
  return out;
}

}  // namespace pih
