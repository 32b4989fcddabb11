#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pih/gradcheck.hpp"
#include "pih/nn.hpp"

using namespace pih;

namespace {

Mlp random_mlp(const std::vector<int>& sizes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Mlp m(sizes);
  m.init_orthogonal(rng, 1.0);
  std::normal_distribution<double> n(0.0, 0.1);
  for (int l = 0; l < m.num_layers(); ++l)
    for (int i = 0; i < m.bias(l).size(); ++i) m.bias(l)[i] = n(rng);
  return m;
}

}  // namespace

TEST(Mlp, ZeroParametersGiveZeroOutput) {
  Mlp m({13, 64, 64, 6});
  const VectorXd y = m.forward(VectorXd::Ones(13));
  EXPECT_EQ(y, VectorXd::Zero(6));
}

TEST(Mlp, HandComputedThreeNeuronPath) {
  // 1 -> 1 -> 1 -> 1: y = w3 * tanh(w2 * tanh(w1 * x + b1) + b2) + b3
  Mlp m({1, 1, 1, 1});
  m.weight(0)(0, 0) = 0.5;
  m.bias(0)[0] = 0.1;
  m.weight(1)(0, 0) = -2.0;
  m.bias(1)[0] = 0.3;
  m.weight(2)(0, 0) = 1.5;
  m.bias(2)[0] = -0.25;
  const double x = 0.8;
  // tanh(0.5) = 0.46211715726000974; tanh(-2*0.46211715726000974 + 0.3) = tanh(-0.6242343145200195)
  const double h2 = std::tanh(-0.6242343145200195);
  EXPECT_NEAR(m.forward(VectorXd::Constant(1, x))(0), 1.5 * h2 - 0.25, 1e-15);
  EXPECT_NEAR(h2, -0.5540693219313917, 1e-15);
}

TEST(Mlp, FastTanhMatchesStd) {
  MatrixXd z(1, 2001);
  for (int i = 0; i < z.cols(); ++i) z(0, i) = -20.0 + 0.02 * i;
  const MatrixXd t = fast_tanh(z);
  for (int i = 0; i < z.cols(); ++i) EXPECT_NEAR(t(0, i), std::tanh(z(0, i)), 1e-15);
}

TEST(Mlp, ForwardIsDeterministicAndPure) {
  const Mlp m = random_mlp({13, 64, 64, 6}, 1);
  const VectorXd x = VectorXd::LinSpaced(13, -1, 1);
  const VectorXd before = m.flat_params();
  EXPECT_EQ(m.forward(x), m.forward(x));
  EXPECT_EQ(m.flat_params(), before);
}

TEST(Mlp, ShapeMismatchThrows) {
  const Mlp m({13, 4, 2});
  EXPECT_THROW(m.forward(VectorXd::Zero(12)), std::invalid_argument);
}

TEST(Mlp, BackwardBeforeForwardThrows) {
  const Mlp m({3, 2});
  GradientTape t = m.make_tape();
  EXPECT_THROW(m.backward(ForwardCache{}, MatrixXd::Ones(2, 1), t), std::logic_error);
}

TEST(Mlp, LinearNetGradientIsInput) {
  Mlp m({4, 1});
  m.weight(0) << 0.3, -0.1, 0.2, 0.7;
  VectorXd x(4);
  x << 1.0, -2.0, 0.5, 3.0;
  ForwardCache c;
  m.forward_batch(x, &c);
  GradientTape t = m.make_tape();
  m.backward(c, MatrixXd::Ones(1, 1), t);
  EXPECT_EQ(VectorXd(t.dW[0].transpose()), x);
  EXPECT_EQ(t.db[0](0), 1.0);
}

TEST(Mlp, BackwardAccumulates) {
  const Mlp m = random_mlp({5, 7, 3}, 2);
  const MatrixXd x = MatrixXd::Random(5, 4), up = MatrixXd::Random(3, 4);
  ForwardCache c;
  m.forward_batch(x, &c);
  GradientTape t = m.make_tape();
  m.backward(c, up, t);
  const VectorXd once = Mlp::flatten(t);
  m.backward(c, up, t);
  EXPECT_EQ(Mlp::flatten(t), 2.0 * once);
  t.zero();
  EXPECT_EQ(Mlp::flatten(t), VectorXd::Zero(once.size()));
}

TEST(Mlp, InputGradientMatchesFiniteDifferences) {
  const Mlp m = random_mlp({13, 64, 64, 6}, 3);
  VectorXd x = VectorXd::LinSpaced(13, -0.9, 0.7);
  const VectorXd dir = VectorXd::LinSpaced(6, 1.0, -0.5);
  ForwardCache c;
  m.forward_batch(x, &c);
  GradientTape t = m.make_tape();
  const MatrixXd gx = m.backward(c, dir, t);
  for (int i = 0; i < 13; ++i) {
    const double keep = x[i];
    x[i] = keep + 1e-5;
    const double up = m.forward(x).dot(dir);
    x[i] = keep - 1e-5;
    const double down = m.forward(x).dot(dir);
    x[i] = keep;
    EXPECT_NEAR(gx(i, 0), (up - down) / 2e-5, 1e-8);
  }
}

TEST(GradCheck, TwentyRandomNetsWithinTolerance) {
  const GradCheckReport r = run_gradcheck();
  EXPECT_TRUE(r.passed) << r.max_error;
  EXPECT_LE(r.max_error, 1e-6);
  EXPECT_EQ(r.layers.front().net, 0);
}

TEST(GradCheck, FlippedDerivativeIsCaught) {
  GradCheckOptions o;
  o.flip_derivative = true;
  const GradCheckReport r = run_gradcheck(o);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_error, 1e-2);
}

TEST(Policy, ParameterCountPinned) {
  GaussianPolicy p(13, 6);
  EXPECT_EQ(p.trunk().num_params(), 13u * 64 + 64 + 64 * 64 + 64 + 64 * 6 + 6);
  EXPECT_EQ(p.num_params(), p.trunk().num_params() + 6);
}

TEST(Policy, LogProbAtMean) {
  std::mt19937_64 rng(4);
  GaussianPolicy p(13, 6);
  p.init(rng);
  p.log_std() << -0.5, -1.0, 0.0, 0.3, -2.0, 1.0;
  const VectorXd obs = VectorXd::LinSpaced(13, -1, 1);
  const VectorXd mu = p.mean(obs);
  EXPECT_NEAR(p.log_prob(obs, mu), -p.log_std().sum() - 3.0 * std::log(2.0 * std::numbers::pi), 1e-12);
  // One sigma away along one dimension costs exactly 0.5 nats.
  VectorXd a = mu;
  a[2] += std::exp(p.log_std()[2]);
  EXPECT_NEAR(p.log_prob(obs, mu) - p.log_prob(obs, a), 0.5, 1e-12);
}

TEST(Policy, SampleConsistency) {
  std::mt19937_64 rng(5);
  GaussianPolicy p(13, 6);
  p.init(rng);
  const VectorXd obs = VectorXd::LinSpaced(13, 0, 1);
  for (int k = 0; k < 100; ++k) {
    const auto s = p.sample(obs, rng);
    EXPECT_EQ(s.log_prob, p.log_prob(obs, s.raw));
    EXPECT_LE(s.action.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_EQ(s.action, s.raw.cwiseMax(-1.0).cwiseMin(1.0));
    // Ratio at identical parameters is one.
    EXPECT_EQ(std::exp(p.log_prob(obs, s.raw) - s.log_prob), 1.0);
  }
}

TEST(Policy, TinySigmaSampleIsClampedMean) {
  std::mt19937_64 rng(6);
  GaussianPolicy p(13, 6);
  p.init(rng);
  p.trunk().bias(2) << 2.0, -3.0, 0.1, 0.0, 0.5, -0.5;
  p.log_std().setConstant(-40.0);  // not clamped here on purpose: the sigma -> 0 limit
  const VectorXd obs = VectorXd::Zero(13);
  const auto s = p.sample(obs, rng);
  const VectorXd expect = p.mean(obs).cwiseMax(-1.0).cwiseMin(1.0);
  EXPECT_NEAR((s.action - expect).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Policy, SampleMeanStatistics) {
  std::mt19937_64 rng(7);
  GaussianPolicy p(13, 6);
  p.init(rng);
  p.log_std().setConstant(-1.5);  // keep draws away from the clamp
  const VectorXd obs = VectorXd::LinSpaced(13, -0.5, 0.5);
  const VectorXd mu = p.mean(obs);
  VectorXd acc = VectorXd::Zero(6);
  const int n = 10000;
  for (int k = 0; k < n; ++k) acc += p.sample(obs, rng).raw;
  acc /= n;
  const double sigma = std::exp(-1.5);
  for (int i = 0; i < 6; ++i) EXPECT_LE(std::abs(acc[i] - mu[i]), 3.0 * sigma / std::sqrt(double(n)));
}

TEST(Policy, LogStdClamp) {
  GaussianPolicy p(13, 6);
  p.log_std() << -9, -5, 0, 2, 3, 100;
  p.clamp_log_std();
  EXPECT_EQ(p.log_std().minCoeff(), kLogStdMin);
  EXPECT_EQ(p.log_std().maxCoeff(), kLogStdMax);
}

TEST(Policy, FlatParamsRoundTrip) {
  std::mt19937_64 rng(8);
  GaussianPolicy p(13, 6);
  p.init(rng);
  GaussianPolicy q(13, 6);
  q.set_flat_params(p.flat_params());
  EXPECT_EQ(q.flat_params(), p.flat_params());
  EXPECT_THROW(q.set_flat_params(VectorXd::Zero(3)), std::invalid_argument);
}

TEST(Policy, InitialMeanNearZero) {
  std::mt19937_64 rng(9);
  GaussianPolicy p(13, 6);
  p.init(rng);
  EXPECT_LT(p.mean(VectorXd::Ones(13)).cwiseAbs().maxCoeff(), 0.1);
}

TEST(ValueNet, OutputScaleAppliesToValueAndGradient) {
  std::mt19937_64 rng(10);
  ValueNet a(13, 16, 1.0);
  a.init(rng);
  ValueNet b(13, 16, 50.0);
  b.net() = a.net();
  const MatrixXd x = MatrixXd::Random(13, 3);
  EXPECT_NEAR(b.value(x.col(0)), 50.0 * a.value(x.col(0)), 1e-12);
  ForwardCache ca, cb;
  a.value_batch(x, &ca);
  b.value_batch(x, &cb);
  GradientTape ta = a.net().make_tape(), tb = b.net().make_tape();
  a.backward(ca, MatrixXd::Ones(1, 3), ta);
  b.backward(cb, MatrixXd::Ones(1, 3), tb);
  EXPECT_LT((Mlp::flatten(tb) - 50.0 * Mlp::flatten(ta)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(ValueNet(13, 16, 0.0), std::invalid_argument);
}

TEST(Adam, ZeroGradientLeavesParams) {
  AdamState s;
  VectorXd p = VectorXd::LinSpaced(5, -1, 1);
  const VectorXd before = p;
  adam_step(s, p, VectorXd::Zero(5));
  EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  AdamState s;
  VectorXd p = VectorXd::Zero(4);
  VectorXd g(4);
  g << 0.5, -3.0, 1e-3, 10.0;
  adam_step(s, p, g);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(std::abs(p[i]), s.lr, 1e-4 * s.lr);
  EXPECT_LT(p[0], 0.0);
  EXPECT_GT(p[1], 0.0);
}

TEST(Adam, Deterministic) {
  AdamState s1, s2;
  VectorXd p1 = VectorXd::Ones(3), p2 = VectorXd::Ones(3);
  const VectorXd g = VectorXd::LinSpaced(3, -1, 2);
  for (int k = 0; k < 5; ++k) {
    adam_step(s1, p1, g);
    adam_step(s2, p2, g);
  }
  EXPECT_EQ(p1, p2);
  EXPECT_EQ(s1.step, 5);
}

TEST(Adam, ShapeMismatchThrows) {
  AdamState s;
  VectorXd p = VectorXd::Zero(3);
  EXPECT_THROW(adam_step(s, p, VectorXd::Zero(4)), std::invalid_argument);
}
