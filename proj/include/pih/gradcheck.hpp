#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pih/nn.hpp"

namespace pih {

struct GradCheckOptions {
  int num_nets = 20;
  int batch = 3;
  double step = 1e-5;
  double tolerance = 1e-6;
  double scale_floor = 1e-3;  // denominator floor for near-zero gradient entries
  std::uint64_t seed = 20240607;
  bool flip_derivative = false;  // fault injection: the check is expected to fail
};

struct LayerError {
  int net = 0;
  int layer = 0;
  double weight_error = 0.0;
  double bias_error = 0.0;
};

struct GradCheckReport {
  std::vector<LayerError> layers;
  double max_error = 0.0;
  bool passed = false;
};

/// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Loss L = sum(direction .* net(x)); analytic gradient by backward versus central differences
/// on every parameter. Net 0 is the 13-64-64-6 policy trunk; the rest have random shapes.
inline GradCheckReport run_gradcheck(const GradCheckOptions& opt = {}) {
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<int> width(1, 24), depth(1, 3);
  std::normal_distribution<double> n01(0.0, 1.0);
  GradCheckReport rep;

  for (int k = 0; k < opt.num_nets; ++k) {
    std::vector<int> sizes{13, 64, 64, 6};
    if (k > 0) {
      sizes.assign(1, width(rng));
      const int hidden = depth(rng);
      for (int h = 0; h < hidden; ++h) sizes.push_back(width(rng));
      sizes.push_back(width(rng));
    }
    Mlp net(sizes);
    net.init_orthogonal(rng, 1.0);
    for (int l = 0; l < net.num_layers(); ++l)
      for (int i = 0; i < net.bias(l).size(); ++i) net.bias(l)[i] = 0.1 * n01(rng);
    net.set_flipped_derivative(opt.flip_derivative);

    MatrixXd x(net.input_size(), opt.batch), dir(net.output_size(), opt.batch);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = n01(rng);
    for (int i = 0; i < dir.size(); ++i) dir.data()[i] = n01(rng);

    ForwardCache cache;
    net.forward_batch(x, &cache);
    GradientTape tape = net.make_tape();
    net.backward(cache, dir, tape);

    auto loss = [&](const Mlp& m) { return (m.forward_batch(x, nullptr).array() * dir.array()).sum(); };
    auto numeric = [&](double& p) {
      const double keep = p;
      p = keep + opt.step;
      const double up = loss(net);
      p = keep - opt.step;
      const double down = loss(net);
      p = keep;
      return (up - down) / (2.0 * opt.step);
    };

    for (int l = 0; l < net.num_layers(); ++l) {
      LayerError e{k, l, 0.0, 0.0};
      MatrixXd& w = net.weight(l);
      for (int i = 0; i < w.size(); ++i)
        e.weight_error =
            std::max(e.weight_error, relative_error(tape.dW[l].data()[i], numeric(w.data()[i]), opt.scale_floor));
      VectorXd& b = net.bias(l);
      for (int i = 0; i < b.size(); ++i)
        e.bias_error = std::max(e.bias_error, relative_error(tape.db[l][i], numeric(b[i]), opt.scale_floor));
      rep.max_error = std::max({rep.max_error, e.weight_error, e.bias_error});
      rep.layers.push_back(e);
    }
  }
  rep.passed = rep.max_error <= opt.tolerance;
  return rep;
}

}  // namespace pih
