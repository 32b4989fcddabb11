#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "pih/config.hpp"
#include "pih/nn.hpp"

namespace pih {

inline constexpr const char* kCheckpointFormat = "pih-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Policy + critic parameters with the resolved config they were trained under.
struct Checkpoint {
  GaussianPolicy policy;
  ValueNet value;
  int epoch = -1;  // -1: initial parameters, before any update
  double success_pct = 0.0;
  std::string config_hash;
  nlohmann::json config;  // resolved config

  /// Content id over the parameters only.
  std::string id() const {
    const VectorXd p = policy.flat_params();
    VectorXd v(value.net().num_params() + 1);
    v << value.net().flat_params(), value.output_scale();
    std::string bytes(reinterpret_cast<const char*>(p.data()), p.size() * sizeof(double));
    bytes.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
    return hex64(fnv1a64(bytes));
  }
};

namespace detail {

inline nlohmann::json mlp_json(const Mlp& m) {
  const VectorXd p = m.flat_params();
  return {{"sizes", m.sizes()}, {"params", std::vector<double>(p.data(), p.data() + p.size())}};
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp m(j.at("sizes").get<std::vector<int>>());
  const auto p = j.at("params").get<std::vector<double>>();
  if (p.size() != m.num_params()) throw std::runtime_error("checkpoint: parameter count does not match layer sizes");
  m.set_flat_params(Eigen::Map<const VectorXd>(p.data(), static_cast<long>(p.size())));
  return m;
}

}  // namespace detail

/// JSON document; doubles are written in shortest round-trip form, so load(save(c)) is bit-exact.
inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  const VectorXd ls = c.policy.log_std();
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"config_hash", c.config_hash},
          {"epoch", c.epoch},
          {"success_pct", c.success_pct},
          {"policy",
           {{"trunk", detail::mlp_json(c.policy.trunk())},
            {"log_std", std::vector<double>(ls.data(), ls.data() + ls.size())}}},
          {"value", detail::mlp_json(c.value.net())},
          {"value_scale", c.value.output_scale()},
          {"config", c.config}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kCheckpointFormat) throw std::runtime_error("not a checkpoint document");
  if (j.value("version", 0) != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  Checkpoint c;
  c.config_hash = j.at("config_hash").get<std::string>();
  c.epoch = j.at("epoch").get<int>();
  c.success_pct = j.at("success_pct").get<double>();
  c.config = j.at("config");
  const Mlp trunk = detail::mlp_from_json(j.at("policy").at("trunk"));
  const auto ls = j.at("policy").at("log_std").get<std::vector<double>>();
  if (static_cast<int>(ls.size()) != trunk.output_size()) throw std::runtime_error("checkpoint: log_std size");
  c.policy = GaussianPolicy(trunk.input_size(), trunk.output_size(), trunk.sizes().at(1));
  if (c.policy.trunk().sizes() != trunk.sizes()) throw std::runtime_error("checkpoint: unsupported policy shape");
  c.policy.trunk() = trunk;
  c.policy.log_std() = Eigen::Map<const VectorXd>(ls.data(), static_cast<long>(ls.size()));
  const Mlp v = detail::mlp_from_json(j.at("value"));
  c.value = ValueNet(v.input_size(), v.sizes().at(1), j.at("value_scale").get<double>());
  if (c.value.net().sizes() != v.sizes()) throw std::runtime_error("checkpoint: unsupported value shape");
  c.value.net() = v;
  return c;
}

/// Writes through a temporary file and renames, so a reader never sees a partial checkpoint.
inline void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << text;
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  write_text_atomic(path, checkpoint_to_json(c).dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint " + path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

/// Rebuilds the run config a checkpoint was trained under, verifying the embedded document
/// against the stored hash.
inline RunConfig checkpoint_config(const Checkpoint& c) {
  const std::string recomputed = config_json_hash(c.config);
  if (recomputed != c.config_hash)
    throw std::runtime_error("checkpoint config hash mismatch: stored " + c.config_hash + ", recomputed " + recomputed);
  return config_from_json_text(c.config.dump(), "checkpoint config");
}

}  // namespace pih
