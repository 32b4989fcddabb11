#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "pih/env.hpp"
#include "pih/kinematics.hpp"
#include "pih/ppo.hpp"

namespace pih {

/// Configuration error carrying the offending field path and, when known, its source line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& where, const std::string& field, const std::string& what)
      : std::runtime_error(where + ": " + field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct RunConfig {
  EnvConfig env;
  std::string robot_path = "default";
  RobotModel robot = RobotModel::ur10e();
  PpoConfig ppo;
  std::string output_dir = "runs";
  std::string experiment = "pih";
};

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace detail {

inline nlohmann::json interval_json(const Interval& i) { return {i.min, i.max}; }

inline nlohmann::json pose_json(const Pose& p) {
  const auto& q = p.orientation;
  return {{"position", {p.position.x(), p.position.y(), p.position.z()}}, {"orientation", {q.w, q.x, q.y, q.z}}};
}

// Line (1-based) of the first occurrence of "key" in the source text, or 0.
inline int line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return 0;
  int line = 1;
  for (std::size_t i = 0; i < pos; ++i) line += text[i] == '\n' ? 1 : 0;
  return line;
}

class Reader {
 public:
  Reader(std::string source, std::string text) : source_(std::move(source)), text_(std::move(text)) {}

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    const auto dot = field.rfind('.');
    const int line = line_of_key(text_, dot == std::string::npos ? field : field.substr(dot + 1));
    throw ConfigError(line > 0 ? source_ + ":" + std::to_string(line) : source_, field, what);
  }

  template <typename T>
  void get(const nlohmann::json& block, const std::string& prefix, const char* key, T& out) const {
    if (!block.contains(key)) return;
    try {
      out = block.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(prefix + key, std::string("wrong type (") + e.what() + ")");
    }
  }

  Interval interval(const nlohmann::json& j, const std::string& field) const {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
      fail(field, "expected [min, max]");
    return {j[0].get<double>(), j[1].get<double>()};
  }

  Pose pose(const nlohmann::json& j, const std::string& field, Pose base) const {
    if (!j.is_object()) fail(field, "expected {\"position\": [x,y,z], \"orientation\": [w,x,y,z]}");
    if (j.contains("position")) {
      const auto& p = j["position"];
      if (!p.is_array() || p.size() != 3) fail(field + ".position", "expected [x, y, z]");
      base.position = Vec3(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
    }
    if (j.contains("orientation")) {
      const auto& q = j["orientation"];
      if (!q.is_array() || q.size() != 4) fail(field + ".orientation", "expected [w, x, y, z]");
      Quaternion o{q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()};
      if (!(o.norm() > 0.0)) fail(field + ".orientation", "zero quaternion");
      base.orientation = o.normalized();
    }
    return base;
  }

 private:
  std::string source_;
  std::string text_;
};

}  // namespace detail

/// Fully resolved configuration, every field present. This is what gets hashed and echoed to disk.
inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json env;
  env["num_envs"] = c.env.num_envs;
  env["horizon"] = c.env.horizon;
  env["seed"] = c.env.seed;
  nlohmann::json ranges, enabled;
  for (int i = 0; i < 6; ++i) {
    Interval iv = c.env.range.axes[i];
    if (i >= 3) iv = {iv.min / kDegToRad, iv.max / kDegToRad};
    ranges[RandomizationRange::kAxisNames[i]] = detail::interval_json(iv);
    enabled[RandomizationRange::kAxisNames[i]] = c.env.range.enabled[i];
  }
  env["ranges"] = ranges;
  env["enabled"] = enabled;
  env["nominal_hole"] = detail::pose_json(c.env.nominal_hole);
  env["action_span"] = c.env.action_span;
  env["rate_limit"] = c.env.rate_limit;

  nlohmann::json ppo;
  ppo["epsilon"] = c.ppo.epsilon;
  ppo["gamma"] = c.ppo.gamma;
  ppo["lam"] = c.ppo.lam;
  ppo["update_epochs"] = c.ppo.update_epochs;
  ppo["minibatch_size"] = c.ppo.resolved_minibatch(c.env.num_envs, c.env.horizon);
  ppo["value_coef"] = c.ppo.value_coef;
  ppo["entropy_coef"] = c.ppo.entropy_coef;
  ppo["max_grad_norm"] = c.ppo.max_grad_norm;
  ppo["learning_rate"] = c.ppo.learning_rate;
  ppo["total_epochs"] = c.ppo.total_epochs;
  ppo["hidden"] = c.ppo.hidden;
  ppo["init_log_std"] = c.ppo.init_log_std;
  ppo["success_bootstrap"] = c.ppo.success_bootstrap;
  ppo["value_scale"] = c.ppo.value_scale;

  nlohmann::json robot = robot_model_to_json(c.robot);
  robot["path"] = c.robot_path;

  return {{"env", env},
          {"robot", robot},
          {"ppo", ppo},
          {"output", {{"dir", c.output_dir}, {"experiment", c.experiment}}}};
}

/// Hash of a resolved config document. Where artifacts land does not change what is computed,
/// so the output block is excluded.
inline std::string config_json_hash(nlohmann::json j) {
  j.erase("output");
  return hex64(fnv1a64(j.dump()));
}

inline std::string config_hash(const RunConfig& c) { return config_json_hash(config_to_json(c)); }

/// Parses a run config. `base_dir` resolves a relative robot model path.
inline RunConfig config_from_json_text(const std::string& text, const std::string& source = "config",
                                       const std::string& base_dir = ".") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Recover the line from the byte offset.
    int line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i) line += text[i] == '\n' ? 1 : 0;
    throw ConfigError(source + ":" + std::to_string(line), "<document>", e.what());
  }
  const detail::Reader rd(source, text);
  if (!j.is_object()) rd.fail("<document>", "expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (k != "env" && k != "robot" && k != "ppo" && k != "output") rd.fail(k, "unknown block");

  RunConfig c;
  if (!j.contains("env") || !j["env"].is_object()) rd.fail("env", "required block missing");
  const auto& env = j["env"];
  if (!env.contains("seed")) rd.fail("env.seed", "required field missing (runs are never seeded from the clock)");
  if (!env["seed"].is_number_unsigned()) rd.fail("env.seed", "must be a non-negative integer");
  rd.get(env, "env.", "seed", c.env.seed);
  rd.get(env, "env.", "num_envs", c.env.num_envs);
  rd.get(env, "env.", "horizon", c.env.horizon);
  rd.get(env, "env.", "rate_limit", c.env.rate_limit);
  if (env.contains("action_span")) {
    const auto& s = env["action_span"];
    if (s.is_number()) {
      c.env.action_span.fill(s.get<double>());
    } else if (s.is_array() && s.size() == kActDim) {
      for (int i = 0; i < kActDim; ++i) c.env.action_span[i] = s[i].get<double>();
    } else {
      rd.fail("env.action_span", "expected a number or six numbers");
    }
  }
  if (env.contains("ranges")) {
    const auto& r = env["ranges"];
    if (!r.is_object()) rd.fail("env.ranges", "expected an object keyed by axis");
    for (const auto& [k, v] : r.items()) {
      int axis = -1;
      for (int i = 0; i < 6; ++i)
        if (k == RandomizationRange::kAxisNames[i]) axis = i;
      if (axis < 0) rd.fail("env.ranges." + k, "unknown axis");
      Interval iv = rd.interval(v, "env.ranges." + k);
      // Angular ranges are written in degrees.
      if (axis >= 3) iv = {iv.min * kDegToRad, iv.max * kDegToRad};
      c.env.range.axes[axis] = iv;
    }
  }
  if (env.contains("enabled")) {
    const auto& e = env["enabled"];
    if (e.is_array()) {
      c.env.range.enabled.fill(false);
      for (const auto& name : e) {
        int axis = -1;
        for (int i = 0; i < 6; ++i)
          if (name.is_string() && name.get<std::string>() == RandomizationRange::kAxisNames[i]) axis = i;
        if (axis < 0) rd.fail("env.enabled", "unknown axis " + name.dump());
        c.env.range.enabled[axis] = true;
      }
    } else if (e.is_object()) {
      for (const auto& [k, v] : e.items()) {
        int axis = -1;
        for (int i = 0; i < 6; ++i)
          if (k == RandomizationRange::kAxisNames[i]) axis = i;
        if (axis < 0 || !v.is_boolean()) rd.fail("env.enabled." + k, "unknown axis or non-boolean flag");
        c.env.range.enabled[axis] = v.get<bool>();
      }
    } else {
      rd.fail("env.enabled", "expected a list of axis names or an object of flags");
    }
  }
  if (env.contains("nominal_hole")) c.env.nominal_hole = rd.pose(env["nominal_hole"], "env.nominal_hole", c.env.nominal_hole);

  if (j.contains("robot")) {
    const auto& r = j["robot"];
    bool inline_model = false;
    if (r.is_string()) {
      c.robot_path = r.get<std::string>();
    } else if (r.is_object()) {
      if (r.contains("path")) c.robot_path = r["path"].get<std::string>();
      nlohmann::json model = r;
      model.erase("path");
      if (!model.empty()) {
        // An inline table takes precedence; "path" is then informational.
        inline_model = true;
        try {
          c.robot = robot_model_from_json(model);
        } catch (const std::exception& e) {
          rd.fail("robot", e.what());
        }
      }
    } else {
      rd.fail("robot", "expected \"default\", a file path, or an inline model");
    }
    if (!inline_model && c.robot_path != "default") {
      std::string path = c.robot_path;
      if (!path.empty() && path.front() != '/') path = base_dir + "/" + path;
      std::ifstream probe(path);
      if (!probe) rd.fail("robot.path", "file not found: " + path);
      try {
        c.robot = load_robot_model(path);
      } catch (const std::exception& e) {
        rd.fail("robot.path", e.what());
      }
    }
  }

  if (j.contains("ppo")) {
    const auto& p = j["ppo"];
    if (!p.is_object()) rd.fail("ppo", "expected an object");
    rd.get(p, "ppo.", "epsilon", c.ppo.epsilon);
    rd.get(p, "ppo.", "gamma", c.ppo.gamma);
    rd.get(p, "ppo.", "lam", c.ppo.lam);
    rd.get(p, "ppo.", "update_epochs", c.ppo.update_epochs);
    rd.get(p, "ppo.", "minibatch_size", c.ppo.minibatch_size);
    rd.get(p, "ppo.", "value_coef", c.ppo.value_coef);
    rd.get(p, "ppo.", "entropy_coef", c.ppo.entropy_coef);
    rd.get(p, "ppo.", "max_grad_norm", c.ppo.max_grad_norm);
    rd.get(p, "ppo.", "learning_rate", c.ppo.learning_rate);
    rd.get(p, "ppo.", "total_epochs", c.ppo.total_epochs);
    rd.get(p, "ppo.", "hidden", c.ppo.hidden);
    rd.get(p, "ppo.", "init_log_std", c.ppo.init_log_std);
    rd.get(p, "ppo.", "success_bootstrap", c.ppo.success_bootstrap);
    rd.get(p, "ppo.", "value_scale", c.ppo.value_scale);
  }
  if (j.contains("output")) {
    const auto& o = j["output"];
    if (!o.is_object()) rd.fail("output", "expected an object");
    rd.get(o, "output.", "dir", c.output_dir);
    rd.get(o, "output.", "experiment", c.experiment);
  }

  try {
    c.env.validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    const auto colon = msg.find(' ');
    rd.fail(msg.substr(0, colon), msg);
  }
  try {
    c.ppo.validate(c.env.num_envs, c.env.horizon);
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    rd.fail(msg.substr(0, msg.find(' ')), msg);
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "<file>", "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  const auto slash = path.rfind('/');
  return config_from_json_text(ss.str(), path, slash == std::string::npos ? "." : path.substr(0, slash));
}

}  // namespace pih
