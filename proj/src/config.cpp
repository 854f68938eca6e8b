#include "attnioc/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

namespace attnioc {
namespace {

using nlohmann::json;

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "scale",          "horizon",        "dt",          "speed",         "curvature",  "steering_ratio",
      "process_noise",  "heading_noise_std", "d_max",    "theta",         "transfer_speed", "transfer_curvature",
      "train_pool",     "eval_count",     "k_grid",      "seeds",         "methods",    "output_dir",
      "base_seed",      "barrier_weight", "rel_grad_tol", "max_iters",    "smoothing_eps"};
  return keys;
}

[[noreturn]] void bad(const std::string& key, const std::string& what) { throw ConfigError("config field '" + key + "': " + what); }

double get_number(const json& j, const std::string& key) {
  if (!j.is_number()) bad(key, "expected a number");
  return j.get<double>();
}

int get_int(const json& j, const std::string& key) {
  if (!j.is_number_integer()) bad(key, "expected an integer");
  return j.get<int>();
}

std::vector<double> get_series(const json& j, const std::string& key) {
  if (j.is_number()) return {j.get<double>()};
  if (!j.is_array() || j.empty()) bad(key, "expected a number or a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& v : j) out.push_back(get_number(v, key));
  return out;
}

MatrixXd get_matrix(const json& j, const std::string& key) {
  if (!j.is_array() || j.empty()) bad(key, "expected a square array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  MatrixXd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = j[static_cast<size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) bad(key, "expected a square array of rows");
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = get_number(row[static_cast<size_t>(c)], key);
  }
  return m;
}

json series_json(const std::vector<double>& s) {
  if (s.size() == 1) return s[0];
  return s;
}

}  // namespace

Scale scale_from_string(const std::string& s) {
  if (s == "desk") return Scale::Desk;
  if (s == "paper") return Scale::Paper;
  throw ConfigError("unknown scale '" + s + "' (expected desk or paper)");
}

std::string to_string(Scale s) { return s == Scale::Desk ? "desk" : "paper"; }

DriverConfig ExperimentConfig::driver(const Scenario& s) const {
  DriverConfig d;
  d.speed = s.speed;
  d.curvature = s.curvature;
  d.steering_ratio = steering_ratio;
  d.dt = dt;
  d.horizon = horizon;
  d.process_noise = process_noise;
  d.heading_noise_std = heading_noise_std;
  d.d_max = d_max;
  return d;
}

ExperimentConfig default_config(Scale scale) {
  ExperimentConfig c;
  c.scale = scale;
  if (scale == Scale::Paper) {
    c.train_pool = 3000;
    c.eval_count = 1976;
    c.k_grid = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  }
  return c;
}

ExperimentConfig config_from_json(const json& j, std::optional<Scale> scale_override) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");

  Scale scale = Scale::Desk;
  if (j.contains("scale")) {
    if (!j["scale"].is_string()) bad("scale", "expected \"desk\" or \"paper\"");
    scale = scale_from_string(j["scale"].get<std::string>());
  }
  if (scale_override) scale = *scale_override;
  ExperimentConfig c = default_config(scale);

  if (j.contains("horizon")) c.horizon = get_int(j["horizon"], "horizon");
  if (j.contains("dt")) c.dt = get_number(j["dt"], "dt");
  if (j.contains("speed")) c.train.speed = get_series(j["speed"], "speed");
  if (j.contains("curvature")) c.train.curvature = get_series(j["curvature"], "curvature");
  if (j.contains("transfer_speed")) c.transfer.speed = get_series(j["transfer_speed"], "transfer_speed");
  if (j.contains("transfer_curvature")) c.transfer.curvature = get_series(j["transfer_curvature"], "transfer_curvature");
  if (j.contains("steering_ratio")) c.steering_ratio = get_number(j["steering_ratio"], "steering_ratio");
  if (j.contains("process_noise") && !j["process_noise"].is_null())
    c.process_noise = get_matrix(j["process_noise"], "process_noise");
  if (j.contains("heading_noise_std")) c.heading_noise_std = get_number(j["heading_noise_std"], "heading_noise_std");
  if (j.contains("d_max") && !j["d_max"].is_null()) c.d_max = get_int(j["d_max"], "d_max");
  if (j.contains("theta")) {
    const auto th = get_series(j["theta"], "theta");
    c.theta = Eigen::Map<const VectorXd>(th.data(), static_cast<Eigen::Index>(th.size()));
  }
  if (j.contains("train_pool")) c.train_pool = get_int(j["train_pool"], "train_pool");
  if (j.contains("eval_count")) c.eval_count = get_int(j["eval_count"], "eval_count");
  if (j.contains("k_grid")) {
    if (!j["k_grid"].is_array() || j["k_grid"].empty()) bad("k_grid", "expected a non-empty array of integers");
    c.k_grid.clear();
    for (const auto& v : j["k_grid"]) c.k_grid.push_back(get_int(v, "k_grid"));
  }
  if (j.contains("seeds")) c.seeds = get_int(j["seeds"], "seeds");
  if (j.contains("methods")) {
    if (!j["methods"].is_array() || j["methods"].empty()) bad("methods", "expected a non-empty array of method names");
    c.methods.clear();
    for (const auto& v : j["methods"]) {
      if (!v.is_string()) bad("methods", "expected method names");
      try {
        c.methods.push_back(method_from_string(v.get<std::string>()));
      } catch (const std::invalid_argument& e) {
        bad("methods", e.what());
      }
    }
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) bad("output_dir", "expected a string");
    c.output_dir = j["output_dir"].get<std::string>();
  }
  if (j.contains("base_seed")) {
    if (!j["base_seed"].is_number_unsigned()) bad("base_seed", "expected a non-negative integer");
    c.base_seed = j["base_seed"].get<std::uint64_t>();
  }
  if (j.contains("barrier_weight")) c.barrier_weight = get_number(j["barrier_weight"], "barrier_weight");
  if (j.contains("rel_grad_tol")) c.rel_grad_tol = get_number(j["rel_grad_tol"], "rel_grad_tol");
  if (j.contains("max_iters")) c.max_iters = get_int(j["max_iters"], "max_iters");
  if (j.contains("smoothing_eps")) c.smoothing_eps = get_number(j["smoothing_eps"], "smoothing_eps");
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const std::string& path, std::optional<Scale> scale_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, scale_override);
}

void validate_config(const ExperimentConfig& c) {
  if (c.horizon < 1) bad("horizon", "must be >= 1");
  if (!(c.dt > 0.0)) bad("dt", "must be positive");
  if (c.theta.size() != 6)
    throw DimensionError("config field 'theta': has " + std::to_string(c.theta.size()) + " entries, expected 6");
  if (c.d_max && (*c.d_max < 1)) bad("d_max", "must be >= 1");
  if (c.train_pool < 1) bad("train_pool", "must be >= 1");
  if (c.eval_count < 2) bad("eval_count", "must be >= 2");
  if (c.seeds < 1) bad("seeds", "must be >= 1");
  if (c.heading_noise_std < 0.0) bad("heading_noise_std", "must be >= 0");
  for (int k : c.k_grid) {
    if (k < 0 || k > 30) bad("k_grid", "entries must be in 0..30");
    if ((1L << k) > c.train_pool) bad("k_grid", "2^" + std::to_string(k) + " exceeds train_pool");
  }
  std::set<int> ks(c.k_grid.begin(), c.k_grid.end());
  if (ks.size() != c.k_grid.size()) bad("k_grid", "entries must be distinct");
  std::set<Method> ms(c.methods.begin(), c.methods.end());
  if (ms.size() != c.methods.size()) bad("methods", "entries must be distinct");
  if (!(c.rel_grad_tol > 0.0)) bad("rel_grad_tol", "must be positive");
  if (c.barrier_weight < 0.0) bad("barrier_weight", "must be >= 0");
  if (c.max_iters < 1) bad("max_iters", "must be >= 1");
  if (c.smoothing_eps < 0.0) bad("smoothing_eps", "must be >= 0");
  // Building both problems checks speeds, curvature series, noise and theta.
  for (const Scenario* s : {&c.train, &c.transfer}) {
    try {
      const AttentionProblem p = build_driver_problem(c.driver(*s));
      const auto report = validate_problem(p);
      if (!report.ok()) throw ConfigError("scenario " + s->name + ": " + report.violations.front());
      check_theta(p, c.theta);
      // The estimators start at the true theta, which must be feasible.
      if (c.theta.head(p.k_p()).maxCoeff() >= 0.0) bad("theta", "primary-task weights must be negative");
    } catch (const DimensionError& e) {
      throw DimensionError("scenario " + s->name + ": " + e.what());
    } catch (const DomainError& e) {
      throw ConfigError("scenario " + s->name + ": " + e.what());
    }
  }
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["scale"] = to_string(c.scale);
  j["horizon"] = c.horizon;
  j["dt"] = c.dt;
  j["speed"] = series_json(c.train.speed);
  j["curvature"] = series_json(c.train.curvature);
  j["transfer_speed"] = series_json(c.transfer.speed);
  j["transfer_curvature"] = series_json(c.transfer.curvature);
  j["steering_ratio"] = c.steering_ratio;
  if (c.process_noise) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < c.process_noise->rows(); ++r) {
      json row = json::array();
      for (Eigen::Index k = 0; k < c.process_noise->cols(); ++k) row.push_back((*c.process_noise)(r, k));
      rows.push_back(row);
    }
    j["process_noise"] = rows;
  } else {
    j["process_noise"] = nullptr;
  }
  j["heading_noise_std"] = c.heading_noise_std;
  j["d_max"] = c.resolved_d_max();
  j["theta"] = std::vector<double>(c.theta.data(), c.theta.data() + c.theta.size());
  j["train_pool"] = c.train_pool;
  j["eval_count"] = c.eval_count;
  j["k_grid"] = c.k_grid;
  j["seeds"] = c.seeds;
  json ms = json::array();
  for (Method m : c.methods) ms.push_back(to_string(m));
  j["methods"] = ms;
  j["output_dir"] = c.output_dir;
  j["base_seed"] = c.base_seed;
  j["barrier_weight"] = c.barrier_weight;
  j["rel_grad_tol"] = c.rel_grad_tol;
  j["max_iters"] = c.max_iters;
  j["smoothing_eps"] = c.smoothing_eps;
  return j;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& c) {
  json j = config_to_json(c);
  j.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

}  // namespace attnioc
