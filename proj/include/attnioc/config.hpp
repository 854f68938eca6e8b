#pragma once

#include "attnioc/estimators.hpp"
#include "attnioc/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace attnioc {

/// Schema violation in a configuration file; the message names the field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Scenario {
  std::string name;
  std::vector<double> speed;
  std::vector<double> curvature;
};

enum class Scale { Desk, Paper };

Scale scale_from_string(const std::string& s);
std::string to_string(Scale s);

struct ExperimentConfig {
  Scale scale = Scale::Desk;
  int horizon = 175;
  double dt = 0.04;
  double steering_ratio = 1.0 / 16.0;
  Scenario train{"S1", {500.0 / 36.0}, {14e-4}};
  Scenario transfer{"S2", {800.0 / 36.0}, {-14e-4}};
  std::optional<MatrixXd> process_noise;
  double heading_noise_std = 2.5e-4;
  std::optional<int> d_max;
  VectorXd theta = reference_driver_theta();

  int train_pool = 256;
  int eval_count = 500;
  std::vector<int> k_grid{0, 2, 4, 6, 8};
  int seeds = 5;
  std::vector<Method> methods{Method::MCE, Method::MCL, Method::DPE};
  std::string output_dir = "out";
  std::uint64_t base_seed = 0;

  double barrier_weight = 1e-4;
  double rel_grad_tol = 1e-6;
  int max_iters = 200;
  double smoothing_eps = 1e-6;

  int resolved_d_max() const { return d_max.value_or(horizon); }
  DriverConfig driver(const Scenario& s) const;
};

/// Defaults for a scale preset; explicit keys in a file override these.
ExperimentConfig default_config(Scale scale);

/// Parses and validates; unknown keys, wrong types and out-of-range values throw ConfigError,
/// a theta of the wrong length throws DimensionError.
ExperimentConfig config_from_json(const nlohmann::json& j, std::optional<Scale> scale_override = std::nullopt);
ExperimentConfig load_config(const std::string& path, std::optional<Scale> scale_override = std::nullopt);

/// Checks invariants of an already built config (throws ConfigError / DimensionError / DomainError).
void validate_config(const ExperimentConfig& cfg);

/// Fully resolved config; the output directory is included but ignored by the hash.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// 16 hex digits of FNV-1a over the canonical resolved config (output_dir excluded).
std::string config_hash(const ExperimentConfig& cfg);

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace attnioc
