#pragma once

#include "attnioc/config.hpp"
#include "attnioc/dpe.hpp"
#include "attnioc/metrics.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace attnioc {

struct ScenarioMetrics {
  double kl_g = 0.0;  // temporal-mean Gaussian KL of x_p, reference || candidate
  double kl_d = 0.0;  // KL of the pooled glance-duration histogram, reference || candidate
};

struct CellResult {
  Method method = Method::MCE;
  int k = 0;
  int seed = 0;
  bool ok = false;
  std::string error;
  std::optional<VectorXd> theta_hat;  // IOC methods
  std::optional<DpePolicy> dpe;       // DPE only (coefficients, no CV traces)
  int iterations = 0;
  bool converged = false;
  double rd = 0.0;  // IOC methods
  std::map<std::string, ScenarioMetrics> scenarios;
};

/// True policy on fresh seeds vs the reference set, one per (seed, scenario).
struct BaselineResult {
  int seed = 0;
  std::map<std::string, ScenarioMetrics> scenarios;
};

struct E1Report {
  ExperimentConfig config;
  std::string config_hash;
  std::vector<CellResult> cells;  // ordered by (seed, k, method)
  std::vector<BaselineResult> baselines;
  std::vector<double> cell_seconds;  // runtime accounting, not part of the deterministic outputs
  int cached_cells = 0;
};

struct RunOptions {
  int threads = 1;
  bool use_cache = true;
  std::string cache_dir;  // default: <output_dir>/cache/<hash>
  std::function<void(const std::string&)> log;
};

/// Seed of an independent stream derived from (base, a, b).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

E1Report run_e1(const ExperimentConfig& cfg, const RunOptions& opts = {});

struct SummaryRow {
  std::string metric;
  std::string method;  // "TRUE" for the self-baseline
  std::string scenario;
  int k = -1;  // -1 for the baseline
  int n = 0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

/// Median and quartiles across seeds per (metric, method, scenario, k); failed cells are skipped
/// and keys without any finished cell produce no row.
std::vector<SummaryRow> summarize(const E1Report& report);

/// Linear-interpolation quantile of unsorted values.
double quantile(std::vector<double> v, double q);

/// Writes the metrics report, per-cell estimates, plot series and the echoed config.
/// Returns the written paths.
std::vector<std::string> emit_outputs(const E1Report& report, const std::string& dir);

}  // namespace attnioc
