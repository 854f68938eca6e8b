#pragma once

#include "attnioc/belief.hpp"
#include "attnioc/soft_policy.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace attnioc {

/// Anything that draws controls for a hybrid state at step t.
using ControlSampler = std::function<Controls(int t, const HybridState& state, std::mt19937_64& rng)>;

/// The sampler keeps its own copy of the policy.
ControlSampler make_sampler(const SoftPolicy& policy);

struct StepRecord {
  int t = 0;
  VectorXd x_p;  // true primary-task state
  VectorXd mu;   // belief mean
  int d = 0;
  int x_s = 0;
  int x_o = 1;
  VectorXd u_p;
  int u_o = 0;
  int u_s = 0;
  VectorXd obs;  // observation received at this step
  VectorXd phi;  // features evaluated on the true state
};

struct Trajectory {
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
};

struct DatasetMeta {
  std::string scenario;
  std::string policy_id;
  std::optional<VectorXd> theta;
  std::uint64_t base_seed = 0;
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  DatasetMeta meta;

  size_t size() const { return trajectories.size(); }
  int horizon() const { return trajectories.empty() ? -1 : static_cast<int>(trajectories[0].steps.size()) - 1; }
  /// First n trajectories, same metadata.
  Dataset head(size_t n) const;
};

/// RNG for one trajectory; adjacent seeds give unrelated streams.
std::mt19937_64 make_rng(std::uint64_t seed);

/// Square-root factor L with L L' = cov for a symmetric PSD (possibly singular) matrix.
MatrixXd psd_factor(const MatrixXd& cov);

Trajectory simulate_trajectory(const AttentionProblem& problem, const CovarianceSchedule& schedule,
                               const ControlSampler& policy, std::uint64_t seed);

/// n trajectories with seeds base_seed + i.
Dataset simulate_batch(const AttentionProblem& problem, const CovarianceSchedule& schedule,
                       const ControlSampler& policy, int n, std::uint64_t base_seed);

/// Mean over trajectories of the summed per-step features.
VectorXd empirical_feature_expectation(const Dataset& data);

/// Summed true-state features of one rollout that starts at step t0 in the
/// given belief state (true state drawn from the belief) and applies `first`
/// before following `policy`.
VectorXd rollout_features_from(const AttentionProblem& problem, const CovarianceSchedule& schedule,
                               const ControlSampler& policy, int t0, const HybridState& start,
                               const Controls& first, std::mt19937_64& rng);

}  // namespace attnioc
