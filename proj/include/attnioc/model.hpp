#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace attnioc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Thrown when a problem, parameter vector or input has inconsistent shape.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown for parameters outside the domain where the model is defined.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Discrete secondary task. The transition is conditioned on the attention bit
// in effect after this step's switch (1 = eyes on the primary task).
struct SecondaryMdp {
  int num_states = 1;
  int num_controls = 1;
  // transition[attn][x_s][u_s] is a row over next x_s.
  std::vector<std::vector<std::vector<VectorXd>>> transition;
  // features[x_s][u_s] has dimension k_s.
  std::vector<std::vector<VectorXd>> features;

  int feature_dim() const {
    return features.empty() || features[0].empty()
               ? 0
               : static_cast<int>(features[0][0].size());
  }
  const VectorXd& next_distribution(int attention, int x_s, int u_s) const {
    return transition[attention][x_s][u_s];
  }
};

// Linear map from the continuous parameters theta_p to
// vec(blk(Theta1, Theta2)), column-major, of size (n_x + n_u)^2.
struct FeatureSpec {
  MatrixXd selector;  // (n_z^2) x k_p
  int k_p() const { return static_cast<int>(selector.cols()); }
};

struct InitialState {
  VectorXd x_p;
  int d = 0;
  int x_s = 0;
};

struct AttentionProblem {
  int horizon = 0;  // T; rewards are collected for t = 0..T
  double dt = 0.0;
  std::vector<MatrixXd> dyn_A;  // length T
  std::vector<MatrixXd> dyn_B;
  std::vector<VectorXd> dyn_a;
  MatrixXd process_noise;
  MatrixXd obs_H;
  MatrixXd obs_noise;
  SecondaryMdp sub_mdp;
  FeatureSpec feature_spec;
  int d_max = 1;
  InitialState init_state;

  int n_x() const { return static_cast<int>(process_noise.rows()); }
  int n_u() const { return dyn_B.empty() ? 0 : static_cast<int>(dyn_B[0].cols()); }
  int n_z() const { return n_x() + n_u(); }
  int k_p() const { return feature_spec.k_p(); }
  int k_s() const { return sub_mdp.feature_dim(); }
  /// Total parameter count: k_p + k_s + 1 (switching cost).
  int num_params() const { return k_p() + k_s() + 1; }
};

/// Reward weights, partitioned as [theta_p; theta_s; theta_o].
struct RewardParams {
  VectorXd theta_p;
  VectorXd theta_s;
  double theta_o = 0.0;

  VectorXd flat() const;
  static RewardParams from_flat(const VectorXd& theta, int k_p, int k_s);
};

struct DriverConfig {
  std::vector<double> speed{500.0 / 36.0};  // m/s, one value or one per step
  std::vector<double> curvature{14e-4};    // 1/m, one value or one per step
  double steering_ratio = 1.0 / 16.0;
  double dt = 0.04;
  int horizon = 175;
  // Empty means the default heading disturbance (see build_driver_problem).
  std::optional<MatrixXd> process_noise;
  double heading_noise_std = 2.5e-4;  // rad per step
  std::optional<int> d_max;  // defaults to horizon
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate_problem(const AttentionProblem& problem);

/// Theta1 and Theta2 for the given continuous parameters.
std::pair<MatrixXd, MatrixXd> reward_blocks(const AttentionProblem& problem,
                                            const VectorXd& theta_p);
/// blk(Theta1, Theta2) as one (n_z x n_z) matrix.
MatrixXd reward_block_matrix(const AttentionProblem& problem, const VectorXd& theta_p);

/// Feature vector [phi_p; phi_s; phi_o] of one step.
VectorXd eval_features(const AttentionProblem& problem, const VectorXd& x_p,
                       const VectorXd& u_p, int x_s, int u_s, int u_o);

/// Lane keeping with a secondary visual task; x_p = [y; y_dot; heading; steering].
AttentionProblem build_driver_problem(const DriverConfig& cfg);

/// The six-parameter reward used for the simulated driver experiments.
VectorXd reference_driver_theta();

/// Checks theta against the problem; throws DimensionError or DomainError.
/// Returns a warning string when theta_o >= 0 (allowed, but atypical).
std::optional<std::string> check_theta(const AttentionProblem& problem, const VectorXd& theta);

}  // namespace attnioc
