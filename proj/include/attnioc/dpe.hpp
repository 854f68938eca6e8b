#pragma once

#include "attnioc/simulator.hpp"

#include <cstdint>
#include <vector>

namespace attnioc {

// Penalized regressions used by direct policy estimation. The penalty is
// applied on standardized covariates; coefficients are returned on the
// original scale.

struct LassoPath {
  std::vector<double> lambdas;     // decreasing
  std::vector<VectorXd> coefs;     // original scale, one per lambda
  std::vector<double> intercepts;
};

/// Largest useful penalty for (1/2n)||y - b0 - X b||^2 + lambda ||b_std||_1.
double lasso_lambda_max(const MatrixXd& X, const VectorXd& y);

/// Coordinate descent along the given (decreasing) penalties with warm starts.
LassoPath lasso_path(const MatrixXd& X, const VectorXd& y, const std::vector<double>& lambdas);

struct LogisticPath {
  std::vector<double> lambdas;
  std::vector<VectorXd> coefs;  // no intercept
};

/// Largest useful penalty for -(1/n) loglik + lambda ||w_std||_1 (no intercept).
double logistic_lambda_max(const MatrixXd& X, const VectorXd& y);

/// Proximal Newton (IRLS + coordinate descent) along the given penalties.
LogisticPath logistic_path(const MatrixXd& X, const VectorXd& y, const std::vector<double>& lambdas);

/// n log-spaced values from hi down to hi * 10^-decades.
std::vector<double> log_grid(double hi, double decades, int n);

/// Seeded fold labels 0..folds-1 for n samples, balanced.
std::vector<int> fold_assignment(size_t n, int folds, std::uint64_t seed);

struct CvTrace {
  std::vector<double> lambdas;
  std::vector<double> mean_deviance;
  int chosen = 0;
};

struct DpeOptions {
  int folds = 5;
  int grid_size = 20;
  double lasso_decades = 8.0;
  double logistic_decades = 4.0;
  std::uint64_t seed = 0;
};

// u_p ~ N(Lambda1 mu + lambda2, SigmaB),
// P(u_o = 1) = logistic(lambda3 d + lambda4 x_s + lambda5 (1 - x_s)).
struct DpePolicy {
  MatrixXd Lambda1;
  VectorXd lambda2;
  MatrixXd SigmaB;
  double lambda3 = 0.0;
  double lambda4 = 0.0;
  double lambda5 = 0.0;
  bool saturated = false;  // switching coefficients hit the boundary
  std::vector<CvTrace> control_cv;  // one per control dimension
  CvTrace switch_cv;
};

/// Coefficient bound for the switching model; exp(-20) is treated as zero.
inline constexpr double kDpeSaturation = 20.0;

DpePolicy fit_dpe(const Dataset& data, const DpeOptions& opts = {});

struct DpeActionDist {
  VectorXd mean;
  MatrixXd cov;
  double p_switch = 0.5;
};

DpeActionDist dpe_action_dist(const DpePolicy& policy, const VectorXd& mu, int d, int x_s);

/// Sampler for the simulator (owns a copy of the coefficients). The secondary control is always 0.
ControlSampler make_dpe_sampler(const DpePolicy& policy);

}  // namespace attnioc
