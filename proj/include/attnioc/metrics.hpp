#pragma once

#include "attnioc/simulator.hpp"

#include <vector>

namespace attnioc {

/// Pooled frequencies of d over all steps, each bin smoothed by eps, renormalized.
VectorXd d_histogram(const Dataset& data, int d_max, double smoothing_eps = 1e-6);

/// Same, but one histogram per time step.
std::vector<VectorXd> d_histogram_per_t(const Dataset& data, int d_max, double smoothing_eps = 1e-6);

/// sum p (log p - log q) with 0 log 0 = 0. Throws DomainError if q = 0 where p > 0.
double kl_discrete(const VectorXd& p, const VectorXd& q);

// Per-step Gaussian fit of the true primary-task state.
struct GaussianSummary {
  std::vector<VectorXd> mean;
  std::vector<MatrixXd> cov;  // unbiased
  std::vector<int> count;

  int steps() const { return static_cast<int>(mean.size()); }
};

/// Added to covariances of slices with fewer than dim + 2 samples.
inline constexpr double kThinSliceRidge = 1e-6;
/// Added to every covariance before inversion in the KL.
inline constexpr double kKlRidge = 1e-10;

GaussianSummary fit_gaussian_summary(const Dataset& data);

/// Closed-form KL(N(m0, S0) || N(m1, S1)).
double kl_gaussian(const VectorXd& m0, const MatrixXd& S0, const VectorXd& m1, const MatrixXd& S1);

/// Mean over time steps of KL(a_t || b_t), both covariances ridged by kKlRidge.
double kl_gaussian_temporal(const GaussianSummary& a, const GaussianSummary& b);

/// mean_i |theta'_i - theta_i| / |theta_i|. Throws DomainError on a zero coordinate of theta.
double reward_rd(const VectorXd& theta, const VectorXd& theta_prime);

/// Mean over rollouts of (1/N) sum_t (y_t - y'_t)^2, y = first state coordinate.
double lateral_se(const VectorXd& reference_y, const Dataset& rollouts);

}  // namespace attnioc
