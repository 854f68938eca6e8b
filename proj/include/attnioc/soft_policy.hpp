#pragma once

#include "attnioc/belief.hpp"
#include "attnioc/model.hpp"

#include <random>
#include <vector>

namespace attnioc {

/// Dense index over (d, x_s, u_o, u_s) for one time step.
struct DiscreteLayout {
  int d_max = 0;
  int n_xs = 1;
  int n_us = 1;

  int num_states() const { return (d_max + 1) * n_xs; }
  int num_controls() const { return 2 * n_us; }
  int num_entries() const { return num_states() * num_controls(); }
  int state(int d, int x_s) const { return d * n_xs + x_s; }
  int entry(int d, int x_s, int u_o, int u_s) const {
    return state(d, x_s) * num_controls() + u_o * n_us + u_s;
  }
};

struct ControlMarginal {
  MatrixXd F;       // n_u x n_x
  VectorXd f;       // n_u
  MatrixXd SigmaF;  // n_u x n_u
  MatrixXd Psi;     // n_x x n_x
  VectorXd psi;     // n_x
  double c = 0.0;
};

/// Integrates u out of exp(z' Omega z + z' omega), z = [mu; u], in closed
/// form. Throws DomainError when the control block is not negative definite.
ControlMarginal marginalize_control(const MatrixXd& Omega, const VectorXd& omega, int n_x, int n_u);

struct Controls {
  VectorXd u_p;
  int u_o = 0;
  int u_s = 0;
};

// Soft-optimal policy of the belief MDP: Gaussian in u_p times a softmax over
// (u_o, u_s). The quadratic part does not depend on the discrete variables;
// every discrete dependence lives in the tau table.
class SoftPolicy {
 public:
  int horizon() const { return static_cast<int>(F.size()) - 1; }
  const DiscreteLayout& layout() const { return layout_; }

  double tau(int t, int d, int x_s, int u_o, int u_s) const {
    return tau_[static_cast<size_t>(t) * layout_.num_entries() + layout_.entry(d, x_s, u_o, u_s)];
  }
  double nu(int t, int d, int x_s) const {
    return nu_[static_cast<size_t>(t) * layout_.num_states() + layout_.state(d, x_s)];
  }
  double discrete_prob(int t, int d, int x_s, int u_o, int u_s) const {
    return std::exp(tau(t, d, x_s, u_o, u_s) - nu(t, d, x_s));
  }
  VectorXd control_mean(int t, const VectorXd& mu) const { return F[t] * mu + f[t]; }

  /// Soft value V(t, mu, d, x_s).
  double value(int t, const HybridState& s) const;
  /// Soft Q-value Q(t, mu, u_p, d, x_s, u_o, u_s).
  double q_value(int t, const HybridState& s, const Controls& u) const;

  // Per-step quadratic and Gaussian parts, t = 0..T.
  std::vector<MatrixXd> Omega;
  std::vector<VectorXd> omega;
  std::vector<MatrixXd> F;
  std::vector<VectorXd> f;
  std::vector<MatrixXd> SigmaF;
  std::vector<MatrixXd> SigmaF_chol;  // lower Cholesky factor of SigmaF
  std::vector<double> log_det_2pi_SigmaF;
  std::vector<MatrixXd> Psi;
  std::vector<VectorXd> psi;
  std::vector<double> c;

 private:
  friend SoftPolicy solve_soft_policy(const AttentionProblem&, const CovarianceSchedule&, const VectorXd&);
  DiscreteLayout layout_;
  std::vector<double> tau_;
  std::vector<double> nu_;
};

/// Backward soft Bellman recursion for theta = [theta_p; theta_s; theta_o].
SoftPolicy solve_soft_policy(const AttentionProblem& problem, const CovarianceSchedule& schedule,
                             const VectorXd& theta);

double policy_log_prob(const SoftPolicy& policy, int t, const HybridState& state, const Controls& u);

Controls sample_controls(const SoftPolicy& policy, int t, const HybridState& state, std::mt19937_64& rng);

/// Stable log(sum(exp(x))).
double logsumexp(const double* x, int n);

/// Gaussian log density with a precomputed lower Cholesky factor.
double gaussian_log_density(const VectorXd& x, const VectorXd& mean, const MatrixXd& chol_lower);

/// Draws from N(mean, L L').
VectorXd sample_gaussian(const VectorXd& mean, const MatrixXd& chol_lower, std::mt19937_64& rng);

}  // namespace attnioc
