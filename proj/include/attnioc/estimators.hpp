#pragma once

#include "attnioc/gradients.hpp"
#include "attnioc/simulator.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace attnioc {

enum class Method { MCE, MCL, DPE };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct EstimationOptions {
  Method method = Method::MCE;
  double barrier_weight = 1e-4;
  double rel_grad_tol = 1e-6;
  int max_iters = 200;
  std::optional<VectorXd> theta_init;
  std::uint64_t seed = 0;
};

struct EstimationResult {
  VectorXd theta_star;
  std::vector<double> objective_trace;
  std::vector<double> grad_norm_trace;  // relative gradient norm per iterate
  int iterations = 0;
  bool converged = false;
  std::string message;
};

struct ObjectiveValue {
  double value = 0.0;
  VectorXd gradient;
};

/// -w * sum(log(-theta_p)) and its gradient. Throws DomainError if any theta_p >= 0.
ObjectiveValue log_barrier(const VectorXd& theta, int k_p, double weight);

/// Dual objective V_0(x_0) - theta' E with gradient E[grad Q_0] - E, plus barrier.
ObjectiveValue mce_objective_grad(const AttentionProblem& problem, const CovarianceSchedule& schedule,
                                  const VectorXd& empirical_features, const HybridState& init_state,
                                  const VectorXd& theta, double barrier_weight = 1e-4);

// Per-step sufficient statistics of a dataset with logged beliefs. The
// likelihood objective and its gradient only need these, so they are
// gathered once per dataset.
struct LikelihoodStats {
  int horizon = 0;
  int n_x = 0;
  int n_u = 0;
  double num_trajectories = 0;
  DiscreteLayout layout;
  std::vector<MatrixXd> w_mu;      // sum [mu; 1][mu; 1]'           per t
  std::vector<MatrixXd> w_mu_u;    // sum [mu; u; 1][mu; u; 1]'     per t
  std::vector<VectorXd> state_count;  // per t over discrete states
  std::vector<VectorXd> entry_count;  // per t over discrete entries
};

LikelihoodStats likelihood_stats(const AttentionProblem& problem, const Dataset& data);

/// Mean negative log-likelihood of the logged controls under the soft policy, plus barrier.
ObjectiveValue mcl_objective_grad(const AttentionProblem& problem, const CovarianceSchedule& schedule,
                                  const LikelihoodStats& stats, const VectorXd& theta,
                                  double barrier_weight = 1e-4);
ObjectiveValue mcl_objective_grad(const AttentionProblem& problem, const CovarianceSchedule& schedule,
                                  const Dataset& data, const VectorXd& theta, double barrier_weight = 1e-4);

/// ||g||_2 / max(1, ||theta||_2)
double relative_grad_norm(const VectorXd& grad, const VectorXd& theta);

struct QuasiNewtonOptions {
  double rel_grad_tol = 1e-6;
  int max_iters = 200;
  double armijo_c1 = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 60;
  // Diagonal of the initial inverse Hessian (empty = identity); also used on resets.
  VectorXd initial_diag;
};

/// Objective returning value and gradient; throws DomainError outside its domain.
using Objective = std::function<ObjectiveValue(const VectorXd&)>;
/// Accepts a trial point only if this returns true.
using Feasible = std::function<bool(const VectorXd&)>;

/// BFGS on the inverse Hessian with backtracking Armijo steps restricted to the feasible set.
EstimationResult minimize_bfgs(const Objective& objective, const Feasible& feasible, const VectorXd& x0,
                               const QuasiNewtonOptions& opts);

/// MCE or MCL reward estimation from a dataset with logged beliefs.
EstimationResult estimate_reward(const AttentionProblem& problem, const CovarianceSchedule& schedule,
                                 const Dataset& data, const EstimationOptions& opts);

}  // namespace attnioc
