#pragma once

#include "attnioc/soft_policy.hpp"

#include <vector>

namespace attnioc {

// Backward tables for the theta-gradient of the soft Q-function.
//
// The continuous part lives in vec(blk(Theta1, Theta2)) space:
//   grad_vec Q_t = M1[t] vec(z z') + M2[t] z + m3_t(d, x_s, u_o, u_s),  z = [mu; u_p]
// and is projected onto theta_p through the feature selector. The discrete
// part is the expected future [phi_s; phi_o] of the autonomous discrete chain.
struct GradientTables {
  DiscreteLayout layout;
  int n_z = 0;
  int k_p = 0;
  int k_sd = 0;  // k_s + 1

  std::vector<MatrixXd> M1;  // n_z^2 x n_z^2
  std::vector<MatrixXd> M2;  // n_z^2 x n_z
  // m3[t] column per discrete entry; only filled when requested.
  std::vector<MatrixXd> m3;
  MatrixXd selector;  // n_z^2 x k_p

  // Projected onto theta_p.
  std::vector<MatrixXd> P1;       // k_p x n_z^2
  std::vector<MatrixXd> P2;       // k_p x n_z
  std::vector<MatrixXd> p3;       // k_p x entries
  std::vector<MatrixXd> p3_bar;   // k_p x states, policy-averaged over discrete controls
  std::vector<MatrixXd> disc;     // k_sd x entries
  std::vector<MatrixXd> disc_bar; // k_sd x states

  int num_params() const { return k_p + k_sd; }
};

GradientTables solve_gradients(const AttentionProblem& problem, const CovarianceSchedule& schedule,
                               const SoftPolicy& policy, bool keep_vec_m3 = true);

/// Gradient of Q(t, state, controls) with respect to theta, in theta order.
VectorXd grad_q(const GradientTables& tables, const SoftPolicy& policy, int t, const HybridState& state,
                const Controls& u);

/// E[grad Q(t, state, u)] over u ~ policy(. | state), in closed form.
VectorXd expected_grad_q(const GradientTables& tables, const SoftPolicy& policy, int t, const HybridState& state);

}  // namespace attnioc
