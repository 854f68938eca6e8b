#pragma once

#include "attnioc/model.hpp"

#include <vector>

namespace attnioc {

/// Discrete part of the belief state together with the belief mean.
/// d = 0 means the primary task is observed exactly (attention bit 1).
struct HybridState {
  VectorXd mu;
  int d = 0;
  int x_s = 0;

  int attention() const { return d == 0 ? 1 : 0; }
};

/// Glance-duration update: 0 when attention ends up on the primary task,
/// otherwise d + 1 saturated at d_max.
int d_transition(int d, int u_o, int d_max);

/// Attention bit after applying u_o in glance state d.
inline int attention_after(int d, int u_o) { return ((d == 0 ? 1 : 0) + u_o) % 2; }

// Kalman covariance tables over (t, d). For every t the tables treat d as the
// number of steps since the last exact observation; for d > t the dynamics of
// step 0 are assumed to extend into the past.
class CovarianceSchedule {
 public:
  CovarianceSchedule() = default;
  CovarianceSchedule(int horizon, int d_max, int n_x);

  int horizon() const { return horizon_; }
  int d_max() const { return d_max_; }

  /// Posterior covariance at step t (0..T) after d steps without exact observation.
  const MatrixXd& post_cov(int t, int d) const { return post_[idx(t, d)]; }
  /// Prediction A_t Sigma(t, d) A_t' + Q, stored at t+1 (t+1 in 1..T).
  const MatrixXd& pred_cov(int t_next, int d) const { return pred_[idx(t_next, d)]; }
  /// Covariance of the belief-mean transition into t_next from (t_next - 1, d) under u_o.
  const MatrixXd& mean_update_cov(int t_next, int d, int u_o) const {
    return mean_upd_[2 * idx(t_next, d) + u_o];
  }
  /// Posterior of the branch (t_next - 1, d, u_o); equals post_cov(t_next, d') unless d saturates.
  const MatrixXd& branch_post_cov(int t_next, int d, int u_o) const {
    return branch_post_[2 * idx(t_next, d) + u_o];
  }
  /// Kalman gain of the inattentive branch into t_next from d.
  const MatrixXd& gain(int t_next, int d) const { return gain_[idx(t_next, d)]; }

 private:
  friend CovarianceSchedule tabulate_covariances(const AttentionProblem&);
  size_t idx(int t, int d) const { return static_cast<size_t>(t) * (d_max_ + 1) + d; }

  int horizon_ = 0;
  int d_max_ = 0;
  std::vector<MatrixXd> post_;
  std::vector<MatrixXd> pred_;
  std::vector<MatrixXd> mean_upd_;
  std::vector<MatrixXd> branch_post_;
  std::vector<MatrixXd> gain_;
};

CovarianceSchedule tabulate_covariances(const AttentionProblem& problem);

/// One filter step: predict with (u_p), then either adopt the exact
/// observation (next d = 0) or correct with the tabulated gain.
/// `observation` is the full state when the next attention is on the
/// primary task and the H-projected measurement otherwise.
HybridState filter_step(const AttentionProblem& problem, const CovarianceSchedule& schedule, int t,
                        const HybridState& state, const VectorXd& u_p, int u_o, int next_x_s,
                        const VectorXd& observation);

/// mu' Theta1 mu + tr(Theta1 Sigma).
double expected_belief_reward(const MatrixXd& theta1, const VectorXd& mu, const MatrixXd& sigma);

inline MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace attnioc
