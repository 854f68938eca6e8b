#include "attnioc/belief.hpp"

#include <Eigen/Eigenvalues>

#include <sstream>

namespace attnioc {
namespace {

// Pseudo-inverse of a symmetric PSD matrix; eigenvalues below a relative
// threshold are treated as zero (exactly observed channels).
MatrixXd psd_pinv(const MatrixXd& s) {
  if (s.size() == 0) return s;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(s));
  const VectorXd& ev = es.eigenvalues();
  const double cutoff = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  VectorXd inv = VectorXd::Zero(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) > cutoff) inv(i) = 1.0 / ev(i);
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

void require_psd(const MatrixXd& m, const char* what, int t, int d) {
  if (m.size() == 0) return;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-9 * scale) {
    std::ostringstream os;
    os << "covariance schedule: " << what << " not PSD at t=" << t << ", d=" << d;
    throw std::runtime_error(os.str());
  }
}

}  // namespace

int d_transition(int d, int u_o, int d_max) {
  if (attention_after(d, u_o) == 1) return 0;
  return std::min(d + 1, d_max);
}

CovarianceSchedule::CovarianceSchedule(int horizon, int d_max, int n_x)
    : horizon_(horizon), d_max_(d_max) {
  const size_t n = static_cast<size_t>(horizon + 1) * (d_max + 1);
  const MatrixXd zero = MatrixXd::Zero(n_x, n_x);
  post_.assign(n, zero);
  pred_.assign(n, zero);
  mean_upd_.assign(2 * n, zero);
  branch_post_.assign(2 * n, zero);
  gain_.assign(n, MatrixXd::Zero(n_x, 0));
}

CovarianceSchedule tabulate_covariances(const AttentionProblem& p) {
  const int T = p.horizon;
  const int dmax = p.d_max;
  const int nx = p.n_x();
  CovarianceSchedule s(T, dmax, nx);
  const MatrixXd& Q = p.process_noise;
  const MatrixXd& H = p.obs_H;
  const MatrixXd& R = p.obs_noise;

  struct Update {
    MatrixXd post, mean_upd, gain;
  };
  auto inattentive = [&](const MatrixXd& pred) {
    const MatrixXd S = symmetrize(H * pred * H.transpose() + R);
    const MatrixXd K = pred * H.transpose() * psd_pinv(S);
    Update u;
    u.mean_upd = symmetrize(K * H * pred);
    u.post = symmetrize(pred - u.mean_upd);
    u.gain = K;
    return u;
  };

  // t = 0: d = 0 is exact; larger d extend step-0 dynamics into the past.
  for (int d = 1; d <= dmax; ++d) {
    const MatrixXd pred = symmetrize(p.dyn_A[0] * s.post_[s.idx(0, d - 1)] * p.dyn_A[0].transpose() + Q);
    s.post_[s.idx(0, d)] = inattentive(pred).post;
    require_psd(s.post_[s.idx(0, d)], "posterior", 0, d);
  }

  for (int t = 0; t < T; ++t) {
    const MatrixXd& A = p.dyn_A[t];
    for (int d = 0; d <= dmax; ++d) {
      const size_t next = s.idx(t + 1, d);
      const MatrixXd pred = symmetrize(A * s.post_[s.idx(t, d)] * A.transpose() + Q);
      require_psd(pred, "prediction", t + 1, d);
      s.pred_[next] = pred;
      const Update inatt = inattentive(pred);
      require_psd(inatt.mean_upd, "mean update", t + 1, d);
      require_psd(inatt.post, "posterior", t + 1, d);
      s.gain_[next] = inatt.gain;
      for (int u_o = 0; u_o < 2; ++u_o) {
        const bool exact = attention_after(d, u_o) == 1;
        s.mean_upd_[2 * next + u_o] = exact ? pred : inatt.mean_upd;
        s.branch_post_[2 * next + u_o] = exact ? MatrixXd::Zero(nx, nx) : inatt.post;
      }
      // Sigma(t+1, d+1) comes from exactly d+1 inattentive steps.
      if (d + 1 <= dmax) s.post_[s.idx(t + 1, d + 1)] = inatt.post;
    }
    s.post_[s.idx(t + 1, 0)].setZero();
  }
  return s;
}

HybridState filter_step(const AttentionProblem& p, const CovarianceSchedule& schedule, int t,
                        const HybridState& state, const VectorXd& u_p, int u_o, int next_x_s,
                        const VectorXd& observation) {
  if (t < 0 || t >= p.horizon) throw DimensionError("filter_step: t out of range");
  if (state.mu.size() != p.n_x() || u_p.size() != p.n_u())
    throw DimensionError("filter_step: state/control size mismatch");
  HybridState next;
  next.d = d_transition(state.d, u_o, p.d_max);
  next.x_s = next_x_s;
  if (next.d == 0) {
    if (observation.size() != p.n_x()) throw DimensionError("filter_step: expected full-state observation");
    next.mu = observation;
    return next;
  }
  if (observation.size() != p.obs_H.rows()) throw DimensionError("filter_step: expected projected observation");
  const VectorXd pred = p.dyn_A[t] * state.mu + p.dyn_B[t] * u_p + p.dyn_a[t];
  const MatrixXd& K = schedule.gain(t + 1, state.d);
  next.mu = pred + K * (observation - p.obs_H * pred);
  return next;
}

double expected_belief_reward(const MatrixXd& theta1, const VectorXd& mu, const MatrixXd& sigma) {
  if (theta1.rows() != mu.size() || sigma.rows() != mu.size() || sigma.cols() != mu.size())
    throw DimensionError("expected_belief_reward: size mismatch");
  return mu.dot(theta1 * mu) + (theta1 * sigma).trace();
}

}  // namespace attnioc
