#include "attnioc/gradients.hpp"

#include <unsupported/Eigen/KroneckerProduct>

namespace attnioc {
namespace {

VectorXd vec(const MatrixXd& m) { return Eigen::Map<const VectorXd>(m.data(), m.size()); }

MatrixXd blk(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out = MatrixXd::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

}  // namespace

GradientTables solve_gradients(const AttentionProblem& p, const CovarianceSchedule& schedule,
                               const SoftPolicy& policy, bool keep_vec_m3) {
  const int T = p.horizon;
  const int nx = p.n_x();
  const int nu = p.n_u();
  const int nz = nx + nu;
  const int nz2 = nz * nz;
  const auto& mdp = p.sub_mdp;
  if (policy.horizon() != T || policy.layout().d_max != p.d_max || policy.layout().n_xs != mdp.num_states ||
      policy.layout().n_us != mdp.num_controls || policy.F[0].cols() != nx)
    throw DimensionError("solve_gradients: policy does not match problem");
  if (schedule.horizon() != T || schedule.d_max() != p.d_max)
    throw DimensionError("solve_gradients: schedule does not match problem");

  GradientTables g;
  g.layout = policy.layout();
  const DiscreteLayout& L = g.layout;
  g.n_z = nz;
  g.k_p = p.k_p();
  g.k_sd = p.k_s() + 1;
  g.selector = p.feature_spec.selector;
  const MatrixXd St = g.selector.transpose();
  // The m3 recursion is linear, so unless the full tables are wanted it runs
  // directly in the projected space.
  const MatrixXd W = keep_vec_m3 ? MatrixXd::Identity(nz2, nz2) : St;
  const size_t T1 = static_cast<size_t>(T + 1);
  g.M1.resize(T1);
  g.M2.resize(T1);
  g.P1.resize(T1);
  g.P2.resize(T1);
  g.p3.resize(T1);
  g.p3_bar.resize(T1);
  g.disc.resize(T1);
  g.disc_bar.resize(T1);
  if (keep_vec_m3) g.m3.resize(T1);

  // Instantaneous discrete features per (x_s, u_o, u_s).
  auto disc_features = [&](int s, int uo, int us) {
    VectorXd v(g.k_sd);
    v << mdp.features[s][us], static_cast<double>(uo);
    return v;
  };

  // Policy-weighted averages of per-entry columns over the discrete controls.
  auto average = [&](int t, const MatrixXd& per_entry) {
    MatrixXd bar = MatrixXd::Zero(per_entry.rows(), L.num_states());
    for (int d = 0; d <= L.d_max; ++d)
      for (int s = 0; s < L.n_xs; ++s)
        for (int uo = 0; uo < 2; ++uo)
          for (int us = 0; us < L.n_us; ++us)
            bar.col(L.state(d, s)) += policy.discrete_prob(t, d, s, uo, us) * per_entry.col(L.entry(d, s, uo, us));
    return bar;
  };

  // Terminal step.
  g.M1[T] = MatrixXd::Identity(nz2, nz2);
  g.M2[T] = MatrixXd::Zero(nz2, nz);
  MatrixXd m3_next(W.rows(), L.num_entries());
  g.disc[T].resize(g.k_sd, L.num_entries());
  for (int d = 0; d <= L.d_max; ++d) {
    const VectorXd base = W * vec(blk(schedule.post_cov(T, d), MatrixXd::Zero(nu, nu)));
    for (int s = 0; s < L.n_xs; ++s)
      for (int uo = 0; uo < 2; ++uo)
        for (int us = 0; us < L.n_us; ++us) {
          m3_next.col(L.entry(d, s, uo, us)) = base;
          g.disc[T].col(L.entry(d, s, uo, us)) = disc_features(s, uo, us);
        }
  }
  MatrixXd m3_bar_next = average(T, m3_next);
  g.disc_bar[T] = average(T, g.disc[T]);
  g.P1[T] = St * g.M1[T];
  g.P2[T] = St * g.M2[T];
  g.p3[T] = keep_vec_m3 ? MatrixXd(St * m3_next) : m3_next;
  g.p3_bar[T] = keep_vec_m3 ? MatrixXd(St * m3_bar_next) : m3_bar_next;
  if (keep_vec_m3) g.m3[T] = m3_next;

  MatrixXd TT(nz, nz);
  VectorXd tt(nz);
  MatrixXd FF(nz, nx);
  for (int t = T - 1; t >= 0; --t) {
    const MatrixXd& A = p.dyn_A[t];
    const MatrixXd& B = p.dyn_B[t];
    const VectorXd& a = p.dyn_a[t];
    const MatrixXd& F1 = policy.F[t + 1];
    TT << A, B, F1 * A, F1 * B;
    tt << a, F1 * a + policy.f[t + 1];
    FF << MatrixXd::Identity(nx, nx), F1;

    const MatrixXd& M1n = g.M1[t + 1];
    const MatrixXd& M2n = g.M2[t + 1];
    g.M1[t] = MatrixXd::Identity(nz2, nz2) + M1n * Eigen::kroneckerProduct(TT, TT).eval();
    const MatrixXd cross = Eigen::kroneckerProduct(TT, tt).eval() + Eigen::kroneckerProduct(tt, TT).eval();
    g.M2[t] = M2n * TT + M1n * cross;

    const MatrixXd& WM1n = keep_vec_m3 ? M1n : g.P1[t + 1];
    const MatrixXd& WM2n = keep_vec_m3 ? M2n : g.P2[t + 1];
    // Terms shared by every discrete entry.
    const VectorXd shared =
        WM1n * vec(tt * tt.transpose() + blk(MatrixXd::Zero(nx, nx), policy.SigmaF[t + 1])) + WM2n * tt;

    MatrixXd m3_t(W.rows(), L.num_entries());
    g.disc[t].resize(g.k_sd, L.num_entries());
    for (int d = 0; d <= L.d_max; ++d) {
      const VectorXd reward_cov = W * vec(blk(schedule.post_cov(t, d), MatrixXd::Zero(nu, nu)));
      for (int uo = 0; uo < 2; ++uo) {
        const MatrixXd& Smu = schedule.mean_update_cov(t + 1, d, uo);
        const VectorXd base = reward_cov + shared + WM1n * vec(FF * Smu * FF.transpose());
        const int d_next = d_transition(d, uo, L.d_max);
        const int attn = attention_after(d, uo);
        for (int s = 0; s < L.n_xs; ++s)
          for (int us = 0; us < L.n_us; ++us) {
            const VectorXd& row = mdp.next_distribution(attn, s, us);
            const int e = L.entry(d, s, uo, us);
            m3_t.col(e) = base;
            g.disc[t].col(e) = disc_features(s, uo, us);
            for (int s2 = 0; s2 < L.n_xs; ++s2) {
              if (row(s2) == 0.0) continue;
              m3_t.col(e) += row(s2) * m3_bar_next.col(L.state(d_next, s2));
              g.disc[t].col(e) += row(s2) * g.disc_bar[t + 1].col(L.state(d_next, s2));
            }
          }
      }
    }
    m3_bar_next = average(t, m3_t);
    g.disc_bar[t] = average(t, g.disc[t]);
    g.P1[t] = St * g.M1[t];
    g.P2[t] = St * g.M2[t];
    g.p3[t] = keep_vec_m3 ? MatrixXd(St * m3_t) : m3_t;
    g.p3_bar[t] = keep_vec_m3 ? MatrixXd(St * m3_bar_next) : m3_bar_next;
    if (keep_vec_m3) g.m3[t] = std::move(m3_t);
  }
  return g;
}

VectorXd grad_q(const GradientTables& g, const SoftPolicy& policy, int t, const HybridState& state,
                const Controls& u) {
  if (t < 0 || t > policy.horizon()) throw DimensionError("grad_q: t out of range");
  VectorXd z(g.n_z);
  z << state.mu, u.u_p;
  const MatrixXd zz = z * z.transpose();
  const int e = g.layout.entry(state.d, state.x_s, u.u_o, u.u_s);
  VectorXd out(g.num_params());
  out.head(g.k_p) = g.P1[t] * vec(zz) + g.P2[t] * z + g.p3[t].col(e);
  out.tail(g.k_sd) = g.disc[t].col(e);
  return out;
}

VectorXd expected_grad_q(const GradientTables& g, const SoftPolicy& policy, int t, const HybridState& state) {
  if (t < 0 || t > policy.horizon()) throw DimensionError("expected_grad_q: t out of range");
  const int nx = static_cast<int>(state.mu.size());
  VectorXd z(g.n_z);
  z << state.mu, policy.control_mean(t, state.mu);
  MatrixXd second = z * z.transpose();
  second.bottomRightCorner(g.n_z - nx, g.n_z - nx) += policy.SigmaF[t];
  const int st = g.layout.state(state.d, state.x_s);
  VectorXd out(g.num_params());
  out.head(g.k_p) = g.P1[t] * vec(second) + g.P2[t] * z + g.p3_bar[t].col(st);
  out.tail(g.k_sd) = g.disc_bar[t].col(st);
  return out;
}

}  // namespace attnioc
