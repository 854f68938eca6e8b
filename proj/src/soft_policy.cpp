#include "attnioc/soft_policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace attnioc {

double logsumexp(const double* x, int n) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) m = std::max(m, x[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

double gaussian_log_density(const VectorXd& x, const VectorXd& mean, const MatrixXd& L) {
  const VectorXd r = L.triangularView<Eigen::Lower>().solve(x - mean);
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  return -0.5 * (r.squaredNorm() + log_det + static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
}

VectorXd sample_gaussian(const VectorXd& mean, const MatrixXd& L, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd z(L.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return mean + L * z;
}

ControlMarginal marginalize_control(const MatrixXd& Omega, const VectorXd& omega, int n_x, int n_u) {
  if (Omega.rows() != n_x + n_u || Omega.cols() != n_x + n_u || omega.size() != n_x + n_u)
    throw DimensionError("marginalize_control: size mismatch");
  const MatrixXd P = -symmetrize(Omega.bottomRightCorner(n_u, n_u));
  Eigen::LLT<MatrixXd> llt(P);
  if (llt.info() != Eigen::Success) throw DomainError("control block of the soft Q-function is not negative definite");
  const MatrixXd Omega_um = Omega.bottomLeftCorner(n_u, n_x);
  const VectorXd omega_u = omega.tail(n_u);
  const MatrixXd Pinv_Oum = llt.solve(Omega_um);
  const VectorXd Pinv_wu = llt.solve(omega_u);

  ControlMarginal m;
  m.F = Pinv_Oum;
  m.f = 0.5 * Pinv_wu;
  m.SigmaF = symmetrize(0.5 * llt.solve(MatrixXd::Identity(n_u, n_u)));
  m.Psi = symmetrize(Omega.topLeftCorner(n_x, n_x) + Omega_um.transpose() * Pinv_Oum);
  m.psi = omega.head(n_x) + Omega_um.transpose() * Pinv_wu;
  const double log_det_P = 2.0 * MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  m.c = 0.25 * omega_u.dot(Pinv_wu) + 0.5 * n_u * std::log(std::numbers::pi) - 0.5 * log_det_P;
  return m;
}

double SoftPolicy::value(int t, const HybridState& s) const {
  return s.mu.dot(Psi[t] * s.mu) + psi[t].dot(s.mu) + c[t] + nu(t, s.d, s.x_s);
}

double SoftPolicy::q_value(int t, const HybridState& s, const Controls& u) const {
  VectorXd z(s.mu.size() + u.u_p.size());
  z << s.mu, u.u_p;
  return z.dot(Omega[t] * z) + omega[t].dot(z) + tau(t, s.d, s.x_s, u.u_o, u.u_s);
}

SoftPolicy solve_soft_policy(const AttentionProblem& p, const CovarianceSchedule& schedule, const VectorXd& theta) {
  check_theta(p, theta);
  if (schedule.horizon() != p.horizon || schedule.d_max() != p.d_max)
    throw DimensionError("solve_soft_policy: schedule does not match problem");
  const int T = p.horizon;
  const int nx = p.n_x();
  const int n_u = p.n_u();
  const RewardParams rp = RewardParams::from_flat(theta, p.k_p(), p.k_s());
  const MatrixXd blk = reward_block_matrix(p, rp.theta_p);
  const MatrixXd theta1 = blk.topLeftCorner(nx, nx);
  const auto& mdp = p.sub_mdp;

  SoftPolicy pol;
  pol.layout_ = DiscreteLayout{p.d_max, mdp.num_states, mdp.num_controls};
  const DiscreteLayout& L = pol.layout_;
  const size_t T1 = static_cast<size_t>(T + 1);
  pol.Omega.resize(T1);
  pol.omega.resize(T1);
  pol.F.resize(T1);
  pol.f.resize(T1);
  pol.SigmaF.resize(T1);
  pol.SigmaF_chol.resize(T1);
  pol.log_det_2pi_SigmaF.resize(T1);
  pol.Psi.resize(T1);
  pol.psi.resize(T1);
  pol.c.resize(T1);
  pol.tau_.assign(T1 * L.num_entries(), 0.0);
  pol.nu_.assign(T1 * L.num_states(), 0.0);

  // theta_s' phi_s(x_s, u_s) + theta_o u_o
  std::vector<double> r_disc(static_cast<size_t>(L.n_xs) * L.num_controls());
  for (int s = 0; s < L.n_xs; ++s)
    for (int uo = 0; uo < 2; ++uo)
      for (int us = 0; us < L.n_us; ++us)
        r_disc[s * L.num_controls() + uo * L.n_us + us] = rp.theta_s.dot(mdp.features[s][us]) + rp.theta_o * uo;

  auto finish_step = [&](int t) {
    ControlMarginal m;
    try {
      m = marginalize_control(pol.Omega[t], pol.omega[t], nx, n_u);
    } catch (const DomainError& e) {
      std::ostringstream os;
      os << e.what() << " at t=" << t;
      throw DomainError(os.str());
    }
    pol.F[t] = m.F;
    pol.f[t] = m.f;
    pol.SigmaF[t] = m.SigmaF;
    Eigen::LLT<MatrixXd> llt(m.SigmaF);
    pol.SigmaF_chol[t] = llt.matrixL();
    pol.log_det_2pi_SigmaF[t] =
        2.0 * pol.SigmaF_chol[t].diagonal().array().log().sum() + n_u * std::log(2.0 * std::numbers::pi);
    pol.Psi[t] = m.Psi;
    pol.psi[t] = m.psi;
    pol.c[t] = m.c;
    double* tau_t = pol.tau_.data() + static_cast<size_t>(t) * L.num_entries();
    double* nu_t = pol.nu_.data() + static_cast<size_t>(t) * L.num_states();
    for (int st = 0; st < L.num_states(); ++st) nu_t[st] = logsumexp(tau_t + st * L.num_controls(), L.num_controls());
  };

  auto trace_prod = [](const MatrixXd& a, const MatrixXd& b) { return a.cwiseProduct(b.transpose()).sum(); };

  pol.Omega[T] = blk;
  pol.omega[T] = VectorXd::Zero(nx + n_u);
  {
    double* tau_T = pol.tau_.data() + static_cast<size_t>(T) * L.num_entries();
    for (int d = 0; d <= L.d_max; ++d) {
      const double tr = trace_prod(theta1, schedule.post_cov(T, d));
      for (int s = 0; s < L.n_xs; ++s)
        for (int k = 0; k < L.num_controls(); ++k)
          tau_T[L.state(d, s) * L.num_controls() + k] = r_disc[s * L.num_controls() + k] + tr;
    }
  }
  finish_step(T);

  MatrixXd G(nx, nx + n_u);
  for (int t = T - 1; t >= 0; --t) {
    G << p.dyn_A[t], p.dyn_B[t];
    const VectorXd& a = p.dyn_a[t];
    const MatrixXd& Psi1 = pol.Psi[t + 1];
    const VectorXd& psi1 = pol.psi[t + 1];
    pol.Omega[t] = symmetrize(blk + G.transpose() * Psi1 * G);
    pol.omega[t] = G.transpose() * (2.0 * Psi1 * a + psi1);
    const double shared = a.dot(Psi1 * a) + a.dot(psi1) + pol.c[t + 1];

    double* tau_t = pol.tau_.data() + static_cast<size_t>(t) * L.num_entries();
    const double* nu_next = pol.nu_.data() + static_cast<size_t>(t + 1) * L.num_states();
    for (int d = 0; d <= L.d_max; ++d) {
      const double tr_reward = trace_prod(theta1, schedule.post_cov(t, d));
      for (int uo = 0; uo < 2; ++uo) {
        const double tr_next = trace_prod(Psi1, schedule.mean_update_cov(t + 1, d, uo));
        const int d_next = d_transition(d, uo, L.d_max);
        const int attn = attention_after(d, uo);
        for (int s = 0; s < L.n_xs; ++s) {
          for (int us = 0; us < L.n_us; ++us) {
            const VectorXd& row = mdp.next_distribution(attn, s, us);
            double ev = 0.0;
            for (int s2 = 0; s2 < L.n_xs; ++s2)
              if (row(s2) != 0.0) ev += row(s2) * nu_next[L.state(d_next, s2)];
            tau_t[L.entry(d, s, uo, us)] =
                r_disc[s * L.num_controls() + uo * L.n_us + us] + tr_reward + tr_next + shared + ev;
          }
        }
      }
    }
    finish_step(t);
  }
  return pol;
}

double policy_log_prob(const SoftPolicy& policy, int t, const HybridState& state, const Controls& u) {
  if (t < 0 || t > policy.horizon()) throw DimensionError("policy_log_prob: t out of range");
  const double cont = gaussian_log_density(u.u_p, policy.control_mean(t, state.mu), policy.SigmaF_chol[t]);
  return cont + policy.tau(t, state.d, state.x_s, u.u_o, u.u_s) - policy.nu(t, state.d, state.x_s);
}

Controls sample_controls(const SoftPolicy& policy, int t, const HybridState& state, std::mt19937_64& rng) {
  Controls u;
  u.u_p = sample_gaussian(policy.control_mean(t, state.mu), policy.SigmaF_chol[t], rng);
  const DiscreteLayout& L = policy.layout();
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double r = uni(rng);
  double acc = 0.0;
  int chosen = L.num_controls() - 1;
  for (int k = 0; k < L.num_controls(); ++k) {
    acc += policy.discrete_prob(t, state.d, state.x_s, k / L.n_us, k % L.n_us);
    if (r < acc) {
      chosen = k;
      break;
    }
  }
  u.u_o = chosen / L.n_us;
  u.u_s = chosen % L.n_us;
  return u;
}

}  // namespace attnioc
