#include "attnioc/estimators.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace attnioc {
namespace {

VectorXd vec(const MatrixXd& m) { return Eigen::Map<const VectorXd>(m.data(), m.size()); }

bool theta_p_negative(const VectorXd& theta, int k_p) {
  return theta.allFinite() && (k_p == 0 || theta.head(k_p).maxCoeff() < 0.0);
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::MCE: return "MCE";
    case Method::MCL: return "MCL";
    case Method::DPE: return "DPE";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "MCE" || s == "mce") return Method::MCE;
  if (s == "MCL" || s == "mcl") return Method::MCL;
  if (s == "DPE" || s == "dpe") return Method::DPE;
  throw std::invalid_argument("unknown method '" + s + "' (expected MCE, MCL or DPE)");
}

ObjectiveValue log_barrier(const VectorXd& theta, int k_p, double weight) {
  ObjectiveValue out;
  out.gradient = VectorXd::Zero(theta.size());
  for (int i = 0; i < k_p; ++i) {
    if (!(theta(i) < 0.0)) {
      std::ostringstream os;
      os << "theta_p[" << i << "] = " << theta(i) << " is outside the feasible region (must be < 0)";
      throw DomainError(os.str());
    }
    out.value -= weight * std::log(-theta(i));
    out.gradient(i) = -weight / theta(i);
  }
  return out;
}

ObjectiveValue mce_objective_grad(const AttentionProblem& p, const CovarianceSchedule& schedule,
                                  const VectorXd& empirical_features, const HybridState& init_state,
                                  const VectorXd& theta, double barrier_weight) {
  if (empirical_features.size() != p.num_params()) throw DimensionError("mce objective: feature size mismatch");
  const ObjectiveValue barrier = log_barrier(theta, p.k_p(), barrier_weight);
  const SoftPolicy policy = solve_soft_policy(p, schedule, theta);
  const GradientTables tables = solve_gradients(p, schedule, policy, false);
  ObjectiveValue out;
  out.value = policy.value(0, init_state) - theta.dot(empirical_features) + barrier.value;
  out.gradient = expected_grad_q(tables, policy, 0, init_state) - empirical_features + barrier.gradient;
  return out;
}

LikelihoodStats likelihood_stats(const AttentionProblem& p, const Dataset& data) {
  if (data.trajectories.empty()) throw std::invalid_argument("likelihood_stats: empty dataset");
  LikelihoodStats st;
  st.horizon = p.horizon;
  st.n_x = p.n_x();
  st.n_u = p.n_u();
  st.layout = DiscreteLayout{p.d_max, p.sub_mdp.num_states, p.sub_mdp.num_controls};
  st.num_trajectories = static_cast<double>(data.size());
  const int nx = st.n_x;
  const int nu = st.n_u;
  const size_t T1 = static_cast<size_t>(p.horizon + 1);
  st.w_mu.assign(T1, MatrixXd::Zero(nx + 1, nx + 1));
  st.w_mu_u.assign(T1, MatrixXd::Zero(nx + nu + 1, nx + nu + 1));
  st.state_count.assign(T1, VectorXd::Zero(st.layout.num_states()));
  st.entry_count.assign(T1, VectorXd::Zero(st.layout.num_entries()));
  VectorXd w(nx + nu + 1);
  for (const auto& tr : data.trajectories) {
    if (static_cast<int>(tr.steps.size()) != p.horizon + 1)
      throw DimensionError("likelihood_stats: trajectory horizon does not match problem");
    for (const auto& s : tr.steps) {
      if (s.mu.size() != nx) throw std::invalid_argument("likelihood_stats: dataset is missing belief logs");
      if (s.d < 0 || s.d > p.d_max) throw DimensionError("likelihood_stats: logged d out of range");
      w << s.mu, s.u_p, 1.0;
      const size_t t = static_cast<size_t>(s.t);
      st.w_mu_u[t].noalias() += w * w.transpose();
      st.state_count[t](st.layout.state(s.d, s.x_s)) += 1.0;
      st.entry_count[t](st.layout.entry(s.d, s.x_s, s.u_o, s.u_s)) += 1.0;
    }
  }
  for (size_t t = 0; t < T1; ++t) {
    MatrixXd& wm = st.w_mu[t];
    const MatrixXd& full = st.w_mu_u[t];
    wm.topLeftCorner(nx, nx) = full.topLeftCorner(nx, nx);
    wm.topRightCorner(nx, 1) = full.topRightCorner(nx, 1);
    wm.bottomLeftCorner(1, nx) = full.bottomLeftCorner(1, nx);
    wm(nx, nx) = full(nx + nu, nx + nu);
  }
  return st;
}

ObjectiveValue mcl_objective_grad(const AttentionProblem& p, const CovarianceSchedule& schedule,
                                  const LikelihoodStats& st, const VectorXd& theta, double barrier_weight) {
  if (st.horizon != p.horizon || st.n_x != p.n_x() || st.n_u != p.n_u() || st.layout.d_max != p.d_max)
    throw DimensionError("mcl objective: statistics do not match problem");
  const ObjectiveValue barrier = log_barrier(theta, p.k_p(), barrier_weight);
  const SoftPolicy policy = solve_soft_policy(p, schedule, theta);
  const GradientTables g = solve_gradients(p, schedule, policy, false);
  const int nx = p.n_x();
  const int nu = p.n_u();
  const int nz = nx + nu;
  const DiscreteLayout& L = st.layout;

  double nll = 0.0;
  VectorXd grad = VectorXd::Zero(p.num_params());
  MatrixXd C(nu, nz + 1);
  MatrixXd G = MatrixXd::Zero(nz, nx + 1);
  G.topLeftCorner(nx, nx).setIdentity();
  for (int t = 0; t <= p.horizon; ++t) {
    const size_t ts = static_cast<size_t>(t);
    const double n_t = st.w_mu[ts](nx, nx);
    if (n_t == 0.0) continue;
    // Continuous likelihood through the residual second moment.
    C << -policy.F[ts], MatrixXd::Identity(nu, nu), -policy.f[ts];
    const MatrixXd resid = C * st.w_mu_u[ts] * C.transpose();
    const MatrixXd& Lc = policy.SigmaF_chol[ts];
    const MatrixXd half = Lc.triangularView<Eigen::Lower>().solve(resid);
    const MatrixXd whitened = Lc.triangularView<Eigen::Lower>().solve(half.transpose());
    nll += 0.5 * whitened.trace() + 0.5 * n_t * policy.log_det_2pi_SigmaF[ts];
    // Discrete likelihood.
    for (int e = 0; e < L.num_entries(); ++e) {
      const double cnt = st.entry_count[ts](e);
      if (cnt == 0.0) continue;
      const int s = e / L.num_controls();
      const int k = e % L.num_controls();
      const int d = s / L.n_xs;
      const int x_s = s % L.n_xs;
      nll -= cnt * (policy.tau(t, d, x_s, k / L.n_us, k % L.n_us) - policy.nu(t, d, x_s));
    }

    // Expected minus observed gradient of Q.
    G.bottomLeftCorner(nu, nx) = policy.F[ts];
    G.bottomRightCorner(nu, 1) = policy.f[ts];
    MatrixXd exp_second = G * st.w_mu[ts] * G.transpose();
    exp_second.bottomRightCorner(nu, nu) += n_t * policy.SigmaF[ts];
    const VectorXd exp_first = G * st.w_mu[ts].col(nx);
    const MatrixXd obs_second = st.w_mu_u[ts].topLeftCorner(nz, nz);
    const VectorXd obs_first = st.w_mu_u[ts].col(nz).head(nz);
    grad.head(g.k_p) += g.P1[ts] * vec(exp_second - obs_second) + g.P2[ts] * (exp_first - obs_first) +
                        g.p3_bar[ts] * st.state_count[ts] - g.p3[ts] * st.entry_count[ts];
    grad.tail(g.k_sd) += g.disc_bar[ts] * st.state_count[ts] - g.disc[ts] * st.entry_count[ts];
  }
  ObjectiveValue out;
  out.value = nll / st.num_trajectories + barrier.value;
  out.gradient = grad / st.num_trajectories + barrier.gradient;
  return out;
}

ObjectiveValue mcl_objective_grad(const AttentionProblem& p, const CovarianceSchedule& schedule, const Dataset& data,
                                  const VectorXd& theta, double barrier_weight) {
  return mcl_objective_grad(p, schedule, likelihood_stats(p, data), theta, barrier_weight);
}

double relative_grad_norm(const VectorXd& grad, const VectorXd& theta) {
  return grad.norm() / std::max(1.0, theta.norm());
}

EstimationResult minimize_bfgs(const Objective& objective, const Feasible& feasible, const VectorXd& x0,
                               const QuasiNewtonOptions& opts) {
  EstimationResult res;
  const Eigen::Index n = x0.size();
  if (!feasible(x0)) throw DomainError("minimize_bfgs: initial point is infeasible");
  VectorXd x = x0;
  ObjectiveValue cur = objective(x);
  if (opts.initial_diag.size() != 0 && (opts.initial_diag.size() != n || opts.initial_diag.minCoeff() <= 0.0))
    throw std::invalid_argument("minimize_bfgs: initial_diag must be positive with one entry per variable");
  const MatrixXd H0 = opts.initial_diag.size() ? MatrixXd(opts.initial_diag.asDiagonal()) : MatrixXd::Identity(n, n);
  MatrixXd H = H0;
  bool fresh_H = true;
  res.objective_trace.push_back(cur.value);
  res.grad_norm_trace.push_back(relative_grad_norm(cur.gradient, x));

  for (int it = 0; it < opts.max_iters; ++it) {
    if (res.grad_norm_trace.back() <= opts.rel_grad_tol) {
      res.converged = true;
      break;
    }
    VectorXd dir = -H * cur.gradient;
    double slope = cur.gradient.dot(dir);
    if (!(slope < 0.0)) {
      H = H0;
      fresh_H = true;
      dir = -H * cur.gradient;
      slope = cur.gradient.dot(dir);
    }
    bool accepted = false;
    double step = 1.0;
    VectorXd x_new;
    ObjectiveValue trial;
    for (int bt = 0; bt < opts.max_backtracks; ++bt, step *= opts.backtrack) {
      x_new = x + step * dir;
      if (!feasible(x_new)) continue;
      try {
        trial = objective(x_new);
      } catch (const DomainError&) {
        continue;
      }
      if (!std::isfinite(trial.value)) continue;
      const bool armijo = trial.value <= cur.value + opts.armijo_c1 * step * slope;
      // At roundoff level the value cannot certify descent; fall back to the gradient.
      const bool flat = std::abs(trial.value - cur.value) <= 1e-12 * std::max(1.0, std::abs(cur.value)) &&
                        trial.gradient.norm() < cur.gradient.norm();
      if (armijo || flat) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!fresh_H) {
        H = H0;
        fresh_H = true;
        --it;
        continue;
      }
      res.message = "line search failed";
      break;
    }
    const VectorXd s = x_new - x;
    const VectorXd y = trial.gradient - cur.gradient;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh_H) H *= sy / y.dot(H * y);
      const double rho = 1.0 / sy;
      const MatrixXd I = MatrixXd::Identity(n, n);
      H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
      H = 0.5 * (H + H.transpose());
      fresh_H = false;
    }
    x = x_new;
    cur = trial;
    res.iterations = it + 1;
    res.objective_trace.push_back(cur.value);
    res.grad_norm_trace.push_back(relative_grad_norm(cur.gradient, x));
  }
  if (!res.converged && res.grad_norm_trace.back() <= opts.rel_grad_tol) res.converged = true;
  if (!res.converged && res.message.empty()) res.message = "iteration limit reached";
  res.theta_star = x;
  return res;
}

EstimationResult estimate_reward(const AttentionProblem& p, const CovarianceSchedule& schedule, const Dataset& data,
                                 const EstimationOptions& opts) {
  if (!(opts.rel_grad_tol > 0.0) || opts.barrier_weight < 0.0) throw std::invalid_argument("estimate_reward: bad tolerances");
  VectorXd theta0;
  if (opts.theta_init) {
    theta0 = *opts.theta_init;
  } else {
    theta0 = VectorXd::Zero(p.num_params());
    theta0.head(p.k_p()).setConstant(-1.0);
    theta0(p.num_params() - 1) = -1.0;
  }
  if (theta0.size() != p.num_params()) throw DimensionError("estimate_reward: theta_init has wrong size");
  const int k_p = p.k_p();
  const Feasible feasible = [k_p](const VectorXd& th) { return theta_p_negative(th, k_p); };
  QuasiNewtonOptions qn;
  qn.rel_grad_tol = opts.rel_grad_tol;
  qn.max_iters = opts.max_iters;
  // Parameters differ by orders of magnitude; start from their squared scale.
  qn.initial_diag = theta0.cwiseAbs().cwiseMax(1e-2).array().square();

  Objective objective;
  VectorXd features;
  LikelihoodStats stats;
  const HybridState init{p.init_state.x_p, p.init_state.d, p.init_state.x_s};
  switch (opts.method) {
    case Method::MCE:
      features = empirical_feature_expectation(data);
      objective = [&](const VectorXd& th) {
        return mce_objective_grad(p, schedule, features, init, th, opts.barrier_weight);
      };
      break;
    case Method::MCL:
      stats = likelihood_stats(p, data);
      objective = [&](const VectorXd& th) { return mcl_objective_grad(p, schedule, stats, th, opts.barrier_weight); };
      break;
    case Method::DPE:
      throw std::invalid_argument("estimate_reward: DPE has no reward model; use fit_dpe");
  }
  return minimize_bfgs(objective, feasible, theta0, qn);
}

}  // namespace attnioc
