#include "attnioc/model.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace attnioc {
namespace {

bool is_psd(const MatrixXd& m, double tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol * std::max(1.0, m.cwiseAbs().maxCoeff()))
    return false;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()));
  return es.eigenvalues().minCoeff() >= -tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

const std::vector<double>& check_series(const std::vector<double>& s, const char* name) {
  if (s.empty()) throw DomainError(std::string("driver config: empty ") + name);
  return s;
}

double at_step(const std::vector<double>& s, int t) {
  return s.size() == 1 ? s[0] : s.at(static_cast<size_t>(t));
}

}  // namespace

VectorXd RewardParams::flat() const {
  VectorXd theta(theta_p.size() + theta_s.size() + 1);
  theta << theta_p, theta_s, theta_o;
  return theta;
}

RewardParams RewardParams::from_flat(const VectorXd& theta, int k_p, int k_s) {
  if (theta.size() != k_p + k_s + 1) {
    std::ostringstream os;
    os << "theta has " << theta.size() << " entries, expected " << (k_p + k_s + 1);
    throw DimensionError(os.str());
  }
  RewardParams r;
  r.theta_p = theta.head(k_p);
  r.theta_s = theta.segment(k_p, k_s);
  r.theta_o = theta(k_p + k_s);
  return r;
}

ValidationReport validate_problem(const AttentionProblem& p) {
  ValidationReport rep;
  auto fail = [&rep](std::string msg) { rep.violations.push_back(std::move(msg)); };
  const int nx = p.n_x();
  const int nu = p.n_u();

  if (p.horizon < 1) fail("horizon must be >= 1");
  if (!(p.dt > 0.0)) fail("dt must be positive");
  if (p.d_max < 1) fail("d_max must be >= 1");
  if (static_cast<int>(p.dyn_A.size()) != p.horizon || static_cast<int>(p.dyn_B.size()) != p.horizon ||
      static_cast<int>(p.dyn_a.size()) != p.horizon) {
    fail("dynamics must provide one A, B, a per step 0..T-1");
  } else {
    for (int t = 0; t < p.horizon; ++t) {
      if (p.dyn_A[t].rows() != nx || p.dyn_A[t].cols() != nx)
        fail("dyn_A[" + std::to_string(t) + "] has wrong shape");
      if (p.dyn_B[t].rows() != nx || p.dyn_B[t].cols() != nu)
        fail("dyn_B[" + std::to_string(t) + "] has wrong shape");
      if (p.dyn_a[t].size() != nx) fail("dyn_a[" + std::to_string(t) + "] has wrong size");
    }
  }
  if (p.process_noise.rows() != p.process_noise.cols()) fail("process_noise not square");
  else if (!is_psd(p.process_noise)) fail("process_noise not PSD");
  if (p.obs_H.cols() != nx) fail("obs_H has wrong number of columns");
  if (p.obs_noise.rows() != p.obs_H.rows() || p.obs_noise.cols() != p.obs_H.rows())
    fail("obs_noise has wrong shape");
  else if (!is_psd(p.obs_noise)) fail("obs_noise not PSD");

  const auto& mdp = p.sub_mdp;
  if (mdp.num_states < 1 || mdp.num_controls < 1) fail("sub_mdp needs at least one state and control");
  if (mdp.transition.size() != 2) {
    fail("sub_mdp transition must be indexed by both attention outcomes");
  } else {
    for (int o = 0; o < 2; ++o) {
      if (static_cast<int>(mdp.transition[o].size()) != mdp.num_states) {
        fail("sub_mdp transition has wrong state count");
        continue;
      }
      for (int s = 0; s < mdp.num_states; ++s) {
        if (static_cast<int>(mdp.transition[o][s].size()) != mdp.num_controls) {
          fail("sub_mdp transition has wrong control count");
          continue;
        }
        for (int u = 0; u < mdp.num_controls; ++u) {
          const VectorXd& row = mdp.transition[o][s][u];
          if (row.size() != mdp.num_states) {
            fail("sub_mdp transition row has wrong size");
          } else if (std::abs(row.sum() - 1.0) > 1e-12 || row.minCoeff() < 0.0) {
            std::ostringstream os;
            os << "sub_mdp transition row (attn=" << o << ", x_s=" << s << ", u_s=" << u
               << ") not stochastic: sums to " << row.sum();
            fail(os.str());
          }
        }
      }
    }
  }
  if (static_cast<int>(mdp.features.size()) != mdp.num_states) {
    fail("sub_mdp features have wrong state count");
  } else {
    for (const auto& row : mdp.features)
      if (static_cast<int>(row.size()) != mdp.num_controls) fail("sub_mdp features have wrong control count");
  }

  const int nz = nx + nu;
  if (p.feature_spec.selector.rows() != nz * nz) fail("feature selector must map to vec(blk(Theta1, Theta2))");

  if (p.init_state.x_p.size() != nx) fail("initial state has wrong size");
  if (p.init_state.d < 0 || p.init_state.d > p.d_max) fail("initial d out of range");
  if (p.init_state.x_s < 0 || p.init_state.x_s >= mdp.num_states) fail("initial x_s out of range");
  return rep;
}

std::pair<MatrixXd, MatrixXd> reward_blocks(const AttentionProblem& p, const VectorXd& theta_p) {
  const MatrixXd blk = reward_block_matrix(p, theta_p);
  const int nx = p.n_x();
  const int nu = p.n_u();
  return {blk.topLeftCorner(nx, nx), blk.bottomRightCorner(nu, nu)};
}

MatrixXd reward_block_matrix(const AttentionProblem& p, const VectorXd& theta_p) {
  if (theta_p.size() != p.k_p()) throw DimensionError("theta_p has wrong size");
  const int nz = p.n_z();
  const VectorXd v = p.feature_spec.selector * theta_p;
  return Eigen::Map<const MatrixXd>(v.data(), nz, nz);
}

VectorXd eval_features(const AttentionProblem& p, const VectorXd& x_p, const VectorXd& u_p, int x_s,
                       int u_s, int u_o) {
  const int nx = p.n_x();
  const int nu = p.n_u();
  if (x_p.size() != nx || u_p.size() != nu) throw DimensionError("eval_features: state/control size mismatch");
  if (x_s < 0 || x_s >= p.sub_mdp.num_states || u_s < 0 || u_s >= p.sub_mdp.num_controls ||
      (u_o != 0 && u_o != 1))
    throw DimensionError("eval_features: discrete index out of range");
  VectorXd z(nx + nu);
  z << x_p, u_p;
  const MatrixXd zz = z * z.transpose();
  const Eigen::Map<const VectorXd> vec_zz(zz.data(), zz.size());
  VectorXd phi(p.num_params());
  phi.head(p.k_p()) = p.feature_spec.selector.transpose() * vec_zz;
  phi.segment(p.k_p(), p.k_s()) = p.sub_mdp.features[x_s][u_s];
  phi(p.num_params() - 1) = static_cast<double>(u_o);
  return phi;
}

AttentionProblem build_driver_problem(const DriverConfig& cfg) {
  const auto& speeds = check_series(cfg.speed, "speed");
  const auto& curv = check_series(cfg.curvature, "curvature");
  if (!(cfg.dt > 0.0)) throw DomainError("driver config: dt must be positive");
  if (cfg.horizon < 1) throw DomainError("driver config: horizon must be >= 1");
  for (const auto* s : {&speeds, &curv}) {
    if (s->size() != 1 && static_cast<int>(s->size()) != cfg.horizon)
      throw DimensionError("driver config: per-step series must have one entry per step");
  }
  for (double v : speeds)
    if (!(v > 0.0)) throw DomainError("driver config: speed must be positive");

  AttentionProblem p;
  p.horizon = cfg.horizon;
  p.dt = cfg.dt;
  p.d_max = cfg.d_max.value_or(cfg.horizon);
  if (p.d_max < 1) throw DomainError("driver config: d_max must be >= 1");
  const double dt = cfg.dt;
  const double c = cfg.steering_ratio;

  // Forward Euler on [y, heading, steering]; y_dot is carried as v * heading
  // of the same step so the 4-state system stays linear-affine.
  for (int t = 0; t < cfg.horizon; ++t) {
    const double v = at_step(speeds, t);
    const double k = at_step(curv, t);
    MatrixXd A = MatrixXd::Zero(4, 4);
    A(0, 0) = 1.0;
    A(0, 2) = dt * v;
    A(2, 2) = 1.0;
    A(2, 3) = dt * c * v;
    A(1, 2) = v * A(2, 2);
    A(1, 3) = v * A(2, 3);
    A(3, 3) = 1.0;
    MatrixXd B = MatrixXd::Zero(4, 1);
    B(3, 0) = dt;
    VectorXd a = VectorXd::Zero(4);
    a(2) = -dt * v * k;
    a(1) = v * a(2);
    p.dyn_A.push_back(A);
    p.dyn_B.push_back(B);
    p.dyn_a.push_back(a);
  }

  if (cfg.process_noise) {
    p.process_noise = *cfg.process_noise;
  } else {
    // Heading disturbance, entering y_dot through v.
    const double v0 = speeds.front();
    VectorXd g(4);
    g << 0.0, v0, 1.0, 0.0;
    p.process_noise = cfg.heading_noise_std * cfg.heading_noise_std * g * g.transpose();
  }
  if (p.process_noise.rows() != 4 || p.process_noise.cols() != 4)
    throw DimensionError("driver config: process_noise must be 4x4");

  p.obs_H = MatrixXd::Zero(1, 4);
  p.obs_H(0, 3) = 1.0;
  p.obs_noise = MatrixXd::Zero(1, 1);

  // Secondary task state is 1 exactly while the eyes are off the road.
  SecondaryMdp mdp;
  mdp.num_states = 2;
  mdp.num_controls = 1;
  mdp.transition.assign(2, std::vector<std::vector<VectorXd>>(2, std::vector<VectorXd>(1)));
  for (int o = 0; o < 2; ++o) {
    for (int s = 0; s < 2; ++s) {
      VectorXd row = VectorXd::Zero(2);
      row(o == 1 ? 0 : 1) = 1.0;
      mdp.transition[o][s][0] = row;
    }
  }
  mdp.features = {{VectorXd::Constant(1, 0.0)}, {VectorXd::Constant(1, 1.0)}};
  p.sub_mdp = std::move(mdp);

  // phi_p = [y^2, y_dot^2, steering^2, steering_rate^2]
  constexpr int nz = 5;
  MatrixXd sel = MatrixXd::Zero(nz * nz, 4);
  sel(0 * nz + 0, 0) = 1.0;
  sel(1 * nz + 1, 1) = 1.0;
  sel(3 * nz + 3, 2) = 1.0;
  sel(4 * nz + 4, 3) = 1.0;
  p.feature_spec.selector = sel;

  p.init_state.x_p = VectorXd::Zero(4);
  p.init_state.d = 0;
  p.init_state.x_s = 0;
  return p;
}

VectorXd reference_driver_theta() {
  VectorXd theta(6);
  theta << -0.5, -8.0, -11.0, -200.0, 0.07, -3.5;
  return theta;
}

std::optional<std::string> check_theta(const AttentionProblem& p, const VectorXd& theta) {
  if (theta.size() != p.num_params()) {
    std::ostringstream os;
    os << "theta has " << theta.size() << " entries, expected " << p.num_params();
    throw DimensionError(os.str());
  }
  if (!theta.allFinite()) throw DomainError("theta has non-finite entries");
  const auto [theta1, theta2] = reward_blocks(p, theta.head(p.k_p()));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (theta2 + theta2.transpose()));
  if (es.eigenvalues().maxCoeff() >= 0.0)
    throw DomainError("Theta2(theta_p) must be negative definite");
  if (theta(theta.size() - 1) >= 0.0) return std::string("theta_o >= 0: switching is rewarded, not penalized");
  return std::nullopt;
}

}  // namespace attnioc
