#include "attnioc/dpe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace attnioc {
namespace {

constexpr double kCdTol = 1e-14;
constexpr int kCdMaxSweeps = 200000;

double soft_threshold(double z, double g) {
  if (z > g) return z - g;
  if (z < -g) return z + g;
  return 0.0;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Coordinate descent for 0.5 b'Gb - c'b + lambda ||b||_1 starting from b.
void cd_gram(const MatrixXd& G, const VectorXd& c, double lambda, VectorXd& b) {
  const Eigen::Index p = b.size();
  for (int sweep = 0; sweep < kCdMaxSweeps; ++sweep) {
    double max_change = 0.0;
    double max_coef = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (G(j, j) <= 0.0) {
        b(j) = 0.0;
        continue;
      }
      const double rho = c(j) - G.row(j).dot(b) + G(j, j) * b(j);
      const double nb = soft_threshold(rho, lambda) / G(j, j);
      max_change = std::max(max_change, std::abs(nb - b(j)) * std::sqrt(G(j, j)));
      max_coef = std::max(max_coef, std::abs(nb) * std::sqrt(G(j, j)));
      b(j) = nb;
    }
    if (max_change <= kCdTol * std::max(1.0, max_coef)) return;
  }
}

struct Standardized {
  MatrixXd X;
  VectorXd mean;
  VectorXd scale;
};

Standardized standardize(const MatrixXd& X, bool center) {
  Standardized s;
  const double n = static_cast<double>(X.rows());
  s.mean = center ? VectorXd(X.colwise().mean().transpose()) : VectorXd::Zero(X.cols());
  s.X = X.rowwise() - s.mean.transpose();
  s.scale = (s.X.colwise().squaredNorm() / n).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (s.scale(j) > 0.0)
      s.X.col(j) /= s.scale(j);
    else
      s.scale(j) = 0.0;
  }
  return s;
}

VectorXd unscale(const VectorXd& b_std, const VectorXd& scale) {
  VectorXd b = VectorXd::Zero(b_std.size());
  for (Eigen::Index j = 0; j < b.size(); ++j)
    if (scale(j) > 0.0) b(j) = b_std(j) / scale(j);
  return b;
}

double logistic_nll(const MatrixXd& X, const VectorXd& y, const VectorXd& w) {
  const VectorXd eta = X * w;
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    // log(1 + exp(eta)) - y eta, computed stably
    const double e = eta(i);
    s += (e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e))) - y(i) * e;
  }
  return s;
}

std::vector<size_t> rows_where(const std::vector<int>& fold, int k, bool equal) {
  std::vector<size_t> out;
  for (size_t i = 0; i < fold.size(); ++i)
    if ((fold[i] == k) == equal) out.push_back(i);
  return out;
}

MatrixXd take_rows(const MatrixXd& X, const std::vector<size_t>& idx) {
  MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

VectorXd take(const VectorXd& v, const std::vector<size_t>& idx) {
  VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(idx[i]));
  return out;
}

int argmin(const std::vector<double>& v) {
  return static_cast<int>(std::min_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::vector<double> log_grid(double hi, double decades, int n) {
  if (n < 1 || !(hi > 0.0)) throw std::invalid_argument("log_grid: need n >= 1 and hi > 0");
  std::vector<double> g(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<size_t>(i)] = hi * std::pow(10.0, n == 1 ? 0.0 : -decades * i / (n - 1));
  return g;
}

std::vector<int> fold_assignment(size_t n, int folds, std::uint64_t seed) {
  if (folds < 1) throw std::invalid_argument("fold_assignment: folds must be >= 1");
  std::vector<size_t> perm(n);
  for (size_t i = 0; i < n; ++i) perm[i] = i;
  // Plain Fisher-Yates so the permutation does not depend on the standard library.
  auto rng = make_rng(seed);
  for (size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
  std::vector<int> fold(n);
  for (size_t pos = 0; pos < n; ++pos) fold[perm[pos]] = static_cast<int>(pos % static_cast<size_t>(folds));
  return fold;
}

double lasso_lambda_max(const MatrixXd& X, const VectorXd& y) {
  const Standardized s = standardize(X, true);
  const VectorXd yc = y.array() - y.mean();
  return (s.X.transpose() * yc).cwiseAbs().maxCoeff() / static_cast<double>(X.rows());
}

LassoPath lasso_path(const MatrixXd& X, const VectorXd& y, const std::vector<double>& lambdas) {
  if (X.rows() != y.size() || X.rows() == 0) throw DimensionError("lasso_path: X and y disagree");
  const double n = static_cast<double>(X.rows());
  const Standardized s = standardize(X, true);
  const double ybar = y.mean();
  const VectorXd yc = y.array() - ybar;
  const MatrixXd G = s.X.transpose() * s.X / n;
  const VectorXd c = s.X.transpose() * yc / n;
  LassoPath path;
  path.lambdas = lambdas;
  VectorXd b = VectorXd::Zero(X.cols());
  for (double lam : lambdas) {
    cd_gram(G, c, lam, b);
    const VectorXd coef = unscale(b, s.scale);
    path.coefs.push_back(coef);
    path.intercepts.push_back(ybar - s.mean.dot(coef));
  }
  return path;
}

double logistic_lambda_max(const MatrixXd& X, const VectorXd& y) {
  const Standardized s = standardize(X, false);
  const VectorXd r = y.array() - 0.5;
  return (s.X.transpose() * r).cwiseAbs().maxCoeff() / static_cast<double>(X.rows());
}

LogisticPath logistic_path(const MatrixXd& X, const VectorXd& y, const std::vector<double>& lambdas) {
  if (X.rows() != y.size() || X.rows() == 0) throw DimensionError("logistic_path: X and y disagree");
  const double n = static_cast<double>(X.rows());
  const Standardized s = standardize(X, false);
  LogisticPath path;
  path.lambdas = lambdas;
  VectorXd w = VectorXd::Zero(X.cols());
  auto objective = [&](const VectorXd& v, double lam) { return logistic_nll(s.X, y, v) / n + lam * v.lpNorm<1>(); };
  for (double lam : lambdas) {
    double obj = objective(w, lam);
    for (int outer = 0; outer < 200; ++outer) {
      const VectorXd eta = s.X * w;
      VectorXd wt(eta.size());
      VectorXd z(eta.size());
      for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double p = sigmoid(eta(i));
        wt(i) = std::max(p * (1.0 - p), 1e-5);
        z(i) = eta(i) + (y(i) - p) / wt(i);
      }
      const MatrixXd G = s.X.transpose() * wt.asDiagonal() * s.X / n;
      const VectorXd c = s.X.transpose() * wt.cwiseProduct(z) / n;
      VectorXd w_new = w;
      cd_gram(G, c, lam, w_new);
      // Step halving keeps the penalized likelihood monotone.
      double step = 1.0;
      VectorXd trial = w_new;
      double obj_new = objective(trial, lam);
      for (int h = 0; h < 30 && obj_new > obj + 1e-15 * std::max(1.0, std::abs(obj)); ++h) {
        step *= 0.5;
        trial = w + step * (w_new - w);
        obj_new = objective(trial, lam);
      }
      const double change = (trial - w).cwiseAbs().maxCoeff();
      w = trial;
      const bool done = change < 1e-10 * std::max(1.0, w.cwiseAbs().maxCoeff()) || obj - obj_new < 1e-15;
      obj = obj_new;
      if (done || w.cwiseAbs().maxCoeff() > 1e3) break;
    }
    path.coefs.push_back(unscale(w, s.scale));
  }
  return path;
}

DpePolicy fit_dpe(const Dataset& data, const DpeOptions& opts) {
  if (data.trajectories.empty()) throw std::invalid_argument("fit_dpe: empty dataset");
  if (opts.folds < 2) throw std::invalid_argument("fit_dpe: need at least 2 folds");
  size_t n = 0;
  for (const auto& tr : data.trajectories) n += tr.steps.size();
  const auto& first = data.trajectories[0].steps.at(0);
  const Eigen::Index nx = first.mu.size();
  const Eigen::Index nu = first.u_p.size();
  if (nx == 0) throw std::invalid_argument("fit_dpe: dataset is missing belief logs");
  if (n < static_cast<size_t>(opts.folds)) throw std::invalid_argument("fit_dpe: fewer samples than folds");

  MatrixXd Xc(static_cast<Eigen::Index>(n), nx);
  MatrixXd U(static_cast<Eigen::Index>(n), nu);
  MatrixXd Xs(static_cast<Eigen::Index>(n), 3);
  VectorXd uo(static_cast<Eigen::Index>(n));
  Eigen::Index r = 0;
  for (const auto& tr : data.trajectories)
    for (const auto& st : tr.steps) {
      Xc.row(r) = st.mu.transpose();
      U.row(r) = st.u_p.transpose();
      Xs.row(r) << static_cast<double>(st.d), static_cast<double>(st.x_s), 1.0 - st.x_s;
      uo(r) = st.u_o;
      ++r;
    }
  const std::vector<int> fold = fold_assignment(n, opts.folds, opts.seed);

  DpePolicy pol;
  pol.Lambda1 = MatrixXd::Zero(nu, nx);
  pol.lambda2 = VectorXd::Zero(nu);
  // Continuous part, one lasso per control dimension.
  for (Eigen::Index j = 0; j < nu; ++j) {
    const VectorXd y = U.col(j);
    const double lmax = lasso_lambda_max(Xc, y);
    CvTrace cv;
    cv.lambdas = log_grid(lmax > 0.0 ? lmax : 1e-12, opts.lasso_decades, opts.grid_size);
    cv.mean_deviance.assign(cv.lambdas.size(), 0.0);
    for (int k = 0; k < opts.folds; ++k) {
      const auto tr_idx = rows_where(fold, k, false);
      const auto te_idx = rows_where(fold, k, true);
      const LassoPath path = lasso_path(take_rows(Xc, tr_idx), take(y, tr_idx), cv.lambdas);
      const MatrixXd Xte = take_rows(Xc, te_idx);
      const VectorXd yte = take(y, te_idx);
      for (size_t l = 0; l < cv.lambdas.size(); ++l) {
        const VectorXd res = yte - Xte * path.coefs[l] - VectorXd::Constant(yte.size(), path.intercepts[l]);
        cv.mean_deviance[l] += res.squaredNorm() / static_cast<double>(yte.size()) / opts.folds;
      }
    }
    cv.chosen = argmin(cv.mean_deviance);
    const LassoPath full = lasso_path(Xc, y, std::vector<double>(cv.lambdas.begin(), cv.lambdas.begin() + cv.chosen + 1));
    pol.Lambda1.row(j) = full.coefs.back().transpose();
    pol.lambda2(j) = full.intercepts.back();
    pol.control_cv.push_back(std::move(cv));
  }
  const MatrixXd resid = U - Xc * pol.Lambda1.transpose() - VectorXd::Ones(static_cast<Eigen::Index>(n)) * pol.lambda2.transpose();
  pol.SigmaB = resid.transpose() * resid / static_cast<double>(n);

  // Switching part.
  const double mean_uo = uo.mean();
  if (mean_uo == 0.0 || mean_uo == 1.0) {
    // No variation: the likelihood is maximized at the boundary.
    const double v = mean_uo == 0.0 ? -kDpeSaturation : kDpeSaturation;
    pol.lambda3 = 0.0;
    pol.lambda4 = v;
    pol.lambda5 = v;
    pol.saturated = true;
    return pol;
  }
  CvTrace& cv = pol.switch_cv;
  const double lmax = logistic_lambda_max(Xs, uo);
  cv.lambdas = log_grid(lmax > 0.0 ? lmax : 1e-12, opts.logistic_decades, opts.grid_size);
  cv.mean_deviance.assign(cv.lambdas.size(), 0.0);
  for (int k = 0; k < opts.folds; ++k) {
    const auto tr_idx = rows_where(fold, k, false);
    const auto te_idx = rows_where(fold, k, true);
    const LogisticPath path = logistic_path(take_rows(Xs, tr_idx), take(uo, tr_idx), cv.lambdas);
    const MatrixXd Xte = take_rows(Xs, te_idx);
    const VectorXd yte = take(uo, te_idx);
    for (size_t l = 0; l < cv.lambdas.size(); ++l) {
      VectorXd w = path.coefs[l].cwiseMax(-kDpeSaturation).cwiseMin(kDpeSaturation);
      cv.mean_deviance[l] += 2.0 * logistic_nll(Xte, yte, w) / static_cast<double>(yte.size()) / opts.folds;
    }
  }
  cv.chosen = argmin(cv.mean_deviance);
  const LogisticPath full = logistic_path(Xs, uo, std::vector<double>(cv.lambdas.begin(), cv.lambdas.begin() + cv.chosen + 1));
  VectorXd w = full.coefs.back();
  if (w.cwiseAbs().maxCoeff() > kDpeSaturation) pol.saturated = true;
  w = w.cwiseMax(-kDpeSaturation).cwiseMin(kDpeSaturation);
  pol.lambda3 = w(0);
  pol.lambda4 = w(1);
  pol.lambda5 = w(2);
  return pol;
}

DpeActionDist dpe_action_dist(const DpePolicy& policy, const VectorXd& mu, int d, int x_s) {
  if (mu.size() != policy.Lambda1.cols()) throw DimensionError("dpe_action_dist: mu has wrong size");
  DpeActionDist out;
  out.mean = policy.Lambda1 * mu + policy.lambda2;
  out.cov = policy.SigmaB;
  out.p_switch = sigmoid(policy.lambda3 * d + policy.lambda4 * x_s + policy.lambda5 * (1 - x_s));
  return out;
}

ControlSampler make_dpe_sampler(const DpePolicy& policy) {
  const MatrixXd factor = psd_factor(policy.SigmaB);
  auto owned = std::make_shared<DpePolicy>(policy);
  owned->control_cv.clear();
  owned->switch_cv = CvTrace{};
  return [owned, factor](int, const HybridState& s, std::mt19937_64& rng) {
    const DpeActionDist dist = dpe_action_dist(*owned, s.mu, s.d, s.x_s);
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd z(factor.cols());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
    Controls u;
    u.u_p = dist.mean + factor * z;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    u.u_o = uni(rng) < dist.p_switch ? 1 : 0;
    u.u_s = 0;
    return u;
  };
}

}  // namespace attnioc
