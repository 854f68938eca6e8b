#include "attnioc/metrics.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace attnioc {
namespace {

VectorXd normalize_with(VectorXd counts, double eps) {
  if (eps < 0.0) throw std::invalid_argument("smoothing_eps must be >= 0");
  counts.array() += eps;
  const double s = counts.sum();
  if (!(s > 0.0)) return counts;
  return counts / s;
}

}  // namespace

VectorXd d_histogram(const Dataset& data, int d_max, double eps) {
  if (d_max < 0) throw std::invalid_argument("d_histogram: d_max must be >= 0");
  VectorXd counts = VectorXd::Zero(d_max + 1);
  double n = 0.0;
  for (const auto& tr : data.trajectories)
    for (const auto& st : tr.steps) {
      if (st.d < 0 || st.d > d_max) throw DimensionError("d_histogram: d outside 0..d_max");
      counts(st.d) += 1.0;
      n += 1.0;
    }
  // Smoothing is a mass per bin, so it is applied to frequencies.
  if (n > 0.0) counts /= n;
  return normalize_with(counts, eps);
}

std::vector<VectorXd> d_histogram_per_t(const Dataset& data, int d_max, double eps) {
  const int T = data.horizon();
  if (T < 0) return {};
  std::vector<VectorXd> out(static_cast<size_t>(T + 1), VectorXd::Zero(d_max + 1));
  for (const auto& tr : data.trajectories) {
    if (static_cast<int>(tr.steps.size()) != T + 1) throw DimensionError("d_histogram_per_t: ragged dataset");
    for (const auto& st : tr.steps) {
      if (st.d < 0 || st.d > d_max) throw DimensionError("d_histogram_per_t: d outside 0..d_max");
      out[static_cast<size_t>(st.t)](st.d) += 1.0;
    }
  }
  for (auto& h : out) h = normalize_with(h / static_cast<double>(data.size()), eps);
  return out;
}

double kl_discrete(const VectorXd& p, const VectorXd& q) {
  if (p.size() != q.size()) throw DimensionError("kl_discrete: size mismatch");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) < 0.0 || q(i) < 0.0) throw DomainError("kl_discrete: negative probability");
    if (p(i) == 0.0) continue;
    if (q(i) == 0.0) {
      std::ostringstream os;
      os << "kl_discrete: q is zero at index " << i << " where p > 0";
      throw DomainError(os.str());
    }
    kl += p(i) * (std::log(p(i)) - std::log(q(i)));
  }
  return kl;
}

GaussianSummary fit_gaussian_summary(const Dataset& data) {
  const int T = data.horizon();
  if (T < 0) throw std::invalid_argument("fit_gaussian_summary: empty dataset");
  const Eigen::Index dim = data.trajectories[0].steps[0].x_p.size();
  GaussianSummary g;
  const size_t T1 = static_cast<size_t>(T + 1);
  g.mean.assign(T1, VectorXd::Zero(dim));
  g.cov.assign(T1, MatrixXd::Zero(dim, dim));
  g.count.assign(T1, 0);
  for (const auto& tr : data.trajectories) {
    if (tr.steps.size() != T1) throw DimensionError("fit_gaussian_summary: ragged dataset");
    for (size_t t = 0; t < T1; ++t) {
      g.mean[t] += tr.steps[t].x_p;
      g.count[t] += 1;
    }
  }
  for (size_t t = 0; t < T1; ++t) g.mean[t] /= g.count[t];
  for (const auto& tr : data.trajectories)
    for (size_t t = 0; t < T1; ++t) {
      const VectorXd dx = tr.steps[t].x_p - g.mean[t];
      g.cov[t].noalias() += dx * dx.transpose();
    }
  for (size_t t = 0; t < T1; ++t) {
    if (g.count[t] > 1) g.cov[t] /= (g.count[t] - 1);
    g.cov[t] = symmetrize(g.cov[t]);
    if (g.count[t] < dim + 2) g.cov[t] += kThinSliceRidge * MatrixXd::Identity(dim, dim);
  }
  return g;
}

double kl_gaussian(const VectorXd& m0, const MatrixXd& S0, const VectorXd& m1, const MatrixXd& S1) {
  const Eigen::Index k = m0.size();
  if (m1.size() != k || S0.rows() != k || S1.rows() != k) throw DimensionError("kl_gaussian: size mismatch");
  const Eigen::LLT<MatrixXd> l1(S1);
  const Eigen::LLT<MatrixXd> l0(S0);
  if (l1.info() != Eigen::Success || l0.info() != Eigen::Success)
    throw DomainError("kl_gaussian: covariance is not positive definite");
  const MatrixXd L1 = l1.matrixL();
  const MatrixXd L0 = l0.matrixL();
  double logdet1 = 0.0;
  double logdet0 = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    logdet1 += 2.0 * std::log(L1(i, i));
    logdet0 += 2.0 * std::log(L0(i, i));
  }
  const MatrixXd W = l1.matrixL().solve(L0);  // L1^-1 L0
  const VectorXd dm = l1.matrixL().solve(m1 - m0);
  return 0.5 * (W.squaredNorm() + dm.squaredNorm() - static_cast<double>(k) + logdet1 - logdet0);
}

double kl_gaussian_temporal(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.steps() != b.steps() || a.steps() == 0) throw DimensionError("kl_gaussian_temporal: step count mismatch");
  double s = 0.0;
  for (size_t t = 0; t < a.mean.size(); ++t) {
    const Eigen::Index k = a.mean[t].size();
    const MatrixXd ridge = kKlRidge * MatrixXd::Identity(k, k);
    s += kl_gaussian(a.mean[t], a.cov[t] + ridge, b.mean[t], b.cov[t] + ridge);
  }
  return s / static_cast<double>(a.steps());
}

double reward_rd(const VectorXd& theta, const VectorXd& theta_prime) {
  if (theta.size() != theta_prime.size() || theta.size() == 0) throw DimensionError("reward_rd: size mismatch");
  double s = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (theta(i) == 0.0) {
      std::ostringstream os;
      os << "reward_rd: true coordinate " << i << " is zero";
      throw DomainError(os.str());
    }
    s += std::abs(theta_prime(i) - theta(i)) / std::abs(theta(i));
  }
  return s / static_cast<double>(theta.size());
}

double lateral_se(const VectorXd& reference_y, const Dataset& rollouts) {
  if (rollouts.trajectories.empty()) throw std::invalid_argument("lateral_se: no rollouts");
  double total = 0.0;
  for (const auto& tr : rollouts.trajectories) {
    if (static_cast<Eigen::Index>(tr.steps.size()) != reference_y.size())
      throw DimensionError("lateral_se: horizon mismatch");
    double s = 0.0;
    for (size_t t = 0; t < tr.steps.size(); ++t) {
      const double e = tr.steps[t].x_p(0) - reference_y(static_cast<Eigen::Index>(t));
      s += e * e;
    }
    total += s / static_cast<double>(tr.steps.size());
  }
  return total / static_cast<double>(rollouts.size());
}

}  // namespace attnioc
