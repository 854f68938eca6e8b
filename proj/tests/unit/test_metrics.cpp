#include "attnioc/metrics.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace attnioc;

namespace {

Dataset with_durations(const std::vector<std::vector<int>>& ds) {
  Dataset data;
  for (const auto& seq : ds) {
    Trajectory tr;
    for (size_t t = 0; t < seq.size(); ++t) {
      StepRecord st;
      st.t = static_cast<int>(t);
      st.d = seq[t];
      tr.steps.push_back(st);
    }
    data.trajectories.push_back(tr);
  }
  return data;
}

// n trajectories of T+1 steps, x_p drawn per step from N(mean_t, L L').
Dataset gaussian_states(int n, int T, const std::vector<VectorXd>& mean, const MatrixXd& L, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset data;
  for (int i = 0; i < n; ++i) {
    Trajectory tr;
    for (int t = 0; t <= T; ++t) {
      StepRecord st;
      st.t = t;
      VectorXd z(L.cols());
      for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = normal(rng);
      st.x_p = mean[static_cast<size_t>(t)] + L * z;
      tr.steps.push_back(st);
    }
    data.trajectories.push_back(tr);
  }
  return data;
}

GaussianSummary one_slice(const VectorXd& m, const MatrixXd& S) {
  GaussianSummary g;
  g.mean = {m};
  g.cov = {S};
  g.count = {1000};
  return g;
}

}  // namespace

TEST_CASE("glance-duration histogram") {
  SUBCASE("all attentive") {
    const VectorXd h = d_histogram(with_durations({{0, 0, 0}, {0, 0, 0}}), 3);
    CHECK(h(0) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(h.sum() == doctest::Approx(1.0));
    CHECK(h(2) > 0.0);
  }
  SUBCASE("equal counts on 0 and 1") {
    const VectorXd h = d_histogram(with_durations({{0, 1, 0, 1}}), 3);
    CHECK(h(0) == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(h(1) == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(h(3) < 1e-5);
  }
  SUBCASE("no smoothing keeps empty bins at zero") {
    const VectorXd h = d_histogram(with_durations({{0, 1, 0, 1}}), 3, 0.0);
    CHECK(h(2) == 0.0);
    CHECK(h(0) == 0.5);
  }
  SUBCASE("per step") {
    const auto hs = d_histogram_per_t(with_durations({{0, 1, 2}, {0, 0, 1}}), 2, 0.0);
    REQUIRE(hs.size() == 3);
    CHECK(hs[0](0) == 1.0);
    CHECK(hs[1](0) == 0.5);
    CHECK(hs[2](1) == 0.5);
  }
  CHECK_THROWS_AS(d_histogram(with_durations({{0, 5}}), 3), DimensionError);
}

TEST_CASE("discrete KL") {
  VectorXd p(2), q(2);
  p << 1.0, 0.0;
  q << 0.5, 0.5;
  CHECK(kl_discrete(p, q) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(kl_discrete(q, q) == 0.0);
  CHECK_THROWS_AS(kl_discrete(q, p), DomainError);
  CHECK_THROWS_AS(kl_discrete(p, VectorXd::Ones(3) / 3.0), DimensionError);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> uni(0.01, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    VectorXd a(5), b(5);
    for (int i = 0; i < 5; ++i) {
      a(i) = uni(rng);
      b(i) = uni(rng);
    }
    a /= a.sum();
    b /= b.sum();
    CHECK(kl_discrete(a, b) >= 0.0);
  }
}

TEST_CASE("Gaussian KL closed forms") {
  const VectorXd z = VectorXd::Zero(1);
  const VectorXd one = VectorXd::Ones(1);
  const MatrixXd I = MatrixXd::Identity(1, 1);
  CHECK(kl_gaussian(z, I, one, I) == doctest::Approx(0.5).epsilon(1e-15));
  // Variance ratio 4: 0.5 (1/4 - 1 + log 4).
  CHECK(kl_gaussian(z, I, z, 4.0 * I) == doctest::Approx(0.5 * (0.25 - 1.0 + std::log(4.0))).epsilon(1e-14));
  CHECK_THROWS_AS(kl_gaussian(z, -I, z, I), DomainError);

  const GaussianSummary a = one_slice(z, I);
  const GaussianSummary b = one_slice(one, I);
  CHECK(kl_gaussian_temporal(a, b) == doctest::Approx(0.5 / (1.0 + kKlRidge)).epsilon(1e-15));
  CHECK(kl_gaussian_temporal(a, a) == 0.0);
}

TEST_CASE("temporal KL is invariant under a shared linear reparametrization") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_spd = [&] {
    MatrixXd M(3, 3);
    for (int i = 0; i < 9; ++i) M(i / 3, i % 3) = normal(rng);
    return MatrixXd(M * M.transpose() + 0.5 * MatrixXd::Identity(3, 3));
  };
  GaussianSummary a, b;
  for (int t = 0; t < 4; ++t) {
    a.mean.push_back(VectorXd::Random(3));
    b.mean.push_back(VectorXd::Random(3));
    a.cov.push_back(random_spd());
    b.cov.push_back(random_spd());
    a.count.push_back(100);
    b.count.push_back(100);
  }
  MatrixXd M(3, 3);
  M << 2.0, 0.3, 0.0, -0.5, 1.0, 0.2, 0.1, 0.0, 0.7;
  VectorXd shift(3);
  shift << 1.0, -2.0, 0.5;
  GaussianSummary a2 = a, b2 = b;
  for (size_t t = 0; t < a.mean.size(); ++t) {
    a2.mean[t] = M * a.mean[t] + shift;
    b2.mean[t] = M * b.mean[t] + shift;
    a2.cov[t] = M * a.cov[t] * M.transpose();
    b2.cov[t] = M * b.cov[t] * M.transpose();
  }
  const double k1 = kl_gaussian_temporal(a, b);
  const double k2 = kl_gaussian_temporal(a2, b2);
  CHECK(k1 > 0.0);
  CHECK(std::abs(k1 - k2) <= 1e-8);
}

TEST_CASE("Gaussian summary") {
  MatrixXd L(2, 2);
  L << 1.0, 0.0, 0.5, 0.3;
  std::vector<VectorXd> mean(3, VectorXd::Zero(2));
  mean[2] << 1.0, -1.0;
  const Dataset data = gaussian_states(4000, 2, mean, L, 3);
  const GaussianSummary g = fit_gaussian_summary(data);
  REQUIRE(g.steps() == 3);
  CHECK(g.count[0] == 4000);
  CHECK((g.mean[2] - mean[2]).cwiseAbs().maxCoeff() < 0.06);
  CHECK((g.cov[1] - L * L.transpose()).cwiseAbs().maxCoeff() < 0.08);
  CHECK((g.cov[1] - g.cov[1].transpose()).cwiseAbs().maxCoeff() == 0.0);

  // Unbiased: two samples {0, 2} have variance 2.
  Dataset two;
  for (double v : {0.0, 2.0}) {
    Trajectory tr;
    StepRecord st;
    st.x_p = VectorXd::Constant(1, v);
    tr.steps.push_back(st);
    two.trajectories.push_back(tr);
  }
  const GaussianSummary g2 = fit_gaussian_summary(two);
  // Thin slice (n < dim + 2) carries the ridge.
  CHECK(g2.cov[0](0, 0) == doctest::Approx(2.0 + kThinSliceRidge).epsilon(1e-15));

  const Dataset other = gaussian_states(4000, 2, mean, L, 4);
  const double kl = kl_gaussian_temporal(g, fit_gaussian_summary(other));
  CHECK(kl > 0.0);
  CHECK(kl < 0.01);
  CHECK_THROWS_AS(kl_gaussian_temporal(g, g2), DimensionError);
}

TEST_CASE("reward relative deviation") {
  VectorXd th(6);
  th << -0.5, -8, -11, -200, 0.07, -3.5;
  CHECK(reward_rd(th, th) == 0.0);
  CHECK(reward_rd(th, 2.0 * th) == doctest::Approx(1.0).epsilon(1e-15));
  VectorXd tp = th;
  tp(0) = -0.6;
  CHECK(reward_rd(th, tp) == doctest::Approx(0.2 / 6.0).epsilon(1e-12));
  CHECK(reward_rd(-3.0 * th, -3.0 * tp) == doctest::Approx(reward_rd(th, tp)).epsilon(1e-12));
  VectorXd bad = th;
  bad(4) = 0.0;
  CHECK_THROWS_AS(reward_rd(bad, th), DomainError);
  CHECK_THROWS_AS(reward_rd(th, VectorXd::Zero(5)), DimensionError);
}

TEST_CASE("lateral squared error") {
  std::vector<VectorXd> mean(11, VectorXd::Zero(1));
  const Dataset zero = gaussian_states(1, 10, mean, MatrixXd::Zero(1, 1), 0);
  const VectorXd ref = VectorXd::Zero(11);
  CHECK(lateral_se(ref, zero) == 0.0);
  CHECK(lateral_se(VectorXd::Constant(11, 0.3), zero) == doctest::Approx(0.09).epsilon(1e-14));
  CHECK_THROWS_AS(lateral_se(VectorXd::Zero(5), zero), DimensionError);

  // i.i.d. N(0, sigma^2) positions: SE estimates sigma^2. Each rollout average
  // of 11 squares has variance 2 sigma^4 / 11.
  const double sigma = 0.4;
  const int n = 2000;
  const Dataset noisy = gaussian_states(n, 10, mean, MatrixXd::Constant(1, 1, sigma), 5);
  const double se = std::sqrt(2.0 * std::pow(sigma, 4) / 11.0 / n);
  CHECK(std::abs(lateral_se(ref, noisy) - sigma * sigma) <= 3.0 * se);
}
