#include "attnioc/gradients.hpp"
#include "attnioc/simulator.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace attnioc;
using namespace attnioc::testing;

namespace {

struct Fixture {
  AttentionProblem p;
  CovarianceSchedule s;
  VectorXd theta;
  SoftPolicy pol;
  GradientTables tab;

  Fixture(int n_x, int T, int d_max, std::uint64_t seed) : p(small_problem(n_x, T, d_max, seed)) {
    s = tabulate_covariances(p);
    std::mt19937_64 rng(seed + 1);
    theta = random_theta(p, rng);
    pol = solve_soft_policy(p, s, theta);
    tab = solve_gradients(p, s, pol);
  }
};

HybridState random_state(const AttentionProblem& p, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_int_distribution<int> dd(0, p.d_max), bit(0, 1);
  HybridState st{VectorXd(p.n_x()), dd(rng), bit(rng)};
  for (int i = 0; i < p.n_x(); ++i) st.mu(i) = n01(rng);
  return st;
}

}  // namespace

TEST_CASE("terminal gradient is the step feature plus the belief trace") {
  Fixture f(2, 6, 4, 1);
  std::mt19937_64 rng(2);
  const int T = f.p.horizon;
  for (int rep = 0; rep < 5; ++rep) {
    const HybridState st = random_state(f.p, rng);
    Controls u{VectorXd::Constant(1, 0.3 * rep - 0.5), rep % 2, (rep / 2) % 2};
    VectorXd want = eval_features(f.p, st.mu, u.u_p, st.x_s, u.u_s, u.u_o);
    const MatrixXd& S = f.s.post_cov(T, st.d);
    for (int i = 0; i < f.p.n_x(); ++i) want(i) += S(i, i);  // diagonal selector
    CHECK((grad_q(f.tab, f.pol, T, st, u) - want).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("grad_q matches central differences of Q over theta") {
  Fixture f(3, 10, 5, 3);
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    const VectorXd th = random_theta(f.p, rng);
    const SoftPolicy pol = solve_soft_policy(f.p, f.s, th);
    const GradientTables tab = solve_gradients(f.p, f.s, pol);
    const int t = rep % (f.p.horizon + 1);
    const HybridState st = random_state(f.p, rng);
    const Controls u{VectorXd::Constant(1, 0.2), rep % 2, 1 - rep % 2};
    const VectorXd g = grad_q(tab, pol, t, st, u);
    VectorXd fd(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double h = 1e-5;
      VectorXd tp = th, tm = th;
      tp(i) += h;
      tm(i) -= h;
      fd(i) = (solve_soft_policy(f.p, f.s, tp).q_value(t, st, u) - solve_soft_policy(f.p, f.s, tm).q_value(t, st, u)) /
              (2.0 * h);
    }
    CHECK((fd - g).cwiseAbs().maxCoeff() <= 1e-5 * std::max(1.0, g.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("expected_grad_q is the policy average of grad_q") {
  Fixture f(2, 8, 4, 5);
  std::mt19937_64 rng(6);
  const int t = 3;
  const HybridState st = random_state(f.p, rng);
  const VectorXd e = expected_grad_q(f.tab, f.pol, t, st);

  SUBCASE("Monte Carlo over 1e5 samples") {
    const int n = 100000;
    VectorXd sum = VectorXd::Zero(e.size()), sq = VectorXd::Zero(e.size());
    std::mt19937_64 r(7);
    for (int i = 0; i < n; ++i) {
      const VectorXd g = grad_q(f.tab, f.pol, t, st, sample_controls(f.pol, t, st, r));
      sum += g;
      sq += g.cwiseProduct(g);
    }
    const VectorXd mean = sum / n;
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      const double se = std::sqrt(std::max(sq(i) / n - mean(i) * mean(i), 0.0) / n);
      CHECK(std::abs(mean(i) - e(i)) <= 4.0 * se + 1e-12);
    }
  }
  SUBCASE("discrete coordinates are a softmax-weighted combination") {
    VectorXd mix = VectorXd::Zero(e.size());
    for (int uo = 0; uo < 2; ++uo)
      for (int us = 0; us < 2; ++us)
        mix += f.pol.discrete_prob(t, st.d, st.x_s, uo, us) *
               grad_q(f.tab, f.pol, t, st, Controls{f.pol.control_mean(t, st.mu), uo, us});
    const int kp = f.p.k_p();
    CHECK((mix.tail(e.size() - kp) - e.tail(e.size() - kp)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("with a sharp control policy the expectation is grad_q at the mean") {
  AttentionProblem p = small_problem(2, 6, 3, 9);
  const CovarianceSchedule s = tabulate_covariances(p);
  std::mt19937_64 rng(10);
  VectorXd th = random_theta(p, rng);
  th(p.n_x()) = -1e9;
  const SoftPolicy pol = solve_soft_policy(p, s, th);
  const GradientTables tab = solve_gradients(p, s, pol);
  const HybridState st = random_state(p, rng);
  const VectorXd e = expected_grad_q(tab, pol, 2, st);
  VectorXd mix = VectorXd::Zero(e.size());
  for (int uo = 0; uo < 2; ++uo)
    for (int us = 0; us < 2; ++us)
      mix += pol.discrete_prob(2, st.d, st.x_s, uo, us) * grad_q(tab, pol, 2, st, Controls{pol.control_mean(2, st.mu), uo, us});
  CHECK((e - mix).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, e.cwiseAbs().maxCoeff()));
}

TEST_CASE("projected tables equal the full vec-space recursion") {
  Fixture f(3, 10, 5, 11);
  const GradientTables lean = solve_gradients(f.p, f.s, f.pol, false);
  for (int t = 0; t <= f.p.horizon; ++t) {
    CHECK((lean.p3[t] - f.tab.p3[t]).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, f.tab.p3[t].cwiseAbs().maxCoeff()));
    CHECK((lean.p3_bar[t] - f.tab.p3_bar[t]).cwiseAbs().maxCoeff() <=
          1e-10 * std::max(1.0, f.tab.p3_bar[t].cwiseAbs().maxCoeff()));
    CHECK((lean.P1[t] - f.tab.P1[t]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("quadratic term scales with the square of the state") {
  Fixture f(2, 5, 3, 13);
  const int nz = f.tab.n_z;
  VectorXd z(nz);
  z << 0.3, -0.7, 0.4;
  const MatrixXd zz = z * z.transpose();
  const MatrixXd zz2 = 4.0 * zz;
  const Eigen::Map<const VectorXd> v1(zz.data(), zz.size()), v2(zz2.data(), zz2.size());
  for (int t = 0; t <= f.p.horizon; ++t) {
    const VectorXd a = f.tab.P1[t] * v1, b = f.tab.P1[t] * v2;
    CHECK((b - 4.0 * a).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, b.cwiseAbs().maxCoeff()));
  }
}
