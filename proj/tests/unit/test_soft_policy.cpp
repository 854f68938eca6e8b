#include "attnioc/simulator.hpp"
#include "attnioc/soft_policy.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <numbers>

using namespace attnioc;
using namespace attnioc::testing;

namespace {

AttentionProblem scalar_problem(int T, double noise) {
  AttentionProblem p = small_problem(1, T, T, 21);
  for (int t = 0; t < T; ++t) {
    p.dyn_A[t].setOnes();
    p.dyn_B[t].setOnes();
    p.dyn_a[t].setZero();
  }
  p.process_noise = MatrixXd::Constant(1, 1, noise);
  return p;
}

}  // namespace

TEST_CASE("marginalize_control hand cases") {
  MatrixXd Om = -MatrixXd::Identity(2, 2);
  auto m = marginalize_control(Om, VectorXd::Zero(2), 1, 1);
  CHECK(m.F.norm() == 0.0);
  CHECK(m.f.norm() == 0.0);
  CHECK(m.SigmaF(0, 0) == doctest::Approx(0.5));
  CHECK(m.Psi(0, 0) == doctest::Approx(-1.0));
  CHECK(m.psi.norm() == 0.0);

  MatrixXd Om3 = MatrixXd::Zero(3, 3);
  Om3.topLeftCorner(2, 2) << -2.0, 0.3, 0.3, -1.0;
  Om3(2, 2) = -0.7;
  VectorXd w(3);
  w << 0.1, -0.2, 0.4;
  m = marginalize_control(Om3, w, 2, 1);
  CHECK(m.F.norm() == 0.0);
  CHECK((m.Psi - Om3.topLeftCorner(2, 2)).norm() == 0.0);

  MatrixXd bad = MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(marginalize_control(bad, VectorXd::Zero(2), 1, 1), DomainError);
}

TEST_CASE("marginalize_control matches trapezoid quadrature") {
  MatrixXd Om(2, 2);
  Om << -0.8, 0.35, 0.35, -1.3;
  VectorXd w(2);
  w << 0.2, -0.6;
  const auto m = marginalize_control(Om, w, 1, 1);
  std::vector<double> f(8001);
  const double h = 0.005, lo = -20.0;
  for (double mu : {-2.0, -0.5, 0.0, 0.7, 1.9}) {
    for (size_t j = 0; j < f.size(); ++j) {
      const double u = lo + static_cast<double>(j) * h;
      f[j] = Om(0, 0) * mu * mu + 2.0 * Om(0, 1) * mu * u + Om(1, 1) * u * u + w(0) * mu + w(1) * u;
    }
    const double want = log_trapezoid(f, h);
    const double got = m.Psi(0, 0) * mu * mu + m.psi(0) * mu + m.c;
    CHECK(std::abs(got - want) <= 1e-6);
  }
}

TEST_CASE("terminal policy of the scalar instance") {
  const AttentionProblem p = scalar_problem(3, 0.1);
  const CovarianceSchedule s = tabulate_covariances(p);
  VectorXd th(5);
  th << -0.8, -0.5, 0.1, -0.2, -0.4;
  const SoftPolicy pol = solve_soft_policy(p, s, th);
  CHECK(pol.SigmaF[3](0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pol.F[3].norm() == 0.0);
  CHECK(pol.f[3].norm() == 0.0);
}

TEST_CASE("free switching and no noise give a uniform discrete policy") {
  AttentionProblem p = small_problem(2, 8, 4, 3);
  p.process_noise.setZero();
  p.obs_noise.setZero();
  const CovarianceSchedule s = tabulate_covariances(p);
  VectorXd th = VectorXd::Zero(p.num_params());
  th.head(p.k_p()).setConstant(-1.0);
  const SoftPolicy pol = solve_soft_policy(p, s, th);
  for (int t = 0; t <= p.horizon; ++t)
    for (int d = 0; d <= p.d_max; ++d)
      for (int xs = 0; xs < 2; ++xs) {
        const double p_switch = pol.discrete_prob(t, d, xs, 1, 0) + pol.discrete_prob(t, d, xs, 1, 1);
        CHECK(p_switch == doctest::Approx(0.5).epsilon(1e-12));
        HybridState st{VectorXd::Zero(2), d, xs};
        Controls u{pol.control_mean(t, st.mu), 1, 0};
        const double lp = policy_log_prob(pol, t, st, u);
        CHECK(lp == doctest::Approx(-0.5 * pol.log_det_2pi_SigmaF[t] + std::log(0.25)).epsilon(1e-12));
      }
}

TEST_CASE("driver policy at the reference reward") {
  const AttentionProblem p = build_driver_problem(DriverConfig{});
  const CovarianceSchedule s = tabulate_covariances(p);
  const SoftPolicy pol = solve_soft_policy(p, s, reference_driver_theta());
  for (int t = 0; t <= p.horizon; ++t) {
    Eigen::LLT<MatrixXd> llt(pol.SigmaF[t]);
    CHECK(llt.info() == Eigen::Success);
    const double glance = pol.discrete_prob(t, 0, 0, 1, 0);
    CHECK(glance > 0.0);
    CHECK(glance < 1.0);
  }
}

TEST_CASE("discrete probabilities are normalized") {
  const AttentionProblem p = small_problem(3, 10, 5, 8);
  const CovarianceSchedule s = tabulate_covariances(p);
  std::mt19937_64 rng(2);
  const SoftPolicy pol = solve_soft_policy(p, s, random_theta(p, rng));
  for (int t = 0; t <= p.horizon; ++t)
    for (int d = 0; d <= p.d_max; ++d)
      for (int xs = 0; xs < 2; ++xs) {
        double sum = 0.0;
        for (int uo = 0; uo < 2; ++uo)
          for (int us = 0; us < 2; ++us) sum += pol.discrete_prob(t, d, xs, uo, us);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-13));
      }
}

TEST_CASE("quadratic part does not depend on the discrete parameters") {
  const AttentionProblem p = small_problem(3, 10, 5, 8);
  AttentionProblem q = p;
  q.d_max = 2;
  std::mt19937_64 rng(4);
  const VectorXd th = random_theta(p, rng);
  VectorXd th2 = th;
  th2.tail(3) << 1.1, -0.4, -2.0;
  const SoftPolicy a = solve_soft_policy(p, tabulate_covariances(p), th);
  const SoftPolicy b = solve_soft_policy(q, tabulate_covariances(q), th2);
  for (int t = 0; t <= p.horizon; ++t) {
    CHECK((a.F[t] - b.F[t]).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((a.f[t] - b.f[t]).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((a.SigmaF[t] - b.SigmaF[t]).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("without noise tau does not depend on d") {
  AttentionProblem p = small_problem(2, 6, 4, 12);
  p.process_noise.setZero();
  p.obs_noise.setZero();
  const CovarianceSchedule s = tabulate_covariances(p);
  std::mt19937_64 rng(5);
  const SoftPolicy pol = solve_soft_policy(p, s, random_theta(p, rng));
  for (int t = 0; t <= p.horizon; ++t)
    for (int d = 1; d <= p.d_max; ++d)
      for (int xs = 0; xs < 2; ++xs)
        for (int us = 0; us < 2; ++us) {
          // The switch maps attention differently from d = 0, so compare d >= 1 among themselves.
          CHECK(pol.tau(t, d, xs, 0, us) == doctest::Approx(pol.tau(t, 1, xs, 0, us)).epsilon(1e-12));
          CHECK(pol.tau(t, d, xs, 1, us) == doctest::Approx(pol.tau(t, 1, xs, 1, us)).epsilon(1e-12));
        }
}

TEST_CASE("sampling") {
  const AttentionProblem p = small_problem(2, 5, 3, 9);
  const CovarianceSchedule s = tabulate_covariances(p);
  std::mt19937_64 rng(6);
  const SoftPolicy pol = solve_soft_policy(p, s, random_theta(p, rng));
  HybridState st{VectorXd::Constant(2, 0.4), 1, 0};

  SUBCASE("fixed seed repeats") {
    std::mt19937_64 r1(77), r2(77);
    const Controls a = sample_controls(pol, 2, st, r1);
    const Controls b = sample_controls(pol, 2, st, r2);
    CHECK(a.u_p == b.u_p);
    CHECK(a.u_o == b.u_o);
    CHECK(a.u_s == b.u_s);
  }
  SUBCASE("mean of 1e5 samples") {
    std::mt19937_64 r(8);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += sample_controls(pol, 2, st, r).u_p(0);
    const double se = std::sqrt(pol.SigmaF[2](0, 0) / n);
    CHECK(std::abs(sum / n - pol.control_mean(2, st.mu)(0)) <= 4.0 * se);
  }
  SUBCASE("tiny control covariance concentrates samples") {
    VectorXd th = random_theta(p, rng);
    th(p.n_x()) = -1e10;  // u^2 weight
    const SoftPolicy sharp = solve_soft_policy(p, s, th);
    std::mt19937_64 r(9);
    for (int i = 0; i < 100; ++i) CHECK(std::abs(sample_controls(sharp, 2, st, r).u_p(0) - sharp.control_mean(2, st.mu)(0)) < 1e-4);
  }
}

TEST_CASE("soft value equals expected reward plus entropy") {
  const AttentionProblem p = small_problem(2, 8, 8, 31);
  const CovarianceSchedule s = tabulate_covariances(p);
  std::mt19937_64 rng(10);
  const VectorXd th = random_theta(p, rng);
  const SoftPolicy pol = solve_soft_policy(p, s, th);
  const Dataset data = simulate_batch(p, s, make_sampler(pol), 20000, 5);
  double sum = 0.0, sq = 0.0;
  for (const auto& tr : data.trajectories) {
    double v = 0.0;
    for (const auto& st : tr.steps) {
      v += th.dot(st.phi);
      v -= policy_log_prob(pol, st.t, HybridState{st.mu, st.d, st.x_s}, Controls{st.u_p, st.u_o, st.u_s});
    }
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(data.size());
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  const double v0 = pol.value(0, HybridState{p.init_state.x_p, 0, 0});
  CHECK(std::abs(mean - v0) <= 3.0 * se);
}

TEST_CASE("soft value matches nested quadrature and path enumeration") {
  const AttentionProblem p = small_problem(1, 2, 2, 5);
  const CovarianceSchedule s = tabulate_covariances(p);
  std::mt19937_64 rng(9);
  const VectorXd th = random_theta(p, rng);
  const SoftPolicy pol = solve_soft_policy(p, s, th);
  const std::vector<double> mus{-1.0, 0.5};
  for (int d : {0, 1}) {
    const auto ref = quadrature_soft_values(p, s, th, mus, d, 1);
    for (size_t i = 0; i < mus.size(); ++i)
      CHECK(std::abs(pol.value(0, HybridState{VectorXd::Constant(1, mus[i]), d, 1}) - ref[i]) <= 1e-6);
  }

  AttentionProblem q = small_problem(1, 4, 2, 13);  // d saturates at 2
  q.sub_mdp = two_state_secondary(true);
  MatrixXd sel = MatrixXd::Zero(4, 1);
  sel(3, 0) = 1.0;
  q.feature_spec.selector = sel;
  VectorXd tq(4);
  tq << -1.3, -0.2, 0.5, -0.6;
  const SoftPolicy pq = solve_soft_policy(q, tabulate_covariances(q), tq);
  const double cont = (q.horizon + 1) * 0.5 * std::log(std::numbers::pi / 1.3);
  for (int d = 0; d <= 2; ++d)
    CHECK(std::abs(pq.value(0, HybridState{VectorXd::Zero(1), d, 0}) - enumerate_discrete_value(q, tq, d, 0) - cont) <= 1e-9);
}

TEST_CASE("wrong theta is rejected") {
  const AttentionProblem p = small_problem(2, 5, 3, 9);
  const CovarianceSchedule s = tabulate_covariances(p);
  CHECK_THROWS_AS(solve_soft_policy(p, s, VectorXd::Constant(4, -1.0)), DimensionError);
  VectorXd th = VectorXd::Constant(p.num_params(), -1.0);
  th(p.n_x()) = 0.5;
  CHECK_THROWS_AS(solve_soft_policy(p, s, th), DomainError);
}
