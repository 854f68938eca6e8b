#include "attnioc/simulator.hpp"

#include <Eigen/Eigenvalues>

#include <memory>
#include <stdexcept>

namespace attnioc {
namespace {

int draw_categorical(const VectorXd& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double r = uni(rng);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (r < acc) return static_cast<int>(i);
  }
  for (Eigen::Index i = probs.size() - 1; i >= 0; --i)
    if (probs(i) > 0.0) return static_cast<int>(i);
  return 0;
}

// Shared forward model: advances the true state, draws the observation and
// runs the filter.
struct Stepper {
  const AttentionProblem& p;
  const CovarianceSchedule& schedule;
  MatrixXd noise_factor;
  MatrixXd obs_factor;

  Stepper(const AttentionProblem& problem, const CovarianceSchedule& sched)
      : p(problem), schedule(sched), noise_factor(psd_factor(problem.process_noise)),
        obs_factor(psd_factor(problem.obs_noise)) {}

  VectorXd draw(const MatrixXd& factor, std::mt19937_64& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd z(factor.cols());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
    return factor * z;
  }

  // Returns the next true state; updates `state` and writes the observation.
  VectorXd advance(int t, const VectorXd& x, HybridState& state, const Controls& u, VectorXd& obs,
                   std::mt19937_64& rng) const {
    const VectorXd x_next = p.dyn_A[t] * x + p.dyn_B[t] * u.u_p + p.dyn_a[t] + draw(noise_factor, rng);
    const int attn = attention_after(state.d, u.u_o);
    const int x_s_next = draw_categorical(p.sub_mdp.next_distribution(attn, state.x_s, u.u_s), rng);
    if (attn == 1) {
      obs = x_next;
    } else {
      obs = p.obs_H * x_next + draw(obs_factor, rng);
    }
    state = filter_step(p, schedule, t, state, u.u_p, u.u_o, x_s_next, obs);
    return x_next;
  }
};

}  // namespace

ControlSampler make_sampler(const SoftPolicy& policy) {
  // The sampler owns a copy, so it may outlive the argument.
  auto owned = std::make_shared<const SoftPolicy>(policy);
  return [owned](int t, const HybridState& s, std::mt19937_64& rng) { return sample_controls(*owned, t, s, rng); };
}

Dataset Dataset::head(size_t n) const {
  Dataset out;
  out.meta = meta;
  out.trajectories.assign(trajectories.begin(), trajectories.begin() + static_cast<long>(std::min(n, size())));
  return out;
}

std::mt19937_64 make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    0x9e3779b9u};
  return std::mt19937_64(seq);
}

MatrixXd psd_factor(const MatrixXd& cov) {
  if (cov.size() == 0) return cov;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(cov));
  const VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

Trajectory simulate_trajectory(const AttentionProblem& p, const CovarianceSchedule& schedule,
                               const ControlSampler& policy, std::uint64_t seed) {
  auto rng = make_rng(seed);
  const Stepper stepper(p, schedule);
  Trajectory traj;
  traj.seed = seed;
  traj.steps.reserve(static_cast<size_t>(p.horizon) + 1);

  HybridState state{p.init_state.x_p, p.init_state.d, p.init_state.x_s};
  VectorXd x = p.init_state.x_p;
  VectorXd obs = x;
  if (state.d > 0) {
    x += stepper.draw(psd_factor(schedule.post_cov(0, state.d)), rng);
    obs = p.obs_H * x;
  }
  for (int t = 0; t <= p.horizon; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.x_p = x;
    rec.mu = state.mu;
    rec.d = state.d;
    rec.x_s = state.x_s;
    rec.x_o = state.attention();
    rec.obs = obs;
    const Controls u = policy(t, state, rng);
    rec.u_p = u.u_p;
    rec.u_o = u.u_o;
    rec.u_s = u.u_s;
    rec.phi = eval_features(p, x, u.u_p, state.x_s, u.u_s, u.u_o);
    traj.steps.push_back(std::move(rec));
    if (t < p.horizon) x = stepper.advance(t, x, state, u, obs, rng);
  }
  return traj;
}

Dataset simulate_batch(const AttentionProblem& p, const CovarianceSchedule& schedule, const ControlSampler& policy,
                       int n, std::uint64_t base_seed) {
  if (n < 1) throw std::invalid_argument("simulate_batch: n must be >= 1");
  Dataset data;
  data.meta.base_seed = base_seed;
  data.trajectories.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    data.trajectories[static_cast<size_t>(i)] = simulate_trajectory(p, schedule, policy, base_seed + static_cast<std::uint64_t>(i));
  return data;
}

VectorXd empirical_feature_expectation(const Dataset& data) {
  if (data.trajectories.empty() || data.trajectories[0].steps.empty())
    throw std::invalid_argument("empirical_feature_expectation: empty dataset");
  VectorXd sum = VectorXd::Zero(data.trajectories[0].steps[0].phi.size());
  for (const auto& tr : data.trajectories)
    for (const auto& st : tr.steps) sum += st.phi;
  return sum / static_cast<double>(data.size());
}

VectorXd rollout_features_from(const AttentionProblem& p, const CovarianceSchedule& schedule,
                               const ControlSampler& policy, int t0, const HybridState& start, const Controls& first,
                               std::mt19937_64& rng) {
  const Stepper stepper(p, schedule);
  HybridState state = start;
  VectorXd x = start.mu + stepper.draw(psd_factor(schedule.post_cov(t0, start.d)), rng);
  VectorXd obs;
  VectorXd sum = VectorXd::Zero(p.num_params());
  for (int t = t0; t <= p.horizon; ++t) {
    const Controls u = t == t0 ? first : policy(t, state, rng);
    sum += eval_features(p, x, u.u_p, state.x_s, u.u_s, u.u_o);
    if (t < p.horizon) x = stepper.advance(t, x, state, u, obs, rng);
  }
  return sum;
}

}  // namespace attnioc
