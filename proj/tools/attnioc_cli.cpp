// Command-line front end: simulate, estimate, evaluate, run-e1, validate-config.
#include "attnioc/dataset_io.hpp"
#include "attnioc/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace attnioc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string scale;
};

void add_common(CLI::App* sub, Common& c, bool need_config) {
  auto* opt = sub->add_option("--config", c.config, "JSON configuration file");
  if (need_config) opt->required();
  opt->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--seed", c.seed, "base seed (overrides the config)");
  sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--scale", c.scale, "preset for counts and grids")->check(CLI::IsMember({"desk", "paper"}));
}

ExperimentConfig resolve(const Common& c) {
  std::optional<Scale> scale;
  if (!c.scale.empty()) scale = scale_from_string(c.scale);
  ExperimentConfig cfg = c.config.empty() ? default_config(scale.value_or(Scale::Desk)) : load_config(c.config, scale);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.seed) cfg.base_seed = *c.seed;
  validate_config(cfg);
  return cfg;
}

const Scenario& pick_scenario(const ExperimentConfig& cfg, const std::string& name) {
  if (name == cfg.train.name) return cfg.train;
  if (name == cfg.transfer.name) return cfg.transfer;
  throw std::invalid_argument("unknown scenario '" + name + "' (expected " + cfg.train.name + " or " +
                              cfg.transfer.name + ")");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text << '\n';
}

json vec_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(format_double(v(i)));
  return a;
}

VectorXd vec_from_json(const json& a) {
  VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (size_t i = 0; i < a.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = a[i].is_string() ? std::stod(a[i].get<std::string>()) : a[i].get<double>();
  return v;
}

json metrics_json(const ScenarioMetrics& m) { return {{"kl_g", format_double(m.kl_g)}, {"kl_d", format_double(m.kl_d)}}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-aware inverse optimal control for a lane keeping dual task"};
  app.require_subcommand(1);

  Common sim_c;
  std::string sim_scenario = "S1";
  int sim_count = 0;
  auto* sim = app.add_subcommand("simulate", "simulate trajectories of the true soft-optimal policy");
  add_common(sim, sim_c, false);
  sim->add_option("--scenario", sim_scenario, "scenario name (S1 or S2)");
  sim->add_option("-n,--count", sim_count, "number of trajectories (default: eval_count)");

  Common est_c;
  std::string est_data;
  std::string est_method = "MCE";
  bool est_default_init = false;
  auto* est = app.add_subcommand("estimate", "estimate reward parameters (MCE, MCL) or a direct policy (DPE)");
  add_common(est, est_c, false);
  est->add_option("--data", est_data, "dataset CSV written by simulate")->required()->check(CLI::ExistingFile);
  est->add_option("--method", est_method, "MCE, MCL or DPE")->check(CLI::IsMember({"MCE", "MCL", "DPE", "mce", "mcl", "dpe"}));
  est->add_flag("--default-init", est_default_init, "start from a generic point instead of the configured theta");

  Common ev_c;
  std::string ev_estimate;
  std::string ev_data;
  std::string ev_reference;
  auto* ev = app.add_subcommand("evaluate", "evaluate an estimate, or compare two datasets");
  add_common(ev, ev_c, false);
  ev->add_option("--estimate", ev_estimate, "estimate JSON written by estimate")->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "candidate dataset CSV")->check(CLI::ExistingFile);
  ev->add_option("--reference", ev_reference, "reference dataset CSV")->check(CLI::ExistingFile);

  Common e1_c;
  bool e1_no_cache = false;
  auto* e1 = app.add_subcommand("run-e1", "run the simulated-driver experiment over the k-grid and seeds");
  add_common(e1, e1_c, false);
  e1->add_flag("--no-cache", e1_no_cache, "recompute every cell");

  Common vc_c;
  auto* vc = app.add_subcommand("validate-config", "check a configuration file and print it fully resolved");
  add_common(vc, vc_c, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*vc) {
      const ExperimentConfig cfg = resolve(vc_c);
      std::cout << config_to_json(cfg).dump(2) << "\nconfig hash " << config_hash(cfg) << '\n';
      return 0;
    }

    if (*sim) {
      const ExperimentConfig cfg = resolve(sim_c);
      const Scenario& sc = pick_scenario(cfg, sim_scenario);
      const AttentionProblem p = build_driver_problem(cfg.driver(sc));
      const CovarianceSchedule sch = tabulate_covariances(p);
      const SoftPolicy pol = solve_soft_policy(p, sch, cfg.theta);
      const int n = sim_count > 0 ? sim_count : cfg.eval_count;
      Dataset data = simulate_batch(p, sch, make_sampler(pol), n, cfg.base_seed);
      data.meta.scenario = sc.name;
      data.meta.policy_id = "true";
      data.meta.theta = cfg.theta;
      fs::create_directories(cfg.output_dir);
      const std::string path =
          cfg.output_dir + "/dataset_" + sc.name + "_n" + std::to_string(n) + "_" + config_hash(cfg) + ".csv";
      write_dataset(data, path);
      std::cout << path << '\n';
      return 0;
    }

    if (*est) {
      const ExperimentConfig cfg = resolve(est_c);
      const Dataset data = read_dataset(est_data);
      const Scenario& sc = data.meta.scenario.empty() ? cfg.train : pick_scenario(cfg, data.meta.scenario);
      const AttentionProblem p = build_driver_problem(cfg.driver(sc));
      const Method method = method_from_string(est_method);
      json j;
      j["method"] = to_string(method);
      j["scenario"] = sc.name;
      j["data"] = est_data;
      j["num_trajectories"] = data.size();
      j["config_hash"] = config_hash(cfg);
      j["seed"] = cfg.base_seed;
      if (method == Method::DPE) {
        DpeOptions o;
        o.seed = cfg.base_seed;
        const DpePolicy d = fit_dpe(data, o);
        json rows = json::array();
        for (Eigen::Index r = 0; r < d.Lambda1.rows(); ++r) rows.push_back(vec_json(d.Lambda1.row(r).transpose()));
        json sig = json::array();
        for (Eigen::Index r = 0; r < d.SigmaB.rows(); ++r) sig.push_back(vec_json(d.SigmaB.row(r).transpose()));
        j["dpe"] = {{"Lambda1", rows},
                    {"lambda2", vec_json(d.lambda2)},
                    {"SigmaB", sig},
                    {"lambda3", format_double(d.lambda3)},
                    {"lambda4", format_double(d.lambda4)},
                    {"lambda5", format_double(d.lambda5)},
                    {"saturated", d.saturated},
                    {"options", {{"folds", o.folds}, {"grid_size", o.grid_size}, {"lasso_decades", o.lasso_decades},
                                 {"logistic_decades", o.logistic_decades}}}};
      } else {
        if (p.horizon != data.horizon()) throw DimensionError("dataset horizon does not match the config");
        const CovarianceSchedule sch = tabulate_covariances(p);
        EstimationOptions o;
        o.method = method;
        o.barrier_weight = cfg.barrier_weight;
        o.rel_grad_tol = cfg.rel_grad_tol;
        o.max_iters = cfg.max_iters;
        if (!est_default_init) o.theta_init = cfg.theta;
        const EstimationResult r = estimate_reward(p, sch, data, o);
        j["theta_hat"] = vec_json(r.theta_star);
        j["iterations"] = r.iterations;
        j["converged"] = r.converged;
        j["message"] = r.message;
        json tr = json::array();
        json gn = json::array();
        for (double v : r.objective_trace) tr.push_back(format_double(v));
        for (double v : r.grad_norm_trace) gn.push_back(format_double(v));
        j["objective_trace"] = tr;
        j["grad_norm_trace"] = gn;
        j["options"] = {{"barrier_weight", format_double(o.barrier_weight)},
                        {"rel_grad_tol", format_double(o.rel_grad_tol)},
                        {"max_iters", o.max_iters},
                        {"init", est_default_init ? "default" : "config theta"}};
        j["rd_vs_config_theta"] = format_double(reward_rd(cfg.theta, r.theta_star));
      }
      fs::create_directories(cfg.output_dir);
      const std::string path = cfg.output_dir + "/estimate_" + to_string(method) + "_" + config_hash(cfg) + ".json";
      write_text(path, j.dump(2));
      std::cout << path << '\n';
      return 0;
    }

    if (*ev) {
      const ExperimentConfig cfg = resolve(ev_c);
      const int d_max = cfg.resolved_d_max();
      json j;
      j["config_hash"] = config_hash(cfg);
      if (!ev_data.empty() && !ev_reference.empty()) {
        const Dataset cand = read_dataset(ev_data);
        const Dataset ref = read_dataset(ev_reference);
        ScenarioMetrics m;
        m.kl_g = kl_gaussian_temporal(fit_gaussian_summary(ref), fit_gaussian_summary(cand));
        m.kl_d = kl_discrete(d_histogram(ref, d_max, cfg.smoothing_eps), d_histogram(cand, d_max, cfg.smoothing_eps));
        j["comparison"] = metrics_json(m);
        VectorXd ref_mean_y(ref.horizon() + 1);
        const GaussianSummary g = fit_gaussian_summary(ref);
        for (int t = 0; t <= ref.horizon(); ++t) ref_mean_y(t) = g.mean[static_cast<size_t>(t)](0);
        j["lateral_se_vs_reference_mean"] = format_double(lateral_se(ref_mean_y, cand));
      } else if (!ev_estimate.empty()) {
        std::ifstream in(ev_estimate);
        json e;
        in >> e;
        const Method method = method_from_string(e.at("method").get<std::string>());
        std::optional<DpePolicy> dpe;
        std::optional<VectorXd> theta;
        if (method == Method::DPE) {
          const json& d = e.at("dpe");
          DpePolicy pol;
          const json& rows = d.at("Lambda1");
          pol.Lambda1.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
          for (size_t r = 0; r < rows.size(); ++r) pol.Lambda1.row(static_cast<Eigen::Index>(r)) = vec_from_json(rows[r]).transpose();
          pol.lambda2 = vec_from_json(d.at("lambda2"));
          const json& sig = d.at("SigmaB");
          pol.SigmaB.resize(static_cast<Eigen::Index>(sig.size()), static_cast<Eigen::Index>(sig.size()));
          for (size_t r = 0; r < sig.size(); ++r) pol.SigmaB.row(static_cast<Eigen::Index>(r)) = vec_from_json(sig[r]).transpose();
          pol.lambda3 = std::stod(d.at("lambda3").get<std::string>());
          pol.lambda4 = std::stod(d.at("lambda4").get<std::string>());
          pol.lambda5 = std::stod(d.at("lambda5").get<std::string>());
          dpe = pol;
        } else {
          theta = vec_from_json(e.at("theta_hat"));
          j["rd"] = format_double(reward_rd(cfg.theta, *theta));
        }
        j["method"] = to_string(method);
        int sc_index = 0;
        for (const Scenario* sc : {&cfg.train, &cfg.transfer}) {
          const AttentionProblem p = build_driver_problem(cfg.driver(*sc));
          const CovarianceSchedule sch = tabulate_covariances(p);
          const SoftPolicy truth = solve_soft_policy(p, sch, cfg.theta);
          const Dataset ref = simulate_batch(p, sch, make_sampler(truth), cfg.eval_count,
                                             derive_seed(cfg.base_seed, 2, static_cast<std::uint64_t>(sc_index)));
          std::optional<SoftPolicy> est_pol;
          if (theta) est_pol = solve_soft_policy(p, sch, *theta);
          const ControlSampler sampler = dpe ? make_dpe_sampler(*dpe) : make_sampler(*est_pol);
          const Dataset cand = simulate_batch(p, sch, sampler, cfg.eval_count,
                                              derive_seed(cfg.base_seed, 6, static_cast<std::uint64_t>(sc_index)));
          ScenarioMetrics m;
          m.kl_g = kl_gaussian_temporal(fit_gaussian_summary(ref), fit_gaussian_summary(cand));
          m.kl_d = kl_discrete(d_histogram(ref, d_max, cfg.smoothing_eps), d_histogram(cand, d_max, cfg.smoothing_eps));
          j["scenarios"][sc->name] = metrics_json(m);
          ++sc_index;
        }
      } else {
        throw std::invalid_argument("evaluate needs --estimate, or both --data and --reference");
      }
      fs::create_directories(cfg.output_dir);
      const std::string path = cfg.output_dir + "/evaluate_" + config_hash(cfg) + ".json";
      write_text(path, j.dump(2));
      std::cout << path << '\n';
      return 0;
    }

    if (*e1) {
      const ExperimentConfig cfg = resolve(e1_c);
      RunOptions ro;
      ro.threads = e1_c.threads;
      ro.use_cache = !e1_no_cache;
      ro.log = [](const std::string& msg) { std::cerr << msg << '\n'; };
      const E1Report report = run_e1(cfg, ro);
      for (const auto& path : emit_outputs(report, cfg.output_dir)) std::cout << path << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
