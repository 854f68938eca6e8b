#include "attnioc/attnioc.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace attnioc;

namespace {

const Scenario& pick(const ExperimentConfig& cfg, const std::string& name) {
  if (name == cfg.train.name) return cfg.train;
  if (name == cfg.transfer.name) return cfg.transfer;
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

struct Instance {
  AttentionProblem problem;
  CovarianceSchedule schedule;
};

Instance make_instance(const ExperimentConfig& cfg, const std::string& scenario) {
  Instance in;
  in.problem = build_driver_problem(cfg.driver(pick(cfg, scenario)));
  in.schedule = tabulate_covariances(in.problem);
  return in;
}

// (trajectories, steps, dim) array of one vector field.
template <typename F>
py::array_t<double> stack(const Dataset& d, F field) {
  const size_t n = d.size();
  const size_t T1 = n ? d.trajectories[0].steps.size() : 0;
  const size_t dim = T1 ? static_cast<size_t>(field(d.trajectories[0].steps[0]).size()) : 0;
  py::array_t<double> out({n, T1, dim});
  auto a = out.mutable_unchecked<3>();
  for (size_t i = 0; i < n; ++i)
    for (size_t t = 0; t < T1; ++t) {
      const VectorXd& v = field(d.trajectories[i].steps[t]);
      for (size_t k = 0; k < dim; ++k) a(i, t, k) = v(static_cast<Eigen::Index>(k));
    }
  return out;
}

template <typename F>
py::array_t<int> stack_int(const Dataset& d, F field) {
  const size_t n = d.size();
  const size_t T1 = n ? d.trajectories[0].steps.size() : 0;
  py::array_t<int> out({n, T1});
  auto a = out.mutable_unchecked<2>();
  for (size_t i = 0; i < n; ++i)
    for (size_t t = 0; t < T1; ++t) a(i, t) = field(d.trajectories[i].steps[t]);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Reward estimation for an attention-switching lane keeping model";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

  py::class_<ExperimentConfig>(m, "Config")
      .def(py::init([](const std::string& scale) { return default_config(scale_from_string(scale)); }),
           py::arg("scale") = "desk")
      .def_static(
          "from_json",
          [](const std::string& text, std::optional<std::string> scale) {
            std::optional<Scale> s;
            if (scale) s = scale_from_string(*scale);
            return config_from_json(nlohmann::json::parse(text), s);
          },
          py::arg("text"), py::arg("scale") = py::none())
      .def_static(
          "load",
          [](const std::string& path, std::optional<std::string> scale) {
            std::optional<Scale> s;
            if (scale) s = scale_from_string(*scale);
            return load_config(path, s);
          },
          py::arg("path"), py::arg("scale") = py::none())
      .def("to_json", [](const ExperimentConfig& c) { return config_to_json(c).dump(2); })
      .def("validate", [](const ExperimentConfig& c) { validate_config(c); })
      .def_property_readonly("hash", [](const ExperimentConfig& c) { return config_hash(c); })
      .def_readwrite("horizon", &ExperimentConfig::horizon)
      .def_readwrite("dt", &ExperimentConfig::dt)
      .def_readwrite("theta", &ExperimentConfig::theta)
      .def_readwrite("train_pool", &ExperimentConfig::train_pool)
      .def_readwrite("eval_count", &ExperimentConfig::eval_count)
      .def_readwrite("k_grid", &ExperimentConfig::k_grid)
      .def_readwrite("seeds", &ExperimentConfig::seeds)
      .def_readwrite("output_dir", &ExperimentConfig::output_dir)
      .def_readwrite("base_seed", &ExperimentConfig::base_seed)
      .def_property_readonly("d_max", &ExperimentConfig::resolved_d_max);

  py::class_<Dataset>(m, "Dataset")
      .def("__len__", &Dataset::size)
      .def_property_readonly("horizon", &Dataset::horizon)
      .def_property_readonly("scenario", [](const Dataset& d) { return d.meta.scenario; })
      .def_property_readonly("x_p", [](const Dataset& d) { return stack(d, [](const StepRecord& s) -> const VectorXd& { return s.x_p; }); })
      .def_property_readonly("mu", [](const Dataset& d) { return stack(d, [](const StepRecord& s) -> const VectorXd& { return s.mu; }); })
      .def_property_readonly("u_p", [](const Dataset& d) { return stack(d, [](const StepRecord& s) -> const VectorXd& { return s.u_p; }); })
      .def_property_readonly("phi", [](const Dataset& d) { return stack(d, [](const StepRecord& s) -> const VectorXd& { return s.phi; }); })
      .def_property_readonly("d", [](const Dataset& d) { return stack_int(d, [](const StepRecord& s) { return s.d; }); })
      .def_property_readonly("u_o", [](const Dataset& d) { return stack_int(d, [](const StepRecord& s) { return s.u_o; }); })
      .def("head", &Dataset::head)
      .def("feature_expectation", &empirical_feature_expectation)
      .def("write", [](const Dataset& d, const std::string& path) { write_dataset(d, path); });

  m.def("read_dataset", &read_dataset, py::arg("path"));
  m.def("reference_theta", &reference_driver_theta);

  m.def(
      "simulate",
      [](const ExperimentConfig& cfg, const std::string& scenario, int n, std::uint64_t seed,
         std::optional<VectorXd> theta) {
        const Instance in = make_instance(cfg, scenario);
        const VectorXd th = theta.value_or(cfg.theta);
        py::gil_scoped_release release;
        Dataset d = simulate_batch(in.problem, in.schedule, make_sampler(solve_soft_policy(in.problem, in.schedule, th)),
                                   n, seed);
        d.meta.scenario = scenario;
        d.meta.policy_id = "soft";
        d.meta.theta = th;
        return d;
      },
      py::arg("config"), py::arg("scenario") = "S1", py::arg("n") = 16, py::arg("seed") = 0,
      py::arg("theta") = py::none());

  m.def(
      "estimate",
      [](const ExperimentConfig& cfg, const Dataset& data, const std::string& method, std::optional<VectorXd> theta_init) {
        const Instance in = make_instance(cfg, data.meta.scenario.empty() ? cfg.train.name : data.meta.scenario);
        EstimationOptions o;
        o.method = method_from_string(method);
        if (o.method == Method::DPE) throw std::invalid_argument("estimate: use fit_dpe for DPE");
        o.barrier_weight = cfg.barrier_weight;
        o.rel_grad_tol = cfg.rel_grad_tol;
        o.max_iters = cfg.max_iters;
        o.theta_init = theta_init.value_or(cfg.theta);
        EstimationResult r;
        {
          py::gil_scoped_release release;
          r = estimate_reward(in.problem, in.schedule, data, o);
        }
        py::dict out;
        out["theta"] = r.theta_star;
        out["converged"] = r.converged;
        out["iterations"] = r.iterations;
        out["objective_trace"] = r.objective_trace;
        out["grad_norm_trace"] = r.grad_norm_trace;
        out["message"] = r.message;
        return out;
      },
      py::arg("config"), py::arg("data"), py::arg("method") = "MCE", py::arg("theta_init") = py::none());

  m.def(
      "fit_dpe",
      [](const Dataset& data, std::uint64_t seed) {
        DpeOptions o;
        o.seed = seed;
        const DpePolicy p = fit_dpe(data, o);
        py::dict out;
        out["Lambda1"] = p.Lambda1;
        out["lambda2"] = p.lambda2;
        out["SigmaB"] = p.SigmaB;
        out["switch"] = std::vector<double>{p.lambda3, p.lambda4, p.lambda5};
        out["saturated"] = p.saturated;
        return out;
      },
      py::arg("data"), py::arg("seed") = 0);

  m.def("kl_discrete", &kl_discrete, py::arg("p"), py::arg("q"));
  m.def("kl_gaussian", &kl_gaussian, py::arg("m0"), py::arg("S0"), py::arg("m1"), py::arg("S1"));
  m.def("reward_rd", &reward_rd, py::arg("theta"), py::arg("theta_prime"));
  m.def("d_histogram", &d_histogram, py::arg("data"), py::arg("d_max"), py::arg("smoothing_eps") = 1e-6);
  m.def(
      "kl_gaussian_temporal",
      [](const Dataset& reference, const Dataset& candidate) {
        return kl_gaussian_temporal(fit_gaussian_summary(reference), fit_gaussian_summary(candidate));
      },
      py::arg("reference"), py::arg("candidate"));

  m.def(
      "run_e1",
      [](const ExperimentConfig& cfg, int threads, bool use_cache, std::optional<std::string> out_dir) {
        RunOptions o;
        o.threads = threads;
        o.use_cache = use_cache;
        E1Report r;
        {
          py::gil_scoped_release release;
          r = run_e1(cfg, o);
        }
        const auto files = emit_outputs(r, out_dir.value_or(cfg.output_dir));
        py::list rows;
        for (const auto& s : summarize(r)) {
          py::dict d;
          d["metric"] = s.metric;
          d["method"] = s.method;
          d["scenario"] = s.scenario;
          d["k"] = s.k;
          d["n"] = s.n;
          d["median"] = s.median;
          d["q25"] = s.q25;
          d["q75"] = s.q75;
          rows.append(d);
        }
        py::dict out;
        out["summary"] = rows;
        out["files"] = files;
        out["cached_cells"] = r.cached_cells;
        return out;
      },
      py::arg("config"), py::arg("threads") = 1, py::arg("use_cache") = true, py::arg("out_dir") = py::none());
}
