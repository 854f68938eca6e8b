#include "attnioc/dataset_io.hpp"
#include "test_support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace attnioc;
using namespace attnioc::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("attnioc_io_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

bool bitwise_equal(const VectorXd& a, const VectorXd& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::memcmp(&a(i), &b(i), sizeof(double)) != 0) return false;
  return true;
}

Dataset sample_dataset() {
  const AttentionProblem p = small_problem(3, 12, 5, 21);
  const CovarianceSchedule s = tabulate_covariances(p);
  std::mt19937_64 rng(21);
  const VectorXd th = random_theta(p, rng);
  Dataset d = simulate_batch(p, s, make_sampler(solve_soft_policy(p, s, th)), 7, 12345);
  d.meta.scenario = "S1";
  d.meta.policy_id = "soft";
  d.meta.theta = th;
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("17 significant digits round-trip doubles") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(-2.0) == "-2");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> uni(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = uni(rng) * std::pow(10.0, (i % 40) - 20);
    CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  }
  const double tiny = std::numeric_limits<double>::denorm_min();
  CHECK(std::strtod(format_double(tiny).c_str(), nullptr) == tiny);
}

TEST_CASE("dataset round trip is bit exact") {
  const fs::path dir = scratch_dir("roundtrip");
  const Dataset d = sample_dataset();
  const std::string path = (dir / "data.csv").string();
  write_dataset(d, path);
  CHECK(fs::exists(path + ".meta.json"));
  const Dataset r = read_dataset(path);
  REQUIRE(r.size() == d.size());
  CHECK(r.meta.scenario == "S1");
  CHECK(r.meta.policy_id == "soft");
  CHECK(r.meta.base_seed == 12345);
  REQUIRE(r.meta.theta.has_value());
  CHECK(bitwise_equal(*r.meta.theta, *d.meta.theta));
  int mismatches = 0;
  for (size_t k = 0; k < d.size(); ++k) {
    CHECK(r.trajectories[k].seed == d.trajectories[k].seed);
    REQUIRE(r.trajectories[k].steps.size() == d.trajectories[k].steps.size());
    for (size_t t = 0; t < d.trajectories[k].steps.size(); ++t) {
      const auto& a = d.trajectories[k].steps[t];
      const auto& b = r.trajectories[k].steps[t];
      const bool ok = a.t == b.t && a.d == b.d && a.x_s == b.x_s && a.x_o == b.x_o && a.u_o == b.u_o && a.u_s == b.u_s &&
                      bitwise_equal(a.x_p, b.x_p) && bitwise_equal(a.mu, b.mu) && bitwise_equal(a.u_p, b.u_p) &&
                      bitwise_equal(a.obs, b.obs) && bitwise_equal(a.phi, b.phi);
      mismatches += ok ? 0 : 1;
    }
  }
  CHECK(mismatches == 0);

  // Writing the reloaded dataset reproduces the same bytes.
  const std::string again = (dir / "again.csv").string();
  write_dataset(r, again);
  CHECK(slurp(path) == slurp(again));
  CHECK(slurp(path + ".meta.json") == slurp(again + ".meta.json"));
  fs::remove_all(dir);
}

TEST_CASE("reward column and sidecar") {
  const fs::path dir = scratch_dir("sidecar");
  Dataset d = sample_dataset();
  const std::string path = (dir / "data.csv").string();
  write_dataset(d, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("traj,seed,t,x0,x1,x2,mu0", 0) == 0);
  CHECK(header.size() >= 7);
  CHECK(header.substr(header.size() - 7) == ",reward");
  const auto meta = nlohmann::json::parse(slurp(path + ".meta.json"));
  CHECK(meta["horizon"] == 12);
  CHECK(meta["num_trajectories"] == 7);

  d.meta.theta.reset();
  write_dataset(d, path);
  std::ifstream in2(path);
  std::getline(in2, header);
  CHECK(header.find("reward") == std::string::npos);
  CHECK_FALSE(read_dataset(path).meta.theta.has_value());
  fs::remove_all(dir);
}

TEST_CASE("malformed dataset files are rejected") {
  const fs::path dir = scratch_dir("malformed");
  const Dataset d = sample_dataset();
  const std::string path = (dir / "data.csv").string();
  write_dataset(d, path);
  const std::string good = slurp(path);

  auto with_body = [&](const std::string& body) {
    std::ofstream(path) << body;
    return path;
  };
  SUBCASE("bad number") {
    std::string s = good;
    const size_t pos = s.find('\n') + 1;
    s.replace(s.find(',', s.find(',', s.find(',', pos) + 1) + 1) + 1, 1, "x");
    CHECK_THROWS_AS(read_dataset(with_body(s)), std::runtime_error);
  }
  SUBCASE("missing field") {
    std::string s = good;
    const size_t eol = s.find('\n', s.find('\n') + 1);
    const size_t last = s.rfind(',', eol);
    s.erase(last, eol - last);
    CHECK_THROWS_AS(read_dataset(with_body(s)), std::runtime_error);
  }
  SUBCASE("truncated file") {
    CHECK_THROWS_AS(read_dataset(with_body(good.substr(0, good.size() / 2))), std::runtime_error);
  }
  SUBCASE("wrong header") {
    CHECK_THROWS_AS(read_dataset(with_body("a,b,c\n")), std::runtime_error);
  }
  SUBCASE("bad seed") {
    std::string s = good;
    const size_t pos = s.find('\n') + 1;
    s.replace(s.find(',', pos) + 1, 5, "seed!");
    CHECK_THROWS_AS(read_dataset(with_body(s)), std::runtime_error);
  }
  SUBCASE("missing sidecar") {
    fs::remove(path + ".meta.json");
    CHECK_THROWS_AS(read_dataset(path), std::runtime_error);
  }
  fs::remove_all(dir);
}
