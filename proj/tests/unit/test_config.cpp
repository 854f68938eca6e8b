#include "attnioc/config.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace attnioc;
using nlohmann::json;

TEST_CASE("minimal config gets the defaults") {
  const json j = json::parse(R"({"speed": [13.888888888888889], "curvature": [0.0014],
                                 "theta": [-0.5, -8, -11, -200, 0.07, -3.5]})");
  const ExperimentConfig c = config_from_json(j);
  CHECK(c.dt == 0.04);
  CHECK(c.horizon == 175);
  CHECK(c.resolved_d_max() == 175);
  CHECK(c.scale == Scale::Desk);
  CHECK(c.eval_count == 500);
  CHECK(c.seeds == 5);
  CHECK(c.k_grid == std::vector<int>{0, 2, 4, 6, 8});
  CHECK(c.steering_ratio == 1.0 / 16.0);

  const ExperimentConfig h = config_from_json(json::parse(R"({"horizon": 50})"));
  CHECK(h.resolved_d_max() == 50);
}

TEST_CASE("paper scale preset") {
  const ExperimentConfig c = config_from_json(json::parse(R"({"scale": "paper"})"));
  CHECK(c.train_pool == 3000);
  CHECK(c.eval_count == 1976);
  CHECK(c.k_grid.back() == 10);
  // The command-line override wins over the file.
  const ExperimentConfig d = config_from_json(json::parse(R"({"scale": "paper"})"), Scale::Desk);
  CHECK(d.eval_count == 500);
  // Explicit keys win over the preset.
  const ExperimentConfig e = config_from_json(json::parse(R"({"eval_count": 40})"), Scale::Paper);
  CHECK(e.eval_count == 40);
  CHECK(e.train_pool == 3000);
}

TEST_CASE("schema errors name the field") {
  auto message = [](const std::string& text) -> std::string {
    try {
      config_from_json(json::parse(text));
    } catch (const std::exception& e) {
      return e.what();
    }
    return "";
  };
  CHECK(message(R"({"horizn": 10})").find("horizn") != std::string::npos);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"horizn": 10})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"theta": [-1, -1, -1, -1, 0.1]})")), DimensionError);
  CHECK(message(R"({"theta": [-1, -1, -1, -1, 0.1]})").find("expected 6") != std::string::npos);
  CHECK(message(R"({"dt": "fast"})").find("'dt'") != std::string::npos);
  CHECK(message(R"({"dt": -0.1})").find("'dt'") != std::string::npos);
  CHECK(message(R"({"k_grid": [0, 9]})").find("k_grid") != std::string::npos);
  CHECK(message(R"({"methods": ["MCE", "XYZ"]})").find("methods") != std::string::npos);
  CHECK(message(R"({"process_noise": [[1, 0], [0, 1]]})").find("process_noise") != std::string::npos);
  CHECK(message(R"({"process_noise": [[0,0,0,0],[0,0,0,0],[0,0,-1,0],[0,0,0,0]]})").find("not PSD") != std::string::npos);
  CHECK(message(R"({"theta": [1, -1, -1, -1, 0.1, -1]})").find("theta") != std::string::npos);
  CHECK(message(R"({"scale": "huge"})").find("huge") != std::string::npos);
  CHECK_THROWS_AS(config_from_json(json::parse("[1, 2]")), ConfigError);
}

TEST_CASE("resolved config round-trips and hashes stably") {
  ExperimentConfig c = default_config(Scale::Desk);
  const std::string h = config_hash(c);
  CHECK(h.size() == 16);
  const ExperimentConfig back = config_from_json(config_to_json(c));
  CHECK(config_hash(back) == h);
  CHECK(config_to_json(back) == config_to_json(c));

  // The output directory does not change the hash; anything else does.
  c.output_dir = "elsewhere";
  CHECK(config_hash(c) == h);
  c.eval_count = 501;
  CHECK(config_hash(c) != h);
}

TEST_CASE("FNV-1a reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("loading from a file") {
  const auto path = std::filesystem::temp_directory_path() / "attnioc_cfg_test.json";
  std::ofstream(path) << R"({"horizon": 30, "seeds": 2, "k_grid": [0, 1]})";
  const ExperimentConfig c = load_config(path.string());
  CHECK(c.horizon == 30);
  CHECK(c.seeds == 2);
  std::ofstream(path) << "{ not json";
  CHECK_THROWS_AS(load_config(path.string()), ConfigError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config(path.string()), ConfigError);
}

TEST_CASE("driver problem from the config") {
  ExperimentConfig c = default_config(Scale::Desk);
  const AttentionProblem p = build_driver_problem(c.driver(c.train));
  CHECK(p.horizon == 175);
  CHECK(p.d_max == 175);
  CHECK(p.num_params() == 6);
  c.d_max = 20;
  CHECK(build_driver_problem(c.driver(c.transfer)).d_max == 20);
}
