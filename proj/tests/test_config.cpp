#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <nlohmann/json.hpp>

#include "twinopt/config.hpp"

using namespace twinopt;

namespace {

struct EnvGuard {
  explicit EnvGuard(const char* name) : name_(name) {
    if (const char* v = std::getenv(name)) saved_ = v;
    ::unsetenv(name);
  }
  ~EnvGuard() {
    if (saved_.empty()) {
      ::unsetenv(name_);
    } else {
      ::setenv(name_, saved_.c_str(), 1);
    }
  }
  const char* name_;
  std::string saved_;
};

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("the default configuration is internally consistent") {
  const ToolConfig cfg = default_config();
  CHECK(cfg.seed == 42);
  CHECK(cfg.simulator.n_rows == 100011);
  CHECK(cfg.scheduler.budget == 64);
  CHECK(cfg.scheduler.asha.min_resource == 8);
  CHECK(cfg.scheduler.asha.max_resource == 512);
  CHECK(cfg.scheduler.asha.reduction_factor == 4);
  CHECK(cfg.runs_dir == "runs");
  CHECK_NOTHROW(cfg.gbdt.validate());
  CHECK_NOTHROW(cfg.space.validate());
  CHECK_NOTHROW(cfg.scheduler.asha.validate());
  CHECK(cfg.space.params.size() == 6);
  CHECK(cfg.space.at("learning_rate").domain.kind == ParamDomain::Kind::LogUniform);
  CHECK(cfg.space.at("num_leaves").domain.kind == ParamDomain::Kind::Integer);
  CHECK(cfg.space.at("focal_gamma").domain.kind == ParamDomain::Kind::Uniform);
  CHECK(cfg.stepwise.groups.size() == 3);
  // scenario shares must sum to one
  double total = 0.0;
  for (const auto& mix : cfg.simulator.scenarios) total += mix.weight;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a config document round-trips through its normalized snapshot") {
  const EnvGuard guard("TWIN_SEED");
  const ToolConfig cfg = default_config();
  const std::string snapshot = cfg.to_json();
  const ToolConfig back = parse_config(snapshot);
  CHECK(back.to_json() == snapshot);
  CHECK(back.seed == cfg.seed);
  CHECK(back.simulator.n_rows == cfg.simulator.n_rows);
  CHECK(back.space.params.size() == cfg.space.params.size());
  CHECK(back.stepwise.groups.size() == cfg.stepwise.groups.size());
}

TEST_CASE("partial documents override only the named fields") {
  const std::string text = R"({
    "seed": 7,
    "gbdt": {"num_leaves": 15, "learning_rate": 0.05},
    "scheduler": {"budget": 12},
    "simulator": {"n_rows": 500}
  })";
  const ToolConfig cfg = parse_config(text);
  CHECK(cfg.seed == 7);
  CHECK(cfg.gbdt.num_leaves == 15);
  CHECK(cfg.gbdt.learning_rate == 0.05);
  CHECK(cfg.gbdt.min_data_in_leaf == default_config().gbdt.min_data_in_leaf);
  CHECK(cfg.scheduler.budget == 12);
  CHECK(cfg.scheduler.asha.max_resource == 512);
  CHECK(cfg.simulator.n_rows == 500);
}

TEST_CASE("unknown keys are rejected with their full path") {
  const std::string msg =
      message_of([] { parse_config(R"({"gbdt": {"num_trees": 5}})"); });
  CHECK(msg.find("unknown config key") != std::string::npos);
  CHECK(msg.find("gbdt.num_trees") != std::string::npos);

  const std::string top = message_of([] { parse_config(R"({"seeds": 1})"); });
  CHECK(top.find("seeds") != std::string::npos);
}

TEST_CASE("type mismatches name the offending field") {
  const std::string msg =
      message_of([] { parse_config(R"({"scheduler": {"budget": "lots"}})"); });
  CHECK(msg.find("scheduler.budget") != std::string::npos);
  CHECK(msg.find("wrong type") != std::string::npos);

  CHECK_THROWS_AS(parse_config("not json at all"), Error);
  CHECK_THROWS_AS(parse_config("[1, 2, 3]"), Error);
}

TEST_CASE("invalid values surface as config errors") {
  CHECK_THROWS_AS(parse_config(R"({"gbdt": {"learning_rate": 0.0}})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"scheduler": {"budget": 0}})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"scheduler": {"eval_gamma": -1.0}})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"pipeline": {"ranking": "by_vibes"}})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"simulator": {"mixture_weights": [1.0, 0.0]}})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"explain": {"background_rows": 0}})"), Error);
}

TEST_CASE("search space and stepwise sections parse from json") {
  const std::string text = R"({
    "search_space": [
      {"name": "learning_rate", "kind": "log_uniform", "lo": 0.01, "hi": 0.5},
      {"name": "num_leaves", "kind": "integer", "lo": 4, "hi": 32},
      {"name": "objective", "kind": "categorical", "choices": ["focal", "cross_entropy"]}
    ],
    "stepwise": [
      {"name": "capacity", "candidates": [
        {"num_leaves": 15}, {"num_leaves": 31}
      ]},
      {"name": "rate", "candidates": [
        {"learning_rate": 0.1}, {"learning_rate": 0.2}
      ]}
    ]
  })";
  const ToolConfig cfg = parse_config(text);
  CHECK(cfg.space.params.size() == 3);
  CHECK(cfg.space.at("learning_rate").domain.lo == 0.01);
  CHECK(cfg.space.at("num_leaves").domain.kind == ParamDomain::Kind::Integer);
  CHECK(cfg.space.at("objective").domain.choices ==
        std::vector<std::string>{"focal", "cross_entropy"});
  REQUIRE(cfg.stepwise.groups.size() == 2);
  CHECK(cfg.stepwise.groups[0].name == "capacity");
  REQUIRE(cfg.stepwise.groups[0].candidates.size() == 2);
  CHECK(cfg.stepwise.groups[0].candidates[1].get_int("num_leaves") == 31);
  CHECK(cfg.stepwise.groups[1].candidates[0].get_double("learning_rate") == 0.1);

  CHECK_THROWS_AS(
      parse_config(R"({"search_space": [{"name": "x", "kind": "mystery"}]})"), Error);
}

TEST_CASE("the environment seed overrides the document seed") {
  const EnvGuard guard("TWIN_SEED");

  ::setenv("TWIN_SEED", "12345", 1);
  const auto path = std::filesystem::temp_directory_path() / "twinopt_cfg_seed.json";
  {
    std::ofstream out(path);
    out << R"({"seed": 7})";
  }
  CHECK(load_config_file(path.string()).seed == 12345);
  CHECK(load_default_config().seed == 12345);

  ::setenv("TWIN_SEED", "-3", 1);
  CHECK_THROWS_AS(load_default_config(), Error);
  ::setenv("TWIN_SEED", "not_a_number", 1);
  const std::string msg = message_of([] { load_default_config(); });
  CHECK(msg.find("TWIN_SEED") != std::string::npos);

  ::unsetenv("TWIN_SEED");
  CHECK(load_config_file(path.string()).seed == 7);
  CHECK(load_default_config().seed == 42);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(load_config_file("/nonexistent/config.json"), Error);
}

TEST_CASE("simulator overrides flow through to generation settings") {
  const std::string text = R"({
    "simulator": {
      "n_rows": 300,
      "dt": 0.002,
      "noise_std": [0.02, 0.02, 0.02, 0.01, 0.01, 0.01],
      "mixture_weights": [0.6, 0.1, 0.1, 0.1, 0.1],
      "sag_depth": 0.4,
      "rows_per_episode": 10
    }
  })";
  const ToolConfig cfg = parse_config(text);
  CHECK(cfg.simulator.n_rows == 300);
  CHECK(cfg.simulator.model.dt == 0.002);
  CHECK(cfg.simulator.model.noise_std[0] == 0.02);
  CHECK(cfg.simulator.model.noise_std[3] == 0.01);
  CHECK(cfg.simulator.generator.rows_per_episode == 10);
  REQUIRE(cfg.simulator.scenarios.size() == 5);
  CHECK(cfg.simulator.scenarios[0].weight == 0.6);
  bool saw_sag = false;
  for (const auto& mix : cfg.simulator.scenarios) {
    if (mix.scenario.class_id == 3) {
      CHECK(mix.scenario.sag_depth == 0.4);
      saw_sag = true;
    }
  }
  CHECK(saw_sag);
}
