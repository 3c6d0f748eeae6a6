#pragma once

// ------------------------------------------------------------
// declarative toolkit configuration: one JSON document covering
// the simulator, trainer defaults, search space, scheduler,
// pipeline, explanation and storage sections. Every field has a
// documented default; parse errors name the offending field.
// Seed precedence: command-line flag > TWIN_SEED env > config.
// ------------------------------------------------------------

#include <string>
#include <vector>

#include "twinopt/gbdt.hpp"
#include "twinopt/pipeline.hpp"
#include "twinopt/scheduler.hpp"
#include "twinopt/sim.hpp"

namespace twinopt {

struct SimulatorSection {
  StateSpaceModel model;             // defaults from default_model()
  GeneratorConfig generator;
  std::vector<ScenarioMix> scenarios;  // defaults from default_scenarios()
  size_t n_rows = 100011;
};

struct SchedulerSection {
  AshaConfig asha;         // r=8, R=512, eta=4, minimize
  int budget = 64;
  int parallelism = 1;
  double eval_gamma = 2.0;  // scheduling-loss gamma, fixed across trials
  int n_warmup = 10;
  int n_candidates = 1024;
};

struct PipelineSection {
  std::string ranking = "mean_abs_shap";
  int patience = 1;
  int max_iterations = 0;  // 0 = no cap
  size_t shap_instances = 64;
  size_t shap_background = 128;
};

struct ExplainSection {
  size_t background_rows = 1024;
  int instances = 5;
};

struct StepwiseSection {
  std::vector<StepwiseGroup> groups;  // defaults defined in default_config()
};

struct ToolConfig {
  uint64_t seed = 42;
  SimulatorSection simulator;
  GbdtParams gbdt;
  SearchSpace space;
  SchedulerSection scheduler;
  PipelineSection pipeline;
  ExplainSection explain;
  StepwiseSection stepwise;
  std::string runs_dir = "runs";

  // normalized JSON snapshot of this configuration (for run records)
  std::string to_json() const;
};

ToolConfig default_config();

// parses and validates; unknown keys and bad values raise config
// errors naming the field path
ToolConfig parse_config(const std::string& json_text);

// reads the file, applies TWIN_SEED when set
ToolConfig load_config_file(const std::string& path);

// default config + TWIN_SEED when set
ToolConfig load_default_config();

}  // namespace twinopt
