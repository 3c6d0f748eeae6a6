#pragma once

// ------------------------------------------------------------
// the end-to-end optimization loop (tune, score, rank features,
// drop the weakest, repeat), the evaluator that binds trial
// params to incremental boosting, and content-addressed local
// run storage with integrity checks.
// ------------------------------------------------------------

#include <optional>
#include <string>
#include <vector>

#include "twinopt/dataset.hpp"
#include "twinopt/gbdt.hpp"
#include "twinopt/metrics.hpp"
#include "twinopt/scheduler.hpp"

namespace twinopt {

// ---------------- trial params -> trainer params ----------------

// applies named hyperparameters onto a base GbdtParams; unknown
// names are a config error
GbdtParams apply_trial_params(const GbdtParams& base, const TrialParams& trial);

// deterministic per-trial seed derived from the assignment
uint64_t trial_seed(uint64_t base_seed, const TrialParams& params);

// evaluator for run_study: trains one model incrementally,
// reporting validation loss (under eval_gamma) and accuracy at
// each rung checkpoint
Evaluator make_gbdt_evaluator(const Dataset& train, const Dataset& valid, int n_classes,
                              const GbdtParams& base, double eval_gamma, uint64_t seed);

// ---------------- feature ranking ----------------

enum class RankingKind { ImportanceGain, ImportanceSplit, MeanAbsShap };

RankingKind ranking_from_string(const std::string& name);
std::string to_string(RankingKind kind);

struct RankingConfig {
  RankingKind kind = RankingKind::MeanAbsShap;
  size_t shap_instances = 64;   // rows explained for the shap ranking
  size_t shap_background = 128;  // background rows drawn from the same data
  uint64_t seed = 0;
};

// per-feature scores under the chosen ranking (higher = keep)
std::vector<double> feature_scores(const Dataset& data, const GbdtModel& model,
                                   const RankingConfig& config);

// removes the minimum-score feature (ties: lowest column index)
std::pair<Dataset, std::string> rank_and_drop(const Dataset& data, const GbdtModel& model,
                                              const RankingConfig& config);

// ---------------- the drop loop ----------------

struct PipelineConfig {
  SplitRatios ratios;
  AshaConfig asha;
  SuggestConfig suggest;
  int budget = 64;
  int parallelism = 1;
  int patience = 1;        // non-improving iterations tolerated
  int max_iterations = 0;  // 0 = run until patience or single feature
  RankingConfig ranking;
  GbdtParams base_params;
  double eval_gamma = 2.0;  // scheduling-metric focal gamma, fixed across trials
  uint64_t seed = 42;
  std::string work_dir;                  // study logs land here when nonempty
  std::vector<std::string> class_names;  // empty: class_0, class_1, ...
};

struct PipelineIteration {
  std::optional<std::string> dropped_feature;  // removed to reach this iteration
  std::vector<std::string> remaining_features;
  TrialParams best_params;
  ClassificationReport report;  // on the validation split
  double metric = 0.0;          // validation macro F1
  std::string study_log_path;
  GbdtModel model;
};

struct PipelineHistory {
  std::vector<PipelineIteration> iterations;
  size_t champion_index = 0;
};

PipelineHistory feature_drop_loop(const Dataset& data, const SearchSpace& space,
                                  const PipelineConfig& config);

void write_pipeline_history(const PipelineHistory& history, const std::string& directory);

// ---------------- run storage ----------------

struct RunRecord {
  std::string run_id;  // content hash, assigned by save_run
  std::string command;
  std::string config_json;
  std::string dataset_fingerprint;
  std::string report_json;
  std::vector<std::string> study_log;
  std::string created_at;  // wall-clock, excluded from the content hash
  std::string parent_run_id;
  TrialParams best_params;
  double metric = 0.0;
};

// content-addressed layout: <runs_dir>/<id>/{record.json,
// model.json, report.json, study.jsonl}; returns the run id
std::string save_run(const RunRecord& record, const GbdtModel& model,
                     const std::string& runs_dir);

// verifies hashes before returning; missing file -> integrity
// error, content mismatch -> tamper error
std::pair<RunRecord, GbdtModel> load_run(const std::string& run_id,
                                         const std::string& runs_dir);

}  // namespace twinopt
