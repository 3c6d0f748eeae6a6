#pragma once

// ------------------------------------------------------------
// trial lifecycle: ASHA early stopping (stopping variant), study
// orchestration with bounded parallelism and an append-only
// JSON-lines event log, and ordered step-wise tuning.
//
// A trial continuing at a rung must rank within the top
// ceil(n/eta) of all metrics reported at that rung so far; the
// final rung always completes. The log carries no timestamps so
// a rerun with the same seed is byte-identical at parallelism 1.
// ------------------------------------------------------------

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "twinopt/gp.hpp"
#include "twinopt/search_space.hpp"

namespace twinopt {

struct AshaConfig {
  int min_resource = 8;
  int max_resource = 512;
  int reduction_factor = 4;
  Direction direction = Direction::Minimize;

  void validate() const;
  // rung resources r, r*eta, r*eta^2, ... ending exactly at max_resource
  std::vector<int> rungs() const;
};

enum class TrialStatus { Pending, Running, Stopped, Completed, Failed };

std::string to_string(TrialStatus status);

struct Trial {
  int id = -1;
  TrialParams params;
  TrialStatus status = TrialStatus::Pending;
  std::vector<std::pair<int, double>> history;  // (resource, metric) per rung
  std::optional<double> final_metric;
  int highest_resource = 0;
  std::string error;  // failed trials record the cause
};

enum class AshaDecision { Continue, Stop };

struct DecisionDetail {
  int rank = 0;
  int n_completed = 0;
  int cutoff = 0;
};

// per-rung metric lists in report order, plus the duplicate guard
struct StudyState {
  std::map<int, std::vector<std::pair<double, int>>> rung_reports;  // resource -> (metric, trial)
  std::set<std::pair<int, int>> reported;                           // (trial, resource)

  // drop every metric a failed trial contributed
  void remove_trial(int trial_id);
};

// records the metric, then ranks the trial among everything
// reported at this rung; detail is filled for the event log
AshaDecision asha_decide(StudyState& state, const AshaConfig& config, int trial_id,
                         int rung_resource, double metric, DecisionDetail* detail = nullptr);

// evaluator contract: train toward each checkpoint in order, call
// report(resource, metric, aux) at each one, stop early when the
// sink returns false, and return the final metric. Throwing marks
// the trial failed.
using ReportSink = std::function<bool(int resource, double metric, double aux)>;
using Evaluator =
    std::function<double(const TrialParams& params, const std::vector<int>& checkpoints,
                         const ReportSink& report)>;

struct StudyResult {
  std::vector<Trial> leaderboard;  // best final metric first; failed trials last
  std::vector<std::string> log_lines;
};

StudyResult run_study(const SearchSpace& space, const Evaluator& evaluate, int budget,
                      const AshaConfig& asha, Suggester& searcher, int parallelism,
                      uint64_t seed, const std::string& log_path = "");

// replays a study log and re-derives every decision's rank and
// cutoff from the reported metrics; throws on any mismatch
void verify_study_log(const std::vector<std::string>& log_lines, const AshaConfig& config);

void write_leaderboard_csv(const StudyResult& result, const SearchSpace& space,
                           const std::string& path);

// ---------------- step-wise tuning ----------------

struct StepwiseGroup {
  std::string name;
  std::vector<TrialParams> candidates;  // partial assignments over this group's parameters
};

struct StepwiseEvaluation {
  std::string group;
  size_t candidate_index = 0;
  TrialParams assignment;  // the full parameter set that was evaluated
  std::optional<double> metric;
  bool failed = false;
};

struct StepwiseResult {
  TrialParams best_params;
  double best_metric = 0.0;
  std::vector<StepwiseEvaluation> trace;
};

// tunes groups in order: every candidate is evaluated with tuned
// groups fixed at their chosen values and untuned groups at base
StepwiseResult stepwise_tune(const std::vector<StepwiseGroup>& groups,
                             const std::function<double(const TrialParams&)>& evaluate,
                             const TrialParams& base_params,
                             Direction direction = Direction::Minimize);

void write_stepwise_trace_csv(const StepwiseResult& result, const std::string& path);

}  // namespace twinopt
