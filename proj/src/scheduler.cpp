#include "twinopt/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace twinopt {

using json = nlohmann::ordered_json;

namespace {

json params_to_json(const TrialParams& params) {
  json j = json::object();
  for (const auto& [name, value] : params.values) {
    if (std::holds_alternative<double>(value)) {
      j[name] = std::get<double>(value);
    } else if (std::holds_alternative<int64_t>(value)) {
      j[name] = std::get<int64_t>(value);
    } else {
      j[name] = std::get<std::string>(value);
    }
  }
  return j;
}

bool better(double a, double b, Direction dir) {
  return dir == Direction::Minimize ? a < b : a > b;
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace

void AshaConfig::validate() const {
  check(min_resource >= 1, ErrorKind::Config, "min_resource must be >= 1");
  check(min_resource < max_resource, ErrorKind::Config,
        "min_resource must be below max_resource");
  check(reduction_factor >= 2, ErrorKind::Config, "reduction_factor must be >= 2");
}

std::vector<int> AshaConfig::rungs() const {
  validate();
  std::vector<int> out;
  int64_t resource = min_resource;
  while (resource < max_resource) {
    out.push_back(static_cast<int>(resource));
    resource *= reduction_factor;
  }
  out.push_back(max_resource);
  return out;
}

std::string to_string(TrialStatus status) {
  switch (status) {
    case TrialStatus::Pending: return "pending";
    case TrialStatus::Running: return "running";
    case TrialStatus::Stopped: return "stopped";
    case TrialStatus::Completed: return "completed";
    case TrialStatus::Failed: return "failed";
  }
  return "unknown";
}

void StudyState::remove_trial(int trial_id) {
  for (auto& [resource, list] : rung_reports) {
    std::erase_if(list, [&](const auto& entry) { return entry.second == trial_id; });
  }
}

AshaDecision asha_decide(StudyState& state, const AshaConfig& config, int trial_id,
                         int rung_resource, double metric, DecisionDetail* detail) {
  check(std::isfinite(metric), ErrorKind::InvalidData, "non-finite metric reported");
  const auto rungs = config.rungs();
  check(std::find(rungs.begin(), rungs.end(), rung_resource) != rungs.end(), ErrorKind::Protocol,
        "resource " + std::to_string(rung_resource) + " is not a rung");
  check(state.reported.insert({trial_id, rung_resource}).second, ErrorKind::Protocol,
        "duplicate report for trial " + std::to_string(trial_id) + " at resource " +
            std::to_string(rung_resource));

  auto& list = state.rung_reports[rung_resource];
  list.push_back({metric, trial_id});

  // earlier reports win ties, so the newcomer ranks after every
  // prior entry that is at least as good
  int rank = 1;
  for (size_t i = 0; i + 1 < list.size(); ++i) {
    if (better(list[i].first, metric, config.direction) || list[i].first == metric) ++rank;
  }
  const int n = static_cast<int>(list.size());
  const int cutoff = ceil_div(n, config.reduction_factor);
  if (detail) *detail = {rank, n, cutoff};

  if (rung_resource == config.max_resource) return AshaDecision::Continue;  // final rung completes
  return rank <= cutoff ? AshaDecision::Continue : AshaDecision::Stop;
}

namespace {

struct StudyLogger {
  std::vector<std::string> lines;
  std::ofstream file;

  explicit StudyLogger(const std::string& path) {
    if (!path.empty()) {
      file.open(path, std::ios::binary);
      check(file.good(), ErrorKind::Io, "cannot open study log for writing: " + path);
    }
  }

  void emit(const json& event) {
    lines.push_back(event.dump());
    if (file.is_open()) {
      file << lines.back() << "\n";
      check(file.good(), ErrorKind::Io, "study log write failed");
    }
  }
};

struct StudyRunner {
  const SearchSpace& space;
  const Evaluator& evaluate;
  const AshaConfig& asha;
  Suggester& searcher;
  std::vector<int> rungs;
  StudyState state;
  StudyLogger logger;
  std::vector<Trial> trials;
  Rng rng;
  std::mutex mu;  // guards everything above when parallel

  StudyRunner(const SearchSpace& space_in, const Evaluator& eval_in, int budget,
              const AshaConfig& asha_in, Suggester& searcher_in, uint64_t seed,
              const std::string& log_path)
      : space(space_in),
        evaluate(eval_in),
        asha(asha_in),
        searcher(searcher_in),
        rungs(asha_in.rungs()),
        logger(log_path),
        trials(static_cast<size_t>(budget)),
        rng(seed) {}

  // suggestion + start event; caller holds the lock when parallel
  void start_trial(int id) {
    Trial& trial = trials[static_cast<size_t>(id)];
    trial.id = id;
    trial.params = searcher.next(space, rng);
    trial.status = TrialStatus::Running;
    logger.emit({{"event", "trial_started"},
                 {"trial", id},
                 {"params", params_to_json(trial.params)}});
  }

  // evaluator body; locking handled via the sink
  void run_trial(int id, bool locked) {
    Trial& trial = trials[static_cast<size_t>(id)];
    bool stop_requested = false;
    int last_resource = 0;

    auto sink = [&](int resource, double metric, double aux) -> bool {
      std::unique_lock<std::mutex> lock;
      if (!locked) lock = std::unique_lock<std::mutex>(mu);
      check(resource > last_resource, ErrorKind::Protocol,
            "evaluator reported resources out of order");
      last_resource = resource;
      trial.history.push_back({resource, metric});
      trial.highest_resource = resource;
      logger.emit({{"event", "metric_reported"},
                   {"trial", id},
                   {"resource", resource},
                   {"metric", metric},
                   {"accuracy", aux}});
      DecisionDetail detail;
      const AshaDecision decision = asha_decide(state, asha, id, resource, metric, &detail);
      logger.emit({{"event", "decision"},
                   {"trial", id},
                   {"resource", resource},
                   {"decision", decision == AshaDecision::Continue ? "continue" : "stop"},
                   {"rank", detail.rank},
                   {"n", detail.n_completed},
                   {"cutoff", detail.cutoff}});
      if (decision == AshaDecision::Stop) stop_requested = true;
      return decision == AshaDecision::Continue;
    };

    try {
      const double final_metric = evaluate(trial.params, rungs, sink);
      std::unique_lock<std::mutex> lock;
      if (!locked) lock = std::unique_lock<std::mutex>(mu);
      trial.final_metric = final_metric;
      trial.status = stop_requested ? TrialStatus::Stopped : TrialStatus::Completed;
      // stopped trials still inform the searcher with their last metric
      searcher.observe(trial.params, final_metric);
      logger.emit({{"event", "trial_finished"},
                   {"trial", id},
                   {"status", to_string(trial.status)},
                   {"final_metric", final_metric},
                   {"highest_resource", trial.highest_resource}});
    } catch (const std::exception& e) {
      std::unique_lock<std::mutex> lock;
      if (!locked) lock = std::unique_lock<std::mutex>(mu);
      trial.status = TrialStatus::Failed;
      trial.error = e.what();
      state.remove_trial(id);
      logger.emit({{"event", "trial_failed"}, {"trial", id}, {"error", trial.error}});
      logger.emit({{"event", "trial_finished"},
                   {"trial", id},
                   {"status", "failed"},
                   {"highest_resource", trial.highest_resource}});
    }
  }
};

}  // namespace

StudyResult run_study(const SearchSpace& space, const Evaluator& evaluate, int budget,
                      const AshaConfig& asha, Suggester& searcher, int parallelism,
                      uint64_t seed, const std::string& log_path) {
  space.validate();
  asha.validate();
  check(budget >= 1, ErrorKind::Config, "study budget must be >= 1");
  check(parallelism >= 1, ErrorKind::Config, "parallelism must be >= 1");

  StudyRunner runner(space, evaluate, budget, asha, searcher, seed, log_path);

  if (parallelism == 1) {
    for (int id = 0; id < budget; ++id) {
      runner.start_trial(id);
      runner.run_trial(id, /*locked=*/true);
    }
  } else {
    int next_id = 0;
    auto worker = [&] {
      while (true) {
        int id = -1;
        {
          std::lock_guard<std::mutex> lock(runner.mu);
          if (next_id >= budget) return;
          id = next_id++;
          runner.start_trial(id);
        }
        runner.run_trial(id, /*locked=*/false);
      }
    };
    std::vector<std::thread> pool;
    const int n_workers = std::min(parallelism, budget);
    pool.reserve(static_cast<size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  StudyResult result;
  result.leaderboard = std::move(runner.trials);
  result.log_lines = std::move(runner.logger.lines);

  // completed trials first, then stopped, then failed; metric
  // orders within each band, trial id breaks ties
  auto band = [](const Trial& t) {
    switch (t.status) {
      case TrialStatus::Completed: return 0;
      case TrialStatus::Stopped: return 1;
      default: return 2;
    }
  };
  const Direction dir = asha.direction;
  std::sort(result.leaderboard.begin(), result.leaderboard.end(),
            [&](const Trial& a, const Trial& b) {
              if (band(a) != band(b)) return band(a) < band(b);
              if (a.final_metric && b.final_metric && *a.final_metric != *b.final_metric) {
                return better(*a.final_metric, *b.final_metric, dir);
              }
              return a.id < b.id;
            });
  return result;
}

void verify_study_log(const std::vector<std::string>& log_lines, const AshaConfig& config) {
  const auto rungs = config.rungs();
  // replayed per-rung metric lists, as (metric, trial) in report order
  std::map<int, std::vector<std::pair<double, int>>> reports;
  std::map<int, std::vector<int>> trial_rungs;  // trial -> reported resources in order

  for (size_t ln = 0; ln < log_lines.size(); ++ln) {
    json event;
    try {
      event = json::parse(log_lines[ln]);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Protocol,
                  "study log line " + std::to_string(ln + 1) + " is not valid json");
    }
    const std::string kind = event.at("event").get<std::string>();
    if (kind == "metric_reported") {
      const int trial = event.at("trial").get<int>();
      const int resource = event.at("resource").get<int>();
      const double metric = event.at("metric").get<double>();
      auto& seen = trial_rungs[trial];
      // a report at rung k requires presence at every lower rung
      const size_t rung_index = static_cast<size_t>(
          std::find(rungs.begin(), rungs.end(), resource) - rungs.begin());
      check(rung_index < rungs.size(), ErrorKind::Protocol,
            "log reports a resource that is not a rung");
      check(seen.size() == rung_index, ErrorKind::Protocol,
            "trial " + std::to_string(trial) + " skipped a rung");
      seen.push_back(resource);
      reports[resource].push_back({metric, trial});
    } else if (kind == "decision") {
      const int trial = event.at("trial").get<int>();
      const int resource = event.at("resource").get<int>();
      const auto& list = reports.at(resource);
      check(!list.empty() && list.back().second == trial, ErrorKind::Protocol,
            "decision does not follow the trial's metric report");
      const double metric = list.back().first;
      int rank = 1;
      for (size_t i = 0; i + 1 < list.size(); ++i) {
        if (better(list[i].first, metric, config.direction) || list[i].first == metric) ++rank;
      }
      const int n = static_cast<int>(list.size());
      const int cutoff = ceil_div(n, config.reduction_factor);
      check(event.at("rank").get<int>() == rank, ErrorKind::Protocol,
            "replayed rank mismatch at log line " + std::to_string(ln + 1));
      check(event.at("n").get<int>() == n, ErrorKind::Protocol,
            "replayed count mismatch at log line " + std::to_string(ln + 1));
      check(event.at("cutoff").get<int>() == cutoff, ErrorKind::Protocol,
            "replayed cutoff mismatch at log line " + std::to_string(ln + 1));
      const bool should_continue = resource == config.max_resource || rank <= cutoff;
      const bool logged_continue = event.at("decision").get<std::string>() == "continue";
      check(should_continue == logged_continue, ErrorKind::Protocol,
            "replayed decision mismatch at log line " + std::to_string(ln + 1));
    } else if (kind == "trial_failed") {
      const int trial = event.at("trial").get<int>();
      for (auto& [resource, list] : reports) {
        std::erase_if(list, [&](const auto& entry) { return entry.second == trial; });
      }
    }
  }
}

void write_leaderboard_csv(const StudyResult& result, const SearchSpace& space,
                           const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), ErrorKind::Io, "cannot open for writing: " + path);
  out << "rank,trial,status,final_metric,highest_resource";
  for (const auto& p : space.params) out << "," << p.name;
  out << "\n";
  for (size_t i = 0; i < result.leaderboard.size(); ++i) {
    const Trial& t = result.leaderboard[i];
    out << (i + 1) << "," << t.id << "," << to_string(t.status) << ",";
    if (t.final_metric) out << format_double(*t.final_metric);
    out << "," << t.highest_resource;
    for (const auto& p : space.params) {
      out << ",";
      auto it = t.params.values.find(p.name);
      if (it != t.params.values.end()) out << param_value_to_string(it->second);
    }
    out << "\n";
  }
  check(out.good(), ErrorKind::Io, "write failed: " + path);
}

StepwiseResult stepwise_tune(const std::vector<StepwiseGroup>& groups,
                             const std::function<double(const TrialParams&)>& evaluate,
                             const TrialParams& base_params, Direction direction) {
  check(!groups.empty(), ErrorKind::Stepwise, "no parameter groups to tune");
  for (const auto& g : groups) {
    check(!g.candidates.empty(), ErrorKind::Stepwise,
          "group " + g.name + " has no candidates");
  }

  StepwiseResult result;
  TrialParams current = base_params;
  double last_best = 0.0;

  for (const auto& group : groups) {
    std::optional<size_t> best_index;
    double best_metric = 0.0;
    for (size_t ci = 0; ci < group.candidates.size(); ++ci) {
      TrialParams assignment = current;
      for (const auto& [name, value] : group.candidates[ci].values) {
        assignment.set(name, value);
      }
      StepwiseEvaluation eval;
      eval.group = group.name;
      eval.candidate_index = ci;
      eval.assignment = assignment;
      try {
        const double metric = evaluate(assignment);
        check(std::isfinite(metric), ErrorKind::InvalidData, "non-finite stepwise metric");
        eval.metric = metric;
        if (!best_index || better(metric, best_metric, direction)) {
          best_index = ci;
          best_metric = metric;
        }
      } catch (const std::exception&) {
        eval.failed = true;
      }
      result.trace.push_back(std::move(eval));
    }
    check(best_index.has_value(), ErrorKind::Stepwise,
          "every candidate failed in group " + group.name);
    for (const auto& [name, value] : group.candidates[*best_index].values) {
      current.set(name, value);
    }
    last_best = best_metric;
  }

  result.best_params = current;
  result.best_metric = last_best;
  return result;
}

void write_stepwise_trace_csv(const StepwiseResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), ErrorKind::Io, "cannot open for writing: " + path);
  check(!result.trace.empty(), ErrorKind::EmptyInput, "empty stepwise trace");

  out << "group,candidate,metric,failed";
  const TrialParams& first = result.trace.front().assignment;
  for (const auto& [name, value] : first.values) out << "," << name;
  out << "\n";
  for (const auto& eval : result.trace) {
    out << eval.group << "," << eval.candidate_index << ",";
    if (eval.metric) out << format_double(*eval.metric);
    out << "," << (eval.failed ? 1 : 0);
    for (const auto& [name, value] : eval.assignment.values) {
      out << "," << param_value_to_string(value);
    }
    out << "\n";
  }
  check(out.good(), ErrorKind::Io, "write failed: " + path);
}

}  // namespace twinopt
