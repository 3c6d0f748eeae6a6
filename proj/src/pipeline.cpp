#include "twinopt/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "twinopt/shap.hpp"

namespace twinopt {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------- trial params -> trainer params ----------------

GbdtParams apply_trial_params(const GbdtParams& base, const TrialParams& trial) {
  GbdtParams out = base;
  for (const auto& [name, value] : trial.values) {
    auto as_double = [&] {
      if (std::holds_alternative<double>(value)) return std::get<double>(value);
      if (std::holds_alternative<int64_t>(value)) {
        return static_cast<double>(std::get<int64_t>(value));
      }
      throw Error(ErrorKind::Config, "hyperparameter " + name + " must be numeric");
    };
    auto as_int = [&] {
      check(std::holds_alternative<int64_t>(value), ErrorKind::Config,
            "hyperparameter " + name + " must be an integer");
      return static_cast<int>(std::get<int64_t>(value));
    };
    if (name == "learning_rate") {
      out.learning_rate = as_double();
    } else if (name == "num_leaves") {
      out.num_leaves = as_int();
    } else if (name == "min_data_in_leaf") {
      out.min_data_in_leaf = as_int();
    } else if (name == "feature_fraction") {
      out.feature_fraction = as_double();
    } else if (name == "bagging_fraction") {
      out.bagging_fraction = as_double();
    } else if (name == "lambda_l2") {
      out.lambda_l2 = as_double();
    } else if (name == "max_depth") {
      out.max_depth = as_int();
    } else if (name == "focal_gamma") {
      out.focal_gamma = as_double();
    } else if (name == "num_boost_rounds") {
      out.num_boost_rounds = as_int();
    } else if (name == "n_histogram_bins") {
      out.n_histogram_bins = as_int();
    } else if (name == "early_stopping_rounds") {
      out.early_stopping_rounds = as_int();
    } else if (name == "objective") {
      check(std::holds_alternative<std::string>(value), ErrorKind::Config,
            "hyperparameter objective must be categorical");
      out.objective = std::get<std::string>(value);
    } else {
      throw Error(ErrorKind::Config, "unknown hyperparameter: " + name);
    }
  }
  out.validate();
  return out;
}

// deterministic per-trial seed derived from the assignment
uint64_t trial_seed(uint64_t base_seed, const TrialParams& params) {
  std::string blob;
  for (const auto& [name, value] : params.values) {
    blob += name;
    blob += '=';
    blob += param_value_to_string(value);
    blob += ';';
  }
  return splitmix64(base_seed ^ fnv1a64(blob));
}

Evaluator make_gbdt_evaluator(const Dataset& train, const Dataset& valid, int n_classes,
                              const GbdtParams& base, double eval_gamma, uint64_t seed) {
  return [&train, &valid, n_classes, base, eval_gamma, seed](
             const TrialParams& params, const std::vector<int>& checkpoints,
             const ReportSink& report) -> double {
    GbdtParams p = apply_trial_params(base, params);
    p.early_stopping_rounds = 0;  // the scheduler owns stopping here
    p.num_boost_rounds = checkpoints.empty() ? p.num_boost_rounds : checkpoints.back();

    GbdtTrainer trainer(train, &valid, p, make_objective(p, n_classes),
                        trial_seed(seed, params));
    const MulticlassFocal eval_objective(n_classes, eval_gamma);

    double metric = std::numeric_limits<double>::infinity();
    for (int resource : checkpoints) {
      trainer.train_until(resource);
      metric = trainer.valid_loss_under(eval_objective);
      if (!report(resource, metric, trainer.valid_accuracy())) break;
    }
    return metric;
  };
}

// ---------------- feature ranking ----------------

RankingKind ranking_from_string(const std::string& name) {
  if (name == "importance_gain") return RankingKind::ImportanceGain;
  if (name == "importance_split") return RankingKind::ImportanceSplit;
  if (name == "mean_abs_shap") return RankingKind::MeanAbsShap;
  throw Error(ErrorKind::Config, "unknown ranking: " + name +
                                     " (expected importance_gain, importance_split or "
                                     "mean_abs_shap)");
}

std::string to_string(RankingKind kind) {
  switch (kind) {
    case RankingKind::ImportanceGain: return "importance_gain";
    case RankingKind::ImportanceSplit: return "importance_split";
    case RankingKind::MeanAbsShap: return "mean_abs_shap";
  }
  return "unknown";
}

std::vector<double> feature_scores(const Dataset& data, const GbdtModel& model,
                                   const RankingConfig& config) {
  check(data.feature_names == model.feature_names, ErrorKind::Shape,
        "dataset schema does not match the model");
  if (config.kind == RankingKind::ImportanceGain) {
    return model.feature_importance(ImportanceKind::Gain);
  }
  if (config.kind == RankingKind::ImportanceSplit) {
    return model.feature_importance(ImportanceKind::SplitCount);
  }

  // mean |shap| over a subsample, background drawn from the same data
  Rng rng(config.seed);
  auto subsample = [&](size_t want, Rng& r) {
    std::vector<size_t> idx(data.n_rows());
    std::iota(idx.begin(), idx.end(), size_t{0});
    if (want >= idx.size()) return idx;
    for (size_t i = 0; i < want; ++i) {
      const size_t j = i + r.uniform_int(idx.size() - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(want);
    std::sort(idx.begin(), idx.end());
    return idx;
  };
  Rng bg_rng = rng.fork(1);
  Rng inst_rng = rng.fork(2);
  const Dataset background = data.select_rows(subsample(config.shap_background, bg_rng));
  const std::vector<size_t> instances = subsample(config.shap_instances, inst_rng);

  std::vector<double> scores(data.n_features(), 0.0);
  for (size_t i : instances) {
    const ShapExplanation exp = tree_shap(model, data.row(i), background);
    for (size_t c = 0; c < exp.contributions.size(); ++c) {
      for (size_t f = 0; f < scores.size(); ++f) {
        scores[f] += std::abs(exp.contributions[c][f]);
      }
    }
  }
  const double denom = static_cast<double>(instances.size()) *
                       static_cast<double>(model.n_classes);
  for (double& s : scores) s /= denom;
  return scores;
}

std::pair<Dataset, std::string> rank_and_drop(const Dataset& data, const GbdtModel& model,
                                              const RankingConfig& config) {
  check(data.n_features() >= 2, ErrorKind::CannotDrop,
        "cannot drop below one remaining feature");
  const std::vector<double> scores = feature_scores(data, model, config);
  size_t worst = 0;
  for (size_t f = 1; f < scores.size(); ++f) {
    if (scores[f] < scores[worst]) worst = f;  // strict: ties keep the lowest index
  }
  const std::string name = data.feature_names[worst];
  return {data.drop_column(worst), name};
}

// ---------------- the drop loop ----------------

namespace {

int infer_n_classes(const Dataset& data) {
  int max_label = 0;
  for (int label : data.labels) max_label = std::max(max_label, label);
  return std::max(max_label + 1, 2);
}

struct IterationOutcome {
  TrialParams best_params;
  GbdtModel model;
  ClassificationReport report;
  double metric;
  std::string study_log_path;
};

IterationOutcome tune_once(const DataSplit& split, const SearchSpace& space,
                           const PipelineConfig& config, int n_classes, size_t iteration) {
  std::string log_path;
  if (!config.work_dir.empty()) {
    fs::create_directories(config.work_dir);
    log_path = (fs::path(config.work_dir) /
                ("study_" + std::to_string(iteration) + ".jsonl"))
                   .string();
  }

  const Evaluator evaluate = make_gbdt_evaluator(split.train, split.valid, n_classes,
                                                 config.base_params, config.eval_gamma,
                                                 config.seed + iteration);
  BayesSuggester searcher(config.suggest);
  const StudyResult study =
      run_study(space, evaluate, config.budget, config.asha, searcher, config.parallelism,
                splitmix64(config.seed + 0x9e37 * iteration), log_path);

  const Trial* best = nullptr;
  for (const auto& trial : study.leaderboard) {
    if (trial.status == TrialStatus::Completed) {
      best = &trial;
      break;
    }
  }
  check(best != nullptr, ErrorKind::Internal, "study finished without a completed trial");

  // final model at full resource with the winning assignment
  GbdtParams params = apply_trial_params(config.base_params, best->params);
  params.num_boost_rounds = config.asha.max_resource;
  params.early_stopping_rounds = 0;
  const GbdtModel model = fit(split.train, &split.valid, params,
                              make_objective(params, n_classes),
                              trial_seed(config.seed + iteration, best->params));

  const std::vector<int> predictions = model.predict_labels(split.valid);
  std::vector<std::string> class_names = config.class_names;
  if (class_names.empty()) {
    for (int c = 0; c < n_classes; ++c) class_names.push_back("class_" + std::to_string(c));
  }
  check(class_names.size() == static_cast<size_t>(n_classes), ErrorKind::Config,
        "class name list does not match the label range");
  const ClassificationReport report =
      classification_report(split.valid.labels, predictions, class_names);

  return {best->params, model, report, report.macro_f1, log_path};
}

}  // namespace

PipelineHistory feature_drop_loop(const Dataset& data, const SearchSpace& space,
                                  const PipelineConfig& config) {
  check(data.n_features() >= 2, ErrorKind::Config,
        "the drop loop needs at least two features");
  check(config.patience >= 1, ErrorKind::Config, "patience must be >= 1");

  const int n_classes = config.class_names.empty()
                            ? infer_n_classes(data)
                            : static_cast<int>(config.class_names.size());
  data.validate(n_classes);
  DataSplit split = split_dataset(data, config.ratios, config.seed);

  PipelineHistory history;
  double best_metric = -1.0;
  int stale = 0;
  std::optional<std::string> pending_drop;

  for (size_t iteration = 0;; ++iteration) {
    IterationOutcome outcome = tune_once(split, space, config, n_classes, iteration);

    PipelineIteration record;
    record.dropped_feature = pending_drop;
    record.remaining_features = split.train.feature_names;
    record.best_params = outcome.best_params;
    record.report = std::move(outcome.report);
    record.metric = outcome.metric;
    record.study_log_path = outcome.study_log_path;
    record.model = std::move(outcome.model);
    history.iterations.push_back(std::move(record));

    if (outcome.metric > best_metric) {
      best_metric = outcome.metric;
      history.champion_index = history.iterations.size() - 1;
      stale = 0;
    } else {
      stale += 1;
    }

    if (stale >= config.patience) break;
    if (split.train.n_features() <= 1) break;
    if (config.max_iterations > 0 &&
        history.iterations.size() >= static_cast<size_t>(config.max_iterations)) {
      break;
    }

    RankingConfig ranking = config.ranking;
    ranking.seed = splitmix64(config.seed + iteration);
    auto [reduced_valid, dropped] =
        rank_and_drop(split.valid, history.iterations.back().model, ranking);
    const size_t col = split.train.column_index(dropped);
    split.train = split.train.drop_column(col);
    split.valid = std::move(reduced_valid);
    split.test = split.test.drop_column(col);
    pending_drop = dropped;
  }

  return history;
}

void write_pipeline_history(const PipelineHistory& history, const std::string& directory) {
  fs::create_directories(directory);

  json iterations = json::array();
  for (size_t i = 0; i < history.iterations.size(); ++i) {
    const PipelineIteration& it = history.iterations[i];
    const std::string model_path =
        (fs::path(directory) / ("model_" + std::to_string(i) + ".json")).string();
    it.model.save(model_path);
    json entry;
    entry["iteration"] = i;
    entry["dropped_feature"] = it.dropped_feature ? json(*it.dropped_feature) : json(nullptr);
    entry["remaining_features"] = it.remaining_features;
    entry["metric"] = it.metric;
    entry["report"] = json::parse(it.report.to_json());
    entry["study_log"] = it.study_log_path;
    entry["model"] = model_path;
    json params = json::object();
    for (const auto& [name, value] : it.best_params.values) {
      if (std::holds_alternative<double>(value)) {
        params[name] = std::get<double>(value);
      } else if (std::holds_alternative<int64_t>(value)) {
        params[name] = std::get<int64_t>(value);
      } else {
        params[name] = std::get<std::string>(value);
      }
    }
    entry["best_params"] = params;
    iterations.push_back(std::move(entry));
  }

  json doc;
  doc["schema_version"] = 1;
  doc["champion_index"] = history.champion_index;
  doc["iterations"] = std::move(iterations);

  std::ofstream out(fs::path(directory) / "history.json", std::ios::binary);
  check(out.good(), ErrorKind::Io, "cannot write pipeline history");
  out << doc.dump(2) << "\n";
  check(out.good(), ErrorKind::Io, "pipeline history write failed");

  // plot-ready summary: metric per iteration
  std::ofstream csv(fs::path(directory) / "iterations.csv", std::ios::binary);
  check(csv.good(), ErrorKind::Io, "cannot write pipeline summary");
  csv << "iteration,n_features,dropped_feature,macro_f1,accuracy\n";
  for (size_t i = 0; i < history.iterations.size(); ++i) {
    const PipelineIteration& it = history.iterations[i];
    csv << i << "," << it.remaining_features.size() << ","
        << (it.dropped_feature ? *it.dropped_feature : "") << ","
        << format_double(it.metric) << "," << format_double(it.report.accuracy) << "\n";
  }
  check(csv.good(), ErrorKind::Io, "pipeline summary write failed");
}

// ---------------- run storage ----------------

namespace {

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

std::string read_file_or_fail(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), ErrorKind::Integrity, "missing run file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), ErrorKind::Io, "cannot open for writing: " + path.string());
  out << content;
  check(out.good(), ErrorKind::Io, "write failed: " + path.string());
}

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

TrialParams params_from_json(const json& j) {
  TrialParams p;
  for (const auto& [name, value] : j.items()) {
    if (value.is_number_float()) {
      p.set(name, value.get<double>());
    } else if (value.is_number_integer()) {
      p.set(name, value.get<int64_t>());
    } else {
      p.set(name, value.get<std::string>());
    }
  }
  return p;
}

}  // namespace

std::string save_run(const RunRecord& record, const GbdtModel& model,
                     const std::string& runs_dir) {
  const std::string model_json = model.to_json();
  std::string study_blob;
  for (const auto& line : record.study_log) {
    study_blob += line;
    study_blob += '\n';
  }

  // id over everything except wall-clock fields
  std::string id_blob = record.command;
  id_blob += '\x1f';
  id_blob += record.config_json;
  id_blob += '\x1f';
  id_blob += record.dataset_fingerprint;
  id_blob += '\x1f';
  id_blob += model_json;
  id_blob += '\x1f';
  id_blob += record.report_json;
  id_blob += '\x1f';
  id_blob += study_blob;
  id_blob += '\x1f';
  id_blob += record.parent_run_id;
  const std::string run_id = content_hash(id_blob);

  const fs::path dir = fs::path(runs_dir) / run_id;
  fs::create_directories(dir);

  write_file(dir / "model.json", model_json);
  write_file(dir / "report.json", record.report_json);
  write_file(dir / "study.jsonl", study_blob);

  json rec;
  rec["schema_version"] = 1;
  rec["run_id"] = run_id;
  rec["command"] = record.command;
  rec["created_at"] = record.created_at.empty() ? now_iso8601() : record.created_at;
  rec["parent_run_id"] = record.parent_run_id;
  rec["dataset_fingerprint"] = record.dataset_fingerprint;
  rec["metric"] = record.metric;
  rec["best_params"] = params_to_json(record.best_params);
  rec["config"] = record.config_json.empty() ? json(nullptr) : json::parse(record.config_json);
  rec["hashes"] = {{"model.json", content_hash(model_json)},
                   {"report.json", content_hash(record.report_json)},
                   {"study.jsonl", content_hash(study_blob)}};
  write_file(dir / "record.json", rec.dump(2) + "\n");

  return run_id;
}

std::pair<RunRecord, GbdtModel> load_run(const std::string& run_id,
                                         const std::string& runs_dir) {
  const fs::path dir = fs::path(runs_dir) / run_id;
  check(fs::exists(dir), ErrorKind::Integrity, "no such run: " + run_id);

  const std::string record_text = read_file_or_fail(dir / "record.json");
  const std::string model_json = read_file_or_fail(dir / "model.json");
  const std::string report_json = read_file_or_fail(dir / "report.json");
  const std::string study_blob = read_file_or_fail(dir / "study.jsonl");

  json rec;
  try {
    rec = json::parse(record_text);
  } catch (const json::exception&) {
    throw Error(ErrorKind::Integrity, "record.json is not valid json for run " + run_id);
  }

  const auto& hashes = rec.at("hashes");
  check(hashes.at("model.json").get<std::string>() == content_hash(model_json),
        ErrorKind::Tamper, "model.json content does not match its recorded hash");
  check(hashes.at("report.json").get<std::string>() == content_hash(report_json),
        ErrorKind::Tamper, "report.json content does not match its recorded hash");
  check(hashes.at("study.jsonl").get<std::string>() == content_hash(study_blob),
        ErrorKind::Tamper, "study.jsonl content does not match its recorded hash");

  RunRecord record;
  record.run_id = rec.at("run_id").get<std::string>();
  record.command = rec.at("command").get<std::string>();
  record.created_at = rec.at("created_at").get<std::string>();
  record.parent_run_id = rec.at("parent_run_id").get<std::string>();
  record.dataset_fingerprint = rec.at("dataset_fingerprint").get<std::string>();
  record.metric = rec.at("metric").get<double>();
  record.best_params = params_from_json(rec.at("best_params"));
  record.config_json = rec.at("config").is_null() ? "" : rec.at("config").dump();
  record.report_json = report_json;
  std::istringstream lines(study_blob);
  for (std::string line; std::getline(lines, line);) record.study_log.push_back(line);

  return {record, GbdtModel::from_json(model_json)};
}

}  // namespace twinopt
