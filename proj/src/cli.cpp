#include "twinopt/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "twinopt/config.hpp"
#include "twinopt/dataset.hpp"
#include "twinopt/gbdt.hpp"
#include "twinopt/metrics.hpp"
#include "twinopt/pipeline.hpp"
#include "twinopt/scheduler.hpp"
#include "twinopt/shap.hpp"
#include "twinopt/sim.hpp"

namespace twinopt {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

int infer_n_classes(const Dataset& data) {
  check(!data.labels.empty(), ErrorKind::EmptyInput, "dataset has no rows");
  const int max_label = *std::max_element(data.labels.begin(), data.labels.end());
  return std::max(max_label + 1, 2);
}

std::vector<std::string> class_names_for(int n_classes) {
  if (n_classes == kNumFaultClasses) return fault_class_names();
  std::vector<std::string> names;
  names.reserve(static_cast<size_t>(n_classes));
  for (int c = 0; c < n_classes; ++c) names.push_back("class_" + std::to_string(c));
  return names;
}

// keeps exactly the model's feature columns (pipeline champions
// are trained after drops, so stored datasets may carry extras)
Dataset align_features(const Dataset& data, const std::vector<std::string>& wanted) {
  Dataset out = data;
  for (size_t i = out.feature_names.size(); i-- > 0;) {
    if (std::find(wanted.begin(), wanted.end(), out.feature_names[i]) == wanted.end()) {
      out = out.drop_column(i);
    }
  }
  check(out.feature_names == wanted, ErrorKind::Shape,
        "dataset columns do not cover the model's features");
  return out;
}

ClassificationReport evaluate_model(const GbdtModel& model, const Dataset& eval) {
  const Dataset aligned = align_features(eval, model.feature_names);
  return classification_report(aligned.labels, model.predict_labels(aligned),
                               class_names_for(model.n_classes));
}

// sorted k-row subsample without replacement
Dataset subsample_rows(const Dataset& data, size_t k, Rng& rng) {
  const size_t n = data.n_rows();
  k = std::min(k, n);
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  for (size_t i = 0; i < k; ++i) {
    const size_t j = i + static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return data.select_rows(idx);
}

std::pair<RunRecord, GbdtModel> load_run_path(const std::string& run_dir) {
  fs::path p = fs::path(run_dir).lexically_normal();
  if (p.filename().empty()) p = p.parent_path();  // tolerate trailing slash
  const std::string id = p.filename().string();
  std::string root = p.parent_path().string();
  if (root.empty()) root = ".";
  return load_run(id, root);
}

uint64_t recorded_seed(const RunRecord& record) {
  try {
    return json::parse(record.config_json).at("seed").get<uint64_t>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::Integrity, "run record carries no usable config seed");
  }
}

void require_same_dataset(const RunRecord& record, const Dataset& data) {
  check(record.dataset_fingerprint == data.fingerprint(), ErrorKind::InvalidData,
        "dataset does not match the one recorded for run " + record.run_id);
}

void write_text_file(const std::string& path, const std::string& content) {
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  std::ofstream out(path, std::ios::binary);
  check(out.good(), ErrorKind::Io, "cannot write file: " + path);
  out << content;
  check(out.good(), ErrorKind::Io, "write failed: " + path);
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", fraction * 100.0);
  return buf;
}

// ---------------- commands ----------------

void cmd_simulate(const ToolConfig& config, std::optional<size_t> rows_flag,
                  const std::string& out) {
  const size_t rows = rows_flag.value_or(config.simulator.n_rows);
  check(rows >= 1, ErrorKind::Config, "simulator.n_rows must be at least 1 (got " +
                                          std::to_string(rows) + ")");
  const Dataset data = generate_dataset(config.simulator.model, config.simulator.scenarios,
                                        rows, config.seed, config.simulator.generator);
  write_csv(data, out);
  std::cout << "wrote " << data.n_rows() << " rows to " << out << "\n";
  const auto& names = fault_class_names();
  std::vector<size_t> counts(names.size(), 0);
  for (int label : data.labels) counts[static_cast<size_t>(label)]++;
  for (size_t c = 0; c < names.size(); ++c) {
    std::cout << "  " << names[c] << ": " << counts[c] << " ("
              << percent(static_cast<double>(counts[c]) / static_cast<double>(data.n_rows()))
              << ")\n";
  }
}

void cmd_train(const ToolConfig& config, const std::string& data_path,
               const std::string& out_run) {
  const Dataset data = read_csv(data_path);
  const int n_classes = infer_n_classes(data);
  data.validate(n_classes);
  const DataSplit split = split_dataset(data, SplitRatios{}, config.seed);

  const GbdtModel model = fit(split.train, &split.valid, config.gbdt,
                              make_objective(config.gbdt, n_classes), config.seed);
  const ClassificationReport report = evaluate_model(model, concat(split.valid, split.test));

  RunRecord record;
  record.command = "train";
  record.config_json = config.to_json();
  record.dataset_fingerprint = data.fingerprint();
  record.report_json = report.to_json();
  record.metric = report.macro_f1;
  const std::string runs_dir = out_run.empty() ? config.runs_dir : out_run;
  const std::string run_id = save_run(record, model, runs_dir);

  std::cout << report.to_text() << "\n";
  std::cout << "saved run " << run_id << " -> " << runs_dir << "/" << run_id << "\n";
}

void cmd_tune(const ToolConfig& config, const std::string& data_path,
              const std::string& out_run) {
  const Dataset data = read_csv(data_path);
  const int n_classes = infer_n_classes(data);
  data.validate(n_classes);
  const DataSplit split = split_dataset(data, SplitRatios{}, config.seed);

  const Evaluator evaluate =
      make_gbdt_evaluator(split.train, split.valid, n_classes, config.gbdt,
                          config.scheduler.eval_gamma, config.seed);
  SuggestConfig sc;
  sc.n_warmup = config.scheduler.n_warmup;
  sc.n_candidates = config.scheduler.n_candidates;
  BayesSuggester searcher(sc);
  const StudyResult result =
      run_study(config.space, evaluate, config.scheduler.budget, config.scheduler.asha,
                searcher, config.scheduler.parallelism, config.seed);

  const Trial* best = nullptr;
  for (const Trial& t : result.leaderboard) {
    if (t.status == TrialStatus::Completed) {
      best = &t;
      break;
    }
  }
  check(best != nullptr, ErrorKind::Internal, "no trial completed the study");

  GbdtParams champion_params = apply_trial_params(config.gbdt, best->params);
  champion_params.num_boost_rounds = config.scheduler.asha.max_resource;
  champion_params.early_stopping_rounds = 0;
  const GbdtModel model =
      fit(split.train, &split.valid, champion_params,
          make_objective(champion_params, n_classes), trial_seed(config.seed, best->params));
  const ClassificationReport report = evaluate_model(model, concat(split.valid, split.test));

  RunRecord record;
  record.command = "tune";
  record.config_json = config.to_json();
  record.dataset_fingerprint = data.fingerprint();
  record.report_json = report.to_json();
  record.study_log = result.log_lines;
  record.best_params = best->params;
  record.metric = report.macro_f1;
  const std::string runs_dir = out_run.empty() ? config.runs_dir : out_run;
  const std::string run_id = save_run(record, model, runs_dir);
  const std::string run_dir = runs_dir + "/" + run_id;

  write_leaderboard_csv(result, config.space, run_dir + "/leaderboard.csv");
  {
    // plot-ready learning curves: one row per rung report
    std::string csv = "trial,resource,loss,accuracy\n";
    for (const std::string& line : result.log_lines) {
      const json event = json::parse(line);
      if (event.at("event") != "metric_reported") continue;
      csv += std::to_string(event.at("trial").get<int>()) + "," +
             std::to_string(event.at("resource").get<int>()) + "," +
             format_double(event.at("metric").get<double>()) + "," +
             format_double(event.at("accuracy").get<double>()) + "\n";
    }
    write_text_file(run_dir + "/curves.csv", csv);
  }

  std::cout << "leaderboard (top 5 of " << result.leaderboard.size() << " trials):\n";
  for (size_t i = 0; i < result.leaderboard.size() && i < 5; ++i) {
    const Trial& t = result.leaderboard[i];
    std::cout << "  " << (i + 1) << ". trial " << t.id << " [" << to_string(t.status) << "] "
              << (t.final_metric ? format_double(*t.final_metric) : std::string("-"))
              << " @ " << t.highest_resource << " rounds\n";
  }
  std::cout << "\n" << report.to_text() << "\n";
  std::cout << "saved run " << run_id << " -> " << run_dir << "\n";
}

void cmd_report(const std::string& run_dir, const std::string& data_path,
                const std::string& out_json) {
  const auto [record, model] = load_run_path(run_dir);
  const Dataset data = read_csv(data_path);
  require_same_dataset(record, data);
  const DataSplit split = split_dataset(data, SplitRatios{}, recorded_seed(record));
  const ClassificationReport report = evaluate_model(model, concat(split.valid, split.test));
  std::cout << report.to_text();
  if (!out_json.empty()) write_text_file(out_json, report.to_json() + "\n");
}

void cmd_explain(const ToolConfig& config, const std::string& run_dir,
                 const std::string& data_path, std::optional<int> n_flag,
                 const std::string& out_flag) {
  const auto [record, model] = load_run_path(run_dir);
  const Dataset data = read_csv(data_path);
  require_same_dataset(record, data);
  const int n = n_flag.value_or(config.explain.instances);
  check(n >= 1, ErrorKind::Config, "explain.instances must be at least 1");

  const DataSplit split = split_dataset(data, SplitRatios{}, recorded_seed(record));
  const Dataset train = align_features(split.train, model.feature_names);
  const Dataset eval = align_features(concat(split.valid, split.test), model.feature_names);
  check(static_cast<size_t>(n) <= eval.n_rows(), ErrorKind::InsufficientData,
        "requested " + std::to_string(n) + " instances but only " +
            std::to_string(eval.n_rows()) + " evaluation rows exist");

  Rng rng(splitmix64(recorded_seed(record) ^ 0x6578706c61696eULL));
  const Dataset background = subsample_rows(train, config.explain.background_rows, rng);

  std::vector<ShapExplanation> explanations;
  explanations.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    explanations.push_back(tree_shap(model, eval.row(static_cast<size_t>(i)), background));
  }

  const std::string out_dir =
      out_flag.empty() ? fs::path(run_dir).lexically_normal().string() + "/explain" : out_flag;
  fs::create_directories(out_dir);
  export_explanations_json(explanations, out_dir + "/explanations.json");
  for (int c = 0; c < model.n_classes; ++c) {
    export_decision_plot(explanations, c,
                         out_dir + "/decision_plot_class_" + std::to_string(c) + ".csv");
  }

  const auto names = class_names_for(model.n_classes);
  for (int i = 0; i < n; ++i) {
    const ShapExplanation& e = explanations[static_cast<size_t>(i)];
    const auto& contrib = e.contributions[static_cast<size_t>(e.predicted_class)];
    size_t top = 0;
    for (size_t f = 1; f < contrib.size(); ++f) {
      if (std::abs(contrib[f]) > std::abs(contrib[top])) top = f;
    }
    std::cout << "instance " << i << ": predicted "
              << names[static_cast<size_t>(e.predicted_class)] << " (p="
              << percent(e.class_probabilities[static_cast<size_t>(e.predicted_class)])
              << "), strongest feature " << e.feature_names[top] << " ("
              << format_double(contrib[top]) << ")\n";
  }
  std::cout << "wrote " << explanations.size() << " explanations to " << out_dir << "\n";
}

void cmd_pipeline(const ToolConfig& config, const std::string& data_path,
                  const std::string& out_dir) {
  const Dataset data = read_csv(data_path);
  const int n_classes = infer_n_classes(data);
  data.validate(n_classes);

  PipelineConfig pc;
  pc.asha = config.scheduler.asha;
  pc.suggest.n_warmup = config.scheduler.n_warmup;
  pc.suggest.n_candidates = config.scheduler.n_candidates;
  pc.budget = config.scheduler.budget;
  pc.parallelism = config.scheduler.parallelism;
  pc.patience = config.pipeline.patience;
  pc.max_iterations = config.pipeline.max_iterations;
  pc.ranking.kind = ranking_from_string(config.pipeline.ranking);
  pc.ranking.shap_instances = config.pipeline.shap_instances;
  pc.ranking.shap_background = config.pipeline.shap_background;
  pc.base_params = config.gbdt;
  pc.eval_gamma = config.scheduler.eval_gamma;
  pc.seed = config.seed;
  pc.work_dir = out_dir;
  pc.class_names = class_names_for(n_classes);
  fs::create_directories(out_dir);

  const PipelineHistory history = feature_drop_loop(data, config.space, pc);
  write_pipeline_history(history, out_dir);

  const PipelineIteration& champ = history.iterations[history.champion_index];
  RunRecord record;
  record.command = "pipeline";
  record.config_json = config.to_json();
  record.dataset_fingerprint = data.fingerprint();
  record.report_json = champ.report.to_json();
  record.best_params = champ.best_params;
  record.metric = champ.metric;
  if (!champ.study_log_path.empty()) {
    std::ifstream in(champ.study_log_path);
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) record.study_log.push_back(line);
    }
  }
  const std::string run_id = save_run(record, champ.model, config.runs_dir);

  for (size_t i = 0; i < history.iterations.size(); ++i) {
    const PipelineIteration& it = history.iterations[i];
    std::cout << "iteration " << i << ": " << it.remaining_features.size() << " features"
              << (it.dropped_feature ? " (dropped " + *it.dropped_feature + ")" : "")
              << ", validation macro F1 " << format_double(it.metric)
              << (i == history.champion_index ? "  <- champion" : "") << "\n";
  }
  std::cout << "history written to " << out_dir << "\n";
  std::cout << "champion saved as run " << run_id << " -> " << config.runs_dir << "/"
            << run_id << "\n";
}

void cmd_stepwise(const ToolConfig& config, const std::string& data_path,
                  const std::string& out) {
  const Dataset data = read_csv(data_path);
  const int n_classes = infer_n_classes(data);
  data.validate(n_classes);
  const DataSplit split = split_dataset(data, SplitRatios{}, config.seed);
  const auto names = class_names_for(n_classes);

  const auto evaluate = [&](const TrialParams& assignment) {
    const GbdtParams params = apply_trial_params(config.gbdt, assignment);
    const GbdtModel model = fit(split.train, &split.valid, params,
                                make_objective(params, n_classes),
                                trial_seed(config.seed, assignment));
    return classification_report(split.valid.labels, model.predict_labels(split.valid), names)
        .macro_f1;
  };

  const StepwiseResult result = stepwise_tune(config.stepwise.groups, evaluate, TrialParams{},
                                              Direction::Maximize);
  write_stepwise_trace_csv(result, out);

  for (const StepwiseEvaluation& e : result.trace) {
    std::cout << "group " << e.group << " candidate " << e.candidate_index << ": "
              << (e.failed ? std::string("failed") : format_double(*e.metric)) << "\n";
  }
  std::cout << "best validation macro F1 " << format_double(result.best_metric) << " with";
  for (const auto& [name, value] : result.best_params.values) {
    std::cout << " " << name << "=" << param_value_to_string(value);
  }
  std::cout << "\ntrace written to " << out << "\n";
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"digital-twin fault classifier: simulation, tuning, training, explanation"};
  app.require_subcommand(1);

  std::string config_path;
  uint64_t seed_flag = 0;
  app.add_option("--config", config_path, "JSON configuration file (defaults used if absent)");
  CLI::Option* seed_opt =
      app.add_option("--seed", seed_flag, "override the config seed (beats TWIN_SEED)");

  const auto effective_config = [&]() {
    ToolConfig config =
        config_path.empty() ? load_default_config() : load_config_file(config_path);
    if (seed_opt->count() > 0) config.seed = seed_flag;
    return config;
  };

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a labeled synthetic fault dataset");
  sim->fallthrough();
  size_t sim_rows = 0;
  std::string sim_out = "dataset.csv";
  CLI::Option* sim_rows_opt = sim->add_option("--rows", sim_rows, "rows to generate");
  sim->add_option("--out", sim_out, "output CSV path");
  sim->callback([&] {
    cmd_simulate(effective_config(),
                 sim_rows_opt->count() > 0 ? std::optional<size_t>(sim_rows) : std::nullopt,
                 sim_out);
  });

  // tune
  auto* tune = app.add_subcommand("tune", "hyperparameter search with early stopping");
  tune->fallthrough();
  std::string tune_data, tune_out_run;
  tune->add_option("--data", tune_data, "dataset CSV")->required();
  tune->add_option("--out-run", tune_out_run, "runs directory (default: config runs_dir)");
  tune->callback([&] { cmd_tune(effective_config(), tune_data, tune_out_run); });

  // train
  auto* train = app.add_subcommand("train", "train one model with the configured defaults");
  train->fallthrough();
  std::string train_data, train_out_run;
  train->add_option("--data", train_data, "dataset CSV")->required();
  train->add_option("--out-run", train_out_run, "runs directory (default: config runs_dir)");
  train->callback([&] { cmd_train(effective_config(), train_data, train_out_run); });

  // report
  auto* report = app.add_subcommand("report", "classification report for a saved run");
  report->fallthrough();
  std::string report_run, report_data, report_out;
  report->add_option("--run", report_run, "run directory")->required();
  report->add_option("--data", report_data, "the dataset the run was produced from")
      ->required();
  report->add_option("--out", report_out, "also write the report as JSON to this path");
  report->callback([&] { cmd_report(report_run, report_data, report_out); });

  // explain
  auto* explain = app.add_subcommand("explain", "per-feature attributions for a saved run");
  explain->fallthrough();
  std::string explain_run, explain_data, explain_out;
  int explain_n = 0;
  explain->add_option("--run", explain_run, "run directory")->required();
  explain->add_option("--data", explain_data, "the dataset the run was produced from")
      ->required();
  CLI::Option* explain_n_opt =
      explain->add_option("--n", explain_n, "instances to explain");
  explain->add_option("--out", explain_out, "output directory (default: <run>/explain)");
  explain->callback([&] {
    cmd_explain(effective_config(), explain_run, explain_data,
                explain_n_opt->count() > 0 ? std::optional<int>(explain_n) : std::nullopt,
                explain_out);
  });

  // pipeline
  auto* pipeline =
      app.add_subcommand("pipeline", "iterative tune + feature-drop loop with history");
  pipeline->fallthrough();
  std::string pipeline_data, pipeline_out = "pipeline_out";
  pipeline->add_option("--data", pipeline_data, "dataset CSV")->required();
  pipeline->add_option("--out", pipeline_out, "history output directory");
  pipeline->callback([&] { cmd_pipeline(effective_config(), pipeline_data, pipeline_out); });

  // stepwise
  auto* stepwise =
      app.add_subcommand("stepwise", "ordered group-by-group tuning trace");
  stepwise->fallthrough();
  std::string stepwise_data, stepwise_out = "stepwise_trace.csv";
  stepwise->add_option("--data", stepwise_data, "dataset CSV")->required();
  stepwise->add_option("--out", stepwise_out, "trace CSV path");
  stepwise->callback([&] { cmd_stepwise(effective_config(), stepwise_data, stepwise_out); });

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::Config ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace twinopt
