#include "twinopt/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace twinopt {

using json = nlohmann::ordered_json;

namespace {

// typed field access that names the full path on any failure
template <typename T>
T field(const json& obj, const std::string& path, const std::string& key, const T& fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::Config, "config field " + path + "." + key + " has the wrong type");
  }
}

const json& section(const json& obj, const std::string& key, const json& empty) {
  if (!obj.contains(key)) return empty;
  check(obj.at(key).is_object(), ErrorKind::Config,
        "config section " + key + " must be an object");
  return obj.at(key);
}

void reject_unknown_keys(const json& obj, const std::string& path,
                         std::initializer_list<const char*> known) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) {
      if (key == k) {
        ok = true;
        break;
      }
    }
    check(ok, ErrorKind::Config, "unknown config key: " + path + "." + key);
  }
}

ParamValue param_value_from_json(const json& v, const std::string& path) {
  if (v.is_number_float()) return v.get<double>();
  if (v.is_number_integer()) return v.get<int64_t>();
  if (v.is_string()) return v.get<std::string>();
  throw Error(ErrorKind::Config, "config field " + path + " must be a number or string");
}

SearchSpace space_from_json(const json& arr) {
  check(arr.is_array(), ErrorKind::Config, "config field search_space must be an array");
  SearchSpace space;
  for (size_t i = 0; i < arr.size(); ++i) {
    const json& p = arr[i];
    const std::string path = "search_space[" + std::to_string(i) + "]";
    check(p.is_object(), ErrorKind::Config, "config field " + path + " must be an object");
    reject_unknown_keys(p, path, {"name", "kind", "lo", "hi", "choices"});
    ParamSpec spec;
    spec.name = field<std::string>(p, path, "name", "");
    check(!spec.name.empty(), ErrorKind::Config, "config field " + path + ".name is required");
    const std::string kind = field<std::string>(p, path, "kind", "");
    if (kind == "uniform") {
      spec.domain = ParamDomain::uniform(field<double>(p, path, "lo", 0.0),
                                         field<double>(p, path, "hi", 1.0));
    } else if (kind == "log_uniform") {
      spec.domain = ParamDomain::log_uniform(field<double>(p, path, "lo", 1e-3),
                                             field<double>(p, path, "hi", 1.0));
    } else if (kind == "integer") {
      spec.domain = ParamDomain::integer(field<int64_t>(p, path, "lo", 0),
                                         field<int64_t>(p, path, "hi", 1));
    } else if (kind == "categorical") {
      spec.domain = ParamDomain::categorical(
          field<std::vector<std::string>>(p, path, "choices", {}));
    } else {
      throw Error(ErrorKind::Config,
                  "config field " + path + ".kind must be uniform, log_uniform, integer or "
                  "categorical");
    }
    space.params.push_back(std::move(spec));
  }
  space.validate();
  return space;
}

json space_to_json(const SearchSpace& space) {
  json arr = json::array();
  for (const auto& spec : space.params) {
    json p;
    p["name"] = spec.name;
    switch (spec.domain.kind) {
      case ParamDomain::Kind::Uniform:
        p["kind"] = "uniform";
        p["lo"] = spec.domain.lo;
        p["hi"] = spec.domain.hi;
        break;
      case ParamDomain::Kind::LogUniform:
        p["kind"] = "log_uniform";
        p["lo"] = spec.domain.lo;
        p["hi"] = spec.domain.hi;
        break;
      case ParamDomain::Kind::Integer:
        p["kind"] = "integer";
        p["lo"] = static_cast<int64_t>(spec.domain.lo);
        p["hi"] = static_cast<int64_t>(spec.domain.hi);
        break;
      case ParamDomain::Kind::Categorical:
        p["kind"] = "categorical";
        p["choices"] = spec.domain.choices;
        break;
    }
    arr.push_back(std::move(p));
  }
  return arr;
}

std::vector<StepwiseGroup> stepwise_from_json(const json& arr) {
  check(arr.is_array(), ErrorKind::Config, "config field stepwise must be an array");
  std::vector<StepwiseGroup> groups;
  for (size_t gi = 0; gi < arr.size(); ++gi) {
    const std::string path = "stepwise[" + std::to_string(gi) + "]";
    const json& g = arr[gi];
    check(g.is_object(), ErrorKind::Config, "config field " + path + " must be an object");
    reject_unknown_keys(g, path, {"name", "candidates"});
    StepwiseGroup group;
    group.name = field<std::string>(g, path, "name", "group_" + std::to_string(gi));
    check(g.contains("candidates") && g.at("candidates").is_array(), ErrorKind::Config,
          "config field " + path + ".candidates must be an array");
    const json& cands = g.at("candidates");
    for (size_t ci = 0; ci < cands.size(); ++ci) {
      const std::string cpath = path + ".candidates[" + std::to_string(ci) + "]";
      check(cands[ci].is_object(), ErrorKind::Config,
            "config field " + cpath + " must be an object of param assignments");
      TrialParams assignment;
      for (const auto& [name, value] : cands[ci].items()) {
        assignment.set(name, param_value_from_json(value, cpath + "." + name));
      }
      group.candidates.push_back(std::move(assignment));
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

json stepwise_to_json(const std::vector<StepwiseGroup>& groups) {
  json arr = json::array();
  for (const auto& group : groups) {
    json cands = json::array();
    for (const auto& cand : group.candidates) {
      json c = json::object();
      for (const auto& [name, value] : cand.values) {
        if (std::holds_alternative<double>(value)) {
          c[name] = std::get<double>(value);
        } else if (std::holds_alternative<int64_t>(value)) {
          c[name] = std::get<int64_t>(value);
        } else {
          c[name] = std::get<std::string>(value);
        }
      }
      cands.push_back(std::move(c));
    }
    arr.push_back(json{{"name", group.name}, {"candidates", std::move(cands)}});
  }
  return arr;
}

template <size_t Rows, size_t Cols>
void matrix_from_json(const json& arr, const std::string& path,
                      std::array<std::array<double, Cols>, Rows>& out) {
  check(arr.is_array() && arr.size() == Rows, ErrorKind::Config,
        "config field " + path + " must be a " + std::to_string(Rows) + "-row array");
  for (size_t i = 0; i < Rows; ++i) {
    check(arr[i].is_array() && arr[i].size() == Cols, ErrorKind::Config,
          "config field " + path + "[" + std::to_string(i) + "] must hold " +
              std::to_string(Cols) + " numbers");
    for (size_t j = 0; j < Cols; ++j) {
      check(arr[i][j].is_number(), ErrorKind::Config,
            "config field " + path + " must hold numbers");
      out[i][j] = arr[i][j].get<double>();
    }
  }
}

uint64_t parse_seed_text(const std::string& text, const std::string& origin) {
  check(!text.empty(), ErrorKind::Config, origin + " is empty");
  uint64_t out = 0;
  for (char c : text) {
    check(c >= '0' && c <= '9', ErrorKind::Config,
          origin + " must be a nonnegative integer, got: " + text);
    out = out * 10 + static_cast<uint64_t>(c - '0');
  }
  return out;
}

void apply_env_seed(ToolConfig& config) {
  if (const char* env = std::getenv("TWIN_SEED")) {
    config.seed = parse_seed_text(env, "TWIN_SEED");
  }
}

}  // namespace

ToolConfig default_config() {
  ToolConfig config;
  config.simulator.model = default_model();
  config.simulator.scenarios = default_scenarios();

  config.space.params = {
      {"learning_rate", ParamDomain::log_uniform(0.02, 0.3)},
      {"num_leaves", ParamDomain::integer(8, 64)},
      {"min_data_in_leaf", ParamDomain::integer(5, 100)},
      {"feature_fraction", ParamDomain::uniform(0.5, 1.0)},
      {"lambda_l2", ParamDomain::log_uniform(1e-3, 10.0)},
      {"focal_gamma", ParamDomain::uniform(0.0, 4.0)},
  };

  auto jc = [](std::initializer_list<std::pair<const char*, ParamValue>> kv) {
    TrialParams p;
    for (const auto& [name, value] : kv) p.set(name, value);
    return p;
  };
  config.stepwise.groups = {
      {"capacity", {jc({{"num_leaves", int64_t{15}}}), jc({{"num_leaves", int64_t{31}}}),
                    jc({{"num_leaves", int64_t{63}}})}},
      {"learning", {jc({{"learning_rate", 0.05}}), jc({{"learning_rate", 0.1}}),
                    jc({{"learning_rate", 0.2}})}},
      {"regularization",
       {jc({{"lambda_l2", 0.1}, {"focal_gamma", 1.0}}),
        jc({{"lambda_l2", 1.0}, {"focal_gamma", 2.0}}),
        jc({{"lambda_l2", 10.0}, {"focal_gamma", 2.0}})}},
  };
  return config;
}

ToolConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("config is not valid json: ") + e.what());
  }
  check(doc.is_object(), ErrorKind::Config, "config root must be an object");
  reject_unknown_keys(doc, "",
                      {"seed", "simulator", "gbdt", "search_space", "scheduler", "pipeline",
                       "explain", "stepwise", "runs_dir"});

  ToolConfig config = default_config();
  const json empty = json::object();

  config.seed = field<uint64_t>(doc, "", "seed", config.seed);
  config.runs_dir = field<std::string>(doc, "", "runs_dir", config.runs_dir);

  {
    const json& s = section(doc, "simulator", empty);
    reject_unknown_keys(s, "simulator",
                        {"dt", "noise_std", "n_rows", "mixture_weights", "a_matrix", "b_matrix",
                         "settle_steps", "rows_per_episode", "sag_depth", "sensor_offset",
                         "residual_fraction"});
    auto& sim = config.simulator;
    sim.model.dt = field<double>(s, "simulator", "dt", sim.model.dt);
    sim.n_rows = field<size_t>(s, "simulator", "n_rows", sim.n_rows);
    if (s.contains("noise_std")) {
      const auto v = field<std::vector<double>>(s, "simulator", "noise_std", {});
      check(v.size() == kSimStateDim, ErrorKind::Config,
            "config field simulator.noise_std must hold " + std::to_string(kSimStateDim) +
                " values");
      std::copy(v.begin(), v.end(), sim.model.noise_std.begin());
    }
    if (s.contains("a_matrix")) {
      matrix_from_json(s.at("a_matrix"), "simulator.a_matrix", sim.model.a_matrix);
    }
    if (s.contains("b_matrix")) {
      matrix_from_json(s.at("b_matrix"), "simulator.b_matrix", sim.model.b_matrix);
    }
    if (s.contains("mixture_weights")) {
      const auto w = field<std::vector<double>>(s, "simulator", "mixture_weights", {});
      check(w.size() == kNumFaultClasses, ErrorKind::Config,
            "config field simulator.mixture_weights must hold " +
                std::to_string(kNumFaultClasses) + " values");
      check(sim.scenarios.size() == w.size(), ErrorKind::Internal, "scenario defaults missing");
      for (size_t i = 0; i < w.size(); ++i) sim.scenarios[i].weight = w[i];
    }
    sim.generator.settle_steps =
        field<size_t>(s, "simulator", "settle_steps", sim.generator.settle_steps);
    sim.generator.rows_per_episode =
        field<size_t>(s, "simulator", "rows_per_episode", sim.generator.rows_per_episode);
    for (auto& mix : sim.scenarios) {
      mix.scenario.sag_depth =
          field<double>(s, "simulator", "sag_depth", mix.scenario.sag_depth);
      mix.scenario.sensor_offset =
          field<double>(s, "simulator", "sensor_offset", mix.scenario.sensor_offset);
      mix.scenario.residual_fraction =
          field<double>(s, "simulator", "residual_fraction", mix.scenario.residual_fraction);
    }
    sim.model.validate();
  }

  {
    const json& g = section(doc, "gbdt", empty);
    reject_unknown_keys(g, "gbdt",
                        {"num_boost_rounds", "learning_rate", "num_leaves", "min_data_in_leaf",
                         "feature_fraction", "bagging_fraction", "lambda_l2", "max_depth",
                         "focal_gamma", "n_histogram_bins", "early_stopping_rounds",
                         "objective"});
    auto& p = config.gbdt;
    p.num_boost_rounds = field<int>(g, "gbdt", "num_boost_rounds", p.num_boost_rounds);
    p.learning_rate = field<double>(g, "gbdt", "learning_rate", p.learning_rate);
    p.num_leaves = field<int>(g, "gbdt", "num_leaves", p.num_leaves);
    p.min_data_in_leaf = field<int>(g, "gbdt", "min_data_in_leaf", p.min_data_in_leaf);
    p.feature_fraction = field<double>(g, "gbdt", "feature_fraction", p.feature_fraction);
    p.bagging_fraction = field<double>(g, "gbdt", "bagging_fraction", p.bagging_fraction);
    p.lambda_l2 = field<double>(g, "gbdt", "lambda_l2", p.lambda_l2);
    p.max_depth = field<int>(g, "gbdt", "max_depth", p.max_depth);
    p.focal_gamma = field<double>(g, "gbdt", "focal_gamma", p.focal_gamma);
    p.n_histogram_bins = field<int>(g, "gbdt", "n_histogram_bins", p.n_histogram_bins);
    p.early_stopping_rounds =
        field<int>(g, "gbdt", "early_stopping_rounds", p.early_stopping_rounds);
    p.objective = field<std::string>(g, "gbdt", "objective", p.objective);
    try {
      p.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, std::string("config section gbdt: ") + e.what());
    }
  }

  if (doc.contains("search_space")) config.space = space_from_json(doc.at("search_space"));

  {
    const json& s = section(doc, "scheduler", empty);
    reject_unknown_keys(s, "scheduler",
                        {"min_resource", "max_resource", "reduction_factor", "budget",
                         "parallelism", "eval_gamma", "n_warmup", "n_candidates"});
    auto& sch = config.scheduler;
    sch.asha.min_resource = field<int>(s, "scheduler", "min_resource", sch.asha.min_resource);
    sch.asha.max_resource = field<int>(s, "scheduler", "max_resource", sch.asha.max_resource);
    sch.asha.reduction_factor =
        field<int>(s, "scheduler", "reduction_factor", sch.asha.reduction_factor);
    sch.budget = field<int>(s, "scheduler", "budget", sch.budget);
    sch.parallelism = field<int>(s, "scheduler", "parallelism", sch.parallelism);
    sch.eval_gamma = field<double>(s, "scheduler", "eval_gamma", sch.eval_gamma);
    sch.n_warmup = field<int>(s, "scheduler", "n_warmup", sch.n_warmup);
    sch.n_candidates = field<int>(s, "scheduler", "n_candidates", sch.n_candidates);
    try {
      sch.asha.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, std::string("config section scheduler: ") + e.what());
    }
    check(sch.budget >= 1, ErrorKind::Config, "config field scheduler.budget must be >= 1");
    check(sch.parallelism >= 1, ErrorKind::Config,
          "config field scheduler.parallelism must be >= 1");
    check(sch.eval_gamma >= 0.0, ErrorKind::Config,
          "config field scheduler.eval_gamma must be >= 0");
    check(sch.n_warmup >= 0, ErrorKind::Config,
          "config field scheduler.n_warmup must be >= 0");
    check(sch.n_candidates >= 1, ErrorKind::Config,
          "config field scheduler.n_candidates must be >= 1");
  }

  {
    const json& p = section(doc, "pipeline", empty);
    reject_unknown_keys(p, "pipeline",
                        {"ranking", "patience", "max_iterations", "shap_instances",
                         "shap_background"});
    auto& pl = config.pipeline;
    pl.ranking = field<std::string>(p, "pipeline", "ranking", pl.ranking);
    pl.patience = field<int>(p, "pipeline", "patience", pl.patience);
    pl.max_iterations = field<int>(p, "pipeline", "max_iterations", pl.max_iterations);
    pl.shap_instances = field<size_t>(p, "pipeline", "shap_instances", pl.shap_instances);
    pl.shap_background = field<size_t>(p, "pipeline", "shap_background", pl.shap_background);
    ranking_from_string(pl.ranking);  // validates the name
    check(pl.patience >= 1, ErrorKind::Config, "config field pipeline.patience must be >= 1");
    check(pl.max_iterations >= 0, ErrorKind::Config,
          "config field pipeline.max_iterations must be >= 0");
  }

  {
    const json& e = section(doc, "explain", empty);
    reject_unknown_keys(e, "explain", {"background_rows", "instances"});
    config.explain.background_rows =
        field<size_t>(e, "explain", "background_rows", config.explain.background_rows);
    config.explain.instances = field<int>(e, "explain", "instances", config.explain.instances);
    check(config.explain.background_rows >= 1, ErrorKind::Config,
          "config field explain.background_rows must be >= 1");
    check(config.explain.instances >= 1, ErrorKind::Config,
          "config field explain.instances must be >= 1");
  }

  if (doc.contains("stepwise")) {
    config.stepwise.groups = stepwise_from_json(doc.at("stepwise"));
  }

  return config;
}

std::string ToolConfig::to_json() const {
  json doc;
  doc["seed"] = seed;
  doc["runs_dir"] = runs_dir;

  json sim;
  sim["dt"] = simulator.model.dt;
  sim["n_rows"] = simulator.n_rows;
  sim["noise_std"] = simulator.model.noise_std;
  sim["a_matrix"] = simulator.model.a_matrix;
  sim["b_matrix"] = simulator.model.b_matrix;
  json weights = json::array();
  for (const auto& mix : simulator.scenarios) weights.push_back(mix.weight);
  sim["mixture_weights"] = std::move(weights);
  sim["settle_steps"] = simulator.generator.settle_steps;
  sim["rows_per_episode"] = simulator.generator.rows_per_episode;
  if (!simulator.scenarios.empty()) {
    sim["sag_depth"] = simulator.scenarios.front().scenario.sag_depth;
    sim["sensor_offset"] = simulator.scenarios.front().scenario.sensor_offset;
    sim["residual_fraction"] = simulator.scenarios.front().scenario.residual_fraction;
  }
  doc["simulator"] = std::move(sim);

  json g;
  g["num_boost_rounds"] = gbdt.num_boost_rounds;
  g["learning_rate"] = gbdt.learning_rate;
  g["num_leaves"] = gbdt.num_leaves;
  g["min_data_in_leaf"] = gbdt.min_data_in_leaf;
  g["feature_fraction"] = gbdt.feature_fraction;
  g["bagging_fraction"] = gbdt.bagging_fraction;
  g["lambda_l2"] = gbdt.lambda_l2;
  g["max_depth"] = gbdt.max_depth;
  g["focal_gamma"] = gbdt.focal_gamma;
  g["n_histogram_bins"] = gbdt.n_histogram_bins;
  g["early_stopping_rounds"] = gbdt.early_stopping_rounds;
  g["objective"] = gbdt.objective;
  doc["gbdt"] = std::move(g);

  doc["search_space"] = space_to_json(space);

  doc["scheduler"] = {{"min_resource", scheduler.asha.min_resource},
                      {"max_resource", scheduler.asha.max_resource},
                      {"reduction_factor", scheduler.asha.reduction_factor},
                      {"budget", scheduler.budget},
                      {"parallelism", scheduler.parallelism},
                      {"eval_gamma", scheduler.eval_gamma},
                      {"n_warmup", scheduler.n_warmup},
                      {"n_candidates", scheduler.n_candidates}};

  doc["pipeline"] = {{"ranking", pipeline.ranking},
                     {"patience", pipeline.patience},
                     {"max_iterations", pipeline.max_iterations},
                     {"shap_instances", pipeline.shap_instances},
                     {"shap_background", pipeline.shap_background}};

  doc["explain"] = {{"background_rows", explain.background_rows},
                    {"instances", explain.instances}};

  doc["stepwise"] = stepwise_to_json(stepwise.groups);

  return doc.dump(2);
}

ToolConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), ErrorKind::Config, "cannot read config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  ToolConfig config = parse_config(buf.str());
  apply_env_seed(config);
  return config;
}

ToolConfig load_default_config() {
  ToolConfig config = default_config();
  apply_env_seed(config);
  return config;
}

}  // namespace twinopt
