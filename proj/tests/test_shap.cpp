#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "twinopt/shap.hpp"

using namespace twinopt;

namespace {

// a single stump on feature 0 (threshold 0.5, left leaf 1.0, right leaf 3.0)
// for class 0; class 1 carries an all-zero stump so margins stay two-class
GbdtModel stump_model(int n_features) {
  GbdtModel m;
  m.n_classes = 2;
  m.base_score = {0.0, 0.0};
  for (int f = 0; f < n_features; ++f) m.feature_names.push_back("f" + std::to_string(f));
  m.objective_name = "softmax_cross_entropy";

  Tree active;
  active.nodes.resize(3);
  active.nodes[0].feature = 0;
  active.nodes[0].threshold = 0.5;
  active.nodes[0].left = 1;
  active.nodes[0].right = 2;
  active.nodes[1].value = 1.0;
  active.nodes[2].value = 3.0;

  Tree zero;
  zero.nodes.resize(1);
  zero.nodes[0].value = 0.0;

  m.rounds.push_back({active, zero});
  m.best_iteration = 1;
  return m;
}

Dataset background_of(int n_features, const std::vector<std::vector<double>>& rows) {
  Dataset d;
  for (int f = 0; f < n_features; ++f) d.feature_names.push_back("f" + std::to_string(f));
  for (const auto& r : rows) d.append_row(r, 0);
  return d;
}

Dataset random_dataset(int rows, int n_features, int n_classes, uint64_t seed) {
  Dataset d;
  for (int f = 0; f < n_features; ++f) d.feature_names.push_back("f" + std::to_string(f));
  Rng rng(seed);
  for (int r = 0; r < rows; ++r) {
    std::vector<double> row(static_cast<size_t>(n_features));
    for (auto& v : row) v = rng.uniform(-2.0, 2.0);
    int label = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n_classes)));
    d.append_row(row, label);
  }
  // guarantee every class appears
  for (int c = 0; c < n_classes; ++c) d.labels[static_cast<size_t>(c)] = c;
  return d;
}

double max_abs_diff(const ShapExplanation& a, const ShapExplanation& b) {
  double worst = 0.0;
  for (size_t c = 0; c < a.contributions.size(); ++c) {
    worst = std::max(worst, std::abs(a.base_value[c] - b.base_value[c]));
    for (size_t f = 0; f < a.contributions[c].size(); ++f) {
      worst = std::max(worst, std::abs(a.contributions[c][f] - b.contributions[c][f]));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("a hand-worked stump has the expected attributions") {
  // background {x0=0, x0=1}: expected margin = (1 + 3) / 2 = 2.
  // explaining x0=1 (margin 3) gives the single live feature +1,
  // and an unused second feature exactly 0.
  const GbdtModel m = stump_model(2);
  const Dataset bg = background_of(2, {{0.0, 5.0}, {1.0, -5.0}});
  const std::vector<double> instance = {1.0, 7.0};

  const ShapExplanation ex = tree_shap(m, instance, bg);
  REQUIRE(ex.contributions.size() == 2);
  REQUIRE(ex.contributions[0].size() == 2);
  CHECK(ex.base_value[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ex.contributions[0][0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ex.contributions[0][1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ex.margins[0] == doctest::Approx(3.0).epsilon(1e-12));
  // the zero tree contributes nothing anywhere
  CHECK(ex.base_value[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ex.contributions[1][0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ex.predicted_class == 0);

  // and the enumeration oracle agrees bit-for-bit on this tiny case
  const ShapExplanation brute = brute_force_shap(m, instance, bg);
  CHECK(max_abs_diff(ex, brute) < 1e-12);
}

TEST_CASE("tree walker matches the enumeration oracle on trained models") {
  // random small forests over random backgrounds; the two algorithms are
  // entirely independent implementations so agreement pins both down
  Rng meta(99);
  for (int trial = 0; trial < 20; ++trial) {
    const int n_features = 2 + static_cast<int>(meta.uniform_int(3));  // 2..4
    const int n_classes = 2 + static_cast<int>(meta.uniform_int(2));   // 2..3
    const Dataset train = random_dataset(60, n_features, n_classes, 1000 + trial);
    GbdtParams p;
    p.num_boost_rounds = 3;
    p.num_leaves = 4;
    p.max_depth = 3;
    p.min_data_in_leaf = 5;
    p.objective = "cross_entropy";
    const GbdtModel m = fit(train, nullptr, p, make_objective(p, n_classes), 7 + trial);

    const Dataset bg = random_dataset(1 + static_cast<int>(meta.uniform_int(16)), n_features,
                                      n_classes, 2000 + trial);
    Rng point(3000 + static_cast<uint64_t>(trial));
    std::vector<double> instance(static_cast<size_t>(n_features));
    for (auto& v : instance) v = point.uniform(-2.0, 2.0);

    const ShapExplanation fast = tree_shap(m, instance, bg);
    const ShapExplanation brute = brute_force_shap(m, instance, bg);
    CHECK(max_abs_diff(fast, brute) < 1e-10);
  }
}

TEST_CASE("attributions sum to the margin gap for every class") {
  const Dataset train = random_dataset(120, 5, 3, 17);
  GbdtParams p;
  p.num_boost_rounds = 10;
  p.num_leaves = 8;
  p.min_data_in_leaf = 5;
  const GbdtModel m = fit(train, nullptr, p, make_objective(p, 3), 5);
  const Dataset bg = random_dataset(32, 5, 3, 18);

  for (size_t i = 0; i < 8; ++i) {
    const auto row = train.row(i);
    const ShapExplanation ex = tree_shap(m, row, bg);
    const auto margins = m.predict_margins(row);
    for (int c = 0; c < 3; ++c) {
      double total = ex.base_value[static_cast<size_t>(c)];
      for (double v : ex.contributions[static_cast<size_t>(c)]) total += v;
      CHECK(std::abs(total - margins[static_cast<size_t>(c)]) < 1e-9);
      CHECK(ex.margins[static_cast<size_t>(c)] ==
            doctest::Approx(margins[static_cast<size_t>(c)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("the enumeration oracle refuses models above its feature budget") {
  const GbdtModel m = stump_model(16);
  const Dataset bg = background_of(16, {std::vector<double>(16, 0.0)});
  const std::vector<double> instance(16, 1.0);
  try {
    brute_force_shap(m, instance, bg);
    FAIL("expected an error for 16 features");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::OracleTooLarge);
  }
  // the tree walker itself has no such limit
  CHECK_NOTHROW(tree_shap(m, instance, bg));
}

TEST_CASE("shape mismatches between model, instance and background are rejected") {
  const GbdtModel m = stump_model(2);
  const Dataset bg_narrow = background_of(1, {{0.0}});
  const std::vector<double> instance = {1.0, 2.0};
  CHECK_THROWS_AS(tree_shap(m, instance, bg_narrow), Error);
  const Dataset bg = background_of(2, {{0.0, 0.0}});
  const std::vector<double> short_instance = {1.0};
  CHECK_THROWS_AS(tree_shap(m, short_instance, bg), Error);
  Dataset empty_bg;
  empty_bg.feature_names = bg.feature_names;
  CHECK_THROWS_AS(tree_shap(m, instance, empty_bg), Error);
}

TEST_CASE("decision plot export is ordered and cumulative") {
  const Dataset train = random_dataset(100, 4, 2, 23);
  GbdtParams p;
  p.num_boost_rounds = 8;
  p.num_leaves = 6;
  p.min_data_in_leaf = 5;
  const GbdtModel m = fit(train, nullptr, p, make_objective(p, 2), 3);
  const Dataset bg = random_dataset(16, 4, 2, 24);

  std::vector<ShapExplanation> exps;
  for (size_t i = 0; i < 3; ++i) exps.push_back(tree_shap(m, train.row(i), bg));

  const std::string path =
      (std::filesystem::temp_directory_path() / "twinopt_decision_plot.csv").string();
  export_decision_plot(exps, 1, path);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  // header + base + one cumulative row per feature + final probability:
  // 4 features -> 7 lines
  REQUIRE(lines.size() == 7);
  CHECK(lines[0].rfind("row,", 0) == 0);
  CHECK(lines[1].rfind("base,", 0) == 0);
  CHECK(lines.back().rfind("final_probability,", 0) == 0);

  // parse the numeric columns back: rows are base, then cumulative paths,
  // then the softmax probability; the path must land on the class margin
  std::vector<std::vector<double>> cols(exps.size());
  for (size_t r = 1; r < lines.size(); ++r) {
    std::stringstream ss(lines[r]);
    std::string cell;
    std::getline(ss, cell, ',');
    size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      cols[c].push_back(std::stod(cell));
      ++c;
    }
    REQUIRE(c == exps.size());
  }
  const size_t n_feat = exps[0].feature_names.size();
  for (size_t e = 0; e < exps.size(); ++e) {
    CHECK(cols[e].front() == doctest::Approx(exps[e].base_value[1]).epsilon(1e-12));
    CHECK(cols[e][n_feat] == doctest::Approx(exps[e].margins[1]).epsilon(1e-9));
    CHECK(cols[e].back() == doctest::Approx(exps[e].class_probabilities[1]).epsilon(1e-9));
  }

  // feature rows must be ordered by descending mean |contribution|
  std::vector<double> mean_abs;
  for (size_t r = 2; r + 1 < lines.size(); ++r) {
    const std::string name = lines[r].substr(0, lines[r].find(','));
    size_t fi = 0;
    while (exps[0].feature_names[fi] != name) ++fi;
    double acc = 0.0;
    for (const auto& ex : exps) acc += std::abs(ex.contributions[1][fi]);
    mean_abs.push_back(acc / static_cast<double>(exps.size()));
  }
  REQUIRE(mean_abs.size() == n_feat);
  for (size_t i = 1; i < mean_abs.size(); ++i) CHECK(mean_abs[i - 1] >= mean_abs[i] - 1e-15);

  std::remove(path.c_str());
  CHECK_THROWS_AS(export_decision_plot(exps, 7, path), Error);
  CHECK_THROWS_AS(export_decision_plot({}, 0, path), Error);
}

TEST_CASE("explanation json export parses back with full structure") {
  const GbdtModel m = stump_model(2);
  const Dataset bg = background_of(2, {{0.0, 0.0}, {1.0, 1.0}});
  std::vector<ShapExplanation> exps;
  exps.push_back(tree_shap(m, std::vector<double>{1.0, 7.0}, bg));
  exps.push_back(tree_shap(m, std::vector<double>{0.0, -1.0}, bg));

  const std::string path =
      (std::filesystem::temp_directory_path() / "twinopt_explanations.json").string();
  export_explanations_json(exps, path);

  std::ifstream in(path);
  REQUIRE(in.good());
  const auto doc = nlohmann::json::parse(in);
  REQUIRE(doc.is_array());
  REQUIRE(doc.size() == 2);
  for (const auto& item : doc) {
    CHECK(item.contains("base_value"));
    CHECK(item.contains("contributions"));
    CHECK(item.contains("predicted_class"));
    CHECK(item.contains("probabilities"));
    CHECK(item.contains("feature_names"));
  }
  CHECK(doc[0]["predicted_class"].get<int>() == exps[0].predicted_class);
  CHECK(doc[0]["contributions"][0][0].get<double>() ==
        doctest::Approx(exps[0].contributions[0][0]).epsilon(1e-15));
  std::remove(path.c_str());
}
