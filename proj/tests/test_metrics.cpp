#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "twinopt/metrics.hpp"

using namespace twinopt;

TEST_CASE("a small two-class example reproduces the hand-worked table") {
  // true (0,0,1,1) vs predicted (0,1,1,1): class 0 has precision 1,
  // recall 1/2; class 1 has precision 2/3, recall 1
  const std::vector<int> y_true = {0, 0, 1, 1};
  const std::vector<int> y_pred = {0, 1, 1, 1};
  const ClassificationReport r = classification_report(y_true, y_pred, {"neg", "pos"});

  REQUIRE(r.precision.size() == 2);
  CHECK(r.precision[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.recall[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.f1[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.precision[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.recall[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.f1[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(r.accuracy == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(r.macro_precision == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(r.macro_recall == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(r.macro_f1 == doctest::Approx((2.0 / 3.0 + 0.8) / 2.0).epsilon(1e-15));
  CHECK(r.support == std::vector<int64_t>{2, 2});
  CHECK(r.total == 4);

  // confusion[true][predicted]
  CHECK(r.confusion[0][0] == 1);
  CHECK(r.confusion[0][1] == 1);
  CHECK(r.confusion[1][0] == 0);
  CHECK(r.confusion[1][1] == 2);

  // weighted averages with equal support equal the macro ones
  CHECK(r.weighted_f1 == doctest::Approx(r.macro_f1).epsilon(1e-15));
}

TEST_CASE("perfect predictions score one everywhere") {
  const std::vector<int> y = {0, 1, 2, 2, 1, 0, 2};
  const ClassificationReport r = classification_report(y, y, {"a", "b", "c"});
  for (int c = 0; c < 3; ++c) {
    CHECK(r.precision[static_cast<size_t>(c)] == 1.0);
    CHECK(r.recall[static_cast<size_t>(c)] == 1.0);
    CHECK(r.f1[static_cast<size_t>(c)] == 1.0);
  }
  CHECK(r.accuracy == 1.0);
  CHECK(r.macro_f1 == 1.0);
  CHECK(r.weighted_f1 == 1.0);
}

TEST_CASE("zero denominators yield zero instead of dividing") {
  // class 2 never appears in truth or prediction: precision, recall
  // and f1 are all defined as zero for it
  const std::vector<int> y_true = {0, 0, 1, 1};
  const std::vector<int> y_pred = {1, 1, 0, 0};
  const ClassificationReport r = classification_report(y_true, y_pred, {"a", "b", "c"});
  CHECK(r.precision[2] == 0.0);
  CHECK(r.recall[2] == 0.0);
  CHECK(r.f1[2] == 0.0);
  CHECK(r.accuracy == 0.0);
  // f1 of a class with zero precision and zero recall is zero
  CHECK(r.f1[0] == 0.0);
  CHECK(r.f1[1] == 0.0);
}

TEST_CASE("weighted recall always equals accuracy") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int n_classes = 2 + static_cast<int>(rng.uniform_int(4));
    std::vector<int> y_true, y_pred;
    for (int i = 0; i < 200; ++i) {
      y_true.push_back(static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n_classes))));
      y_pred.push_back(static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n_classes))));
    }
    std::vector<std::string> names;
    for (int c = 0; c < n_classes; ++c) names.push_back("c" + std::to_string(c));
    const ClassificationReport r = classification_report(y_true, y_pred, names);
    CHECK(r.weighted_recall == doctest::Approx(r.accuracy).epsilon(1e-12));

    // macro f1 is bounded by the extremes of the per-class f1
    double lo = 1.0, hi = 0.0;
    for (double f : r.f1) {
      lo = std::min(lo, f);
      hi = std::max(hi, f);
    }
    CHECK(r.macro_f1 >= lo - 1e-12);
    CHECK(r.macro_f1 <= hi + 1e-12);
  }
}

TEST_CASE("the text report keeps its fixed table layout") {
  const std::vector<int> y_true = {0, 0, 1, 1};
  const std::vector<int> y_pred = {0, 1, 1, 1};
  const ClassificationReport r = classification_report(y_true, y_pred, {"neg", "pos"});
  const std::string text = r.to_text();

  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);

  // header, one row per class, macro and weighted rows, accuracy row
  REQUIRE(lines.size() >= 6);
  CHECK(lines[0].find("Precision") != std::string::npos);
  CHECK(lines[0].find("Recall") != std::string::npos);
  CHECK(lines[0].find("F1-score") != std::string::npos);
  CHECK(lines[1].find("neg") != std::string::npos);
  CHECK(lines[2].find("pos") != std::string::npos);

  bool has_macro = false, has_weighted = false, has_accuracy = false;
  for (const auto& l : lines) {
    if (l.find("Macro average") != std::string::npos) has_macro = true;
    if (l.find("Weighted average") != std::string::npos) has_weighted = true;
    if (l.find("Accuracy") != std::string::npos) has_accuracy = true;
  }
  CHECK(has_macro);
  CHECK(has_weighted);
  CHECK(has_accuracy);

  // fixed-width cells: the name column pads to the widest label
  // ("Weighted average", 16) and each numeric cell is 9 characters
  CHECK(lines[0].size() == 16 + 33);  // header names carry their own spacing
  CHECK(lines[1].size() == 16 + 27);
  CHECK(lines[2].size() == 16 + 27);
  // two-decimal numbers
  CHECK(lines[1].find("1.00") != std::string::npos);
  CHECK(lines[1].find("0.50") != std::string::npos);
  CHECK(lines[1].find("0.67") != std::string::npos);
}

TEST_CASE("the json report round-trips the key figures") {
  const std::vector<int> y_true = {0, 0, 1, 1, 1};
  const std::vector<int> y_pred = {0, 1, 1, 1, 0};
  const ClassificationReport r = classification_report(y_true, y_pred, {"neg", "pos"});
  const auto doc = nlohmann::json::parse(r.to_json());
  CHECK(doc.at("accuracy").get<double>() == doctest::Approx(r.accuracy).epsilon(1e-15));
  CHECK(doc.at("macro").at("f1").get<double>() == doctest::Approx(r.macro_f1).epsilon(1e-15));
  CHECK(doc.at("weighted").at("recall").get<double>() ==
        doctest::Approx(r.weighted_recall).epsilon(1e-15));
  CHECK(doc.at("class_names") == nlohmann::json({"neg", "pos"}));
  CHECK(doc.at("precision")[0].get<double>() ==
        doctest::Approx(r.precision[0]).epsilon(1e-15));
  CHECK(doc.at("confusion").size() == 2);
  CHECK(doc.at("support") == nlohmann::json({2, 3}));
  CHECK(doc.at("total").get<int64_t>() == 5);
}

TEST_CASE("report inputs are validated") {
  CHECK_THROWS_AS(classification_report({}, {}, {"a", "b"}), Error);
  CHECK_THROWS_AS(classification_report({0, 1}, {0}, {"a", "b"}), Error);
  CHECK_THROWS_AS(classification_report({0, 2}, {0, 1}, {"a", "b"}), Error);   // label 2 of 2
  CHECK_THROWS_AS(classification_report({0, -1}, {0, 1}, {"a", "b"}), Error);  // negative
  CHECK_THROWS_AS(classification_report({0, 1}, {0, 2}, {"a", "b"}), Error);
}
