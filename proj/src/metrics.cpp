#include "twinopt/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace twinopt {

ClassificationReport classification_report(const std::vector<int>& y_true,
                                           const std::vector<int>& y_pred,
                                           const std::vector<std::string>& class_names) {
  check(!y_true.empty(), ErrorKind::EmptyInput, "no samples to score");
  check(y_true.size() == y_pred.size(), ErrorKind::Shape,
        "label and prediction lengths differ");
  const int k = static_cast<int>(class_names.size());
  check(k >= 2, ErrorKind::Config, "need at least two class names");

  ClassificationReport rep;
  rep.class_names = class_names;
  rep.confusion.assign(static_cast<size_t>(k), std::vector<int64_t>(static_cast<size_t>(k), 0));
  rep.total = static_cast<int64_t>(y_true.size());

  for (size_t i = 0; i < y_true.size(); ++i) {
    check(y_true[i] >= 0 && y_true[i] < k, ErrorKind::InvalidData,
          "label out of range at row " + std::to_string(i));
    check(y_pred[i] >= 0 && y_pred[i] < k, ErrorKind::InvalidData,
          "prediction out of range at row " + std::to_string(i));
    rep.confusion[static_cast<size_t>(y_true[i])][static_cast<size_t>(y_pred[i])] += 1;
  }

  rep.precision.assign(static_cast<size_t>(k), 0.0);
  rep.recall.assign(static_cast<size_t>(k), 0.0);
  rep.f1.assign(static_cast<size_t>(k), 0.0);
  rep.support.assign(static_cast<size_t>(k), 0);

  int64_t trace = 0;
  for (int c = 0; c < k; ++c) {
    const size_t cc = static_cast<size_t>(c);
    int64_t tp = rep.confusion[cc][cc];
    int64_t fp = 0, fn = 0;
    for (int o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += rep.confusion[static_cast<size_t>(o)][cc];
      fn += rep.confusion[cc][static_cast<size_t>(o)];
    }
    trace += tp;
    rep.support[cc] = tp + fn;
    rep.precision[cc] = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    rep.recall[cc] = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double pr = rep.precision[cc] + rep.recall[cc];
    rep.f1[cc] = pr > 0.0 ? 2.0 * rep.precision[cc] * rep.recall[cc] / pr : 0.0;
  }

  for (int c = 0; c < k; ++c) {
    const size_t cc = static_cast<size_t>(c);
    const double w = static_cast<double>(rep.support[cc]) / static_cast<double>(rep.total);
    rep.macro_precision += rep.precision[cc] / static_cast<double>(k);
    rep.macro_recall += rep.recall[cc] / static_cast<double>(k);
    rep.macro_f1 += rep.f1[cc] / static_cast<double>(k);
    rep.weighted_precision += w * rep.precision[cc];
    rep.weighted_recall += w * rep.recall[cc];
    rep.weighted_f1 += w * rep.f1[cc];
  }
  rep.accuracy = static_cast<double>(trace) / static_cast<double>(rep.total);
  return rep;
}

std::string ClassificationReport::to_text() const {
  size_t name_width = std::string("Weighted average").size();
  for (const auto& name : class_names) name_width = std::max(name_width, name.size());

  auto cell = [](double v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%9.2f", v);
    return std::string(buf);
  };

  std::ostringstream out;
  out << std::string(name_width, ' ') << "  Precision     Recall   F1-score\n";
  for (size_t c = 0; c < class_names.size(); ++c) {
    out << class_names[c] << std::string(name_width - class_names[c].size(), ' ')
        << cell(precision[c]) << cell(recall[c]) << cell(f1[c]) << "\n";
  }
  out << "Macro average" << std::string(name_width - 13, ' ') << cell(macro_precision)
      << cell(macro_recall) << cell(macro_f1) << "\n";
  out << "Weighted average" << std::string(name_width - 16, ' ') << cell(weighted_precision)
      << cell(weighted_recall) << cell(weighted_f1) << "\n";
  out << "Accuracy" << std::string(name_width - 8, ' ') << std::string(18, ' ')
      << cell(accuracy) << "\n";
  return out.str();
}

std::string ClassificationReport::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["class_names"] = class_names;
  j["confusion"] = confusion;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["support"] = support;
  j["macro"] = {{"precision", macro_precision}, {"recall", macro_recall}, {"f1", macro_f1}};
  j["weighted"] = {{"precision", weighted_precision},
                   {"recall", weighted_recall},
                   {"f1", weighted_f1}};
  j["accuracy"] = accuracy;
  j["total"] = total;
  return j.dump(2);
}

}  // namespace twinopt
