#pragma once

// ------------------------------------------------------------
// multi-class classification metrics: confusion matrix,
// per-class precision/recall/F1, macro and support-weighted
// averages, accuracy, and the fixed-layout text report
// (per-class rows, macro average, weighted average, accuracy).
// ------------------------------------------------------------

#include <string>
#include <vector>

#include "twinopt/common.hpp"

namespace twinopt {

struct ClassificationReport {
  std::vector<std::string> class_names;
  std::vector<std::vector<int64_t>> confusion;  // [true][predicted]
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<int64_t> support;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
  int64_t total = 0;

  std::string to_text() const;
  std::string to_json() const;
};

ClassificationReport classification_report(const std::vector<int>& y_true,
                                           const std::vector<int>& y_pred,
                                           const std::vector<std::string>& class_names);

}  // namespace twinopt
