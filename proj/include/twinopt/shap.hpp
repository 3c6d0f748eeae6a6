#pragma once

// ------------------------------------------------------------
// per-class Shapley attributions for the tree ensemble.
//
// tree_shap computes exact interventional Shapley values
// (marginalized over a background dataset) by walking each tree
// once per (instance, background row) pair. brute_force_shap is
// the subset-enumeration oracle for small models. Every
// explanation is checked against the additivity identity
// base + sum(contributions) = margin before it is returned.
// ------------------------------------------------------------

#include <span>
#include <string>
#include <vector>

#include "twinopt/dataset.hpp"
#include "twinopt/gbdt.hpp"

namespace twinopt {

struct ShapExplanation {
  std::vector<double> base_value;                  // per class: expected margin over background
  std::vector<std::vector<double>> contributions;  // [class][feature]
  int predicted_class = 0;
  std::vector<double> class_probabilities;
  std::vector<double> margins;  // per class: base + sum of contributions
  std::vector<std::string> feature_names;
};

// exact interventional tree-Shapley values, all classes at once
ShapExplanation tree_shap(const GbdtModel& model, std::span<const double> instance,
                          const Dataset& background);

// Shapley values by full coalition enumeration; refuses > 15 features
ShapExplanation brute_force_shap(const GbdtModel& model, std::span<const double> instance,
                                 const Dataset& background);

// cumulative contribution paths for one class, one column per
// instance, rows ordered by descending mean |contribution|
void export_decision_plot(const std::vector<ShapExplanation>& explanations, int class_id,
                          const std::string& path);

// batch export: one json object per explanation
void export_explanations_json(const std::vector<ShapExplanation>& explanations,
                              const std::string& path);

}  // namespace twinopt
