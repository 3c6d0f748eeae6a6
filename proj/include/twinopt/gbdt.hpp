#pragma once

// ------------------------------------------------------------
// gradient-boosted decision trees for multi-class classification:
// quantile-histogram split finding, leaf-wise (best-first) growth,
// second-order boosting with a pluggable objective.
//
// Training is incremental (train_until) so a scheduler can stop a
// model at rung checkpoints without retraining from scratch.
// ------------------------------------------------------------

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twinopt/dataset.hpp"
#include "twinopt/objective.hpp"

namespace twinopt {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  bool default_left = true;  // routing for non-finite inputs
  double value = 0.0;        // leaf margin contribution, already shrunk
  double gain = 0.0;         // split gain, kept for importance

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const;
  int n_leaves() const;
};

struct GbdtParams {
  int num_boost_rounds = 200;
  double learning_rate = 0.1;
  int num_leaves = 31;
  int min_data_in_leaf = 20;
  double feature_fraction = 1.0;
  double bagging_fraction = 1.0;
  double lambda_l2 = 1.0;
  int max_depth = 0;  // 0 = unlimited
  double focal_gamma = 2.0;
  int n_histogram_bins = 255;
  int early_stopping_rounds = 0;  // 0 = off
  std::string objective = "focal";  // focal | cross_entropy

  void validate() const;
};

// objective instance described by the params (focal gamma etc.)
std::shared_ptr<const Objective> make_objective(const GbdtParams& params, int n_classes);

enum class ImportanceKind { Gain, SplitCount };

struct GbdtModel {
  int n_classes = 0;
  double learning_rate = 0.1;
  std::vector<double> base_score;         // per-class initial margin
  std::vector<std::vector<Tree>> rounds;  // [round][class]
  std::vector<std::string> feature_names;
  GbdtParams params;
  int best_iteration = 0;  // rounds used for prediction
  std::string objective_name;

  size_t n_features() const { return feature_names.size(); }

  // raw per-class margins accumulated through best_iteration
  void predict_margins(std::span<const double> row, std::span<double> out) const;
  std::vector<double> predict_margins(std::span<const double> row) const;

  // per-row per-class probabilities (row-major)
  std::vector<double> predict_proba(const Dataset& data) const;
  std::vector<double> predict_proba_row(std::span<const double> row) const;
  std::vector<int> predict_labels(const Dataset& data) const;

  std::vector<double> feature_importance(ImportanceKind kind) const;

  std::string to_json() const;
  static GbdtModel from_json(const std::string& text);
  void save(const std::string& path) const;
  static GbdtModel load(const std::string& path);
};

class GbdtTrainer {
 public:
  GbdtTrainer(const Dataset& train, const Dataset* valid, const GbdtParams& params,
              std::shared_ptr<const Objective> objective, uint64_t seed);
  ~GbdtTrainer();
  GbdtTrainer(const GbdtTrainer&) = delete;
  GbdtTrainer& operator=(const GbdtTrainer&) = delete;

  // boosts until `round_count` rounds exist (or early stopping fires);
  // returns the number of rounds now trained
  int train_until(int round_count);

  int rounds_trained() const;
  bool stopped_early() const;
  double train_loss() const;
  double valid_loss() const;      // requires a validation set
  double valid_accuracy() const;  // requires a validation set

  // validation loss under a different objective than the one
  // being optimized (keeps tuned-gamma trials comparable)
  double valid_loss_under(const Objective& eval_objective) const;

  // snapshot truncated to best_iteration
  GbdtModel finalize() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// one-shot training to params.num_boost_rounds
GbdtModel fit(const Dataset& train, const Dataset* valid, const GbdtParams& params,
              std::shared_ptr<const Objective> objective, uint64_t seed);

}  // namespace twinopt
