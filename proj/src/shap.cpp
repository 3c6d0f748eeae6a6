#include "twinopt/shap.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "twinopt/objective.hpp"

namespace twinopt {

namespace {

constexpr int kMaxFactorial = 170;  // last n! representable in double

const double* factorial_table() {
  static const auto table = [] {
    std::array<double, kMaxFactorial + 1> t{};
    t[0] = 1.0;
    for (int i = 1; i <= kMaxFactorial; ++i) t[i] = t[i - 1] * static_cast<double>(i);
    return t;
  }();
  return table.data();
}

int route(const TreeNode& node, double v) {
  if (std::isnan(v)) return node.default_left ? node.left : node.right;
  return (v <= node.threshold) ? node.left : node.right;
}

// One tree, one background row. Walks the tree following the
// instance and the background row simultaneously. Where their
// routes diverge on a free feature, both branches are explored:
// the instance-side branch commits the feature to the coalition,
// the background-side branch commits it to the complement. A leaf
// reached with a committed instance features and b committed
// background features contributes with the closed-form Shapley
// kernel weights (a-1)! b! / (a+b)! and a! (b-1)! / (a+b)!.
class PairWalker {
 public:
  PairWalker(const Tree& tree, std::span<const double> x, std::span<const double> z,
             std::span<double> phi)
      : tree_(tree), x_(x), z_(z), phi_(phi), state_(x.size(), 0) {
    path_.reserve(x.size());
  }

  void run() { walk(0); }

 private:
  enum : int8_t { kFree = 0, kInstance = 1, kBackground = 2 };

  void walk(int node_id) {
    const TreeNode& node = tree_.nodes[static_cast<size_t>(node_id)];
    if (node.is_leaf()) {
      settle_leaf(node.value);
      return;
    }
    const size_t f = static_cast<size_t>(node.feature);
    const int to_x = route(node, x_[f]);
    const int to_z = route(node, z_[f]);
    if (to_x == to_z) {
      walk(to_x);
      return;
    }
    switch (state_[f]) {
      case kInstance:
        walk(to_x);
        return;
      case kBackground:
        walk(to_z);
        return;
      default:
        state_[f] = kInstance;
        path_.push_back({static_cast<int>(f), true});
        walk(to_x);
        path_.pop_back();
        state_[f] = kBackground;
        path_.push_back({static_cast<int>(f), false});
        walk(to_z);
        path_.pop_back();
        state_[f] = kFree;
    }
  }

  void settle_leaf(double value) {
    int a = 0;
    for (const auto& step : path_) a += step.instance_side ? 1 : 0;
    const int b = static_cast<int>(path_.size()) - a;
    if (a + b == 0) return;  // no divergence, nothing attributed
    check(a + b <= kMaxFactorial, ErrorKind::Internal, "attribution path exceeds factorial table");
    const double* fact = factorial_table();
    const double denom = fact[a + b];
    const double w_x = (a > 0) ? fact[a - 1] * fact[b] / denom : 0.0;
    const double w_z = (b > 0) ? fact[a] * fact[b - 1] / denom : 0.0;
    for (const auto& step : path_) {
      if (step.instance_side) {
        phi_[static_cast<size_t>(step.feature)] += value * w_x;
      } else {
        phi_[static_cast<size_t>(step.feature)] -= value * w_z;
      }
    }
  }

  struct Step {
    int feature;
    bool instance_side;
  };

  const Tree& tree_;
  std::span<const double> x_;
  std::span<const double> z_;
  std::span<double> phi_;
  std::vector<int8_t> state_;
  std::vector<Step> path_;
};

void check_inputs(const GbdtModel& model, std::span<const double> instance,
                  const Dataset& background) {
  check(instance.size() == model.n_features(), ErrorKind::Shape,
        "instance width " + std::to_string(instance.size()) + " does not match model width " +
            std::to_string(model.n_features()));
  check(background.n_rows() > 0, ErrorKind::EmptyInput, "background dataset is empty");
  check(background.n_features() == model.n_features(), ErrorKind::Shape,
        "background width does not match model width");
}

// mean margin over background rows, per class
std::vector<double> mean_background_margin(const GbdtModel& model, const Dataset& background) {
  const size_t k = static_cast<size_t>(model.n_classes);
  std::vector<double> acc(k, 0.0), margins(k);
  for (size_t i = 0; i < background.n_rows(); ++i) {
    model.predict_margins(background.row(i), margins);
    for (size_t c = 0; c < k; ++c) acc[c] += margins[c];
  }
  for (size_t c = 0; c < k; ++c) acc[c] /= static_cast<double>(background.n_rows());
  return acc;
}

void finish_explanation(ShapExplanation& exp, const GbdtModel& model,
                        std::span<const double> instance) {
  const size_t k = static_cast<size_t>(model.n_classes);
  exp.margins = model.predict_margins(instance);
  exp.class_probabilities = softmax(exp.margins);
  exp.predicted_class = 0;
  for (size_t c = 1; c < k; ++c) {
    if (exp.margins[c] > exp.margins[static_cast<size_t>(exp.predicted_class)]) {
      exp.predicted_class = static_cast<int>(c);
    }
  }
  exp.feature_names = model.feature_names;

  // additivity identity gate: base + sum(contributions) must
  // reproduce the model margin for every class
  for (size_t c = 0; c < k; ++c) {
    double total = exp.base_value[c];
    for (double v : exp.contributions[c]) total += v;
    check(std::abs(total - exp.margins[c]) <= 1e-9, ErrorKind::Internal,
          "explanation fails the additivity identity for class " + std::to_string(c));
  }
}

}  // namespace

ShapExplanation tree_shap(const GbdtModel& model, std::span<const double> instance,
                          const Dataset& background) {
  check_inputs(model, instance, background);
  const size_t k = static_cast<size_t>(model.n_classes);
  const size_t n = model.n_features();

  ShapExplanation exp;
  exp.base_value = mean_background_margin(model, background);
  exp.contributions.assign(k, std::vector<double>(n, 0.0));

  const size_t used = std::min(static_cast<size_t>(model.best_iteration), model.rounds.size());
  std::vector<double> phi(n);
  for (size_t c = 0; c < k; ++c) {
    std::fill(phi.begin(), phi.end(), 0.0);
    for (size_t r = 0; r < used; ++r) {
      const Tree& tree = model.rounds[r][c];
      for (size_t zi = 0; zi < background.n_rows(); ++zi) {
        PairWalker walker(tree, instance, background.row(zi), phi);
        walker.run();
      }
    }
    const double inv = 1.0 / static_cast<double>(background.n_rows());
    for (size_t f = 0; f < n; ++f) exp.contributions[c][f] = phi[f] * inv;
  }

  finish_explanation(exp, model, instance);
  return exp;
}

ShapExplanation brute_force_shap(const GbdtModel& model, std::span<const double> instance,
                                 const Dataset& background) {
  check_inputs(model, instance, background);
  const size_t n = model.n_features();
  check(n <= 15, ErrorKind::OracleTooLarge,
        "subset enumeration refuses more than 15 features, got " + std::to_string(n));
  const size_t k = static_cast<size_t>(model.n_classes);
  const size_t n_subsets = size_t{1} << n;

  // coalition value v(S): mean margin over background rows with
  // features in S replaced by the instance values
  std::vector<double> values(n_subsets * k, 0.0);
  std::vector<double> composed(n), margins(k);
  for (size_t mask = 0; mask < n_subsets; ++mask) {
    double* slot = values.data() + mask * k;
    for (size_t zi = 0; zi < background.n_rows(); ++zi) {
      auto z = background.row(zi);
      for (size_t f = 0; f < n; ++f) {
        composed[f] = (mask >> f) & 1 ? instance[f] : z[f];
      }
      model.predict_margins(composed, margins);
      for (size_t c = 0; c < k; ++c) slot[c] += margins[c];
    }
    for (size_t c = 0; c < k; ++c) slot[c] /= static_cast<double>(background.n_rows());
  }

  ShapExplanation exp;
  exp.base_value.assign(values.begin(), values.begin() + static_cast<ptrdiff_t>(k));
  exp.contributions.assign(k, std::vector<double>(n, 0.0));

  const double* fact = factorial_table();
  for (size_t mask = 0; mask < n_subsets; ++mask) {
    const int s = std::popcount(mask);
    for (size_t f = 0; f < n; ++f) {
      if ((mask >> f) & 1) continue;
      const double weight =
          fact[s] * fact[n - 1 - static_cast<size_t>(s)] / fact[n];
      const size_t with = mask | (size_t{1} << f);
      for (size_t c = 0; c < k; ++c) {
        exp.contributions[c][f] += weight * (values[with * k + c] - values[mask * k + c]);
      }
    }
  }

  finish_explanation(exp, model, instance);
  return exp;
}

void export_decision_plot(const std::vector<ShapExplanation>& explanations, int class_id,
                          const std::string& path) {
  check(!explanations.empty(), ErrorKind::EmptyInput, "no explanations to export");
  const size_t n = explanations.front().feature_names.size();
  const size_t c = static_cast<size_t>(class_id);
  for (const auto& e : explanations) {
    check(e.feature_names == explanations.front().feature_names, ErrorKind::Shape,
          "explanations disagree on the feature schema");
    check(c < e.contributions.size(), ErrorKind::Shape, "class id out of range");
  }

  // descending mean |contribution|, ties by lowest feature index
  std::vector<double> mean_abs(n, 0.0);
  for (const auto& e : explanations) {
    for (size_t f = 0; f < n; ++f) mean_abs[f] += std::abs(e.contributions[c][f]);
  }
  for (double& v : mean_abs) v /= static_cast<double>(explanations.size());
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return mean_abs[a] > mean_abs[b]; });

  std::ofstream out(path, std::ios::binary);
  check(out.good(), ErrorKind::Io, "cannot open for writing: " + path);

  out << "row";
  for (size_t i = 0; i < explanations.size(); ++i) out << ",instance_" << i;
  out << "\n";

  out << "base";
  for (const auto& e : explanations) out << "," << format_double(e.base_value[c]);
  out << "\n";

  std::vector<double> running(explanations.size());
  for (size_t i = 0; i < explanations.size(); ++i) running[i] = explanations[i].base_value[c];
  for (size_t f : order) {
    out << explanations.front().feature_names[f];
    for (size_t i = 0; i < explanations.size(); ++i) {
      running[i] += explanations[i].contributions[c][f];
      out << "," << format_double(running[i]);
    }
    out << "\n";
  }

  out << "final_probability";
  for (const auto& e : explanations) out << "," << format_double(e.class_probabilities[c]);
  out << "\n";
  check(out.good(), ErrorKind::Io, "write failed: " + path);
}

void export_explanations_json(const std::vector<ShapExplanation>& explanations,
                              const std::string& path) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : explanations) {
    arr.push_back({{"base_value", e.base_value},
                   {"contributions", e.contributions},
                   {"probabilities", e.class_probabilities},
                   {"predicted_class", e.predicted_class},
                   {"feature_names", e.feature_names}});
  }
  std::ofstream out(path, std::ios::binary);
  check(out.good(), ErrorKind::Io, "cannot open for writing: " + path);
  out << arr.dump(2) << "\n";
  check(out.good(), ErrorKind::Io, "write failed: " + path);
}

}  // namespace twinopt
