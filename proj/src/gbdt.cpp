#include "twinopt/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace twinopt {

using json = nlohmann::ordered_json;

// ------------------------------------------------------------
// trees
// ------------------------------------------------------------

double Tree::predict(std::span<const double> row) const {
  int node = 0;
  while (!nodes[static_cast<size_t>(node)].is_leaf()) {
    const TreeNode& n = nodes[static_cast<size_t>(node)];
    const double v = row[static_cast<size_t>(n.feature)];
    if (std::isnan(v)) {
      node = n.default_left ? n.left : n.right;
    } else {
      node = (v <= n.threshold) ? n.left : n.right;
    }
  }
  return nodes[static_cast<size_t>(node)].value;
}

int Tree::n_leaves() const {
  int count = 0;
  for (const auto& n : nodes) count += n.is_leaf() ? 1 : 0;
  return count;
}

// ------------------------------------------------------------
// params
// ------------------------------------------------------------

void GbdtParams::validate() const {
  check(num_boost_rounds >= 1, ErrorKind::Config, "num_boost_rounds must be >= 1");
  check(learning_rate > 0.0 && learning_rate <= 1.0, ErrorKind::Config,
        "learning_rate must be in (0, 1]");
  check(num_leaves >= 2, ErrorKind::Config, "num_leaves must be >= 2");
  check(min_data_in_leaf >= 1, ErrorKind::Config, "min_data_in_leaf must be >= 1");
  check(feature_fraction > 0.0 && feature_fraction <= 1.0, ErrorKind::Config,
        "feature_fraction must be in (0, 1]");
  check(bagging_fraction > 0.0 && bagging_fraction <= 1.0, ErrorKind::Config,
        "bagging_fraction must be in (0, 1]");
  check(lambda_l2 >= 0.0, ErrorKind::Config, "lambda_l2 must be >= 0");
  check(max_depth >= 0, ErrorKind::Config, "max_depth must be >= 0 (0 = unlimited)");
  check(focal_gamma >= 0.0, ErrorKind::Config, "focal_gamma must be >= 0");
  check(n_histogram_bins >= 2 && n_histogram_bins <= 65535, ErrorKind::Config,
        "n_histogram_bins must be in [2, 65535]");
  check(early_stopping_rounds >= 0, ErrorKind::Config,
        "early_stopping_rounds must be >= 0 (0 = off)");
  check(objective == "focal" || objective == "cross_entropy", ErrorKind::Config,
        "objective must be focal or cross_entropy");
}

std::shared_ptr<const Objective> make_objective(const GbdtParams& params, int n_classes) {
  if (params.objective == "cross_entropy") {
    return std::make_shared<SoftmaxCrossEntropy>(n_classes);
  }
  check(params.objective == "focal", ErrorKind::Config,
        "objective must be focal or cross_entropy, got: " + params.objective);
  return std::make_shared<MulticlassFocal>(n_classes, params.focal_gamma);
}

// ------------------------------------------------------------
// model
// ------------------------------------------------------------

void GbdtModel::predict_margins(std::span<const double> row, std::span<double> out) const {
  check(row.size() == n_features(), ErrorKind::Shape,
        "row width " + std::to_string(row.size()) + " does not match model feature count " +
            std::to_string(n_features()));
  for (int k = 0; k < n_classes; ++k) out[static_cast<size_t>(k)] = base_score[static_cast<size_t>(k)];
  const size_t used = std::min(static_cast<size_t>(best_iteration), rounds.size());
  for (size_t r = 0; r < used; ++r) {
    for (int k = 0; k < n_classes; ++k) {
      out[static_cast<size_t>(k)] += rounds[r][static_cast<size_t>(k)].predict(row);
    }
  }
}

std::vector<double> GbdtModel::predict_margins(std::span<const double> row) const {
  std::vector<double> out(static_cast<size_t>(n_classes));
  predict_margins(row, out);
  return out;
}

std::vector<double> GbdtModel::predict_proba(const Dataset& data) const {
  const size_t k = static_cast<size_t>(n_classes);
  std::vector<double> out(data.n_rows() * k);
  std::vector<double> margins(k);
  for (size_t i = 0; i < data.n_rows(); ++i) {
    predict_margins(data.row(i), margins);
    softmax_into(margins, std::span<double>(out.data() + i * k, k));
  }
  return out;
}

std::vector<double> GbdtModel::predict_proba_row(std::span<const double> row) const {
  auto margins = predict_margins(row);
  return softmax(margins);
}

std::vector<int> GbdtModel::predict_labels(const Dataset& data) const {
  std::vector<int> out(data.n_rows());
  std::vector<double> margins(static_cast<size_t>(n_classes));
  for (size_t i = 0; i < data.n_rows(); ++i) {
    predict_margins(data.row(i), margins);
    int best = 0;
    for (int k = 1; k < n_classes; ++k) {
      if (margins[static_cast<size_t>(k)] > margins[static_cast<size_t>(best)]) best = k;
    }
    out[i] = best;
  }
  return out;
}

std::vector<double> GbdtModel::feature_importance(ImportanceKind kind) const {
  std::vector<double> imp(n_features(), 0.0);
  const size_t used = std::min(static_cast<size_t>(best_iteration), rounds.size());
  for (size_t r = 0; r < used; ++r) {
    for (const auto& tree : rounds[r]) {
      for (const auto& node : tree.nodes) {
        if (node.is_leaf()) continue;
        imp[static_cast<size_t>(node.feature)] += (kind == ImportanceKind::Gain) ? node.gain : 1.0;
      }
    }
  }
  return imp;
}

// ------------------------------------------------------------
// serialization (versioned json, round-trip stable)
// ------------------------------------------------------------

namespace {

json params_to_json(const GbdtParams& p) {
  return json{{"num_boost_rounds", p.num_boost_rounds},
              {"learning_rate", p.learning_rate},
              {"num_leaves", p.num_leaves},
              {"min_data_in_leaf", p.min_data_in_leaf},
              {"feature_fraction", p.feature_fraction},
              {"bagging_fraction", p.bagging_fraction},
              {"lambda_l2", p.lambda_l2},
              {"max_depth", p.max_depth},
              {"focal_gamma", p.focal_gamma},
              {"n_histogram_bins", p.n_histogram_bins},
              {"early_stopping_rounds", p.early_stopping_rounds},
              {"objective", p.objective}};
}

GbdtParams params_from_json(const json& j) {
  GbdtParams p;
  p.num_boost_rounds = j.at("num_boost_rounds").get<int>();
  p.learning_rate = j.at("learning_rate").get<double>();
  p.num_leaves = j.at("num_leaves").get<int>();
  p.min_data_in_leaf = j.at("min_data_in_leaf").get<int>();
  p.feature_fraction = j.at("feature_fraction").get<double>();
  p.bagging_fraction = j.at("bagging_fraction").get<double>();
  p.lambda_l2 = j.at("lambda_l2").get<double>();
  p.max_depth = j.at("max_depth").get<int>();
  p.focal_gamma = j.at("focal_gamma").get<double>();
  p.n_histogram_bins = j.at("n_histogram_bins").get<int>();
  p.early_stopping_rounds = j.at("early_stopping_rounds").get<int>();
  p.objective = j.at("objective").get<std::string>();
  return p;
}

json tree_to_json(const Tree& t) {
  json feature = json::array(), threshold = json::array(), left = json::array(),
       right = json::array(), value = json::array(), gain = json::array(),
       default_left = json::array();
  for (const auto& n : t.nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
    gain.push_back(n.gain);
    default_left.push_back(n.default_left);
  }
  return json{{"feature", feature}, {"threshold", threshold},       {"left", left},
              {"right", right},     {"value", value},               {"gain", gain},
              {"default_left", default_left}};
}

Tree tree_from_json(const json& j) {
  Tree t;
  const auto& feature = j.at("feature");
  const size_t n = feature.size();
  t.nodes.resize(n);
  for (size_t i = 0; i < n; ++i) {
    TreeNode& node = t.nodes[i];
    node.feature = j.at("feature")[i].get<int>();
    node.threshold = j.at("threshold")[i].get<double>();
    node.left = j.at("left")[i].get<int>();
    node.right = j.at("right")[i].get<int>();
    node.value = j.at("value")[i].get<double>();
    node.gain = j.at("gain")[i].get<double>();
    node.default_left = j.at("default_left")[i].get<bool>();
    check(node.is_leaf() ||
              (node.left >= 0 && node.right >= 0 && static_cast<size_t>(node.left) < n &&
               static_cast<size_t>(node.right) < n),
          ErrorKind::Integrity, "model json: tree child index out of range");
  }
  return t;
}

}  // namespace

std::string GbdtModel::to_json() const {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "gbdt_model";
  j["n_classes"] = n_classes;
  j["learning_rate"] = learning_rate;
  j["base_score"] = base_score;
  j["feature_names"] = feature_names;
  j["best_iteration"] = best_iteration;
  j["objective"] = objective_name;
  j["params"] = params_to_json(params);
  json rs = json::array();
  for (const auto& round : rounds) {
    json per_class = json::array();
    for (const auto& tree : round) per_class.push_back(tree_to_json(tree));
    rs.push_back(std::move(per_class));
  }
  j["rounds"] = std::move(rs);
  return j.dump();
}

GbdtModel GbdtModel::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Integrity, std::string("model json parse failure: ") + e.what());
  }
  try {
    check(j.at("kind").get<std::string>() == "gbdt_model", ErrorKind::Integrity,
          "model json: unexpected kind");
    GbdtModel m;
    m.n_classes = j.at("n_classes").get<int>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.base_score = j.at("base_score").get<std::vector<double>>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.best_iteration = j.at("best_iteration").get<int>();
    m.objective_name = j.at("objective").get<std::string>();
    m.params = params_from_json(j.at("params"));
    for (const auto& round : j.at("rounds")) {
      std::vector<Tree> per_class;
      for (const auto& tj : round) per_class.push_back(tree_from_json(tj));
      check(per_class.size() == static_cast<size_t>(m.n_classes), ErrorKind::Integrity,
            "model json: round does not hold one tree per class");
      m.rounds.push_back(std::move(per_class));
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Integrity, std::string("model json field failure: ") + e.what());
  }
}

void GbdtModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), ErrorKind::Io, "cannot open for writing: " + path);
  out << to_json();
  check(out.good(), ErrorKind::Io, "write failed: " + path);
}

GbdtModel GbdtModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), ErrorKind::Io, "cannot open for reading: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

// ------------------------------------------------------------
// quantile binning
// ------------------------------------------------------------

namespace {

struct BinMapper {
  // values <= upper_bound[b] (and > upper_bound[b-1]) fall in bin b;
  // the last bound is +inf
  std::vector<double> upper_bounds;

  uint16_t bin_for(double v) const {
    size_t lo = 0, hi = upper_bounds.size() - 1;
    while (lo < hi) {
      size_t mid = (lo + hi) / 2;
      if (v <= upper_bounds[mid]) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    return static_cast<uint16_t>(lo);
  }

  size_t n_bins() const { return upper_bounds.size(); }
};

BinMapper build_bins(std::vector<double> column, int max_bins) {
  std::sort(column.begin(), column.end());
  std::vector<std::pair<double, size_t>> distinct;  // value, count
  for (double v : column) {
    if (distinct.empty() || distinct.back().first != v) {
      distinct.emplace_back(v, 1);
    } else {
      distinct.back().second += 1;
    }
  }

  BinMapper mapper;
  const double inf = std::numeric_limits<double>::infinity();
  if (distinct.size() <= static_cast<size_t>(max_bins)) {
    for (size_t i = 0; i + 1 < distinct.size(); ++i) {
      mapper.upper_bounds.push_back(0.5 * (distinct[i].first + distinct[i + 1].first));
    }
    mapper.upper_bounds.push_back(inf);
    return mapper;
  }

  const double target = static_cast<double>(column.size()) / static_cast<double>(max_bins);
  size_t acc = 0;
  for (size_t i = 0; i + 1 < distinct.size(); ++i) {
    acc += distinct[i].second;
    const size_t bins_left = static_cast<size_t>(max_bins) - mapper.upper_bounds.size();
    if (static_cast<double>(acc) >= target && bins_left > 1) {
      mapper.upper_bounds.push_back(0.5 * (distinct[i].first + distinct[i + 1].first));
      acc = 0;
    }
  }
  mapper.upper_bounds.push_back(inf);
  return mapper;
}

struct HistBin {
  double g = 0.0;
  double h = 0.0;
  uint32_t c = 0;
};

struct SplitInfo {
  double gain = 0.0;
  int feature = -1;
  int bin = -1;  // rows with binned value <= bin go left
  double threshold = 0.0;
  double left_g = 0.0, left_h = 0.0;
  uint32_t left_c = 0;

  bool valid() const { return feature >= 0; }
};

constexpr double kMinSplitGain = 1e-12;

}  // namespace

// ------------------------------------------------------------
// trainer
// ------------------------------------------------------------

struct GbdtTrainer::Impl {
  GbdtParams params;
  std::shared_ptr<const Objective> objective;
  int n_classes = 0;
  size_t n_rows = 0;
  size_t n_features = 0;

  const Dataset* train = nullptr;
  const Dataset* valid = nullptr;

  std::vector<BinMapper> mappers;                // per feature
  std::vector<std::vector<uint16_t>> binned;     // [feature][row]
  std::vector<double> train_margins;             // row-major n x k
  std::vector<double> valid_margins;
  std::vector<double> grad, hess;                // row-major n x k
  std::vector<double> gk, hk;                    // per-class scratch
  std::vector<uint32_t> idx;                     // row partition workspace

  GbdtModel model;
  Rng rng;

  bool stopped = false;
  double best_valid_loss = std::numeric_limits<double>::infinity();
  int best_round = 0;
  int rounds_since_best = 0;

  Impl(const Dataset& train_in, const Dataset* valid_in, const GbdtParams& p,
       std::shared_ptr<const Objective> obj, uint64_t seed)
      : params(p), objective(std::move(obj)), rng(seed) {
    params.validate();
    train = &train_in;
    valid = valid_in;
    n_classes = objective->num_classes();
    train->validate(n_classes);
    if (valid) {
      valid->validate(n_classes);
      check(valid->feature_names == train->feature_names, ErrorKind::Shape,
            "validation set schema does not match training set");
    }
    std::set<int> distinct(train->labels.begin(), train->labels.end());
    check(distinct.size() >= 2, ErrorKind::DegenerateLabels,
          "training data holds a single class; nothing to learn");

    n_rows = train->n_rows();
    n_features = train->n_features();

    mappers.resize(n_features);
    binned.assign(n_features, std::vector<uint16_t>(n_rows));
    std::vector<double> column(n_rows);
    for (size_t f = 0; f < n_features; ++f) {
      for (size_t i = 0; i < n_rows; ++i) column[i] = train->at(i, f);
      mappers[f] = build_bins(column, params.n_histogram_bins);
      for (size_t i = 0; i < n_rows; ++i) binned[f][i] = mappers[f].bin_for(train->at(i, f));
    }

    const size_t k = static_cast<size_t>(n_classes);
    train_margins.assign(n_rows * k, 0.0);
    if (valid) valid_margins.assign(valid->n_rows() * k, 0.0);
    grad.resize(n_rows * k);
    hess.resize(n_rows * k);
    gk.resize(n_rows);
    hk.resize(n_rows);
    idx.resize(n_rows);

    model.n_classes = n_classes;
    model.learning_rate = params.learning_rate;
    model.base_score.assign(k, 0.0);
    model.feature_names = train->feature_names;
    model.params = params;
    model.objective_name = objective->name();
  }

  void compute_gradients() {
    const size_t k = static_cast<size_t>(n_classes);
    for (size_t i = 0; i < n_rows; ++i) {
      objective->grad_hess(std::span<const double>(train_margins.data() + i * k, k),
                           train->labels[i], std::span<double>(grad.data() + i * k, k),
                           std::span<double>(hess.data() + i * k, k));
    }
  }

  // sorted bagged row ids for this round
  std::vector<uint32_t> sample_rows() {
    if (params.bagging_fraction >= 1.0) {
      std::vector<uint32_t> all(n_rows);
      std::iota(all.begin(), all.end(), 0u);
      return all;
    }
    const size_t want = std::max<size_t>(
        1, static_cast<size_t>(params.bagging_fraction * static_cast<double>(n_rows)));
    std::vector<uint32_t> pool(n_rows);
    std::iota(pool.begin(), pool.end(), 0u);
    for (size_t i = 0; i < want; ++i) {
      size_t j = i + rng.uniform_int(n_rows - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(want);
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  // sorted feature subset for one tree
  std::vector<uint32_t> sample_features() {
    if (params.feature_fraction >= 1.0) {
      std::vector<uint32_t> all(n_features);
      std::iota(all.begin(), all.end(), 0u);
      return all;
    }
    const size_t want = std::max<size_t>(
        1, static_cast<size_t>(
               std::ceil(params.feature_fraction * static_cast<double>(n_features))));
    std::vector<uint32_t> pool(n_features);
    std::iota(pool.begin(), pool.end(), 0u);
    for (size_t i = 0; i < want && i < n_features; ++i) {
      size_t j = i + rng.uniform_int(n_features - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(std::min(want, n_features));
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  using Histos = std::vector<std::vector<HistBin>>;  // [feature][bin]

  void build_histograms(Histos& hist, const std::vector<uint32_t>& features, uint32_t begin,
                        uint32_t end) const {
    for (uint32_t f : features) {
      auto& hf = hist[f];
      hf.assign(mappers[f].n_bins(), HistBin{});
      const uint16_t* bins = binned[f].data();
      for (uint32_t r = begin; r < end; ++r) {
        const uint32_t i = idx[r];
        HistBin& hb = hf[bins[i]];
        hb.g += gk[i];
        hb.h += hk[i];
        hb.c += 1;
      }
    }
  }

  SplitInfo find_best_split(const Histos& hist, const std::vector<uint32_t>& features,
                            double sum_g, double sum_h, uint32_t count) const {
    SplitInfo best;
    const double lambda = params.lambda_l2;
    const double parent_score = sum_g * sum_g / (sum_h + lambda);
    const uint32_t min_leaf = static_cast<uint32_t>(params.min_data_in_leaf);
    if (count < 2 * min_leaf) return best;

    for (uint32_t f : features) {
      const auto& hf = hist[f];
      double gl = 0.0, hl = 0.0;
      uint32_t cl = 0;
      for (size_t b = 0; b + 1 < hf.size(); ++b) {
        gl += hf[b].g;
        hl += hf[b].h;
        cl += hf[b].c;
        if (cl < min_leaf) continue;
        const uint32_t cr = count - cl;
        if (cr < min_leaf) break;
        const double gr = sum_g - gl;
        const double hr = sum_h - hl;
        const double gain =
            0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent_score);
        if (gain > best.gain + kMinSplitGain) {
          best.gain = gain;
          best.feature = static_cast<int>(f);
          best.bin = static_cast<int>(b);
          best.threshold = mappers[f].upper_bounds[b];
          best.left_g = gl;
          best.left_h = hl;
          best.left_c = cl;
        }
      }
    }
    return best;
  }

  struct LeafCtx {
    int node = -1;
    uint32_t begin = 0, end = 0;
    int depth = 0;
    double sum_g = 0.0, sum_h = 0.0;
    Histos hist;
    SplitInfo best;
  };

  double leaf_value(double sum_g, double sum_h) const {
    return -sum_g / (sum_h + params.lambda_l2) * params.learning_rate;
  }

  Tree build_tree(const std::vector<uint32_t>& rows, const std::vector<uint32_t>& features) {
    Tree tree;
    std::copy(rows.begin(), rows.end(), idx.begin());
    const uint32_t n = static_cast<uint32_t>(rows.size());

    double root_g = 0.0, root_h = 0.0;
    for (uint32_t r = 0; r < n; ++r) {
      root_g += gk[idx[r]];
      root_h += hk[idx[r]];
    }
    tree.nodes.push_back(TreeNode{});
    tree.nodes[0].value = leaf_value(root_g, root_h);

    std::vector<LeafCtx> frontier;
    {
      LeafCtx root;
      root.node = 0;
      root.begin = 0;
      root.end = n;
      root.depth = 0;
      root.sum_g = root_g;
      root.sum_h = root_h;
      root.hist.resize(n_features);
      build_histograms(root.hist, features, 0, n);
      root.best = find_best_split(root.hist, features, root_g, root_h, n);
      frontier.push_back(std::move(root));
    }

    // best-first growth; ties resolved by lowest frontier slot, which is
    // creation order
    int n_leaves = 1;
    while (n_leaves < params.num_leaves) {
      int pick = -1;
      for (size_t i = 0; i < frontier.size(); ++i) {
        if (!frontier[i].best.valid()) continue;
        if (pick < 0 || frontier[i].best.gain > frontier[static_cast<size_t>(pick)].best.gain) {
          pick = static_cast<int>(i);
        }
      }
      if (pick < 0) break;

      LeafCtx ctx = std::move(frontier[static_cast<size_t>(pick)]);
      frontier.erase(frontier.begin() + pick);
      const SplitInfo& s = ctx.best;

      // stable partition by split bin keeps row order inside children
      const uint32_t f = static_cast<uint32_t>(s.feature);
      std::stable_partition(idx.begin() + ctx.begin, idx.begin() + ctx.end,
                            [&](uint32_t i) { return binned[f][i] <= s.bin; });
      const uint32_t mid = ctx.begin + s.left_c;

      TreeNode& parent = tree.nodes[static_cast<size_t>(ctx.node)];
      parent.feature = s.feature;
      parent.threshold = s.threshold;
      parent.gain = s.gain;
      parent.default_left = true;
      parent.value = 0.0;
      parent.left = static_cast<int>(tree.nodes.size());
      parent.right = static_cast<int>(tree.nodes.size() + 1);

      LeafCtx left, right;
      left.node = parent.left;
      left.begin = ctx.begin;
      left.end = mid;
      left.depth = ctx.depth + 1;
      left.sum_g = s.left_g;
      left.sum_h = s.left_h;
      right.node = parent.right;
      right.begin = mid;
      right.end = ctx.end;
      right.depth = ctx.depth + 1;
      right.sum_g = ctx.sum_g - s.left_g;
      right.sum_h = ctx.sum_h - s.left_h;

      tree.nodes.push_back(TreeNode{});
      tree.nodes.back().value = leaf_value(left.sum_g, left.sum_h);
      tree.nodes.push_back(TreeNode{});
      tree.nodes.back().value = leaf_value(right.sum_g, right.sum_h);
      n_leaves += 1;

      const bool depth_ok = params.max_depth == 0 || left.depth < params.max_depth;
      if (depth_ok && n_leaves < params.num_leaves) {
        // build the smaller child by scan, derive the larger by subtraction
        const uint32_t left_n = mid - ctx.begin;
        const uint32_t right_n = ctx.end - mid;
        LeafCtx& small = (left_n <= right_n) ? left : right;
        LeafCtx& large = (left_n <= right_n) ? right : left;
        small.hist.resize(n_features);
        build_histograms(small.hist, features, small.begin, small.end);
        large.hist = std::move(ctx.hist);
        for (uint32_t ff : features) {
          auto& lf = large.hist[ff];
          const auto& sf = small.hist[ff];
          for (size_t b = 0; b < lf.size(); ++b) {
            lf[b].g -= sf[b].g;
            lf[b].h -= sf[b].h;
            lf[b].c -= sf[b].c;
          }
        }
        left.best = find_best_split(left.hist, features, left.sum_g, left.sum_h, left_n);
        right.best = find_best_split(right.hist, features, right.sum_g, right.sum_h, right_n);
      }
      frontier.push_back(std::move(left));
      frontier.push_back(std::move(right));
    }
    return tree;
  }

  void boost_one_round() {
    compute_gradients();
    const std::vector<uint32_t> rows = sample_rows();
    const size_t k = static_cast<size_t>(n_classes);

    std::vector<Tree> round;
    round.reserve(k);
    for (size_t c = 0; c < k; ++c) {
      for (size_t i = 0; i < n_rows; ++i) {
        gk[i] = grad[i * k + c];
        hk[i] = hess[i * k + c];
      }
      const std::vector<uint32_t> features = sample_features();
      round.push_back(build_tree(rows, features));

      // margins update covers all rows, bagged or not
      const Tree& tree = round.back();
      for (size_t i = 0; i < n_rows; ++i) {
        train_margins[i * k + c] += tree.predict(train->row(i));
      }
      if (valid) {
        for (size_t i = 0; i < valid->n_rows(); ++i) {
          valid_margins[i * k + c] += tree.predict(valid->row(i));
        }
      }
    }
    model.rounds.push_back(std::move(round));
    model.best_iteration = static_cast<int>(model.rounds.size());

    if (valid && params.early_stopping_rounds > 0) {
      const double loss = valid_loss();
      if (loss < best_valid_loss) {
        best_valid_loss = loss;
        best_round = static_cast<int>(model.rounds.size());
        rounds_since_best = 0;
      } else {
        rounds_since_best += 1;
        if (rounds_since_best >= params.early_stopping_rounds) stopped = true;
      }
      model.best_iteration = best_round;
    }
  }

  double train_loss() const {
    return mean_loss(*objective, train_margins, train->labels);
  }

  double valid_loss() const {
    check(valid != nullptr, ErrorKind::Config, "no validation set attached");
    return mean_loss(*objective, valid_margins, valid->labels);
  }

  double valid_loss_under(const Objective& eval_objective) const {
    check(valid != nullptr, ErrorKind::Config, "no validation set attached");
    return mean_loss(eval_objective, valid_margins, valid->labels);
  }

  double valid_accuracy() const {
    check(valid != nullptr, ErrorKind::Config, "no validation set attached");
    const size_t k = static_cast<size_t>(n_classes);
    size_t hits = 0;
    for (size_t i = 0; i < valid->n_rows(); ++i) {
      const double* m = valid_margins.data() + i * k;
      size_t best = 0;
      for (size_t c = 1; c < k; ++c) {
        if (m[c] > m[best]) best = c;
      }
      if (static_cast<int>(best) == valid->labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(valid->n_rows());
  }
};

GbdtTrainer::GbdtTrainer(const Dataset& train, const Dataset* valid, const GbdtParams& params,
                         std::shared_ptr<const Objective> objective, uint64_t seed)
    : impl_(std::make_unique<Impl>(train, valid, params, std::move(objective), seed)) {}

GbdtTrainer::~GbdtTrainer() = default;

int GbdtTrainer::train_until(int round_count) {
  while (static_cast<int>(impl_->model.rounds.size()) < round_count && !impl_->stopped) {
    impl_->boost_one_round();
  }
  return static_cast<int>(impl_->model.rounds.size());
}

int GbdtTrainer::rounds_trained() const { return static_cast<int>(impl_->model.rounds.size()); }
bool GbdtTrainer::stopped_early() const { return impl_->stopped; }
double GbdtTrainer::train_loss() const { return impl_->train_loss(); }
double GbdtTrainer::valid_loss() const { return impl_->valid_loss(); }
double GbdtTrainer::valid_accuracy() const { return impl_->valid_accuracy(); }
double GbdtTrainer::valid_loss_under(const Objective& eval_objective) const {
  return impl_->valid_loss_under(eval_objective);
}

GbdtModel GbdtTrainer::finalize() const {
  GbdtModel out = impl_->model;
  const size_t keep = std::min(out.rounds.size(), static_cast<size_t>(out.best_iteration));
  out.rounds.resize(keep);
  out.best_iteration = static_cast<int>(keep);
  return out;
}

GbdtModel fit(const Dataset& train, const Dataset* valid, const GbdtParams& params,
              std::shared_ptr<const Objective> objective, uint64_t seed) {
  GbdtTrainer trainer(train, valid, params, std::move(objective), seed);
  trainer.train_until(params.num_boost_rounds);
  return trainer.finalize();
}

}  // namespace twinopt
