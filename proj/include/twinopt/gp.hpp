#pragma once

// ------------------------------------------------------------
// Gaussian-process surrogate over the encoded search space:
// Matérn-5/2 kernel, marginal-likelihood grid selection of the
// length scale and noise, expected-improvement acquisition, and
// the suggestion engine (warmup draws, then EI argmax over a
// quasi-random candidate set).
// ------------------------------------------------------------

#include <span>
#include <utility>
#include <vector>

#include "twinopt/common.hpp"
#include "twinopt/search_space.hpp"

namespace twinopt {

enum class Direction { Minimize, Maximize };

struct GpHyperparams {
  double length_scale = 0.5;
  double noise = 1e-6;
};

// Grid: maximize marginal log-likelihood over the fixed grid.
// Fixed: use the supplied values as-is (oracle tests need this).
struct KernelPolicy {
  enum class Mode { Grid, Fixed };
  Mode mode = Mode::Grid;
  GpHyperparams fixed;

  static KernelPolicy grid() { return {}; }
  static KernelPolicy with(GpHyperparams hp) {
    return {Mode::Fixed, hp};
  }
};

double matern52(double distance, double length_scale);

class GpSurrogate {
 public:
  // points are rows in the encoded unit hypercube
  static GpSurrogate fit(std::vector<std::vector<double>> points, std::vector<double> values,
                         const KernelPolicy& policy = KernelPolicy::grid());

  // de-standardized posterior (mean, stddev)
  std::pair<double, double> predict(std::span<const double> point) const;

  const GpHyperparams& hyperparams() const { return hp_; }
  size_t n_observations() const { return points_.size(); }

 private:
  GpSurrogate() = default;

  std::vector<std::vector<double>> points_;
  std::vector<double> alpha_;         // (K + noise I)^-1 y_std
  std::vector<double> chol_;          // lower Cholesky factor, row-major
  GpHyperparams hp_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
};

struct Observation {
  TrialParams params;
  double value = 0.0;
};

// convenience fit straight from trial observations
GpSurrogate gp_fit(const std::vector<Observation>& observations, const SearchSpace& space,
                   const KernelPolicy& policy = KernelPolicy::grid());

double expected_improvement(double mean, double stddev, double best_so_far, Direction direction);

struct SuggestConfig {
  int n_warmup = 10;
  int n_candidates = 1024;
  int max_duplicate_resamples = 16;
  Direction direction = Direction::Minimize;
  KernelPolicy policy = KernelPolicy::grid();
};

// warmup: space-uniform draws; afterwards: argmax EI over a
// rotated Halton candidate set, snapped to realizable values
TrialParams suggest(const SearchSpace& space, const std::vector<Observation>& history, Rng& rng,
                    const SuggestConfig& config = {});

// searcher interface the study scheduler drives
class Suggester {
 public:
  virtual ~Suggester() = default;
  virtual TrialParams next(const SearchSpace& space, Rng& rng) = 0;
  virtual void observe(const TrialParams& params, double metric) = 0;
};

class BayesSuggester : public Suggester {
 public:
  explicit BayesSuggester(SuggestConfig config = {}) : config_(config) {}
  TrialParams next(const SearchSpace& space, Rng& rng) override;
  void observe(const TrialParams& params, double metric) override;
  const std::vector<Observation>& history() const { return history_; }

 private:
  SuggestConfig config_;
  std::vector<Observation> history_;
};

class RandomSuggester : public Suggester {
 public:
  TrialParams next(const SearchSpace& space, Rng& rng) override;
  void observe(const TrialParams&, double) override {}
};

}  // namespace twinopt
