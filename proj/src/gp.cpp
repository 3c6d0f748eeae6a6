#include "twinopt/gp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace twinopt {

namespace {

constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-4;

const std::vector<double>& length_scale_grid() {
  static const std::vector<double> grid = {0.05, 0.1, 0.2, 0.5, 1.0, 2.0};
  return grid;
}

const std::vector<double>& noise_grid() {
  static const std::vector<double> grid = {1e-6, 1e-4, 1e-2};
  return grid;
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

Eigen::MatrixXd kernel_matrix(const std::vector<std::vector<double>>& points, double ls,
                              double noise) {
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = 1.0 + noise;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = matern52(
          distance(points[static_cast<size_t>(i)], points[static_cast<size_t>(j)]), ls);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

// Cholesky with escalating diagonal jitter; empty result on failure
std::optional<Eigen::MatrixXd> chol_with_jitter(const Eigen::MatrixXd& k) {
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() == Eigen::Success) return Eigen::MatrixXd(llt.matrixL());
  for (double jitter = kJitterStart; jitter <= kJitterMax * 1.0000001; jitter *= 10.0) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    llt.compute(kj);
    if (llt.info() == Eigen::Success) return Eigen::MatrixXd(llt.matrixL());
  }
  return std::nullopt;
}

double log_marginal_likelihood(const Eigen::MatrixXd& chol_l, const Eigen::VectorXd& y) {
  // -1/2 y^T K^-1 y - sum(log L_ii) - n/2 log(2 pi)
  const Eigen::VectorXd alpha =
      chol_l.transpose().triangularView<Eigen::Upper>().solve(
          chol_l.triangularView<Eigen::Lower>().solve(y));
  double log_det_half = 0.0;
  for (Eigen::Index i = 0; i < chol_l.rows(); ++i) log_det_half += std::log(chol_l(i, i));
  return -0.5 * y.dot(alpha) - log_det_half -
         0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

}  // namespace

double matern52(double distance, double length_scale) {
  const double r = std::sqrt(5.0) * distance / length_scale;
  return (1.0 + r + r * r / 3.0) * std::exp(-r);
}

GpSurrogate GpSurrogate::fit(std::vector<std::vector<double>> points, std::vector<double> values,
                             const KernelPolicy& policy) {
  check(!points.empty(), ErrorKind::EmptyInput, "surrogate fit needs at least one observation");
  check(points.size() == values.size(), ErrorKind::Shape,
        "observation points and values differ in count");
  const size_t dim = points.front().size();
  for (const auto& p : points) {
    check(p.size() == dim, ErrorKind::Shape, "observation points differ in dimension");
  }
  for (double v : values) {
    check(std::isfinite(v), ErrorKind::InvalidData, "non-finite objective value");
  }

  GpSurrogate gp;
  gp.points_ = std::move(points);

  const size_t n = values.size();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  double scale = std::sqrt(var);
  if (scale < 1e-12) scale = 1.0;  // constant objective: standardized y is all zero
  gp.y_mean_ = mean;
  gp.y_scale_ = scale;

  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (size_t i = 0; i < n; ++i) y(static_cast<Eigen::Index>(i)) = (values[i] - mean) / scale;

  struct Candidate {
    GpHyperparams hp;
    Eigen::MatrixXd chol;
    double mll;
  };
  std::optional<Candidate> best;

  auto consider = [&](const GpHyperparams& hp) {
    auto chol = chol_with_jitter(kernel_matrix(gp.points_, hp.length_scale, hp.noise));
    if (!chol) return;
    const double mll = log_marginal_likelihood(*chol, y);
    if (!best || mll > best->mll) best = Candidate{hp, std::move(*chol), mll};
  };

  if (policy.mode == KernelPolicy::Mode::Fixed) {
    consider(policy.fixed);
  } else {
    for (double ls : length_scale_grid()) {
      for (double noise : noise_grid()) consider(GpHyperparams{ls, noise});
    }
  }
  check(best.has_value(), ErrorKind::IllConditionedSurrogate,
        "kernel matrix is not positive definite at any jitter level");

  gp.hp_ = best->hp;
  const Eigen::MatrixXd& l = best->chol;
  const Eigen::VectorXd alpha = l.transpose().triangularView<Eigen::Upper>().solve(
      l.triangularView<Eigen::Lower>().solve(y));

  gp.alpha_.resize(n);
  for (size_t i = 0; i < n; ++i) gp.alpha_[i] = alpha(static_cast<Eigen::Index>(i));
  gp.chol_.resize(n * n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      gp.chol_[i * n + j] = l(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  return gp;
}

std::pair<double, double> GpSurrogate::predict(std::span<const double> point) const {
  const size_t n = points_.size();
  check(point.size() == points_.front().size(), ErrorKind::Shape,
        "query point dimension does not match surrogate");

  Eigen::VectorXd kstar(static_cast<Eigen::Index>(n));
  for (size_t i = 0; i < n; ++i) {
    kstar(static_cast<Eigen::Index>(i)) = matern52(distance(point, points_[i]), hp_.length_scale);
  }

  double mean_std = 0.0;
  for (size_t i = 0; i < n; ++i) mean_std += kstar(static_cast<Eigen::Index>(i)) * alpha_[i];

  Eigen::MatrixXd l(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      l(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = chol_[i * n + j];
    }
  }
  const Eigen::VectorXd v = l.triangularView<Eigen::Lower>().solve(kstar);
  double var_std = 1.0 - v.squaredNorm();
  if (var_std < 0.0) var_std = 0.0;

  return {y_mean_ + y_scale_ * mean_std, y_scale_ * std::sqrt(var_std)};
}

GpSurrogate gp_fit(const std::vector<Observation>& observations, const SearchSpace& space,
                   const KernelPolicy& policy) {
  check(!observations.empty(), ErrorKind::EmptyInput,
        "surrogate fit needs at least one observation");
  std::vector<std::vector<double>> points;
  std::vector<double> values;
  points.reserve(observations.size());
  values.reserve(observations.size());
  for (const auto& obs : observations) {
    points.push_back(encode(obs.params, space));
    values.push_back(obs.value);
  }
  return GpSurrogate::fit(std::move(points), std::move(values), policy);
}

double expected_improvement(double mean, double stddev, double best_so_far,
                            Direction direction) {
  check(stddev >= 0.0, ErrorKind::InvalidData, "negative stddev");
  // improvement over the incumbent: best - mu (minimize) or mu - best (maximize)
  const double gap =
      direction == Direction::Minimize ? best_so_far - mean : mean - best_so_far;
  if (stddev == 0.0) return std::max(gap, 0.0);
  const double z = gap / stddev;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  const double ei = gap * cdf + stddev * pdf;
  return std::max(ei, 0.0);
}

namespace {

// first primes, one per encoded dimension
constexpr int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                           31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
                           73, 79, 83, 89, 97, 101, 103, 107, 109, 113};

double radical_inverse(uint64_t index, int base) {
  double result = 0.0;
  double digit = 1.0 / static_cast<double>(base);
  while (index > 0) {
    result += static_cast<double>(index % static_cast<uint64_t>(base)) * digit;
    index /= static_cast<uint64_t>(base);
    digit /= static_cast<double>(base);
  }
  return result;
}

}  // namespace

TrialParams suggest(const SearchSpace& space, const std::vector<Observation>& history, Rng& rng,
                    const SuggestConfig& config) {
  space.validate();

  auto is_duplicate = [&](const TrialParams& p) {
    return std::any_of(history.begin(), history.end(),
                       [&](const Observation& o) { return o.params == p; });
  };

  if (history.size() < static_cast<size_t>(config.n_warmup)) {
    TrialParams draw = sample_params(space, rng);
    for (int attempt = 0; attempt < config.max_duplicate_resamples && is_duplicate(draw);
         ++attempt) {
      draw = sample_params(space, rng);
    }
    return draw;
  }

  GpSurrogate surrogate = gp_fit(history, space, config.policy);
  double best = history.front().value;
  for (const auto& obs : history) {
    if (config.direction == Direction::Minimize) {
      best = std::min(best, obs.value);
    } else {
      best = std::max(best, obs.value);
    }
  }

  const size_t dim = space.encoded_dim();
  check(dim <= std::size(kPrimes), ErrorKind::Config,
        "search space encodes to more dimensions than the candidate sequence supports");

  // rotated Halton points, snapped through decode/encode so EI is
  // scored at values a trial can actually take
  std::vector<double> shift(dim);
  for (double& s : shift) s = rng.uniform();

  struct Scored {
    double ei;
    size_t index;
    TrialParams params;
  };
  std::vector<Scored> scored;
  scored.reserve(static_cast<size_t>(config.n_candidates));
  std::vector<double> point(dim);
  for (int c = 0; c < config.n_candidates; ++c) {
    for (size_t d = 0; d < dim; ++d) {
      double u = radical_inverse(static_cast<uint64_t>(c) + 1, kPrimes[d]) + shift[d];
      u -= std::floor(u);
      point[d] = u;
    }
    TrialParams params = decode(point, space);
    const auto enc = encode(params, space);
    const auto [mean, sd] = surrogate.predict(enc);
    scored.push_back(
        {expected_improvement(mean, sd, best, config.direction), static_cast<size_t>(c),
         std::move(params)});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const Scored& a, const Scored& b) { return a.ei > b.ei; });

  size_t pick = 0;
  int skipped = 0;
  while (pick + 1 < scored.size() && skipped < config.max_duplicate_resamples &&
         is_duplicate(scored[pick].params)) {
    ++pick;
    ++skipped;
  }
  if (is_duplicate(scored[pick].params) && skipped >= config.max_duplicate_resamples) {
    pick = 0;  // bounded retry exhausted: allow the duplicate
  }
  return scored[pick].params;
}

TrialParams BayesSuggester::next(const SearchSpace& space, Rng& rng) {
  return suggest(space, history_, rng, config_);
}

void BayesSuggester::observe(const TrialParams& params, double metric) {
  history_.push_back({params, metric});
}

TrialParams RandomSuggester::next(const SearchSpace& space, Rng& rng) {
  return sample_params(space, rng);
}

}  // namespace twinopt
