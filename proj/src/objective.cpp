#include "twinopt/objective.hpp"

#include <algorithm>
#include <cmath>

namespace twinopt {

void softmax_into(std::span<const double> scores, std::span<double> out) {
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double sum = 0.0;
  for (size_t k = 0; k < scores.size(); ++k) {
    out[k] = std::exp(scores[k] - mx);
    sum += out[k];
  }
  for (size_t k = 0; k < scores.size(); ++k) out[k] /= sum;
}

std::vector<double> softmax(std::span<const double> scores) {
  std::vector<double> out(scores.size());
  softmax_into(scores, out);
  return out;
}

namespace {

inline double clamp_prob(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

inline double alpha_at(std::span<const double> alpha, int label) {
  return alpha.empty() ? 1.0 : alpha[static_cast<size_t>(label)];
}

}  // namespace

double focal_loss(std::span<const double> probs, int label, double gamma,
                  std::span<const double> alpha) {
  const double pt = clamp_prob(probs[static_cast<size_t>(label)]);
  return -alpha_at(alpha, label) * std::pow(1.0 - pt, gamma) * std::log(pt);
}

// With p = softmax(s), u = p_label and F(u) = (1-u)^(gamma-1) * ((1-u) - gamma*u*ln u):
//   g_k = alpha * F(u) * (p_k - 1[k=label])
//   h_k = alpha * (F(u) * p_k (1-p_k) - F'(u) * u * (p_k - 1[k=label])^2)
//   F'(u) = -gamma (1-u)^(gamma-2) * ((1-u)(2 + ln u) - (gamma-1) u ln u)
// At gamma = 0 this reduces to the softmax cross-entropy pair.
void focal_grad_hess(std::span<const double> scores, int label, double gamma,
                     std::span<const double> alpha, std::span<double> grad,
                     std::span<double> hess) {
  const size_t k_classes = scores.size();
  softmax_into(scores, grad);  // grad temporarily holds probabilities
  const double a = alpha_at(alpha, label);
  const double u = clamp_prob(grad[static_cast<size_t>(label)]);
  const double one_mu = 1.0 - u;
  const double log_u = std::log(u);

  double f, fprime;
  if (gamma == 0.0) {
    f = 1.0;
    fprime = 0.0;
  } else {
    f = std::pow(one_mu, gamma - 1.0) * (one_mu - gamma * u * log_u);
    fprime = -gamma * std::pow(one_mu, gamma - 2.0) *
             (one_mu * (2.0 + log_u) - (gamma - 1.0) * u * log_u);
  }

  for (size_t k = 0; k < k_classes; ++k) {
    const double pk = grad[k];
    const double ind = (static_cast<int>(k) == label) ? 1.0 : 0.0;
    const double diff = pk - ind;
    grad[k] = a * f * diff;
    hess[k] = std::max(kHessFloor, a * (f * pk * (1.0 - pk) - fprime * u * diff * diff));
  }
}

double SoftmaxCrossEntropy::loss(std::span<const double> scores, int label) const {
  auto probs = softmax(scores);
  return -std::log(clamp_prob(probs[static_cast<size_t>(label)]));
}

void SoftmaxCrossEntropy::grad_hess(std::span<const double> scores, int label,
                                    std::span<double> grad, std::span<double> hess) const {
  softmax_into(scores, grad);
  for (size_t k = 0; k < scores.size(); ++k) {
    const double pk = grad[k];
    grad[k] = pk - ((static_cast<int>(k) == label) ? 1.0 : 0.0);
    hess[k] = std::max(kHessFloor, pk * (1.0 - pk));
  }
}

MulticlassFocal::MulticlassFocal(int n_classes, double gamma, std::vector<double> alpha)
    : n_classes_(n_classes), gamma_(gamma), alpha_(std::move(alpha)) {
  check(n_classes_ >= 2, ErrorKind::Config, "objective needs at least 2 classes");
  check(gamma_ >= 0.0 && std::isfinite(gamma_), ErrorKind::Config, "focal gamma must be >= 0");
  check(alpha_.empty() || alpha_.size() == static_cast<size_t>(n_classes_), ErrorKind::Config,
        "alpha must be empty or one weight per class");
}

double MulticlassFocal::loss(std::span<const double> scores, int label) const {
  auto probs = softmax(scores);
  return focal_loss(probs, label, gamma_, alpha_);
}

void MulticlassFocal::grad_hess(std::span<const double> scores, int label, std::span<double> grad,
                                std::span<double> hess) const {
  focal_grad_hess(scores, label, gamma_, alpha_, grad, hess);
}

double mean_loss(const Objective& obj, std::span<const double> scores,
                 std::span<const int> labels) {
  check(!labels.empty(), ErrorKind::EmptyInput, "mean_loss on empty label set");
  const size_t k = static_cast<size_t>(obj.num_classes());
  check(scores.size() == labels.size() * k, ErrorKind::Shape,
        "score matrix does not match labels x classes");
  double sum = 0.0;
  for (size_t i = 0; i < labels.size(); ++i) {
    sum += obj.loss(scores.subspan(i * k, k), labels[i]);
  }
  return sum / static_cast<double>(labels.size());
}

}  // namespace twinopt
