#pragma once

// ------------------------------------------------------------
// multi-class training objectives: softmax link, cross-entropy and
// focal loss with analytic gradient / diagonal hessian
// ------------------------------------------------------------

#include <memory>
#include <span>
#include <vector>

#include "twinopt/common.hpp"

namespace twinopt {

inline constexpr double kProbClamp = 1e-15;
inline constexpr double kHessFloor = 1e-16;

// max-subtracted softmax; entries positive, sum 1
std::vector<double> softmax(std::span<const double> scores);
void softmax_into(std::span<const double> scores, std::span<double> out);

// FL(p_t) = -alpha_t * (1 - p_t)^gamma * ln(p_t), p_t clamped
double focal_loss(std::span<const double> probs, int label, double gamma,
                  std::span<const double> alpha);

// d FL / d score_k and diagonal d^2 FL / d score_k^2 through the softmax;
// hessian floored at kHessFloor
void focal_grad_hess(std::span<const double> scores, int label, double gamma,
                     std::span<const double> alpha, std::span<double> grad,
                     std::span<double> hess);

class Objective {
 public:
  virtual ~Objective() = default;
  virtual int num_classes() const = 0;
  virtual double loss(std::span<const double> scores, int label) const = 0;
  virtual void grad_hess(std::span<const double> scores, int label, std::span<double> grad,
                         std::span<double> hess) const = 0;
  virtual std::string name() const = 0;
};

class SoftmaxCrossEntropy final : public Objective {
 public:
  explicit SoftmaxCrossEntropy(int n_classes) : n_classes_(n_classes) {}
  int num_classes() const override { return n_classes_; }
  double loss(std::span<const double> scores, int label) const override;
  void grad_hess(std::span<const double> scores, int label, std::span<double> grad,
                 std::span<double> hess) const override;
  std::string name() const override { return "softmax_cross_entropy"; }

 private:
  int n_classes_;
};

class MulticlassFocal final : public Objective {
 public:
  MulticlassFocal(int n_classes, double gamma, std::vector<double> alpha = {});
  int num_classes() const override { return n_classes_; }
  double gamma() const { return gamma_; }
  double loss(std::span<const double> scores, int label) const override;
  void grad_hess(std::span<const double> scores, int label, std::span<double> grad,
                 std::span<double> hess) const override;
  std::string name() const override { return "multiclass_focal"; }

 private:
  int n_classes_;
  double gamma_;
  std::vector<double> alpha_;
};

// mean objective loss over a score matrix (row-major n x k)
double mean_loss(const Objective& obj, std::span<const double> scores,
                 std::span<const int> labels);

}  // namespace twinopt
