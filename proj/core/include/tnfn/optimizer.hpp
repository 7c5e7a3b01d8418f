#pragma once

#include <span>
#include <string>
#include <vector>

#include "tnfn/tensor.hpp"

namespace tnfn {

enum class OptimizerKind { sgd, sgd_momentum, adam, rmsprop };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double rms_decay = 0.99;
  double eps = 1e-8;
  /// Added to the gradient as l2 * theta before the update.
  double l2 = 0.0;
};

/// First-order optimizer over a fixed list of parameter tensors. Plain SGD
/// updates theta <- theta - lr * g elementwise.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr);
  std::size_t steps() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::size_t t_ = 0;
  std::vector<Tensor> first_, second_;
};

/// Linear warmup from lr/warmup_steps to lr over the first warmup_steps steps.
double warmup_lr(double lr, std::size_t step, std::size_t warmup_steps);

}  // namespace tnfn
