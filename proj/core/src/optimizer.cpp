#include "tnfn/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace tnfn {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "sgd-momentum") return OptimizerKind::sgd_momentum;
  if (name == "adam") return OptimizerKind::adam;
  if (name == "rmsprop") return OptimizerKind::rmsprop;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::sgd_momentum: return "sgd-momentum";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::rmsprop: return "rmsprop";
  }
  return "?";
}

void Optimizer::step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr) {
  if (params.size() != grads.size()) throw std::invalid_argument("optimizer: parameter/gradient count mismatch");
  if (first_.empty()) {
    for (auto* p : params) {
      first_.emplace_back(p->shape());
      second_.emplace_back(p->shape());
    }
  } else if (first_.size() != params.size()) {
    throw std::invalid_argument("optimizer: parameter list changed between steps");
  }
  ++t_;
  const double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->data();
    auto g = grads[k].data();
    if (g.size() != p.size()) throw ShapeError("optimizer: gradient shape mismatch");
    auto m = first_[k].data();
    auto v = second_[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = cfg_.l2 != 0.0 ? g[i] + cfg_.l2 * p[i] : g[i];
      switch (cfg_.kind) {
        case OptimizerKind::sgd:
          p[i] -= lr * gi;
          break;
        case OptimizerKind::sgd_momentum:
          m[i] = cfg_.momentum * m[i] + gi;
          p[i] -= lr * m[i];
          break;
        case OptimizerKind::adam:
          m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
          v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
          p[i] -= lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + cfg_.eps);
          break;
        case OptimizerKind::rmsprop:
          v[i] = cfg_.rms_decay * v[i] + (1.0 - cfg_.rms_decay) * gi * gi;
          p[i] -= lr * gi / (std::sqrt(v[i]) + cfg_.eps);
          break;
      }
    }
  }
}

double warmup_lr(double lr, std::size_t step, std::size_t warmup_steps) {
  if (warmup_steps == 0 || step >= warmup_steps) return lr;
  return lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
}

}  // namespace tnfn
