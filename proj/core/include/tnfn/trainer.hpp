#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tnfn/optimizer.hpp"
#include "tnfn/predictor.hpp"

namespace tnfn {

enum class LossKind { bce, mse };

LossKind parse_loss(const std::string& name);
std::string to_string(LossKind kind);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::bce;
  /// Fraction of all steps spent in linear warmup.
  double warmup_fraction = 0.2;
  double l2 = 0.0;
  /// Consecutive runs of this many samples are shuffled and batched as one
  /// unit (a record followed by its augmented copies); batch counts units.
  std::size_t group_size = 1;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

/// A non-finite prediction; sample is the offending index within the batch.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, std::size_t sample) : std::runtime_error(what), sample_(sample) {}
  std::size_t sample() const { return sample_; }

 private:
  std::size_t sample_;
};

/// Mean loss over the batch and its gradient for every block of model.params()
/// (same order). BCE is taken against sigmoid(logits); MSE against sigmoid
/// outputs as well.
struct LossAndGrads {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

LossAndGrads backward(const Predictor& model, std::span<const WeightSample* const> batch, LossKind loss);
double batch_loss(const Predictor& model, std::span<const WeightSample* const> batch, LossKind loss);

struct TrainResult {
  std::vector<double> epoch_loss;
};

/// Deterministic given cfg.seed. Throws NonFiniteLossError when the loss
/// diverges. on_epoch (optional) sees the epoch index and mean train loss.
TrainResult train(Predictor& model, std::span<const WeightSample> data, const TrainConfig& cfg,
                  const std::function<void(std::size_t, double)>& on_epoch = {});

}  // namespace tnfn
