#pragma once

#include <cstdint>
#include <vector>

#include "tnfn/predictor.hpp"

namespace tnfn {

/// Every weight of a sample in a fixed order: per block the head factors
/// (query, key, value, output per head), the MLP weights and biases; then the
/// embedding and classifier. 1 x n.
Tensor flatten_sample(const WeightSample& sample);

struct MlpConfig {
  std::vector<std::size_t> hidden{32, 32};

  nlohmann::json to_json() const;
  static MlpConfig from_json(const nlohmann::json& j);
};

/// Dense ReLU network over flatten_sample with one output.
class MlpBaseline : public Predictor {
 public:
  MlpBaseline(const MlpConfig& cfg, const InputLayout& layout, std::uint64_t seed);

  std::string kind() const override { return "mlp"; }
  nlohmann::json config() const override { return cfg_.to_json(); }
  const InputLayout& layout() const override { return layout_; }
  ParamSet& params() override { return params_; }
  const ParamSet& params() const override { return params_; }
  ad::Var logits(ad::Tape& tape, const VarMap& vars, std::span<const WeightSample* const> batch) const override;

 private:
  MlpConfig cfg_;
  InputLayout layout_;
  ParamSet params_;
};

}  // namespace tnfn
