#pragma once

#include <cstdint>
#include <vector>

#include "tnfn/nfn_layers.hpp"
#include "tnfn/predictor.hpp"

namespace tnfn {

struct NfnConfig {
  std::size_t equivariant_layers = 1;
  std::size_t hidden_channels = 10;
  /// D' of the invariant layer.
  std::size_t features = 10;
  std::size_t head_hidden = 16;
  /// Dense encoders over the flattened embedding and classifier weights.
  bool side_encoders = true;
  std::size_t side_features = 8;
  /// Side encoders also see |x| of every weight.
  bool side_magnitudes = true;
  /// Compress the head inputs with sign(x) log(1 + |x|).
  bool log_features = false;
  /// Negative control: rectify the query factors between layers as well.
  bool break_relu_placement = false;

  nlohmann::json to_json() const;
  static NfnConfig from_json(const nlohmann::json& j);
};

/// Per block: equivariant layers with ReLU on the MLP components in between,
/// then the invariant layer. Layer parameters are shared by all blocks; the
/// block features are concatenated (with the side features) and fed to a
/// dense ReLU head with one output.
class NfnModel : public Predictor {
 public:
  NfnModel(const NfnConfig& cfg, const InputLayout& layout, std::uint64_t seed);

  std::string kind() const override { return "nfn"; }
  nlohmann::json config() const override { return cfg_.to_json(); }
  const InputLayout& layout() const override { return layout_; }
  ParamSet& params() override { return params_; }
  const ParamSet& params() const override { return params_; }
  ad::Var logits(ad::Tape& tape, const VarMap& vars, std::span<const WeightSample* const> batch) const override;

  /// Invariant features [b, blocks * D'] before the head.
  ad::Var block_features(ad::Tape& tape, const VarMap& vars, std::span<const WeightSample* const> batch) const;

  const NfnConfig& nfn_config() const { return cfg_; }
  const std::vector<EquivariantParams>& equivariant_layers() const { return equivariant_; }
  const InvariantParams& invariant_layer() const { return invariant_; }

 private:
  NfnConfig cfg_;
  InputLayout layout_;
  // Shape templates; the live values are in params_ under "eq<l>." and "inv.".
  std::vector<EquivariantParams> equivariant_;
  InvariantParams invariant_;
  ParamSet params_;
};

}  // namespace tnfn
