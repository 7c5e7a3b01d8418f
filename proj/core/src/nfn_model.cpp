#include "tnfn/nfn_model.hpp"

#include <cmath>
#include <stdexcept>

#include "tnfn/rng.hpp"

namespace tnfn {

using nlohmann::json;

json NfnConfig::to_json() const {
  return {{"equivariant_layers", equivariant_layers},
          {"hidden_channels", hidden_channels},
          {"features", features},
          {"head_hidden", head_hidden},
          {"side_encoders", side_encoders},
          {"side_features", side_features},
          {"side_magnitudes", side_magnitudes},
          {"log_features", log_features},
          {"break_relu_placement", break_relu_placement}};
}

NfnConfig NfnConfig::from_json(const json& j) {
  NfnConfig c;
  c.equivariant_layers = j.value("equivariant_layers", c.equivariant_layers);
  c.hidden_channels = j.value("hidden_channels", c.hidden_channels);
  c.features = j.value("features", c.features);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.side_encoders = j.value("side_encoders", c.side_encoders);
  c.side_features = j.value("side_features", c.side_features);
  c.side_magnitudes = j.value("side_magnitudes", c.side_magnitudes);
  c.log_features = j.value("log_features", c.log_features);
  c.break_relu_placement = j.value("break_relu_placement", c.break_relu_placement);
  if (c.hidden_channels == 0 || c.features == 0 || c.head_hidden == 0 || (c.side_encoders && c.side_features == 0))
    throw std::invalid_argument("nfn config: layer widths must be positive");
  return c;
}

namespace {

void add_dense(ParamSet& set, Rng& rng, const std::string& prefix, std::size_t in, std::size_t out) {
  set.add(prefix + "w", gaussian_tensor(rng, {in, out}, 1.0 / std::sqrt(static_cast<double>(in))));
  set.add(prefix + "b", Tensor({1, out}));
}

ad::Var dense(const VarMap& vars, const std::string& prefix, ad::Var x) {
  return ad::add_row_bias(ad::matmul(x, lookup(vars, prefix + "w")), lookup(vars, prefix + "b"));
}

// One row per sample; with magnitudes the row is followed by its absolute values.
Tensor stack_rows(std::span<const WeightSample* const> batch, Tensor WeightSample::*field, bool magnitudes) {
  const std::size_t n = ((*batch.front()).*field).size();
  std::vector<double> v;
  v.reserve(batch.size() * n * (magnitudes ? 2 : 1));
  for (const auto* s : batch) {
    const auto d = (s->*field).data();
    v.insert(v.end(), d.begin(), d.end());
    if (magnitudes)
      for (double x : d) v.push_back(std::fabs(x));
  }
  return Tensor({batch.size(), n * (magnitudes ? 2 : 1)}, std::move(v));
}

}  // namespace

NfnModel::NfnModel(const NfnConfig& cfg, const InputLayout& layout, std::uint64_t seed)
    : cfg_(cfg), layout_(layout) {
  validate(layout.dims);
  if (layout.num_blocks == 0) throw ShapeError("NfnModel: layout has no blocks");
  Rng rng(seed);
  std::size_t channels = 1;
  for (std::size_t l = 0; l < cfg.equivariant_layers; ++l) {
    EquivariantParams p = EquivariantParams::zeros(channels, cfg.hidden_channels, layout.dims.model);
    init_params(rng, p, layout.dims);
    for (const auto& b : p.set.blocks()) params_.add("eq" + std::to_string(l) + "." + b.name, b.value);
    equivariant_.push_back(std::move(p));
    channels = cfg.hidden_channels;
  }
  invariant_ = InvariantParams::zeros(channels, 1, layout.dims.model, cfg.features);
  init_params(rng, invariant_, layout.dims, cfg.equivariant_layers > 0);
  for (const auto& b : invariant_.set.blocks()) params_.add("inv." + b.name, b.value);

  std::size_t width = layout.num_blocks * cfg.features;
  if (cfg.side_encoders) {
    const std::size_t k = cfg.side_magnitudes ? 2 : 1;
    add_dense(params_, rng, "side.emb.", k * layout.embedding_size, cfg.side_features);
    add_dense(params_, rng, "side.cls.", k * layout.classifier_size, cfg.side_features);
    width += 2 * cfg.side_features;
  }
  add_dense(params_, rng, "head.hidden.", width, cfg.head_hidden);
  add_dense(params_, rng, "head.out.", cfg.head_hidden, 1);
}

ad::Var NfnModel::block_features(ad::Tape& tape, const VarMap& vars, std::span<const WeightSample* const> batch) const {
  if (batch.empty()) throw std::invalid_argument("NfnModel: empty batch");
  for (const auto* s : batch) layout_.check(*s);
  std::vector<ad::Var> feats;
  for (std::size_t b = 0; b < layout_.num_blocks; ++b) {
    std::vector<MultiChannelWeights> inputs;
    for (const auto* s : batch) inputs.push_back(MultiChannelWeights::single(s->blocks[b]));
    WeightVars u = constant_vars(tape, pack(inputs));
    for (std::size_t l = 0; l < equivariant_.size(); ++l) {
      u = equivariant_forward(equivariant_[l], vars, u, "eq" + std::to_string(l) + ".");
      u = relu_equivariant(u, cfg_.break_relu_placement);
    }
    const ad::Var inv = invariant_forward(invariant_, vars, u, "inv.");
    feats.push_back(ad::reshape(inv, {batch.size(), cfg_.features}));
  }
  return ad::concat_columns(feats);
}

ad::Var NfnModel::logits(ad::Tape& tape, const VarMap& vars, std::span<const WeightSample* const> batch) const {
  std::vector<ad::Var> parts{block_features(tape, vars, batch)};
  if (cfg_.side_encoders) {
    parts.push_back(ad::relu(dense(vars, "side.emb.", tape.constant(stack_rows(batch, &WeightSample::embedding, cfg_.side_magnitudes)))));
    parts.push_back(ad::relu(dense(vars, "side.cls.", tape.constant(stack_rows(batch, &WeightSample::classifier, cfg_.side_magnitudes)))));
  }
  ad::Var x = parts.size() == 1 ? parts.front() : ad::concat_columns(parts);
  if (cfg_.log_features) x = ad::signed_log1p(x);
  return dense(vars, "head.out.", ad::relu(dense(vars, "head.hidden.", x)));
}

}  // namespace tnfn
