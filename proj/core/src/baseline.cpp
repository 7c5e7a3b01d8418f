#include "tnfn/baseline.hpp"

#include <cmath>
#include <stdexcept>

#include "tnfn/rng.hpp"

namespace tnfn {

using nlohmann::json;

Tensor flatten_sample(const WeightSample& s) {
  std::vector<double> v;
  auto put = [&](const Tensor& t) { v.insert(v.end(), t.data().begin(), t.data().end()); };
  for (const auto& b : s.blocks) {
    for (const auto& h : b.heads) {
      put(h.query);
      put(h.key);
      put(h.value);
      put(h.output);
    }
    put(b.mlp_in);
    put(b.bias_in);
    put(b.mlp_out);
    put(b.bias_out);
  }
  put(s.embedding);
  put(s.classifier);
  const std::size_t n = v.size();
  return Tensor({1, n}, std::move(v));
}

json MlpConfig::to_json() const { return {{"hidden", hidden}}; }

MlpConfig MlpConfig::from_json(const json& j) {
  MlpConfig c;
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  for (auto h : c.hidden)
    if (h == 0) throw std::invalid_argument("mlp config: hidden widths must be positive");
  return c;
}

MlpBaseline::MlpBaseline(const MlpConfig& cfg, const InputLayout& layout, std::uint64_t seed)
    : cfg_(cfg), layout_(layout) {
  validate(layout.dims);
  Rng rng(seed);
  const std::size_t per_block = layout.dims.heads * (2 * layout.dims.model * layout.dims.key +
                                                      2 * layout.dims.model * layout.dims.value) +
                                2 * layout.dims.model * layout.dims.hidden + layout.dims.hidden + layout.dims.model;
  std::size_t in = layout.num_blocks * per_block + layout.embedding_size + layout.classifier_size;
  std::vector<std::size_t> widths = cfg.hidden;
  widths.push_back(1);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    params_.add("dense" + std::to_string(l) + ".w",
                gaussian_tensor(rng, {in, widths[l]}, 1.0 / std::sqrt(static_cast<double>(in))));
    params_.add("dense" + std::to_string(l) + ".b", Tensor({1, widths[l]}));
    in = widths[l];
  }
}

ad::Var MlpBaseline::logits(ad::Tape& tape, const VarMap& vars, std::span<const WeightSample* const> batch) const {
  if (batch.empty()) throw std::invalid_argument("MlpBaseline: empty batch");
  std::vector<double> rows;
  std::size_t width = 0;
  for (const auto* s : batch) {
    layout_.check(*s);
    const Tensor f = flatten_sample(*s);
    width = f.size();
    rows.insert(rows.end(), f.data().begin(), f.data().end());
  }
  ad::Var x = tape.constant(Tensor({batch.size(), width}, std::move(rows)));
  const std::size_t layers = cfg_.hidden.size() + 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = "dense" + std::to_string(l);
    x = ad::add_row_bias(ad::matmul(x, lookup(vars, p + ".w")), lookup(vars, p + ".b"));
    if (l + 1 < layers) x = ad::relu(x);
  }
  return x;
}

}  // namespace tnfn
