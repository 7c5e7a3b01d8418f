#include "tnfn/weight_batch.hpp"

#include <algorithm>

namespace tnfn {

void MultiChannelWeights::check() const {
  if (channels.empty()) throw ShapeError("MultiChannelWeights needs at least one channel");
  for (const auto& c : channels) {
    if (!(c.dims == dims)) throw ShapeError("MultiChannelWeights: channel dims disagree");
    c.check();
  }
}

MultiChannelWeights act(const GroupElement& g, const MultiChannelWeights& u) {
  MultiChannelWeights out{u.dims, {}};
  for (const auto& c : u.channels) out.channels.push_back(act(g, c));
  return out;
}

double max_abs_diff(const MultiChannelWeights& a, const MultiChannelWeights& b) {
  if (a.channels.size() != b.channels.size()) throw ShapeError("max_abs_diff: channel counts differ");
  double m = 0.0;
  for (std::size_t c = 0; c < a.channels.size(); ++c) m = std::max(m, max_abs_diff(a.channels[c], b.channels[c]));
  return m;
}

namespace {

// Copies src into the slot of a stacked tensor whose trailing block has src.size() elements.
void put(Tensor& dst, std::size_t slot, const Tensor& src) {
  std::copy(src.data().begin(), src.data().end(), dst.data().begin() + slot * src.size());
}

Tensor take(const Tensor& src, std::size_t slot, Shape shape) {
  const std::size_t n = shape_size(shape);
  std::vector<double> v(src.data().begin() + slot * n, src.data().begin() + (slot + 1) * n);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

WeightBatch pack(std::span<const MultiChannelWeights> samples) {
  if (samples.empty()) throw ShapeError("pack: empty batch");
  const BlockDims dims = samples.front().dims;
  const std::size_t c = samples.front().channels.size();
  for (const auto& s : samples) {
    s.check();
    if (!(s.dims == dims) || s.channels.size() != c) throw ShapeError("pack: samples disagree in dims or channels");
  }
  const std::size_t b = samples.size(), h = dims.heads, d = dims.model, k = dims.key, v = dims.value,
                    a = dims.hidden;
  WeightBatch out;
  out.dims = dims;
  out.batch = b;
  out.channels = c;
  out.query = Tensor({b, c, h, d, k});
  out.key = Tensor({b, c, h, d, k});
  out.value = Tensor({b, c, h, d, v});
  out.output = Tensor({b, c, h, v, d});
  out.mlp_in = Tensor({b, c, d, a});
  out.bias_in = Tensor({b, c, a});
  out.mlp_out = Tensor({b, c, a, d});
  out.bias_out = Tensor({b, c, d});
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const auto& w = samples[s].channels[ch];
      const std::size_t slot = s * c + ch;
      for (std::size_t i = 0; i < h; ++i) {
        put(out.query, slot * h + i, w.heads[i].query);
        put(out.key, slot * h + i, w.heads[i].key);
        put(out.value, slot * h + i, w.heads[i].value);
        put(out.output, slot * h + i, w.heads[i].output);
      }
      put(out.mlp_in, slot, w.mlp_in);
      put(out.bias_in, slot, w.bias_in);
      put(out.mlp_out, slot, w.mlp_out);
      put(out.bias_out, slot, w.bias_out);
    }
  }
  return out;
}

MultiChannelWeights unpack(const WeightBatch& batch, std::size_t sample) {
  if (sample >= batch.batch) throw std::out_of_range("unpack: sample index out of range");
  const auto& dims = batch.dims;
  MultiChannelWeights out{dims, {}};
  for (std::size_t ch = 0; ch < batch.channels; ++ch) {
    const std::size_t slot = sample * batch.channels + ch;
    BlockWeights w = BlockWeights::zeros(dims);
    for (std::size_t i = 0; i < dims.heads; ++i) {
      w.heads[i].query = take(batch.query, slot * dims.heads + i, {dims.model, dims.key});
      w.heads[i].key = take(batch.key, slot * dims.heads + i, {dims.model, dims.key});
      w.heads[i].value = take(batch.value, slot * dims.heads + i, {dims.model, dims.value});
      w.heads[i].output = take(batch.output, slot * dims.heads + i, {dims.value, dims.model});
    }
    w.mlp_in = take(batch.mlp_in, slot, {dims.model, dims.hidden});
    w.bias_in = take(batch.bias_in, slot, {1, dims.hidden});
    w.mlp_out = take(batch.mlp_out, slot, {dims.hidden, dims.model});
    w.bias_out = take(batch.bias_out, slot, {1, dims.model});
    out.channels.push_back(std::move(w));
  }
  return out;
}

WeightVars constant_vars(ad::Tape& tape, const WeightBatch& batch) {
  return {batch.dims,
          tape.constant(batch.query),
          tape.constant(batch.key),
          tape.constant(batch.value),
          tape.constant(batch.output),
          tape.constant(batch.mlp_in),
          tape.constant(batch.bias_in),
          tape.constant(batch.mlp_out),
          tape.constant(batch.bias_out)};
}

WeightBatch values_of(const WeightVars& vars) {
  WeightBatch out;
  out.dims = vars.dims;
  out.batch = vars.batch();
  out.channels = vars.channels();
  out.query = vars.query.value();
  out.key = vars.key.value();
  out.value = vars.value.value();
  out.output = vars.output.value();
  out.mlp_in = vars.mlp_in.value();
  out.bias_in = vars.bias_in.value();
  out.mlp_out = vars.mlp_out.value();
  out.bias_out = vars.bias_out.value();
  return out;
}

ad::Var query_key_products(const WeightVars& u) { return ad::contract("bchpk,bchqk->bchpq", u.query, u.key); }

ad::Var value_output_products(const WeightVars& u) {
  return ad::contract("bchpk,bchkq->bchpq", u.value, u.output);
}

}  // namespace tnfn
