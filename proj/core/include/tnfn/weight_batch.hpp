#pragma once

#include <span>
#include <vector>

#include "tnfn/autodiff.hpp"
#include "tnfn/block.hpp"
#include "tnfn/group.hpp"

namespace tnfn {

/// d parallel copies of one block's weights sharing the same dims.
struct MultiChannelWeights {
  BlockDims dims;
  std::vector<BlockWeights> channels;

  static MultiChannelWeights single(const BlockWeights& w) { return {w.dims, {w}}; }
  /// Throws ShapeError if channels are empty or disagree with dims.
  void check() const;
};

MultiChannelWeights act(const GroupElement& g, const MultiChannelWeights& u);
double max_abs_diff(const MultiChannelWeights& a, const MultiChannelWeights& b);

/// Samples x channels of weights as stacked tensors:
///   query, key [b, c, h, D, Dk]   value [b, c, h, D, Dv]   output [b, c, h, Dv, D]
///   mlp_in [b, c, D, DA]   bias_in [b, c, DA]   mlp_out [b, c, DA, D]   bias_out [b, c, D]
struct WeightBatch {
  BlockDims dims;
  std::size_t batch = 0;
  std::size_t channels = 0;
  Tensor query, key, value, output, mlp_in, bias_in, mlp_out, bias_out;
};

WeightBatch pack(std::span<const MultiChannelWeights> samples);
MultiChannelWeights unpack(const WeightBatch& batch, std::size_t sample);

/// Tape handles for the eight weight tensors of a WeightBatch.
struct WeightVars {
  BlockDims dims;
  ad::Var query, key, value, output, mlp_in, bias_in, mlp_out, bias_out;

  std::size_t batch() const { return query.shape()[0]; }
  std::size_t channels() const { return query.shape()[1]; }
};

WeightVars constant_vars(ad::Tape& tape, const WeightBatch& batch);
WeightBatch values_of(const WeightVars& vars);

/// [WW]^QK = Wq Wk^T and [WW]^VO = Wv Wo per head, shaped [b, c, h, D, D].
ad::Var query_key_products(const WeightVars& u);
ad::Var value_output_products(const WeightVars& u);

}  // namespace tnfn
