#pragma once

#include <vector>

#include "tnfn/tensor.hpp"

namespace tnfn {

/// Sizes of one transformer block: heads, model width, query/key width,
/// value width and MLP hidden width.
struct BlockDims {
  std::size_t heads = 1;
  std::size_t model = 1;
  std::size_t key = 1;
  std::size_t value = 1;
  std::size_t hidden = 1;

  friend bool operator==(const BlockDims&, const BlockDims&) = default;
};

void validate(const BlockDims& dims);

struct HeadWeights {
  Tensor query;   // model x key
  Tensor key;     // model x key
  Tensor value;   // model x value
  Tensor output;  // value x model
};

/// One element of the block weight space: per-head attention factors plus the
/// two-layer ReLU MLP (row-vector biases).
struct BlockWeights {
  BlockDims dims;
  std::vector<HeadWeights> heads;
  Tensor mlp_in;    // model x hidden
  Tensor mlp_out;   // hidden x model
  Tensor bias_in;   // 1 x hidden
  Tensor bias_out;  // 1 x model

  static BlockWeights zeros(const BlockDims& dims);
  /// Throws ShapeError if any tensor disagrees with dims.
  void check() const;
};

bool bit_equal(const BlockWeights& a, const BlockWeights& b);
double max_abs_diff(const BlockWeights& a, const BlockWeights& b);

/// Gaussian BlockWeights, entries N(0, stddev^2).
BlockWeights random_block(std::uint64_t seed, const BlockDims& dims, double stddev = 1.0);

/// Pairs (A_i, B_i) of the bilinear attention map, each model x model.
struct FMapParams {
  std::vector<Tensor> scores;  // A_i
  std::vector<Tensor> values;  // B_i
};

/// Row-wise softmax with max subtraction. Throws std::domain_error on NaN.
Tensor softmax_rows(const Tensor& m);

/// softmax((X Wq)(X Wk)^T / sqrt(key)) (X Wv).
Tensor head_forward(const Tensor& x, const Tensor& query, const Tensor& key, const Tensor& value);

/// Concatenation form: [Head_1, ..., Head_h] stacked along columns, times the
/// row-stacked output factors.
Tensor multihead_forward(const Tensor& x, const BlockWeights& weights);
/// Per-head sum form: sum_i Head_i Wo_i.
Tensor multihead_forward_sum(const Tensor& x, const BlockWeights& weights);

/// sum_i softmax(X A_i X^T) X B_i.
Tensor f_map(const Tensor& x, const FMapParams& params);

/// LayerNorm(x) = sqrt(D) (x - mean) / ||x - mean||_2, no epsilon. Rows whose
/// centred norm is below 1e-12 * max(1, ||x||_2) map to the zero row.
Tensor layer_norm_rows(const Tensor& m);

/// LayerNorm(ReLU(LayerNorm(MultiHead(X)) Wa + 1 ba) Wb + 1 bb). No residuals.
Tensor attn_forward(const Tensor& x, const BlockWeights& weights);

/// The head-permuted, GL-transformed weights: for each i the factors of head
/// tau(i) become (Wq_i M_i^T, Wk_i M_i^{-1}, Wv_i N_i, N_i^{-1} Wo_i). MLP copied.
BlockWeights build_transformed_multihead(const BlockWeights& weights, const std::vector<Tensor>& query_key,
                                         const std::vector<Tensor>& value_output,
                                         const std::vector<std::size_t>& head_perm);

}  // namespace tnfn
