#include "tnfn/group.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tnfn/linalg.hpp"
#include "tnfn/rng.hpp"

namespace tnfn {

Permutation::Permutation(std::vector<std::size_t> map) : map_(std::move(map)) {
  std::vector<bool> seen(map_.size(), false);
  for (auto v : map_) {
    if (v >= map_.size() || seen[v]) throw std::invalid_argument("not a permutation");
    seen[v] = true;
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::size_t> m(n);
  std::iota(m.begin(), m.end(), std::size_t{0});
  return Permutation(std::move(m));
}

Permutation Permutation::inverse() const {
  std::vector<std::size_t> inv(map_.size());
  for (std::size_t i = 0; i < map_.size(); ++i) inv[map_[i]] = i;
  return Permutation(std::move(inv));
}

Permutation Permutation::compose(const Permutation& other) const {
  if (other.size() != size()) throw std::invalid_argument("compose: permutation sizes differ");
  std::vector<std::size_t> m(size());
  for (std::size_t i = 0; i < size(); ++i) m[i] = map_[other.map_[i]];
  return Permutation(std::move(m));
}

Tensor Permutation::matrix() const {
  Tensor p({size(), size()});
  for (std::size_t j = 0; j < size(); ++j) p(map_[j], j) = 1.0;
  return p;
}

namespace {

void check_element(const GroupElement& g, const BlockDims& dims) {
  if (g.head_perm.size() != dims.heads || g.query_key.size() != dims.heads || g.value_output.size() != dims.heads ||
      g.model_perm.size() != dims.model || g.hidden_perm.size() != dims.hidden)
    throw ShapeError("group element does not match block dims");
  for (std::size_t i = 0; i < dims.heads; ++i) {
    if (g.query_key[i].shape() != Shape{dims.key, dims.key} ||
        g.value_output[i].shape() != Shape{dims.value, dims.value})
      throw ShapeError("group element matrices do not match block dims");
  }
}

// Columns j <- columns perm(j): computes W P_perm.
Tensor permute_columns(const Tensor& w, const Permutation& perm) {
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  Tensor out({rows, cols});
  auto src = w.data();
  auto dst = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[r * cols + c] = src[r * cols + perm(c)];
  return out;
}

// Rows i <- rows perm(i): computes P_perm^{-1} W.
Tensor permute_rows(const Tensor& w, const Permutation& perm) {
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  Tensor out({rows, cols});
  auto src = w.data();
  auto dst = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(src.data() + perm(r) * cols, cols, dst.data() + r * cols);
  return out;
}

Tensor sample_gated_matrix(Rng& rng, std::size_t n, double lo, double hi) {
  for (int attempt = 0; attempt <= 100; ++attempt) {
    Tensor m = uniform_tensor(rng, {n, n}, lo, hi);
    if (condition_number(m) < kInvertibilityGate) return m;
  }
  throw GroupSamplingError("no invertible matrix passed the condition gate after 100 redraws in range [" +
                           std::to_string(lo) + ", " + std::to_string(hi) + ")");
}

}  // namespace

GroupElement identity_element(const BlockDims& dims) {
  validate(dims);
  GroupElement g;
  g.head_perm = Permutation::identity(dims.heads);
  g.model_perm = Permutation::identity(dims.model);
  g.hidden_perm = Permutation::identity(dims.hidden);
  g.query_key.assign(dims.heads, Tensor::identity(dims.key));
  g.value_output.assign(dims.heads, Tensor::identity(dims.value));
  return g;
}

GroupElement sample_group_element(std::uint64_t seed, const BlockDims& dims, double lo, double hi) {
  validate(dims);
  if (!(lo < hi)) throw std::invalid_argument("sample_group_element: require scale_lo < scale_hi");
  Rng rng(seed);
  GroupElement g;
  g.head_perm = Permutation(rng.permutation(dims.heads));
  g.model_perm = Permutation(rng.permutation(dims.model));
  g.hidden_perm = Permutation(rng.permutation(dims.hidden));
  for (std::size_t i = 0; i < dims.heads; ++i) g.query_key.push_back(sample_gated_matrix(rng, dims.key, lo, hi));
  for (std::size_t i = 0; i < dims.heads; ++i)
    g.value_output.push_back(sample_gated_matrix(rng, dims.value, lo, hi));
  return g;
}

BlockWeights act(const GroupElement& g, const BlockWeights& weights) {
  weights.check();
  const auto& dims = weights.dims;
  check_element(g, dims);

  BlockWeights out = BlockWeights::zeros(dims);
  for (std::size_t i = 0; i < dims.heads; ++i) {
    const std::size_t src = g.head_perm(i);
    const auto& h = weights.heads[src];
    const Tensor& m = g.query_key[src];
    const Tensor& n = g.value_output[src];
    out.heads[i].query = matmul(h.query, transpose(m));
    out.heads[i].key = matmul(h.key, inverse(m));
    out.heads[i].value = matmul(h.value, n);
    out.heads[i].output = permute_columns(matmul(inverse(n), h.output), g.model_perm);
  }
  out.mlp_in = permute_columns(permute_rows(weights.mlp_in, g.model_perm), g.hidden_perm);
  out.mlp_out = permute_rows(weights.mlp_out, g.hidden_perm);
  out.bias_in = permute_columns(weights.bias_in, g.hidden_perm);
  out.bias_out = weights.bias_out;
  return out;
}

GroupElement compose(const GroupElement& first, const GroupElement& second) {
  const std::size_t heads = first.head_perm.size();
  if (second.head_perm.size() != heads) throw ShapeError("compose: head counts differ");
  GroupElement g;
  g.head_perm = first.head_perm.compose(second.head_perm);
  g.model_perm = first.model_perm.compose(second.model_perm);
  g.hidden_perm = first.hidden_perm.compose(second.hidden_perm);
  const Permutation first_inv = first.head_perm.inverse();
  g.query_key.resize(heads);
  g.value_output.resize(heads);
  for (std::size_t j = 0; j < heads; ++j) {
    const std::size_t k = first_inv(j);
    g.query_key[j] = matmul(second.query_key[k], first.query_key[j]);
    g.value_output[j] = matmul(first.value_output[j], second.value_output[k]);
  }
  return g;
}

double max_condition(const GroupElement& g) {
  double c = 1.0;
  for (const auto& m : g.query_key) c = std::max(c, condition_number(m));
  for (const auto& n : g.value_output) c = std::max(c, condition_number(n));
  return c;
}

DerivedTerms derived_terms(const BlockWeights& weights) {
  weights.check();
  DerivedTerms t;
  for (const auto& h : weights.heads) {
    t.query_key.push_back(matmul(h.query, transpose(h.key)));
    t.value_output.push_back(matmul(h.value, h.output));
  }
  return t;
}

Tensor build_doubly_stochastic_orthogonal(std::uint64_t seed, std::size_t dim) {
  if (dim < 2) throw ShapeError("build_doubly_stochastic_orthogonal needs dim >= 2");
  Rng rng(seed);
  // Basis whose first column is the normalized all-ones vector.
  Tensor seed_cols = gaussian_tensor(rng, {dim, dim});
  for (std::size_t i = 0; i < dim; ++i) seed_cols(i, 0) = 1.0;
  const Tensor basis = orthonormalize_columns(seed_cols);

  const Tensor x = random_orthogonal(rng, dim - 1);
  Tensor block = Tensor::identity(dim);
  for (std::size_t i = 0; i + 1 < dim; ++i)
    for (std::size_t j = 0; j + 1 < dim; ++j) block(i + 1, j + 1) = x(i, j);
  return matmul(matmul(basis, block), transpose(basis));
}

}  // namespace tnfn
