#include "tnfn/block.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tnfn/linalg.hpp"
#include "tnfn/rng.hpp"

namespace tnfn {

namespace {

void expect_shape(const Tensor& t, const Shape& shape, const std::string& what) {
  if (t.shape() != shape)
    throw ShapeError(what + ": expected " + shape_to_string(shape) + ", got " + shape_to_string(t.shape()));
}

Tensor add_row(Tensor m, const Tensor& row) {
  const std::size_t cols = m.dim(1);
  if (row.size() != cols) throw ShapeError("bias of length " + std::to_string(row.size()) + " for width " +
                                           std::to_string(cols));
  auto d = m.data();
  auto r = row.data();
  for (std::size_t i = 0; i < m.dim(0); ++i)
    for (std::size_t j = 0; j < cols; ++j) d[i * cols + j] += r[j];
  return m;
}

void require_input(const Tensor& x, std::size_t model) {
  if (x.rank() != 2 || x.dim(1) != model)
    throw ShapeError("input must be L x " + std::to_string(model) + ", got " + shape_to_string(x.shape()));
}

}  // namespace

void validate(const BlockDims& dims) {
  if (dims.heads == 0 || dims.model == 0 || dims.key == 0 || dims.value == 0 || dims.hidden == 0)
    throw ShapeError("block dimensions must all be positive");
}

BlockWeights BlockWeights::zeros(const BlockDims& dims) {
  validate(dims);
  BlockWeights w;
  w.dims = dims;
  w.heads.resize(dims.heads);
  for (auto& h : w.heads) {
    h.query = Tensor({dims.model, dims.key});
    h.key = Tensor({dims.model, dims.key});
    h.value = Tensor({dims.model, dims.value});
    h.output = Tensor({dims.value, dims.model});
  }
  w.mlp_in = Tensor({dims.model, dims.hidden});
  w.mlp_out = Tensor({dims.hidden, dims.model});
  w.bias_in = Tensor({1, dims.hidden});
  w.bias_out = Tensor({1, dims.model});
  return w;
}

void BlockWeights::check() const {
  validate(dims);
  if (heads.size() != dims.heads)
    throw ShapeError("expected " + std::to_string(dims.heads) + " heads, got " + std::to_string(heads.size()));
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const auto tag = "head " + std::to_string(i);
    expect_shape(heads[i].query, {dims.model, dims.key}, tag + " query");
    expect_shape(heads[i].key, {dims.model, dims.key}, tag + " key");
    expect_shape(heads[i].value, {dims.model, dims.value}, tag + " value");
    expect_shape(heads[i].output, {dims.value, dims.model}, tag + " output");
  }
  expect_shape(mlp_in, {dims.model, dims.hidden}, "mlp_in");
  expect_shape(mlp_out, {dims.hidden, dims.model}, "mlp_out");
  expect_shape(bias_in, {1, dims.hidden}, "bias_in");
  expect_shape(bias_out, {1, dims.model}, "bias_out");
}

bool bit_equal(const BlockWeights& a, const BlockWeights& b) {
  if (!(a.dims == b.dims) || a.heads.size() != b.heads.size()) return false;
  for (std::size_t i = 0; i < a.heads.size(); ++i) {
    if (!bit_equal(a.heads[i].query, b.heads[i].query) || !bit_equal(a.heads[i].key, b.heads[i].key) ||
        !bit_equal(a.heads[i].value, b.heads[i].value) || !bit_equal(a.heads[i].output, b.heads[i].output))
      return false;
  }
  return bit_equal(a.mlp_in, b.mlp_in) && bit_equal(a.mlp_out, b.mlp_out) && bit_equal(a.bias_in, b.bias_in) &&
         bit_equal(a.bias_out, b.bias_out);
}

double max_abs_diff(const BlockWeights& a, const BlockWeights& b) {
  a.check();
  b.check();
  if (!(a.dims == b.dims)) throw ShapeError("max_abs_diff: block dims differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.heads.size(); ++i) {
    m = std::max({m, max_abs_diff(a.heads[i].query, b.heads[i].query), max_abs_diff(a.heads[i].key, b.heads[i].key),
                  max_abs_diff(a.heads[i].value, b.heads[i].value),
                  max_abs_diff(a.heads[i].output, b.heads[i].output)});
  }
  return std::max({m, max_abs_diff(a.mlp_in, b.mlp_in), max_abs_diff(a.mlp_out, b.mlp_out),
                   max_abs_diff(a.bias_in, b.bias_in), max_abs_diff(a.bias_out, b.bias_out)});
}

BlockWeights random_block(std::uint64_t seed, const BlockDims& dims, double stddev) {
  Rng rng(seed);
  BlockWeights w = BlockWeights::zeros(dims);
  for (auto& h : w.heads) {
    h.query = gaussian_tensor(rng, h.query.shape(), stddev);
    h.key = gaussian_tensor(rng, h.key.shape(), stddev);
    h.value = gaussian_tensor(rng, h.value.shape(), stddev);
    h.output = gaussian_tensor(rng, h.output.shape(), stddev);
  }
  w.mlp_in = gaussian_tensor(rng, w.mlp_in.shape(), stddev);
  w.mlp_out = gaussian_tensor(rng, w.mlp_out.shape(), stddev);
  w.bias_in = gaussian_tensor(rng, w.bias_in.shape(), stddev);
  w.bias_out = gaussian_tensor(rng, w.bias_out.shape(), stddev);
  return w;
}

Tensor softmax_rows(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("softmax_rows expects rank 2, got " + shape_to_string(m.shape()));
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  Tensor out = m;
  auto d = out.data();
  for (std::size_t i = 0; i < rows; ++i) {
    double* row = d.data() + i * cols;
    double mx = row[0];
    for (std::size_t j = 0; j < cols; ++j) {
      if (std::isnan(row[j])) throw std::domain_error("softmax_rows: NaN input");
      mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < cols; ++j) row[j] /= sum;
  }
  return out;
}

Tensor head_forward(const Tensor& x, const Tensor& query, const Tensor& key, const Tensor& value) {
  if (x.rank() != 2) throw ShapeError("head_forward: X must be rank 2");
  if (query.rank() != 2 || key.shape() != query.shape() || value.rank() != 2 || query.dim(0) != x.dim(1) ||
      value.dim(0) != x.dim(1))
    throw ShapeError("head_forward: factor shapes " + shape_to_string(query.shape()) + ", " +
                     shape_to_string(key.shape()) + ", " + shape_to_string(value.shape()) + " do not fit X " +
                     shape_to_string(x.shape()));
  const double inv_sqrt_key = 1.0 / std::sqrt(static_cast<double>(query.dim(1)));
  const Tensor q = matmul(x, query);
  const Tensor k = matmul(x, key);
  const Tensor scores = matmul(q, transpose(k)) * inv_sqrt_key;
  return matmul(softmax_rows(scores), matmul(x, value));
}

Tensor multihead_forward(const Tensor& x, const BlockWeights& weights) {
  weights.check();
  require_input(x, weights.dims.model);
  const auto& dims = weights.dims;
  const std::size_t len = x.dim(0);
  const std::size_t wide = dims.heads * dims.value;

  Tensor concat({len, wide});
  Tensor stacked_out({wide, dims.model});
  for (std::size_t i = 0; i < dims.heads; ++i) {
    const auto& h = weights.heads[i];
    const Tensor head = head_forward(x, h.query, h.key, h.value);
    for (std::size_t r = 0; r < len; ++r)
      for (std::size_t c = 0; c < dims.value; ++c) concat(r, i * dims.value + c) = head(r, c);
    for (std::size_t r = 0; r < dims.value; ++r)
      for (std::size_t c = 0; c < dims.model; ++c) stacked_out(i * dims.value + r, c) = h.output(r, c);
  }
  return matmul(concat, stacked_out);
}

Tensor multihead_forward_sum(const Tensor& x, const BlockWeights& weights) {
  weights.check();
  require_input(x, weights.dims.model);
  Tensor out({x.dim(0), weights.dims.model});
  for (const auto& h : weights.heads) out += matmul(head_forward(x, h.query, h.key, h.value), h.output);
  return out;
}

Tensor f_map(const Tensor& x, const FMapParams& params) {
  if (params.scores.size() != params.values.size() || params.scores.empty())
    throw ShapeError("f_map: need matching non-empty lists of A_i and B_i");
  if (x.rank() != 2) throw ShapeError("f_map: X must be rank 2");
  const std::size_t model = x.dim(1);
  Tensor out({x.dim(0), model});
  const Tensor xt = transpose(x);
  for (std::size_t i = 0; i < params.scores.size(); ++i) {
    expect_shape(params.scores[i], {model, model}, "f_map A_" + std::to_string(i));
    expect_shape(params.values[i], {model, model}, "f_map B_" + std::to_string(i));
    const Tensor attn = softmax_rows(matmul(matmul(x, params.scores[i]), xt));
    out += matmul(matmul(attn, x), params.values[i]);
  }
  return out;
}

Tensor layer_norm_rows(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("layer_norm_rows expects rank 2");
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  if (cols < 2) throw ShapeError("layer_norm_rows needs at least two columns");
  Tensor out({rows, cols});
  auto src = m.data();
  auto dst = out.data();
  const double root_d = std::sqrt(static_cast<double>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = src.data() + i * cols;
    double* y = dst.data() + i * cols;
    double mean = 0.0, raw = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      mean += x[j];
      raw += x[j] * x[j];
    }
    mean /= static_cast<double>(cols);
    double norm = 0.0;
    for (std::size_t j = 0; j < cols; ++j) norm += (x[j] - mean) * (x[j] - mean);
    norm = std::sqrt(norm);
    if (norm < 1e-12 * std::max(1.0, std::sqrt(raw))) continue;  // degenerate: zero row
    const double f = root_d / norm;
    for (std::size_t j = 0; j < cols; ++j) y[j] = (x[j] - mean) * f;
  }
  return out;
}

Tensor attn_forward(const Tensor& x, const BlockWeights& weights) {
  const Tensor normed = layer_norm_rows(multihead_forward(x, weights));
  const Tensor hidden = relu(add_row(matmul(normed, weights.mlp_in), weights.bias_in));
  return layer_norm_rows(add_row(matmul(hidden, weights.mlp_out), weights.bias_out));
}

BlockWeights build_transformed_multihead(const BlockWeights& weights, const std::vector<Tensor>& query_key,
                                         const std::vector<Tensor>& value_output,
                                         const std::vector<std::size_t>& head_perm) {
  weights.check();
  const auto& dims = weights.dims;
  if (query_key.size() != dims.heads || value_output.size() != dims.heads || head_perm.size() != dims.heads)
    throw ShapeError("build_transformed_multihead: need one M, N and image per head");
  std::vector<bool> seen(dims.heads, false);
  for (auto t : head_perm) {
    if (t >= dims.heads || seen[t]) throw std::invalid_argument("head_perm is not a permutation");
    seen[t] = true;
  }
  BlockWeights out = weights;
  for (std::size_t i = 0; i < dims.heads; ++i) {
    expect_shape(query_key[i], {dims.key, dims.key}, "M_" + std::to_string(i));
    expect_shape(value_output[i], {dims.value, dims.value}, "N_" + std::to_string(i));
    const auto& src = weights.heads[i];
    auto& dst = out.heads[head_perm[i]];
    dst.query = matmul(src.query, transpose(query_key[i]));
    dst.key = matmul(src.key, inverse(query_key[i]));
    dst.value = matmul(src.value, value_output[i]);
    dst.output = matmul(inverse(value_output[i]), src.output);
  }
  return out;
}

}  // namespace tnfn
