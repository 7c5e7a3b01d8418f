#include <gtest/gtest.h>

#include <cmath>

#include "tnfn/block.hpp"
#include "tnfn/group.hpp"
#include "tnfn/rng.hpp"

using namespace tnfn;

namespace {

// Eq-style single head written out with explicit loops.
Tensor naive_head(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv) {
  const std::size_t L = x.dim(0), D = x.dim(1), K = wq.dim(1), V = wv.dim(1);
  auto proj = [&](const Tensor& w, std::size_t n) {
    Tensor r({L, n});
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < D; ++c) r(i, j) += x(i, c) * w(c, j);
    return r;
  };
  const Tensor q = proj(wq, K), k = proj(wk, K), v = proj(wv, V);
  Tensor out({L, V});
  for (std::size_t i = 0; i < L; ++i) {
    std::vector<double> s(L);
    double mx = -1e300, z = 0;
    for (std::size_t j = 0; j < L; ++j) {
      for (std::size_t c = 0; c < K; ++c) s[j] += q(i, c) * k(j, c);
      s[j] /= std::sqrt(double(K));
      mx = std::max(mx, s[j]);
    }
    for (auto& e : s) z += (e = std::exp(e - mx));
    for (std::size_t j = 0; j < L; ++j)
      for (std::size_t c = 0; c < V; ++c) out(i, c) += s[j] / z * v(j, c);
  }
  return out;
}

const BlockDims kDims{2, 8, 4, 4, 8};

}  // namespace

TEST(Softmax, Examples) {
  const Tensor a = softmax_rows(Tensor::matrix({{0, 0, 0}}));
  for (double v : a.data()) EXPECT_NEAR(v, 1.0 / 3, 1e-15);
  const Tensor b = softmax_rows(Tensor::matrix({{0, std::log(2.0)}}));
  EXPECT_NEAR(b(0, 0), 1.0 / 3, 1e-15);
  EXPECT_NEAR(b(0, 1), 2.0 / 3, 1e-15);
  const Tensor c = softmax_rows(Tensor::matrix({{1000, 1000}}));
  EXPECT_EQ(c(0, 0), 0.5);
  EXPECT_EQ(c(0, 1), 0.5);
  EXPECT_THROW(softmax_rows(Tensor::matrix({{0, NAN}})), std::domain_error);
}

TEST(Softmax, RowsSumToOne) {
  const Tensor s = softmax_rows(rng_gaussian(3, {20, 7}, 5.0));
  for (std::size_t i = 0; i < 20; ++i) {
    double t = 0;
    for (std::size_t j = 0; j < 7; ++j) {
      EXPECT_GE(s(i, j), 0.0);
      t += s(i, j);
    }
    EXPECT_NEAR(t, 1.0, 1e-12);
  }
}

TEST(Head, ZeroValueGivesZero) {
  const auto w = random_block(1, kDims);
  const Tensor x = rng_gaussian(2, {5, 8});
  EXPECT_EQ(max_abs(head_forward(x, w.heads[0].query, w.heads[0].key, Tensor({8, 4}))), 0.0);
}

TEST(Head, ZeroQueryAverages) {
  const auto w = random_block(1, kDims);
  const Tensor x = rng_gaussian(2, {5, 8});
  const Tensor out = head_forward(x, Tensor({8, 4}), w.heads[0].key, w.heads[0].value);
  const Tensor xv = matmul(x, w.heads[0].value);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0;
    for (std::size_t i = 0; i < 5; ++i) mean += xv(i, c) / 5;
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(out(i, c), mean, 1e-14);
  }
}

TEST(Head, MatchesLoopOracle) {
  const Tensor x = rng_gaussian(5, {3, 4});
  const Tensor q = rng_gaussian(6, {4, 2}), k = rng_gaussian(7, {4, 2}), v = rng_gaussian(8, {4, 3});
  EXPECT_LT(max_abs_diff(head_forward(x, q, k, v), naive_head(x, q, k, v)), 1e-12);
}

TEST(MultiHead, SingleHead) {
  const BlockDims d{1, 6, 3, 2, 4};
  const auto w = random_block(3, d);
  const Tensor x = rng_gaussian(4, {5, 6});
  const Tensor ref = matmul(head_forward(x, w.heads[0].query, w.heads[0].key, w.heads[0].value), w.heads[0].output);
  EXPECT_LT(max_abs_diff(multihead_forward(x, w), ref), 1e-14);
}

TEST(MultiHead, ZeroOutput) {
  auto w = random_block(3, kDims);
  for (auto& h : w.heads) h.output = Tensor(h.output.shape());
  EXPECT_EQ(max_abs(multihead_forward(rng_gaussian(4, {5, 8}), w)), 0.0);
}

TEST(MultiHead, ConcatEqualsSum) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto w = random_block(100 + s, kDims);
    const Tensor x = rng_gaussian(200 + s, {6, 8});
    const Tensor a = multihead_forward(x, w), b = multihead_forward_sum(x, w);
    EXPECT_LT(max_abs_diff(a, b) / (1 + max_abs(a)), 1e-12);
  }
}

TEST(FMap, ZeroValues) {
  FMapParams p;
  for (int i = 0; i < 2; ++i) {
    p.scores.push_back(rng_gaussian(i, {8, 8}));
    p.values.push_back(Tensor({8, 8}));
  }
  EXPECT_EQ(max_abs(f_map(rng_gaussian(9, {4, 8}), p)), 0.0);
}

TEST(FMap, FactorizationMatchesMultiHead) {
  const BlockDims d{1, 8, 4, 4, 8};
  const auto w = random_block(12, d);
  FMapParams p;
  p.scores.push_back(matmul(w.heads[0].query, transpose(w.heads[0].key)) * (1.0 / std::sqrt(4.0)));
  p.values.push_back(matmul(w.heads[0].value, w.heads[0].output));
  const Tensor x = rng_gaussian(13, {5, 8});
  EXPECT_LT(max_abs_diff(f_map(x, p), multihead_forward(x, w)), 1e-12);
}

TEST(LayerNorm, Examples) {
  const Tensor a = layer_norm_rows(Tensor::matrix({{1, 3}}));
  EXPECT_NEAR(a(0, 0), -1.0, 1e-15);
  EXPECT_NEAR(a(0, 1), 1.0, 1e-15);
  EXPECT_EQ(max_abs(layer_norm_rows(Tensor::matrix({{2.5, 2.5, 2.5}}))), 0.0);
}

TEST(LayerNorm, ZeroMeanNormSqrtD) {
  const Tensor y = layer_norm_rows(rng_gaussian(4, {30, 6}, 3.0));
  for (std::size_t i = 0; i < 30; ++i) {
    double m = 0, n = 0;
    for (std::size_t j = 0; j < 6; ++j) {
      m += y(i, j);
      n += y(i, j) * y(i, j);
    }
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(n, 6.0, 1e-12);
  }
}

TEST(LayerNorm, SignAndPermutation) {
  Rng rng(5);
  for (double lambda : {-2.5, 3.0}) {
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor x = gaussian_tensor(rng, {1, 7});
      const Tensor p = Permutation(rng.permutation(7)).matrix();
      const Tensor lhs = layer_norm_rows(matmul(x * lambda, p));
      const Tensor rhs = matmul(layer_norm_rows(x), p) * (lambda > 0 ? 1.0 : -1.0);
      EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
    }
  }
}

TEST(Attn, IsTheComposition) {
  const auto w = random_block(21, kDims);
  const Tensor x = rng_gaussian(22, {5, 8});
  const Tensor ones({5, 1}, 1.0);
  const Tensor inner = layer_norm_rows(multihead_forward(x, w));
  const Tensor h = relu(matmul(inner, w.mlp_in) + matmul(ones, w.bias_in));
  const Tensor ref = layer_norm_rows(matmul(h, w.mlp_out) + matmul(ones, w.bias_out));
  EXPECT_TRUE(bit_equal(attn_forward(x, w), ref));
}

TEST(Attn, ZeroMlpInGivesEqualRows) {
  auto w = random_block(23, kDims);
  w.mlp_in = Tensor(w.mlp_in.shape());
  w.bias_in = Tensor(w.bias_in.shape());
  const Tensor y = attn_forward(rng_gaussian(24, {4, 8}), w);
  const Tensor ref = layer_norm_rows(w.bias_out);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(y(i, j), ref(0, j), 1e-12);
}

TEST(Attn, ShapeMismatch) {
  const auto w = random_block(1, kDims);
  EXPECT_THROW(attn_forward(Tensor({3, 5}), w), ShapeError);
}

TEST(TransformedMultiHead, IdentityIsNoOp) {
  const auto w = random_block(31, kDims);
  const std::vector<Tensor> m(2, Tensor::identity(4));
  const auto u = build_transformed_multihead(w, m, m, {0, 1});
  EXPECT_TRUE(bit_equal(u, w));
}

TEST(TransformedMultiHead, SameFunction) {
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = random_block(40 + trial, kDims);
    std::vector<Tensor> m, n;
    for (int i = 0; i < 2; ++i) {
      m.push_back(uniform_tensor(rng, {4, 4}, -1, 1));
      n.push_back(uniform_tensor(rng, {4, 4}, -1, 1));
    }
    const auto u = build_transformed_multihead(w, m, n, {1, 0});
    const Tensor x = gaussian_tensor(rng, {5, 8});
    const Tensor a = multihead_forward(x, w);
    EXPECT_LT(max_abs_diff(multihead_forward(x, u), a) / (1 + max_abs(a)), 1e-9);
  }
}
