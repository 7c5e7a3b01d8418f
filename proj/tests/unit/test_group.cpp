#include <gtest/gtest.h>

#include "tnfn/block.hpp"
#include "tnfn/group.hpp"
#include "tnfn/linalg.hpp"
#include "tnfn/rng.hpp"

using namespace tnfn;

namespace {

const BlockDims kDims{2, 8, 4, 4, 8};

double rel(const BlockWeights& a, const BlockWeights& b) {
  double ref = 0;
  for (const auto& h : b.heads)
    for (const Tensor* t : {&h.query, &h.key, &h.value, &h.output}) ref = std::max(ref, max_abs(*t));
  return max_abs_diff(a, b) / (1 + ref);
}

}  // namespace

TEST(Permutation, MatrixConvention) {
  const Permutation p({2, 0, 1});
  const Tensor m = p.matrix();
  const Tensor x = Tensor::matrix({{10, 20, 30}});
  const Tensor y = matmul(x, m);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(y(0, j), x(0, p(j)));
  EXPECT_EQ(matmul(p.matrix(), p.inverse().matrix()), Tensor::identity(3));
  const Permutation q({1, 2, 0});
  EXPECT_EQ(p.compose(q).matrix(), matmul(p.matrix(), q.matrix()));
  EXPECT_THROW(Permutation({0, 0, 1}), std::invalid_argument);
}

TEST(Group, SamplerIsDeterministic) {
  const auto a = sample_group_element(5, kDims, -1, 1), b = sample_group_element(5, kDims, -1, 1);
  EXPECT_EQ(a.head_perm, b.head_perm);
  EXPECT_EQ(a.model_perm, b.model_perm);
  EXPECT_EQ(a.hidden_perm, b.hidden_perm);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_TRUE(bit_equal(a.query_key[i], b.query_key[i]));
    EXPECT_TRUE(bit_equal(a.value_output[i], b.value_output[i]));
  }
}

TEST(Group, SamplerHonoursRangeAndGate) {
  for (double r : {1.0, 10.0, 100.0})
    for (std::uint64_t s = 0; s < 30; ++s) {
      const auto g = sample_group_element(s, kDims, -r, r);
      EXPECT_LT(max_condition(g), kInvertibilityGate);
      for (const auto& set : {g.query_key, g.value_output})
        for (const auto& m : set)
          for (double v : m.data()) {
            ASSERT_GE(v, -r);
            ASSERT_LT(v, r);
          }
    }
  EXPECT_THROW(sample_group_element(1, kDims, 1, 1), std::invalid_argument);
}

TEST(Group, IdentityActsTrivially) {
  const auto w = random_block(1, kDims);
  EXPECT_TRUE(bit_equal(act(identity_element(kDims), w), w));
}

TEST(Group, ActMatchesDefinition) {
  const auto w = random_block(2, kDims);
  const auto g = sample_group_element(3, kDims, -1, 1);
  const auto u = act(g, w);
  const Tensor po = g.model_perm.matrix(), pa = g.hidden_perm.matrix();
  for (std::size_t i = 0; i < 2; ++i) {
    const std::size_t t = g.head_perm(i);
    const auto& src = w.heads[t];
    EXPECT_LT(max_abs_diff(u.heads[i].query, matmul(src.query, transpose(g.query_key[t]))), 1e-13);
    EXPECT_LT(max_abs_diff(u.heads[i].key, matmul(src.key, inverse(g.query_key[t]))), 1e-10);
    EXPECT_LT(max_abs_diff(u.heads[i].value, matmul(src.value, g.value_output[t])), 1e-13);
    EXPECT_LT(max_abs_diff(u.heads[i].output, matmul(matmul(inverse(g.value_output[t]), src.output), po)), 1e-10);
  }
  EXPECT_LT(max_abs_diff(u.mlp_in, matmul(matmul(transpose(po), w.mlp_in), pa)), 1e-15);
  EXPECT_LT(max_abs_diff(u.mlp_out, matmul(transpose(pa), w.mlp_out)), 1e-15);
  EXPECT_LT(max_abs_diff(u.bias_in, matmul(w.bias_in, pa)), 1e-15);
  EXPECT_TRUE(bit_equal(u.bias_out, w.bias_out));
  EXPECT_EQ(u.dims, w.dims);
}

TEST(Group, Composition) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto w = random_block(100 + s, kDims);
    const auto g1 = sample_group_element(200 + s, kDims, -1, 1);
    const auto g2 = sample_group_element(300 + s, kDims, -1, 1);
    EXPECT_LT(rel(act(g2, act(g1, w)), act(compose(g1, g2), w)), 1e-10);
  }
}

TEST(Group, Associativity) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto w = random_block(400 + s, kDims);
    const auto a = sample_group_element(500 + s, kDims, -1, 1);
    const auto b = sample_group_element(600 + s, kDims, -1, 1);
    const auto c = sample_group_element(700 + s, kDims, -1, 1);
    EXPECT_LT(rel(act(compose(compose(a, b), c), w), act(compose(a, compose(b, c)), w)), 1e-10);
  }
}

TEST(Group, AttnInvariance) {
  for (double r : {1.0, 100.0})
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto w = random_block(800 + s, kDims);
      const auto g = sample_group_element(900 + s, kDims, -r, r);
      const Tensor x = rng_gaussian(1000 + s, {5, 8});
      const Tensor a = attn_forward(x, w);
      EXPECT_LT(scaled_error(attn_forward(x, act(g, w)), a), r > 1 ? 1e-6 : 1e-9);
    }
}

TEST(DerivedTerms, HandInstance) {
  BlockWeights w = BlockWeights::zeros({1, 2, 2, 2, 2});
  w.heads[0].query = Tensor::matrix({{1, 0}, {0, 1}});
  w.heads[0].key = Tensor::matrix({{2, 0}, {0, 3}});
  EXPECT_EQ(derived_terms(w).query_key[0], Tensor::matrix({{2, 0}, {0, 3}}));
}

TEST(DerivedTerms, IdentityPaddedKey) {
  const BlockDims d{1, 4, 2, 2, 2};
  BlockWeights w = random_block(1, d);
  Tensor k({4, 2});
  k(0, 0) = k(1, 1) = 1.0;
  w.heads[0].key = k;
  const Tensor qk = derived_terms(w).query_key[0];
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(qk(i, j), j < 2 ? w.heads[0].query(i, j) : 0.0);
}

TEST(DerivedTerms, Equivariance) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto w = random_block(s, kDims);
    const auto g = sample_group_element(50 + s, kDims, -1, 1);
    const auto a = derived_terms(w), b = derived_terms(act(g, w));
    const Tensor po = g.model_perm.matrix();
    for (std::size_t i = 0; i < 2; ++i) {
      const std::size_t t = g.head_perm(i);
      EXPECT_LT(max_abs_diff(b.query_key[i], a.query_key[t]), 1e-10);
      EXPECT_LT(max_abs_diff(b.value_output[i], matmul(a.value_output[t], po)), 1e-10);
    }
  }
}

TEST(DoublyStochastic, Properties) {
  for (std::size_t dim : {2u, 3u, 4u, 5u, 8u}) {
    const Tensor m = build_doubly_stochastic_orthogonal(dim * 7, dim);
    EXPECT_LT(max_abs_diff(matmul(m, transpose(m)), Tensor::identity(dim)), 1e-12);
    for (std::size_t i = 0; i < dim; ++i) {
      double r = 0, c = 0;
      for (std::size_t j = 0; j < dim; ++j) {
        r += m(i, j);
        c += m(j, i);
      }
      EXPECT_NEAR(r, 1.0, 1e-12);
      EXPECT_NEAR(c, 1.0, 1e-12);
    }
  }
}

TEST(DoublyStochastic, TwoByTwoIsIdentityOrSwap) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tensor m = build_doubly_stochastic_orthogonal(s, 2);
    const bool id = max_abs_diff(m, Tensor::identity(2)) < 1e-12;
    const bool swap = max_abs_diff(m, Tensor::matrix({{0, 1}, {1, 0}})) < 1e-12;
    EXPECT_TRUE(id || swap);
  }
}

TEST(DoublyStochastic, CommutesWithLayerNorm) {
  Rng rng(3);
  for (std::size_t dim : {3u, 4u, 5u}) {
    const Tensor m = build_doubly_stochastic_orthogonal(dim, dim);
    const Tensor x = gaussian_tensor(rng, {1000, dim});
    EXPECT_LT(max_abs_diff(layer_norm_rows(matmul(x, m)), matmul(layer_norm_rows(x), m)), 1e-10);
  }
}
