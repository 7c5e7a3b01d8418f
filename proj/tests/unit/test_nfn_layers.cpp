#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "helpers.hpp"
#include "naive_layers.hpp"
#include "tnfn/baseline.hpp"
#include "tnfn/nfn_model.hpp"

using namespace tnfn;
using tnfn::testing::fill_gaussian;
using tnfn::testing::naive_equivariant;
using tnfn::testing::naive_invariant;
using tnfn::testing::random_channels;

namespace {

double rel(const MultiChannelWeights& a, const MultiChannelWeights& ref) {
  double scale = 0;
  for (const auto& w : ref.channels) scale = std::max(scale, max_abs_diff(w, BlockWeights::zeros(w.dims)));
  return max_abs_diff(a, ref) / (1 + scale);
}

}  // namespace

TEST(EquivariantLayer, MatchesLoopOracle) {
  const BlockDims dims{2, 3, 2, 2, 3};
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto p = EquivariantParams::zeros(2, 3, 3);
    fill_gaussian(p, s);
    const auto u = random_channels(100 + s, dims, 2);
    EXPECT_LT(rel(equivariant_forward(p, u), naive_equivariant(p, u)), 1e-12);
  }
}

TEST(EquivariantLayer, OneHotProbes) {
  const BlockDims dims{1, 2, 1, 1, 2};
  const auto u = random_channels(7, dims, 1);
  auto p = EquivariantParams::zeros(1, 1, 2);
  for (auto& b : p.set.blocks())
    for (std::size_t i = 0; i < b.value.size(); ++i) {
      b.value.data()[i] = 1.0;
      EXPECT_LT(max_abs_diff(equivariant_forward(p, u), naive_equivariant(p, u)), 1e-12) << b.name << "[" << i << "]";
      b.value.data()[i] = 0.0;
    }
}

TEST(EquivariantLayer, BiasOnly) {
  const BlockDims dims{2, 4, 2, 3, 5};
  auto p = EquivariantParams::zeros(1, 1, 4);
  p.set.at("A_bias").data()[0] = 1.5;
  const auto out = equivariant_forward(p, random_channels(1, dims, 1)).channels[0];
  for (double v : out.mlp_in.data()) EXPECT_EQ(v, 1.5);
  auto zero = out;
  zero.mlp_in = Tensor(zero.mlp_in.shape());
  EXPECT_EQ(max_abs_diff(zero, BlockWeights::zeros(dims)), 0.0);
}

TEST(EquivariantLayer, Equivariance) {
  const BlockDims dims{2, 8, 4, 4, 8};
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto p = EquivariantParams::zeros(2, 2, 8);
    Rng rng(s);
    init_params(rng, p, dims);
    const auto u = random_channels(1000 + s, dims, 2);
    const auto g = sample_group_element(2000 + s, dims, -1, 1);
    const auto lhs = equivariant_forward(p, act(g, u));
    const auto rhs = act(g, equivariant_forward(p, u));
    EXPECT_LT(rel(lhs, rhs), 1e-9);
  }
}

TEST(EquivariantLayer, LinearInParameters) {
  const BlockDims dims{2, 4, 2, 2, 3};
  auto p1 = EquivariantParams::zeros(1, 2, 4), p2 = EquivariantParams::zeros(1, 2, 4), ps = p1;
  fill_gaussian(p1, 1);
  fill_gaussian(p2, 2);
  for (std::size_t i = 0; i < ps.set.blocks().size(); ++i)
    ps.set.blocks()[i].value = p1.set.blocks()[i].value * 2.0 + p2.set.blocks()[i].value * -0.5;
  const auto u = random_channels(3, dims, 1);
  const auto a = equivariant_forward(p1, u), b = equivariant_forward(p2, u), c = equivariant_forward(ps, u);
  for (std::size_t e = 0; e < 2; ++e) {
    const auto& x = a.channels[e];
    const auto& y = b.channels[e];
    const auto& z = c.channels[e];
    EXPECT_LT(max_abs_diff(z.mlp_out, x.mlp_out * 2.0 + y.mlp_out * -0.5), 1e-12);
    EXPECT_LT(max_abs_diff(z.heads[1].query, x.heads[1].query * 2.0 + y.heads[1].query * -0.5), 1e-12);
  }
}

TEST(EquivariantLayer, ShapeMismatch) {
  auto p = EquivariantParams::zeros(2, 1, 4);
  EXPECT_THROW(equivariant_forward(p, random_channels(1, {1, 4, 2, 2, 2}, 1)), ShapeError);
  EXPECT_THROW(equivariant_forward(p, random_channels(1, {1, 5, 2, 2, 2}, 2)), ShapeError);
}

TEST(InvariantLayer, MatchesLoopOracle) {
  const BlockDims dims{2, 3, 2, 2, 3};
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto p = InvariantParams::zeros(2, 2, 3, 4);
    fill_gaussian(p, s);
    const auto u = random_channels(50 + s, dims, 2);
    const Tensor ref = naive_invariant(p, u);
    EXPECT_LT(max_abs_diff(invariant_forward(p, u), ref) / (1 + max_abs(ref)), 1e-12);
  }
}

TEST(InvariantLayer, BiasOnly) {
  auto p = InvariantParams::zeros(1, 2, 4, 3);
  p.set.at("I_bias") = rng_gaussian(1, {2, 3});
  EXPECT_EQ(invariant_forward(p, random_channels(2, {2, 4, 2, 2, 3}, 1)), p.set.at("I_bias"));
}

TEST(InvariantLayer, Invariance) {
  const BlockDims dims{2, 8, 4, 4, 8};
  for (double r : {1.0, 10.0, 100.0})
    for (std::uint64_t s = 0; s < 30; ++s) {
      auto p = InvariantParams::zeros(2, 2, 8, 5);
      Rng rng(s);
      init_params(rng, p, dims);
      const auto u = random_channels(300 + s, dims, 2);
      const auto g = sample_group_element(400 + s, dims, -r, r);
      const Tensor a = invariant_forward(p, u);
      EXPECT_LT(scaled_error(invariant_forward(p, act(g, u)), a), r > 1 ? 1e-6 : 1e-9);
    }
}

TEST(InvariantLayer, NonnegativeInputInitShrinksPooledTerms) {
  const BlockDims dims{2, 8, 4, 4, 8};
  auto plain = InvariantParams::zeros(3, 1, 8, 4), pooled = plain;
  Rng a(5), b(5);
  init_params(a, plain, dims);
  init_params(b, pooled, dims, true);
  // A pools over model x mlp entries, QK over heads, bB over nothing.
  const auto ratio = [&](const char* name) {
    return plain.set.at(name).data()[0] / pooled.set.at(name).data()[0];
  };
  EXPECT_NEAR(ratio("I_A"), 8.0, 1e-12);
  EXPECT_NEAR(ratio("I_QK"), std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(ratio("I_bB"), 1.0, 1e-12);
}

TEST(InvariantLayer, HeadPermutationOnly) {
  const BlockDims dims{3, 6, 3, 3, 4};
  auto p = InvariantParams::zeros(1, 1, 6, 4);
  fill_gaussian(p, 9);
  const auto u = random_channels(10, dims, 1);
  GroupElement g = identity_element(dims);
  g.head_perm = Permutation({2, 0, 1});
  EXPECT_LT(max_abs_diff(invariant_forward(p, act(g, u)), invariant_forward(p, u)), 1e-12);
}

TEST(Relu, OnlyMlpComponents) {
  const BlockDims dims{2, 5, 3, 3, 4};
  const auto u = random_channels(3, dims, 2);
  const auto r = relu_equivariant(u);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t h = 0; h < 2; ++h) {
      EXPECT_TRUE(bit_equal(r.channels[c].heads[h].query, u.channels[c].heads[h].query));
      EXPECT_TRUE(bit_equal(r.channels[c].heads[h].output, u.channels[c].heads[h].output));
    }
    EXPECT_EQ(r.channels[c].mlp_in, relu(u.channels[c].mlp_in));
    EXPECT_EQ(r.channels[c].bias_out, relu(u.channels[c].bias_out));
  }
  EXPECT_EQ(max_abs_diff(relu_equivariant(r), r), 0.0);
}

TEST(Relu, CommutesWithGroup) {
  const BlockDims dims{2, 6, 3, 3, 5};
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto u = random_channels(s, dims, 2);
    const auto g = sample_group_element(100 + s, dims, -1, 1);
    EXPECT_LT(max_abs_diff(relu_equivariant(act(g, u)), act(g, relu_equivariant(u))), 1e-10);
  }
}

TEST(Relu, BrokenPlacementIsNotEquivariant) {
  const BlockDims dims{2, 6, 3, 3, 5};
  double worst = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto u = random_channels(s, dims, 1);
    const auto g = sample_group_element(100 + s, dims, -1, 1);
    worst = std::max(worst, max_abs_diff(relu_equivariant(act(g, u), true), act(g, relu_equivariant(u, true))));
  }
  EXPECT_GT(worst, 1e-3);
}

TEST(ParamCount, HandSums) {
  // e = d = 1, D = 2, summed over the listed block shapes.
  EXPECT_EQ(equivariant_param_count(1, 1, 2), 112u);
  EXPECT_EQ(EquivariantParams::zeros(1, 1, 2).set.scalar_count(), 112u);
  // D' = 1: 4 + 2 + 1 + 2 + 1 + 2 + 1.
  EXPECT_EQ(invariant_param_count(1, 1, 2, 1), 13u);
  EXPECT_EQ(InvariantParams::zeros(1, 1, 2, 1).set.scalar_count(), 13u);
}

TEST(ParamCount, AllocationMatchesClosedForm) {
  const std::size_t settings[][4] = {{1, 1, 2, 1}, {2, 3, 4, 5}, {10, 10, 16, 10}, {3, 1, 7, 2}};
  for (const auto& s : settings) {
    EXPECT_EQ(EquivariantParams::zeros(s[0], s[1], s[2]).set.scalar_count(), equivariant_param_count(s[0], s[1], s[2]));
    EXPECT_EQ(InvariantParams::zeros(s[0], s[1], s[2], s[3]).set.scalar_count(),
              invariant_param_count(s[0], s[1], s[2], s[3]));
  }
}

TEST(ParamCount, AffineInChannelProduct) {
  const auto c = [](std::size_t n) { return static_cast<double>(equivariant_param_count(n, 1, 5)); };
  EXPECT_DOUBLE_EQ(c(3) - c(2), c(2) - c(1));
}

namespace {

WeightSample random_sample(std::uint64_t seed, const BlockDims& dims) {
  WeightSample s;
  s.blocks = {random_block(seed, dims), random_block(seed + 1, dims)};
  s.embedding = rng_gaussian(seed + 2, {1, 12});
  s.classifier = rng_gaussian(seed + 3, {1, 9});
  s.target = 0.5;
  return s;
}

}  // namespace

TEST(NfnModel, InvariantPerBlock) {
  const BlockDims dims{2, 8, 4, 4, 8};
  const auto x = random_sample(1, dims);
  NfnModel m(NfnConfig{}, InputLayout::of(x), 3);
  for (std::uint64_t s = 0; s < 10; ++s) {
    WeightSample y = x;
    for (std::size_t b = 0; b < 2; ++b)
      y.blocks[b] = act(sample_group_element(10 * s + b, dims, -10, 10), x.blocks[b]);
    const double a = predict_one(m, x), c = predict_one(m, y);
    EXPECT_LT(std::abs(a - c), 1e-6);
    EXPECT_GT(a, 0.0);
    EXPECT_LT(a, 1.0);
  }
}

TEST(NfnModel, LayoutMismatch) {
  const BlockDims dims{2, 8, 4, 4, 8};
  const auto x = random_sample(1, dims);
  NfnModel m(NfnConfig{}, InputLayout::of(x), 3);
  WeightSample y = x;
  y.blocks.pop_back();
  EXPECT_THROW(predict_one(m, y), ShapeError);
}

TEST(MlpBaseline, OutputInUnitIntervalAndNotInvariant) {
  const BlockDims dims{2, 8, 4, 4, 8};
  const auto x = random_sample(1, dims);
  MlpBaseline m(MlpConfig{}, InputLayout::of(x), 4);
  const double a = predict_one(m, x);
  EXPECT_GT(a, 0.0);
  EXPECT_LT(a, 1.0);
  double gap = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    WeightSample y = x;
    y.blocks[0] = act(sample_group_element(s, dims, -1, 1), x.blocks[0]);
    gap = std::max(gap, std::abs(predict_one(m, y) - a));
  }
  EXPECT_GT(gap, 1e-3);
}

TEST(EquivariantLayer, CostAtMostLinearInHeads) {
  auto best_time = [](std::size_t heads) {
    const BlockDims dims{heads, 8, 4, 4, 8};
    auto p = EquivariantParams::zeros(2, 2, 8);
    fill_gaussian(p, 1);
    const auto u = random_channels(2, dims, 2);
    double best = 1e300;
    for (int rep = 0; rep < 7; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < 5; ++i) equivariant_forward(p, u);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };
  EXPECT_LE(best_time(8) / best_time(4), 3.0);
}
