#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "tnfn/baseline.hpp"
#include "tnfn/kendall.hpp"
#include "tnfn/nfn_model.hpp"
#include "tnfn/optimizer.hpp"
#include "tnfn/trainer.hpp"

using namespace tnfn;

namespace {

const BlockDims kDims{2, 6, 3, 3, 5};

WeightSample random_sample(std::uint64_t seed, double target) {
  WeightSample s;
  s.blocks = {random_block(seed, kDims, 0.5), random_block(seed + 1, kDims, 0.5)};
  s.embedding = rng_gaussian(seed + 2, {1, 10}, 0.5);
  s.classifier = rng_gaussian(seed + 3, {1, 7}, 0.5);
  s.target = target;
  return s;
}

std::vector<WeightSample> dataset(std::size_t n, std::uint64_t seed) {
  std::vector<WeightSample> out;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_sample(seed * 1000 + 10 * i, rng.uniform(0.2, 0.9)));
  return out;
}

NfnConfig small_nfn() {
  NfnConfig c;
  c.hidden_channels = 3;
  c.features = 4;
  c.head_hidden = 6;
  c.side_features = 3;
  return c;
}

std::vector<const WeightSample*> ptrs(const std::vector<WeightSample>& d) {
  std::vector<const WeightSample*> p;
  for (const auto& s : d) p.push_back(&s);
  return p;
}

}  // namespace

TEST(Kendall, Examples) {
  const double a[] = {1, 2, 3, 4}, r[] = {4, 3, 2, 1};
  EXPECT_EQ(kendall_tau(a, a), 1.0);
  EXPECT_EQ(kendall_tau(a, r), -1.0);
  const double p[] = {1, 3, 2}, t[] = {1, 2, 3};
  EXPECT_DOUBLE_EQ(kendall_tau(p, t), 1.0 / 3.0);
}

TEST(Kendall, TieCorrection) {
  // Pairs: (1,2) tie in x; (1,3), (2,3) concordant. n0 = 3, n1 = 1, n2 = 0 -> 2 / sqrt(2 * 3).
  const double x[] = {1, 1, 2}, y[] = {1, 2, 3};
  EXPECT_DOUBLE_EQ(kendall_tau(x, y), 2.0 / std::sqrt(6.0));
}

TEST(Kendall, Properties) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(30), y(30), nx(30);
    for (std::size_t i = 0; i < 30; ++i) {
      x[i] = rng.gaussian();
      y[i] = rng.gaussian();
      nx[i] = -x[i];
    }
    EXPECT_EQ(kendall_tau(x, x), 1.0);
    EXPECT_DOUBLE_EQ(kendall_tau(x, y), -kendall_tau(nx, y));
    const double t = kendall_tau(x, y);
    EXPECT_GE(t, -1.0);
    EXPECT_LE(t, 1.0);
  }
}

TEST(Kendall, Errors) {
  const double a[] = {1, 2}, b[] = {1, 2, 3}, c[] = {5, 5}, one[] = {1};
  EXPECT_THROW(kendall_tau(a, b), std::invalid_argument);
  EXPECT_THROW(kendall_tau(a, c), std::invalid_argument);
  EXPECT_THROW(kendall_tau(one, one), std::invalid_argument);
  const double n[] = {1, NAN};
  EXPECT_THROW(kendall_tau(n, a), std::invalid_argument);
}

TEST(Optimizer, SgdIsExact) {
  Tensor p = rng_gaussian(1, {4, 3});
  const Tensor g = rng_gaussian(2, {4, 3});
  Tensor expected = p;
  for (std::size_t i = 0; i < p.size(); ++i) expected.data()[i] = p.data()[i] - 0.1 * g.data()[i];
  Optimizer opt({OptimizerKind::sgd});
  Tensor* slots[] = {&p};
  const Tensor grads[] = {g};
  opt.step(slots, grads, 0.1);
  EXPECT_TRUE(bit_equal(p, expected));
}

TEST(Optimizer, ZeroLearningRateKeepsParameters) {
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::sgd_momentum, OptimizerKind::adam, OptimizerKind::rmsprop}) {
    Tensor p = rng_gaussian(1, {5});
    const Tensor before = p;
    Optimizer opt({kind});
    Tensor* slots[] = {&p};
    const Tensor grads[] = {rng_gaussian(2, {5})};
    for (int i = 0; i < 3; ++i) opt.step(slots, grads, 0.0);
    EXPECT_TRUE(bit_equal(p, before)) << to_string(kind);
  }
}

TEST(Optimizer, AdamFirstStepIsSignLike) {
  Tensor p({3});
  Optimizer opt({OptimizerKind::adam});
  Tensor* slots[] = {&p};
  const Tensor grads[] = {Tensor::vector({2.0, -0.5, 0.0})};
  opt.step(slots, grads, 0.01);
  EXPECT_NEAR(p.data()[0], -0.01, 1e-9);
  EXPECT_NEAR(p.data()[1], 0.01, 1e-9);
  EXPECT_EQ(p.data()[2], 0.0);
}

TEST(Optimizer, Names) {
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::sgd_momentum, OptimizerKind::adam, OptimizerKind::rmsprop})
    EXPECT_EQ(parse_optimizer(to_string(kind)), kind);
  EXPECT_THROW(parse_optimizer("lbfgs"), std::invalid_argument);
}

TEST(Optimizer, Warmup) {
  EXPECT_DOUBLE_EQ(warmup_lr(1.0, 0, 4), 0.25);
  EXPECT_DOUBLE_EQ(warmup_lr(1.0, 3, 4), 1.0);
  EXPECT_DOUBLE_EQ(warmup_lr(1.0, 10, 4), 1.0);
  EXPECT_DOUBLE_EQ(warmup_lr(1.0, 0, 0), 1.0);
}

TEST(Backward, StationaryHeadBiasAtZeroParameters) {
  const auto data = dataset(3, 1);
  NfnModel m(small_nfn(), InputLayout::of(data[0]), 1);
  for (auto& b : m.params().blocks()) b.value = Tensor(b.value.shape());
  auto batch = ptrs(data);
  for (auto* s : batch) const_cast<WeightSample*>(s)->target = 0.5;
  const auto lg = backward(m, batch, LossKind::bce);
  EXPECT_EQ(lg.grads.back().data()[0], 0.0);
  EXPECT_NEAR(lg.loss, std::log(2.0), 1e-15);
}

TEST(Backward, GradientCheckNfn) {
  const auto data = dataset(4, 2);
  NfnModel m(small_nfn(), InputLayout::of(data[0]), 2);
  const auto r = tnfn::testing::gradient_check(m, ptrs(data), LossKind::bce, 200, 7);
  EXPECT_EQ(r.checked, 200u);
  EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(Backward, GradientCheckMse) {
  const auto data = dataset(3, 3);
  NfnModel m(small_nfn(), InputLayout::of(data[0]), 3);
  EXPECT_LT(tnfn::testing::gradient_check(m, ptrs(data), LossKind::mse, 60, 8).max_rel_error, 1e-5);
  MlpBaseline b(MlpConfig{{8, 8}}, InputLayout::of(data[0]), 4);
  EXPECT_LT(tnfn::testing::gradient_check(b, ptrs(data), LossKind::bce, 60, 9).max_rel_error, 1e-5);
}

TEST(Backward, InvariantLayerGradientDoesNotDependOnItsValue) {
  // The block features are linear in the invariant layer's parameters, so the
  // gradient of their sum must not move when those parameters are rescaled.
  const auto data = dataset(2, 4);
  NfnModel m(small_nfn(), InputLayout::of(data[0]), 5);
  ad::Tape t1, t2;
  const auto batch = ptrs(data);
  auto features_grad = [&](ad::Tape& tape, double scale) {
    ParamSet p = m.params();
    for (auto& b : p.blocks())
      if (b.name.rfind("inv.", 0) == 0) b.value *= scale;
    const VarMap vars = bind_params(tape, p, true);
    const ad::Var f = m.block_features(tape, vars, batch);
    tape.backward(ad::sum_all(f));
    return tape.grad(lookup(vars, "inv.I_QK"));
  };
  EXPECT_LT(max_abs_diff(features_grad(t1, 1.0), features_grad(t2, -3.0)), 1e-10);
}

TEST(Backward, NonFiniteLossNamesSample) {
  auto data = dataset(3, 5);
  data[1].blocks[0].mlp_in.data()[0] = NAN;
  NfnModel m(small_nfn(), InputLayout::of(dataset(1, 5)[0]), 1);
  try {
    backward(m, ptrs(data), LossKind::bce);
    FAIL();
  } catch (const NonFiniteLossError& e) {
    EXPECT_EQ(e.sample(), 1u);
  }
}

TEST(Train, ZeroLearningRateIsNoOp) {
  const auto data = dataset(6, 6);
  NfnModel m(small_nfn(), InputLayout::of(data[0]), 1);
  const ParamSet before = m.params();
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 2;
  cfg.batch = 4;
  train(m, data, cfg);
  for (std::size_t i = 0; i < before.blocks().size(); ++i)
    EXPECT_TRUE(bit_equal(before.blocks()[i].value, m.params().blocks()[i].value));
  cfg.lr = -1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Train, Deterministic) {
  const auto data = dataset(10, 7);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 4;
  cfg.seed = 11;
  NfnModel a(small_nfn(), InputLayout::of(data[0]), 1), b(small_nfn(), InputLayout::of(data[0]), 1);
  const auto ra = train(a, data, cfg), rb = train(b, data, cfg);
  EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
  for (std::size_t i = 0; i < a.params().blocks().size(); ++i)
    EXPECT_TRUE(bit_equal(a.params().blocks()[i].value, b.params().blocks()[i].value));
}

TEST(Train, SingleSampleOverfit) {
  const auto data = dataset(1, 8);
  NfnModel m(small_nfn(), InputLayout::of(data[0]), 2);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.loss = LossKind::mse;
  cfg.lr = 0.05;
  cfg.epochs = 2000;
  cfg.batch = 1;
  cfg.warmup_fraction = 0.0;
  const auto r = train(m, data, cfg);
  for (std::size_t i = 1; i < r.epoch_loss.size(); ++i) ASSERT_LE(r.epoch_loss[i], r.epoch_loss[i - 1]) << i;
  EXPECT_LT(r.epoch_loss.back(), 1e-3);
}

TEST(Train, GroupedBatching) {
  const auto data = dataset(6, 9);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 2;
  cfg.group_size = 4;
  NfnModel m(small_nfn(), InputLayout::of(data[0]), 1);
  EXPECT_THROW(train(m, data, cfg), std::invalid_argument);
  cfg.group_size = 3;
  EXPECT_NO_THROW(train(m, data, cfg));
}

TEST(TrainConfig, JsonRoundTrip) {
  TrainConfig c;
  c.optimizer = OptimizerKind::rmsprop;
  c.lr = 3e-3;
  c.loss = LossKind::mse;
  c.group_size = 2;
  const auto d = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(d.to_json(), c.to_json());
  EXPECT_THROW(TrainConfig::from_json({{"learning_rate", 1}}), std::invalid_argument);
}
