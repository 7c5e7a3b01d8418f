#include "tnfn/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "tnfn/baseline.hpp"
#include "tnfn/group.hpp"
#include "tnfn/nfn_layers.hpp"
#include "tnfn/nfn_model.hpp"
#include "tnfn/rng.hpp"
#include "tnfn/trainer.hpp"

namespace tnfn {

using nlohmann::json;

void VerifyOptions::validate() const {
  tnfn::validate(dims);
  if (instances == 0) throw std::invalid_argument("verify needs at least 1 instance");
  if (scale_ranges.empty()) throw std::invalid_argument("verify needs at least one scale range");
  for (double r : scale_ranges)
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("scale ranges must be positive and finite");
  if (std::max(dims.key, dims.value) > dims.model)
    throw std::invalid_argument("verify requires max(key, value) <= model width");
  if (dims.model < 2) throw std::invalid_argument("verify requires model width >= 2");
  if (in_channels == 0 || out_channels == 0 || features == 0) throw std::invalid_argument("channel counts must be positive");
  if (layernorm_rows == 0 || witness_instances == 0 || witness_draws == 0)
    throw std::invalid_argument("sample counts must be positive");
}

bool VerifyReport::passed() const {
  return std::all_of(properties.begin(), properties.end(), [](const auto& p) { return p.passed; });
}

const PropertyResult& VerifyReport::at(const std::string& name) const {
  for (const auto& p : properties)
    if (p.name == name) return p;
  throw std::out_of_range("no property " + name);
}

json VerifyReport::to_json() const {
  json props = json::object();
  for (const auto& p : properties)
    props[p.name] = {{"instances", p.instances},     {"max_error", p.max_error},
                     {"tolerance", p.tolerance},     {"bound", p.lower_bound ? "lower" : "upper"},
                     {"pass", p.passed},             {"seconds", p.seconds}};
  return {{"schema", kVerifySchema}, {"pass", passed()}, {"properties", props}};
}

namespace {

using Clock = std::chrono::steady_clock;

std::string range_label(double r) {
  std::ostringstream s;
  s << r;
  return s.str();
}

enum class Bound { upper, lower_all, lower_any };

// Runs check(instance) for every instance. Upper bounds and lower_any keep the
// largest value; lower_all keeps the smallest.
PropertyResult measure(const std::string& name, std::size_t instances, double tolerance, Bound bound,
                       const std::function<double(std::size_t)>& check) {
  const bool lower_bound = bound != Bound::upper;
  const bool keep_min = bound == Bound::lower_all;
  const auto t0 = Clock::now();
  PropertyResult r;
  r.name = name;
  r.instances = instances;
  r.tolerance = tolerance;
  r.lower_bound = lower_bound;
  double worst = keep_min ? std::numeric_limits<double>::infinity() : 0.0;
  for (std::size_t k = 0; k < instances; ++k) {
    const double v = check(k);
    if (std::isnan(v)) {
      worst = std::numeric_limits<double>::quiet_NaN();
      break;
    }
    worst = keep_min ? std::min(worst, v) : std::max(worst, v);
  }
  r.max_error = worst;
  r.passed = lower_bound ? worst > tolerance : worst < tolerance;
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

double component_error(const BlockWeights& a, const BlockWeights& ref) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.heads.size(); ++i) {
    e = std::max(e, scaled_error(a.heads[i].query, ref.heads[i].query));
    e = std::max(e, scaled_error(a.heads[i].key, ref.heads[i].key));
    e = std::max(e, scaled_error(a.heads[i].value, ref.heads[i].value));
    e = std::max(e, scaled_error(a.heads[i].output, ref.heads[i].output));
  }
  e = std::max(e, scaled_error(a.mlp_in, ref.mlp_in));
  e = std::max(e, scaled_error(a.bias_in, ref.bias_in));
  e = std::max(e, scaled_error(a.mlp_out, ref.mlp_out));
  e = std::max(e, scaled_error(a.bias_out, ref.bias_out));
  return e;
}

double component_error(const MultiChannelWeights& a, const MultiChannelWeights& ref) {
  double e = 0.0;
  for (std::size_t c = 0; c < a.channels.size(); ++c) e = std::max(e, component_error(a.channels[c], ref.channels[c]));
  return e;
}

MultiChannelWeights random_channels(std::uint64_t seed, const BlockDims& dims, std::size_t channels) {
  MultiChannelWeights u{dims, {}};
  for (std::size_t c = 0; c < channels; ++c) u.channels.push_back(random_block(mix_seed(seed, c), dims, 1.0));
  return u;
}

// Gaussian parameters of unit scale, so every block contributes visibly.
template <class P>
P random_layer(P p, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& b : p.set.blocks())
    for (auto& v : b.value.data()) v = rng.gaussian();
  return p;
}

WeightSample random_sample(std::uint64_t seed, const BlockDims& dims) {
  Rng rng(seed);
  WeightSample s;
  s.blocks.push_back(random_block(mix_seed(seed, 1), dims, 1.0));
  s.embedding = gaussian_tensor(rng, {1, dims.model});
  s.classifier = gaussian_tensor(rng, {1, dims.model});
  s.target = rng.uniform();
  return s;
}

enum Stream : std::uint64_t {
  kAttn = 1,
  kEquivariance,
  kInvariance,
  kMultihead,
  kComposition,
  kDerived,
  kRelu,
  kLayerNorm,
  kWitness,
  kModel,
  kBrokenRelu,
  kMlp
};

std::uint64_t instance_seed(std::uint64_t seed, Stream stream, std::size_t range_index, std::size_t k) {
  return mix_seed(mix_seed(mix_seed(seed, stream), range_index), k);
}

}  // namespace

VerifyReport run_verify(const VerifyOptions& o) {
  o.validate();
  const BlockDims& dims = o.dims;
  VerifyReport report;
  const std::size_t L = 5;

  auto equivariance_check = [&](bool broken, double r, std::size_t ri, Stream stream) {
    return [&, broken, r, ri, stream](std::size_t k) {
      const std::uint64_t s = instance_seed(o.seed, stream, ri, k);
      const auto p = random_layer(EquivariantParams::zeros(o.in_channels, o.out_channels, dims.model), mix_seed(s, 1));
      const auto u = random_channels(mix_seed(s, 2), dims, o.in_channels);
      const auto g = sample_group_element(mix_seed(s, 3), dims, -r, r);
      const auto lhs = relu_equivariant(equivariant_forward(p, act(g, u)), broken);
      const auto rhs = act(g, relu_equivariant(equivariant_forward(p, u), broken));
      return component_error(lhs, rhs);
    };
  };

  for (std::size_t ri = 0; ri < o.scale_ranges.size(); ++ri) {
    const double r = o.scale_ranges[ri];
    const double tol = r <= 1.0 ? o.tol_unit : o.tol_wide;
    const std::string at = "@" + range_label(r);

    report.properties.push_back(measure("attn_invariance" + at, o.instances, tol, Bound::upper, [&](std::size_t k) {
      const std::uint64_t s = instance_seed(o.seed, kAttn, ri, k);
      const BlockWeights u = random_block(mix_seed(s, 1), dims, 1.0);
      const auto g = sample_group_element(mix_seed(s, 2), dims, -r, r);
      const Tensor x = rng_gaussian(mix_seed(s, 3), {L, dims.model});
      return scaled_error(attn_forward(x, act(g, u)), attn_forward(x, u));
    }));

    report.properties.push_back(
        measure("equivariance" + at, o.instances, tol, Bound::upper, equivariance_check(o.break_relu_placement, r, ri, kEquivariance)));

    report.properties.push_back(measure("invariance" + at, o.instances, tol, Bound::upper, [&](std::size_t k) {
      const std::uint64_t s = instance_seed(o.seed, kInvariance, ri, k);
      const auto p = random_layer(InvariantParams::zeros(o.in_channels, o.out_channels, dims.model, o.features),
                                  mix_seed(s, 1));
      const auto u = random_channels(mix_seed(s, 2), dims, o.in_channels);
      const auto g = sample_group_element(mix_seed(s, 3), dims, -r, r);
      return scaled_error(invariant_forward(p, act(g, u)), invariant_forward(p, u));
    }));

    report.properties.push_back(measure("nfn_model_invariance" + at, std::min<std::size_t>(o.instances, 20), o.tol_wide,
                                        Bound::upper, [&](std::size_t k) {
      const std::uint64_t s = instance_seed(o.seed, kModel, ri, k);
      WeightSample a = random_sample(mix_seed(s, 1), dims);
      a.blocks.push_back(random_block(mix_seed(s, 2), dims, 1.0));
      WeightSample b = a;
      for (std::size_t blk = 0; blk < b.blocks.size(); ++blk)
        b.blocks[blk] = act(sample_group_element(mix_seed(s, 3 + blk), dims, -r, r), a.blocks[blk]);
      NfnConfig cfg;
      cfg.hidden_channels = 3;
      cfg.features = 4;
      cfg.break_relu_placement = o.break_relu_placement;
      const NfnModel model(cfg, InputLayout::of(a), mix_seed(s, 9));
      return std::abs(predict_one(model, a) - predict_one(model, b));
    }));

    report.properties.push_back(measure("multihead_equality" + at, o.instances, o.tol_unit, Bound::upper, [&](std::size_t k) {
      const std::uint64_t s = instance_seed(o.seed, kMultihead, ri, k);
      const BlockWeights u = random_block(mix_seed(s, 1), dims, 1.0);
      const auto g = sample_group_element(mix_seed(s, 2), dims, -r, r);
      const BlockWeights t = build_transformed_multihead(u, g.query_key, g.value_output, g.head_perm.map());
      const Tensor x = rng_gaussian(mix_seed(s, 3), {L, dims.model});
      return scaled_error(multihead_forward(x, t), multihead_forward(x, u));
    }));

    report.properties.push_back(measure("product_preservation" + at, o.instances, o.tol_products, Bound::upper,
                                        [&](std::size_t k) {
      const std::uint64_t s = instance_seed(o.seed, kMultihead, ri, k);
      const BlockWeights u = random_block(mix_seed(s, 1), dims, 1.0);
      const auto g = sample_group_element(mix_seed(s, 2), dims, -r, r);
      const BlockWeights t = build_transformed_multihead(u, g.query_key, g.value_output, g.head_perm.map());
      const auto before = derived_terms(u), after = derived_terms(t);
      double e = 0.0;
      for (std::size_t i = 0; i < dims.heads; ++i) {
        const std::size_t j = g.head_perm(i);
        e = std::max(e, scaled_error(after.query_key[j], before.query_key[i]));
        e = std::max(e, scaled_error(after.value_output[j], before.value_output[i]));
      }
      return e;
    }));

    report.properties.push_back(measure("derived_terms_equivariance" + at, o.instances, o.tol_products, Bound::upper,
                                        [&](std::size_t k) {
      const std::uint64_t s = instance_seed(o.seed, kDerived, ri, k);
      const BlockWeights u = random_block(mix_seed(s, 1), dims, 1.0);
      const auto g = sample_group_element(mix_seed(s, 2), dims, -r, r);
      const auto before = derived_terms(u), after = derived_terms(act(g, u));
      const Tensor p = g.model_perm.matrix();
      double e = 0.0;
      for (std::size_t i = 0; i < dims.heads; ++i) {
        const std::size_t j = g.head_perm(i);
        e = std::max(e, scaled_error(after.query_key[i], before.query_key[j]));
        e = std::max(e, scaled_error(after.value_output[i], matmul(before.value_output[j], p)));
      }
      return e;
    }));
  }

  report.properties.push_back(measure("group_composition", o.instances, o.tol_products, Bound::upper, [&](std::size_t k) {
    const std::uint64_t s = instance_seed(o.seed, kComposition, 0, k);
    const BlockWeights u = random_block(mix_seed(s, 1), dims, 1.0);
    const auto g1 = sample_group_element(mix_seed(s, 2), dims, -1.0, 1.0);
    const auto g2 = sample_group_element(mix_seed(s, 3), dims, -1.0, 1.0);
    return component_error(act(g2, act(g1, u)), act(compose(g1, g2), u));
  }));

  report.properties.push_back(measure("relu_permutation", o.instances, o.tol_products, Bound::upper, [&](std::size_t k) {
    const std::uint64_t s = instance_seed(o.seed, kRelu, 0, k);
    const auto u = random_channels(mix_seed(s, 1), dims, o.in_channels);
    const auto g = sample_group_element(mix_seed(s, 2), dims, -1.0, 1.0);
    return component_error(relu_equivariant(act(g, u)), act(g, relu_equivariant(u)));
  }));

  report.properties.push_back(measure("layernorm_properties", o.layernorm_rows, o.tol_layernorm, Bound::upper,
                                      [&](std::size_t k) {
    const std::uint64_t s = instance_seed(o.seed, kLayerNorm, 0, k);
    Rng rng(s);
    const std::size_t D = 3 + k % 3;
    const Tensor x = gaussian_tensor(rng, {1, D});
    // Scaling, sign and permutation.
    const Tensor p = Permutation(rng.permutation(D)).matrix();
    double e = 0.0;
    for (double lambda : {-2.5, 3.0}) {
      const Tensor lhs = layer_norm_rows(matmul(x * lambda, p));
      const Tensor rhs = matmul(layer_norm_rows(x), p) * (lambda < 0 ? -1.0 : 1.0);
      e = std::max(e, scaled_error(lhs, rhs));
    }
    // Orthogonal matrices with equal row and column sums commute with centring and normalisation.
    const Tensor m = build_doubly_stochastic_orthogonal(mix_seed(s, 1), D);
    Tensor centred = x;
    double mean = 0.0;
    for (double v : x.data()) mean += v;
    mean /= static_cast<double>(D);
    for (auto& v : centred.data()) v -= mean;
    const Tensor xm = matmul(x, m);
    Tensor centred_xm = xm;
    double mean_xm = 0.0;
    for (double v : xm.data()) mean_xm += v;
    mean_xm /= static_cast<double>(D);
    for (auto& v : centred_xm.data()) v -= mean_xm;
    e = std::max(e, scaled_error(centred_xm, matmul(centred, m)));
    e = std::max(e, scaled_error(layer_norm_rows(xm), matmul(layer_norm_rows(x), m)));
    return e;
  }));

  report.properties.push_back(measure("head_independence_witness", o.witness_instances, o.witness_threshold, Bound::lower_all,
                                      [&](std::size_t k) {
    const std::uint64_t s = instance_seed(o.seed, kWitness, 0, k);
    Rng rng(s);
    FMapParams f;
    f.scores = {gaussian_tensor(rng, {dims.model, dims.model}), gaussian_tensor(rng, {dims.model, dims.model})};
    const Tensor b = gaussian_tensor(rng, {dims.model, dims.model});
    f.values = {b, b * -1.0};
    double best = 0.0;
    for (std::size_t t = 0; t < o.witness_draws && best <= o.witness_threshold; ++t) {
      const Tensor x = gaussian_tensor(rng, {1 + t % 3, dims.model});
      best = std::max(best, max_abs(f_map(x, f)));
    }
    return best;
  }));

  report.properties.push_back(measure("negative_control.relu_on_query", o.instances, o.tol_unit, Bound::lower_any,
                                      equivariance_check(true, 1.0, 0, kBrokenRelu)));

  {
    // A briefly trained flattened-weights baseline must react to some group action.
    std::vector<WeightSample> data;
    for (std::size_t k = 0; k < 32; ++k) data.push_back(random_sample(instance_seed(o.seed, kMlp, 0, k), dims));
    MlpBaseline mlp(MlpConfig{}, InputLayout::of(data.front()), mix_seed(o.seed, kMlp));
    TrainConfig tc;
    tc.epochs = 5;
    tc.batch = 8;
    tc.seed = o.seed;
    train(mlp, data, tc);
    report.properties.push_back(measure("negative_control.mlp_invariance", o.instances, o.mlp_gap, Bound::lower_any,
                                        [&](std::size_t k) {
      const WeightSample& a = data[k % data.size()];
      WeightSample b = a;
      b.blocks[0] = act(sample_group_element(instance_seed(o.seed, kMlp, 1, k), dims, -1.0, 1.0), a.blocks[0]);
      return std::abs(predict_one(mlp, a) - predict_one(mlp, b));
    }));
  }
  return report;
}

}  // namespace tnfn
