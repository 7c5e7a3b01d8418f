#include "tnfn/nfn_layers.hpp"

#include <cmath>
#include <stdexcept>

namespace tnfn {

namespace {

// One summand: contract(input, param) with expr "<input>,<param>-><result>".
struct Term {
  const char* param;
  const char* input;
  const char* expr;
};

// One output component. full holds its letters (b, e, then component axes);
// bias letters are a suffix-free subset of "ek".
struct Group {
  const char* output;
  const char* full;
  std::vector<Term> terms;
  const char* bias;
  const char* bias_letters;
};

const std::vector<Group>& equivariant_groups() {
  static const std::vector<Group> groups = {
      {"Q", "behjk", {{"Q_block", "Q", "bdhpk,edjp->behjk"}}, nullptr, nullptr},
      {"K", "behjk", {{"K_block", "K", "bdhpk,edjp->behjk"}}, nullptr, nullptr},
      {"V", "behjk", {{"V_block", "V", "bdhpk,edjp->behjk"}}, nullptr, nullptr},
      {"O",
       "behjk",
       {{"O_rowsum", "O", "bdhjk,ed->behj"}, {"O_pointwise", "O", "bdhjk,ed->behjk"}},
       nullptr,
       nullptr},
      {"A",
       "bejk",
       {{"A_from_QK", "QK", "bdhpq,edpq->be"},
        {"A_from_VO_1", "VO", "bdhpq,edp->be"},
        {"A_from_VO_2", "VO", "bdhpj,edp->bej"},
        {"A_from_A_1", "A", "bdpq,ed->be"},
        {"A_from_A_2", "A", "bdjq,ed->bej"},
        {"A_from_A_3", "A", "bdpk,ed->bek"},
        {"A_from_A_4", "A", "bdjk,ed->bejk"},
        {"A_from_B_1", "B", "bdpq,edq->be"},
        {"A_from_B_2", "B", "bdkq,edq->bek"},
        {"A_from_bA_1", "bA", "bdq,ed->be"},
        {"A_from_bA_2", "bA", "bdk,ed->bek"},
        {"A_from_bB", "bB", "bdq,edq->be"}},
       "A_bias",
       "e"},
      {"bA",
       "bek",
       {{"bA_from_QK", "QK", "bdhpq,edpq->be"},
        {"bA_from_VO", "VO", "bdhpq,edp->be"},
        {"bA_from_A_1", "A", "bdpq,ed->be"},
        {"bA_from_A_2", "A", "bdpk,ed->bek"},
        {"bA_from_B_1", "B", "bdpq,edq->be"},
        {"bA_from_B_2", "B", "bdkq,edq->bek"},
        {"bA_from_bA_1", "bA", "bdq,ed->be"},
        {"bA_from_bA_2", "bA", "bdk,ed->bek"},
        {"bA_from_bB", "bB", "bdq,edq->be"}},
       "bA_bias",
       "e"},
      {"B",
       "bejk",
       {{"B_from_QK", "QK", "bdhpq,edkpq->bek"},
        {"B_from_VO", "VO", "bdhpq,edkp->bek"},
        {"B_from_A_1", "A", "bdpq,edk->bek"},
        {"B_from_A_2", "A", "bdpj,edk->bejk"},
        {"B_from_B_1", "B", "bdpq,edkq->bek"},
        {"B_from_B_2", "B", "bdjq,edkq->bejk"},
        {"B_from_bA_1", "bA", "bdq,edk->bek"},
        {"B_from_bA_2", "bA", "bdj,edk->bejk"},
        {"B_from_bB", "bB", "bdq,edkq->bek"}},
       "B_bias",
       "ek"},
      {"bB",
       "bek",
       {{"bB_from_QK", "QK", "bdhpq,edkpq->bek"},
        {"bB_from_VO", "VO", "bdhpq,edkp->bek"},
        {"bB_from_A", "A", "bdpq,edk->bek"},
        {"bB_from_B", "B", "bdpq,edkq->bek"},
        {"bB_from_bA", "bA", "bdq,edk->bek"},
        {"bB_from_bB", "bB", "bdq,edkq->bek"}},
       "bB_bias",
       "ek"},
  };
  return groups;
}

const Group& invariant_group() {
  static const Group group = {"I",
                              "bek",
                              {{"I_QK", "QK", "bdhpq,edpqk->bek"},
                               {"I_VO", "VO", "bdhpq,edpk->bek"},
                               {"I_A", "A", "bdpq,edk->bek"},
                               {"I_B", "B", "bdpq,edqk->bek"},
                               {"I_bA", "bA", "bdq,edk->bek"},
                               {"I_bB", "bB", "bdq,edqk->bek"}},
                              "I_bias",
                              "ek"};
  return group;
}

std::string param_letters(const Term& t) {
  const std::string expr = t.expr;
  const auto comma = expr.find(',');
  return expr.substr(comma + 1, expr.find("->") - comma - 1);
}

std::string input_letters(const Term& t) {
  const std::string expr = t.expr;
  return expr.substr(0, expr.find(','));
}

std::string result_letters(const Term& t) {
  const std::string expr = t.expr;
  return expr.substr(expr.find("->") + 2);
}

// Shape of a parameter operand: e, d, then extent_of(letter) for the rest.
template <class F>
Shape param_shape(const std::string& letters, std::size_t d, std::size_t e, F extent_of) {
  Shape s;
  for (char c : letters) {
    if (c == 'e')
      s.push_back(e);
    else if (c == 'd')
      s.push_back(d);
    else
      s.push_back(extent_of(c));
  }
  return s;
}

void add_group_blocks(ParamSet& set, const Group& g, std::size_t d, std::size_t e, std::size_t model,
                      std::size_t k_extent) {
  auto extent = [&](char c) { return c == 'k' ? k_extent : model; };
  for (const auto& t : g.terms) set.add(t.param, param_shape(param_letters(t), d, e, extent));
  if (g.bias) set.add(g.bias, param_shape(g.bias_letters, d, e, extent));
}

// Extents of the input letters of a term, from the block dims and channel count.
Shape input_shape(const std::string& input, const BlockDims& dims, std::size_t d) {
  const std::size_t b = 1, h = dims.heads, D = dims.model;
  if (input == "Q" || input == "K") return {b, d, h, D, dims.key};
  if (input == "V") return {b, d, h, D, dims.value};
  if (input == "O") return {b, d, h, dims.value, D};
  if (input == "QK" || input == "VO") return {b, d, h, D, D};
  if (input == "A") return {b, d, D, dims.hidden};
  if (input == "bA") return {b, d, dims.hidden};
  if (input == "B") return {b, d, dims.hidden, D};
  if (input == "bB") return {b, d, D};
  throw std::logic_error("unknown input " + input);
}

double fan_in(const Term& t, const BlockDims& dims, std::size_t d) {
  const std::string in = input_letters(t), out = result_letters(t);
  const Shape shape = input_shape(t.input, dims, d);
  double n = 1.0;
  for (std::size_t a = 0; a < in.size(); ++a)
    if (out.find(in[a]) == std::string::npos) n *= static_cast<double>(shape[a]);
  return n;
}

// Extent of the summed letters the parameter does not index, i.e. plain pooling.
double pooled_extent(const Term& t, const BlockDims& dims, std::size_t d) {
  const std::string in = input_letters(t), out = result_letters(t), par = param_letters(t);
  const Shape shape = input_shape(t.input, dims, d);
  double n = 1.0;
  for (std::size_t a = 0; a < in.size(); ++a)
    if (out.find(in[a]) == std::string::npos && par.find(in[a]) == std::string::npos)
      n *= static_cast<double>(shape[a]);
  return n;
}

void init_group(Rng& rng, ParamSet& set, const Group& g, const BlockDims& dims, std::size_t d,
                bool nonnegative_input = false) {
  for (const auto& t : g.terms) {
    Tensor& p = set.at(t.param);
    double sd = 1.0 / std::sqrt(fan_in(t, dims, d));
    // Pooling nonnegative inputs adds their means coherently, so scale by n rather than sqrt(n).
    if (nonnegative_input) sd /= std::sqrt(pooled_extent(t, dims, d));
    for (auto& v : p.data()) v = sd * rng.gaussian();
  }
  if (g.bias) set.at(g.bias) = Tensor(set.at(g.bias).shape());
}

ad::Var input_var(const std::string& name, const WeightVars& u, const ad::Var& qk, const ad::Var& vo) {
  if (name == "Q") return u.query;
  if (name == "K") return u.key;
  if (name == "V") return u.value;
  if (name == "O") return u.output;
  if (name == "A") return u.mlp_in;
  if (name == "bA") return u.bias_in;
  if (name == "B") return u.mlp_out;
  if (name == "bB") return u.bias_out;
  if (name == "QK") return qk;
  if (name == "VO") return vo;
  throw std::logic_error("unknown input " + name);
}

ad::Var eval_group(const Group& g, const VarMap& vars, const std::string& prefix, const WeightVars& u,
                   const ad::Var& qk, const ad::Var& vo, const std::map<char, std::size_t>& extents) {
  std::vector<ad::Var> parts;
  for (const auto& t : g.terms) {
    ad::Var r = ad::contract(t.expr, input_var(t.input, u, qk, vo), lookup(vars, prefix + t.param));
    const std::string res = result_letters(t);
    if (res != g.full) r = ad::expand(res + "->" + g.full, r, extents);
    parts.push_back(r);
  }
  if (g.bias)
    parts.push_back(ad::expand(std::string(g.bias_letters) + "->" + g.full, lookup(vars, prefix + g.bias), extents));
  return ad::add_n(parts);
}

void check_input(const WeightVars& u, std::size_t in_channels, std::size_t model) {
  if (u.channels() != in_channels)
    throw ShapeError("layer expects " + std::to_string(in_channels) + " input channels, got " +
                     std::to_string(u.channels()));
  if (u.dims.model != model)
    throw ShapeError("layer built for model width " + std::to_string(model) + ", got " +
                     std::to_string(u.dims.model));
}

}  // namespace

EquivariantParams EquivariantParams::zeros(std::size_t in_channels, std::size_t out_channels, std::size_t model) {
  if (in_channels == 0 || out_channels == 0 || model == 0) throw ShapeError("EquivariantParams: zero dimension");
  EquivariantParams p;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.model = model;
  for (const auto& g : equivariant_groups()) add_group_blocks(p.set, g, in_channels, out_channels, model, model);
  return p;
}

InvariantParams InvariantParams::zeros(std::size_t in_channels, std::size_t out_channels, std::size_t model,
                                       std::size_t features) {
  if (in_channels == 0 || out_channels == 0 || model == 0 || features == 0)
    throw ShapeError("InvariantParams: zero dimension");
  InvariantParams p;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.model = model;
  p.features = features;
  add_group_blocks(p.set, invariant_group(), in_channels, out_channels, model, features);
  return p;
}

void init_params(Rng& rng, EquivariantParams& p, const BlockDims& dims) {
  for (const auto& g : equivariant_groups()) init_group(rng, p.set, g, dims, p.in_channels);
}

void init_params(Rng& rng, InvariantParams& p, const BlockDims& dims, bool nonnegative_input) {
  init_group(rng, p.set, invariant_group(), dims, p.in_channels, nonnegative_input);
}

std::size_t equivariant_param_count(std::size_t in_channels, std::size_t out_channels, std::size_t model) {
  const std::size_t D = model, e = out_channels, d = in_channels;
  return e * d * (2 * D * D * D + 12 * D * D + 15 * D + 12) + 2 * e + 2 * e * D;
}

std::size_t invariant_param_count(std::size_t in_channels, std::size_t out_channels, std::size_t model,
                                  std::size_t features) {
  const std::size_t D = model;
  return out_channels * in_channels * features * (D * D + 3 * D + 2) + out_channels * features;
}

WeightVars equivariant_forward(const EquivariantParams& p, const VarMap& vars, const WeightVars& u,
                               const std::string& prefix) {
  check_input(u, p.in_channels, p.model);
  const auto& dims = u.dims;
  const ad::Var qk = query_key_products(u);
  const ad::Var vo = value_output_products(u);
  const std::size_t b = u.batch(), e = p.out_channels, h = dims.heads, D = dims.model, A = dims.hidden;

  WeightVars out{dims, {}, {}, {}, {}, {}, {}, {}, {}};
  for (const auto& g : equivariant_groups()) {
    const std::string name = g.output;
    std::map<char, std::size_t> ext{{'b', b}, {'e', e}, {'h', h}};
    ad::Var* slot = nullptr;
    if (name == "Q" || name == "K") {
      ext['j'] = D;
      ext['k'] = dims.key;
      slot = name == "Q" ? &out.query : &out.key;
    } else if (name == "V") {
      ext['j'] = D;
      ext['k'] = dims.value;
      slot = &out.value;
    } else if (name == "O") {
      ext['j'] = dims.value;
      ext['k'] = D;
      slot = &out.output;
    } else if (name == "A") {
      ext['j'] = D;
      ext['k'] = A;
      slot = &out.mlp_in;
    } else if (name == "bA") {
      ext['k'] = A;
      slot = &out.bias_in;
    } else if (name == "B") {
      ext['j'] = A;
      ext['k'] = D;
      slot = &out.mlp_out;
    } else {
      ext['k'] = D;
      slot = &out.bias_out;
    }
    *slot = eval_group(g, vars, prefix, u, qk, vo, ext);
  }
  return out;
}

ad::Var invariant_forward(const InvariantParams& p, const VarMap& vars, const WeightVars& u,
                          const std::string& prefix) {
  check_input(u, p.in_channels, p.model);
  const ad::Var qk = query_key_products(u);
  const ad::Var vo = value_output_products(u);
  const std::map<char, std::size_t> ext{{'b', u.batch()}, {'e', p.out_channels}, {'k', p.features}};
  return eval_group(invariant_group(), vars, prefix, u, qk, vo, ext);
}

WeightVars relu_equivariant(const WeightVars& u, bool break_placement) {
  WeightVars out = u;
  out.mlp_in = ad::relu(u.mlp_in);
  out.bias_in = ad::relu(u.bias_in);
  out.mlp_out = ad::relu(u.mlp_out);
  out.bias_out = ad::relu(u.bias_out);
  if (break_placement) out.query = ad::relu(u.query);
  return out;
}

MultiChannelWeights equivariant_forward(const EquivariantParams& p, const MultiChannelWeights& u) {
  ad::Tape tape;
  const MultiChannelWeights in[] = {u};
  const WeightVars vars = constant_vars(tape, pack(in));
  const VarMap pv = bind_params(tape, p.set, false);
  return unpack(values_of(equivariant_forward(p, pv, vars)), 0);
}

Tensor invariant_forward(const InvariantParams& p, const MultiChannelWeights& u) {
  ad::Tape tape;
  const MultiChannelWeights in[] = {u};
  const WeightVars vars = constant_vars(tape, pack(in));
  const VarMap pv = bind_params(tape, p.set, false);
  const Tensor out = invariant_forward(p, pv, vars).value();
  return out.reshaped({p.out_channels, p.features});
}

MultiChannelWeights relu_equivariant(const MultiChannelWeights& u, bool break_placement) {
  ad::Tape tape;
  const MultiChannelWeights in[] = {u};
  const WeightVars vars = constant_vars(tape, pack(in));
  return unpack(values_of(relu_equivariant(vars, break_placement)), 0);
}

}  // namespace tnfn
