#pragma once

#include <functional>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "tnfn/contract.hpp"
#include "tnfn/tensor.hpp"

/// Minimal reverse-mode tape over whole tensors.
///
/// Each recorded op stores its value and, when any input needs a gradient, a
/// closure that maps the output adjoint to input adjoints. Nodes that depend
/// only on constants keep no closure, so evaluating a model on a tape built
/// from constants costs the same as a plain forward pass.
namespace tnfn::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape& tape, const Tensor& out_grad)>;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Records an op result. parents decide whether a gradient is needed; fn is
  /// dropped when none of them requires one.
  Var record(Tensor value, std::initializer_list<Var> parents, Backward fn);
  Var record(Tensor value, std::span<const Var> parents, Backward fn);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  /// Accumulated adjoint; a zero tensor when nothing flowed into v.
  Tensor grad(Var v) const;

  void accumulate(Var v, const Tensor& g);
  void accumulate(Var v, Tensor&& g);

  /// Seeds d(out)/d(out) = 1 (out must hold a single element) and sweeps back.
  void backward(Var out);
  void backward(Var out, const Tensor& seed);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Tensor-valued ops. All operands must live on the same tape.

Var contract(const ContractionSpec& spec, std::span<const Var> inputs);

template <class... Vs>
Var contract(std::string_view expression, Vs... inputs) {
  const Var vars[] = {inputs...};
  return contract(ContractionSpec::parse(expression), std::span<const Var>(vars));
}

Var expand(std::string_view expression, Var x, const std::map<char, std::size_t>& new_extents);
Var reshape(Var x, Shape shape);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_n(std::span<const Var> terms);

Var matmul(Var a, Var b);
/// m (n x c) plus a broadcast row bias (1 x c).
Var add_row_bias(Var m, Var bias);
Var transpose(Var m);
/// Concatenates rank-2 operands along columns.
Var concat_columns(std::span<const Var> parts);
/// Concatenates rank-2 operands along rows.
Var concat_rows(std::span<const Var> parts);
/// Rows [begin, begin + count) of a rank-2 operand.
Var slice_rows(Var m, std::size_t begin, std::size_t count);

Var relu(Var x);
Var sigmoid(Var x);
/// sign(x) log(1 + |x|), elementwise.
Var signed_log1p(Var x);
/// Elementwise product with a fixed mask (inverted dropout passes mask / keep).
Var apply_mask(Var x, const Tensor& mask);

Var softmax_rows(Var x);
Var layer_norm_rows(Var x);
/// rows of table selected by index (embedding lookup).
Var gather_rows(Var table, std::span<const std::size_t> index);

Var sum_all(Var x);
Var mean_all(Var x);

/// Mean binary cross-entropy of sigmoid(logits) against targets in [0, 1],
/// computed as softplus(z) - y z.
Var bce_with_logits(Var logits, const Tensor& targets);
Var mean_squared_error(Var pred, const Tensor& targets);
/// Mean softmax cross-entropy of logits (n x C) against integer labels.
Var cross_entropy(Var logits, std::span<const std::size_t> labels);

}  // namespace tnfn::ad
