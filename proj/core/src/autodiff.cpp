#include "tnfn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tnfn/block.hpp"

namespace tnfn::ad {

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, Backward fn) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> parents, Backward fn) {
  bool needs = false;
  for (const auto& p : parents) {
    if (p.tape != this) throw std::invalid_argument("autodiff: operand belongs to a different tape");
    needs = needs || nodes_[p.id].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Tensor Tape::grad(Var v) const {
  const auto& n = nodes_.at(v.id);
  if (!n.has_grad) return Tensor(n.value.shape());
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  auto& n = nodes_.at(v.id);
  if (!n.requires_grad) return;
  if (g.shape() != n.value.shape())
    throw ShapeError("autodiff: adjoint shape " + shape_to_string(g.shape()) + " for value " +
                     shape_to_string(n.value.shape()));
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::accumulate(Var v, Tensor&& g) {
  auto& n = nodes_.at(v.id);
  if (!n.requires_grad || n.has_grad || g.shape() != n.value.shape()) {
    accumulate(v, static_cast<const Tensor&>(g));
    return;
  }
  n.grad = std::move(g);
  n.has_grad = true;
}

void Tape::backward(Var out) {
  if (value(out).size() != 1) throw ShapeError("backward() without a seed needs a single-element output");
  backward(out, Tensor(value(out).shape(), 1.0));
}

void Tape::backward(Var out, const Tensor& seed) {
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  accumulate(out, seed);
  for (std::size_t i = out.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    // Backward functions only touch earlier nodes, so n.grad stays put.
    n.backward(*this, n.grad);
  }
}

namespace {

Tape* tape_of(std::span<const Var> vars) {
  if (vars.empty()) throw std::invalid_argument("autodiff: op needs at least one operand");
  return vars.front().tape;
}

// Adjoint of operand k of a contraction: contract the output adjoint with the
// other operands onto k's letters; letters of k summed away in the forward
// pass (present nowhere else) are restored by broadcasting.
Tensor contraction_adjoint(const ContractionSpec& spec, const std::vector<const Tensor*>& values, const Tensor& out_grad,
                           std::size_t k) {
  const std::string& mine = spec.operands()[k];
  for (std::size_t a = 0; a < mine.size(); ++a)
    if (mine.find(mine[a]) != a) throw ShapeError("autodiff: repeated index within one operand is unsupported");

  std::string available = spec.output();
  for (std::size_t j = 0; j < values.size(); ++j)
    if (j != k) available += spec.operands()[j];

  std::string kept;
  std::map<char, std::size_t> missing;
  for (std::size_t a = 0; a < mine.size(); ++a) {
    if (available.find(mine[a]) != std::string::npos)
      kept.push_back(mine[a]);
    else
      missing[mine[a]] = values[k]->dim(a);
  }

  std::string expr = spec.output();
  std::vector<const Tensor*> ops{&out_grad};
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (j == k) continue;
    expr += "," + spec.operands()[j];
    ops.push_back(values[j]);
  }
  expr += "->" + kept;
  Tensor reduced = tnfn::contract(ContractionSpec::parse(expr), std::span<const Tensor* const>(ops));
  if (missing.empty()) return reduced;
  return tnfn::expand(kept + "->" + mine, reduced, missing);
}

}  // namespace

Var contract(const ContractionSpec& spec, std::span<const Var> inputs) {
  Tape* tape = tape_of(inputs);
  std::vector<const Tensor*> ptrs;
  for (const auto& v : inputs) ptrs.push_back(&v.value());
  Tensor out = tnfn::contract(spec, std::span<const Tensor* const>(ptrs));
  std::vector<Var> parents(inputs.begin(), inputs.end());
  return tape->record(std::move(out), inputs, [spec, parents](Tape& t, const Tensor& g) {
    std::vector<const Tensor*> values;
    for (const auto& p : parents) values.push_back(&t.value(p));
    for (std::size_t k = 0; k < parents.size(); ++k)
      if (t.requires_grad(parents[k])) t.accumulate(parents[k], contraction_adjoint(spec, values, g, k));
  });
}

Var expand(std::string_view expression, Var x, const std::map<char, std::size_t>& new_extents) {
  Tensor out = tnfn::expand(expression, x.value(), new_extents);
  const auto arrow = expression.find("->");
  const std::string back = std::string(expression.substr(arrow + 2)) + "->" + std::string(expression.substr(0, arrow));
  return x.tape->record(std::move(out), {x}, [x, back](Tape& t, const Tensor& g) {
    t.accumulate(x, tnfn::contract(ContractionSpec::parse(back), std::span<const Tensor* const>(std::array{&g})));
  });
}

Var reshape(Var x, Shape shape) {
  const Shape original = x.shape();
  return x.tape->record(x.value().reshaped(std::move(shape)), {x},
                        [x, original](Tape& t, const Tensor& g) { t.accumulate(x, g.reshaped(original)); });
}

Var add(Var a, Var b) {
  return a.tape->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  return a.tape->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g * -1.0);
  });
}

Var mul(Var a, Var b) {
  return a.tape->record(hadamard(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) t.accumulate(a, hadamard(g, t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, hadamard(g, t.value(a)));
  });
}

Var scale(Var a, double factor) {
  return a.tape->record(a.value() * factor, {a},
                        [a, factor](Tape& t, const Tensor& g) { t.accumulate(a, g * factor); });
}

Var add_n(std::span<const Var> terms) {
  Tape* tape = tape_of(terms);
  Tensor out = terms.front().value();
  for (std::size_t i = 1; i < terms.size(); ++i) out += terms[i].value();
  std::vector<Var> parents(terms.begin(), terms.end());
  return tape->record(std::move(out), terms, [parents](Tape& t, const Tensor& g) {
    for (const auto& p : parents) t.accumulate(p, g);
  });
}

Var matmul(Var a, Var b) {
  return a.tape->record(tnfn::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) t.accumulate(a, tnfn::matmul(g, transpose(t.value(b))));
    if (t.requires_grad(b)) t.accumulate(b, tnfn::matmul(transpose(t.value(a)), g));
  });
}

Var add_row_bias(Var m, Var bias) {
  const Tensor& mv = m.value();
  const Tensor& bv = bias.value();
  if (mv.rank() != 2 || bv.size() != mv.dim(1))
    throw ShapeError("add_row_bias: " + shape_to_string(mv.shape()) + " + " + shape_to_string(bv.shape()));
  Tensor out = mv;
  const std::size_t rows = mv.dim(0), cols = mv.dim(1);
  auto o = out.data();
  auto b = bv.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) o[i * cols + j] += b[j];
  const Shape bias_shape = bv.shape();
  return m.tape->record(std::move(out), {m, bias}, [m, bias, rows, cols, bias_shape](Tape& t, const Tensor& g) {
    t.accumulate(m, g);
    if (t.requires_grad(bias)) {
      Tensor gb(bias_shape);
      auto gbd = gb.data();
      auto gd = g.data();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) gbd[j] += gd[i * cols + j];
      t.accumulate(bias, gb);
    }
  });
}

Var concat_columns(std::span<const Var> parts) {
  Tape* tape = tape_of(parts);
  const std::size_t rows = parts.front().value().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.value().dim(0) != rows) throw ShapeError("concat_columns: row counts differ");
    widths.push_back(p.value().dim(1));
    total += widths.back();
  }
  Tensor out({rows, total});
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto src = parts[k].value().data();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(src.data() + i * widths[k], widths[k], out.data().data() + i * total + col);
    col += widths[k];
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return tape->record(std::move(out), parts, [parents, widths, rows, total](Tape& t, const Tensor& g) {
    std::size_t c = 0;
    for (std::size_t k = 0; k < parents.size(); ++k) {
      if (t.requires_grad(parents[k])) {
        Tensor part({rows, widths[k]});
        for (std::size_t i = 0; i < rows; ++i)
          std::copy_n(g.data().data() + i * total + c, widths[k], part.data().data() + i * widths[k]);
        t.accumulate(parents[k], part);
      }
      c += widths[k];
    }
  });
}

Var transpose(Var m) {
  return m.tape->record(tnfn::transpose(m.value()), {m},
                        [m](Tape& t, const Tensor& g) { t.accumulate(m, tnfn::transpose(g)); });
}

Var concat_rows(std::span<const Var> parts) {
  Tape* tape = tape_of(parts);
  const std::size_t cols = parts.front().value().rank() == 2 ? parts.front().value().dim(1) : 0;
  std::vector<std::size_t> heights;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.value().dim(1) != cols) throw ShapeError("concat_rows: column counts differ");
    heights.push_back(p.value().dim(0));
    total += heights.back();
  }
  std::vector<double> data;
  data.reserve(total * cols);
  for (const auto& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  std::vector<Var> parents(parts.begin(), parts.end());
  return tape->record(Tensor({total, cols}, std::move(data)), parts, [parents, heights, cols](Tape& t, const Tensor& g) {
    std::size_t row = 0;
    for (std::size_t k = 0; k < parents.size(); ++k) {
      if (t.requires_grad(parents[k])) {
        std::vector<double> part(g.data().begin() + row * cols, g.data().begin() + (row + heights[k]) * cols);
        t.accumulate(parents[k], Tensor({heights[k], cols}, std::move(part)));
      }
      row += heights[k];
    }
  });
}

Var slice_rows(Var m, std::size_t begin, std::size_t count) {
  const Tensor& mv = m.value();
  if (mv.rank() != 2 || count == 0 || begin + count > mv.dim(0)) throw ShapeError("slice_rows: range out of bounds");
  const std::size_t cols = mv.dim(1);
  std::vector<double> data(mv.data().begin() + begin * cols, mv.data().begin() + (begin + count) * cols);
  const Shape shape = mv.shape();
  return m.tape->record(Tensor({count, cols}, std::move(data)), {m}, [m, shape, begin, cols](Tape& t, const Tensor& g) {
    Tensor gm(shape);
    std::copy(g.data().begin(), g.data().end(), gm.data().begin() + begin * cols);
    t.accumulate(m, gm);
  });
}

Var relu(Var x) {
  // Subgradient at 0 is 0.
  return x.tape->record(tnfn::relu(x.value()), {x}, [x](Tape& t, const Tensor& g) {
    Tensor gx = g;
    auto xv = t.value(x).data();
    auto d = gx.data();
    for (std::size_t i = 0; i < d.size(); ++i)
      if (!(xv[i] > 0.0)) d[i] = 0.0;
    t.accumulate(x, gx);
  });
}

Var signed_log1p(Var x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = std::copysign(std::log1p(std::fabs(v)), v);
  return x.tape->record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    Tensor gx = g;
    auto d = gx.data();
    auto xv = t.value(x).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] /= 1.0 + std::fabs(xv[i]);
    t.accumulate(x, gx);
  });
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
  Tensor y = out;
  return x.tape->record(std::move(out), {x}, [x, y](Tape& t, const Tensor& g) {
    Tensor gx = g;
    auto d = gx.data();
    auto yv = y.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= yv[i] * (1.0 - yv[i]);
    t.accumulate(x, gx);
  });
}

Var apply_mask(Var x, const Tensor& mask) {
  return x.tape->record(hadamard(x.value(), mask), {x},
                        [x, mask](Tape& t, const Tensor& g) { t.accumulate(x, hadamard(g, mask)); });
}

Var softmax_rows(Var x) {
  Tensor y = tnfn::softmax_rows(x.value());
  Tensor out = y;
  return x.tape->record(std::move(out), {x}, [x, y](Tape& t, const Tensor& g) {
    const std::size_t rows = y.dim(0), cols = y.dim(1);
    Tensor gx({rows, cols});
    auto yd = y.data();
    auto gd = g.data();
    auto o = gx.data();
    for (std::size_t i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += gd[i * cols + j] * yd[i * cols + j];
      for (std::size_t j = 0; j < cols; ++j) o[i * cols + j] = yd[i * cols + j] * (gd[i * cols + j] - dot);
    }
    t.accumulate(x, gx);
  });
}

Var layer_norm_rows(Var x) {
  const Tensor& xv = x.value();
  Tensor y = tnfn::layer_norm_rows(xv);
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  // Per-row sqrt(D)/||x - mean||, zero for degenerate rows.
  std::vector<double> factor(rows, 0.0);
  auto xd = xv.data();
  for (std::size_t i = 0; i < rows; ++i) {
    double mean = 0.0, raw = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      mean += xd[i * cols + j];
      raw += xd[i * cols + j] * xd[i * cols + j];
    }
    mean /= static_cast<double>(cols);
    double norm = 0.0;
    for (std::size_t j = 0; j < cols; ++j) norm += (xd[i * cols + j] - mean) * (xd[i * cols + j] - mean);
    norm = std::sqrt(norm);
    if (norm >= 1e-12 * std::max(1.0, std::sqrt(raw))) factor[i] = std::sqrt(static_cast<double>(cols)) / norm;
  }
  Tensor out = y;
  return x.tape->record(std::move(out), {x}, [x, y, factor, rows, cols](Tape& t, const Tensor& g) {
    // y = f r with r = x - mean and f = sqrt(D)/||r||:
    // dr = f (g - y (y.g) / D), dx = dr - mean(dr).
    Tensor gx({rows, cols});
    auto yd = y.data();
    auto gd = g.data();
    auto o = gx.data();
    const double dim = static_cast<double>(cols);
    for (std::size_t i = 0; i < rows; ++i) {
      if (factor[i] == 0.0) continue;
      double yg = 0.0;
      for (std::size_t j = 0; j < cols; ++j) yg += yd[i * cols + j] * gd[i * cols + j];
      double mean_dr = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        const double dr = factor[i] * (gd[i * cols + j] - yd[i * cols + j] * yg / dim);
        o[i * cols + j] = dr;
        mean_dr += dr;
      }
      mean_dr /= dim;
      for (std::size_t j = 0; j < cols; ++j) o[i * cols + j] -= mean_dr;
    }
    t.accumulate(x, gx);
  });
}

Var gather_rows(Var table, std::span<const std::size_t> index) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("gather_rows expects a rank-2 table");
  const std::size_t cols = tv.dim(1);
  Tensor out({index.size(), cols});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= tv.dim(0)) throw std::out_of_range("gather_rows: index out of range");
    std::copy_n(tv.data().data() + index[i] * cols, cols, out.data().data() + i * cols);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const Shape table_shape = tv.shape();
  return table.tape->record(std::move(out), {table}, [table, idx, cols, table_shape](Tape& t, const Tensor& g) {
    Tensor gt(table_shape);
    auto gd = g.data();
    auto o = gt.data();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < cols; ++j) o[idx[i] * cols + j] += gd[i * cols + j];
    t.accumulate(table, gt);
  });
}

Var sum_all(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const Shape shape = x.shape();
  return x.tape->record(Tensor::scalar(s), {x},
                        [x, shape](Tape& t, const Tensor& g) { t.accumulate(x, Tensor(shape, g.item())); });
}

Var mean_all(Var x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.value().size())); }

Var bce_with_logits(Var logits, const Tensor& targets) {
  const Tensor& z = logits.value();
  if (z.size() != targets.size()) throw ShapeError("bce_with_logits: prediction/target count mismatch");
  const double n = static_cast<double>(z.size());
  double loss = 0.0;
  auto zd = z.data();
  auto yd = targets.data();
  for (std::size_t i = 0; i < zd.size(); ++i) {
    // softplus(z) - y z, stable for large |z|.
    const double softplus = zd[i] > 0 ? zd[i] + std::log1p(std::exp(-zd[i])) : std::log1p(std::exp(zd[i]));
    loss += softplus - yd[i] * zd[i];
  }
  return logits.tape->record(Tensor::scalar(loss / n), {logits}, [logits, targets, n](Tape& t, const Tensor& g) {
    Tensor gz(t.value(logits).shape());
    auto zv = t.value(logits).data();
    auto yv = targets.data();
    auto o = gz.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = g.item() * (1.0 / (1.0 + std::exp(-zv[i])) - yv[i]) / n;
    t.accumulate(logits, gz);
  });
}

Var mean_squared_error(Var pred, const Tensor& targets) {
  const Tensor& p = pred.value();
  if (p.size() != targets.size()) throw ShapeError("mean_squared_error: prediction/target count mismatch");
  const double n = static_cast<double>(p.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p.data()[i] - targets.data()[i];
    loss += d * d;
  }
  return pred.tape->record(Tensor::scalar(loss / n), {pred}, [pred, targets, n](Tape& t, const Tensor& g) {
    Tensor gp(t.value(pred).shape());
    auto pv = t.value(pred).data();
    for (std::size_t i = 0; i < gp.size(); ++i) gp.data()[i] = g.item() * 2.0 * (pv[i] - targets.data()[i]) / n;
    t.accumulate(pred, gp);
  });
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2 || z.dim(0) != labels.size()) throw ShapeError("cross_entropy: logits/labels mismatch");
  const std::size_t rows = z.dim(0), classes = z.dim(1);
  Tensor probs = tnfn::softmax_rows(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (labels[i] >= classes) throw std::out_of_range("cross_entropy: label out of range");
    loss -= std::log(std::max(probs(i, labels[i]), 1e-300));
  }
  std::vector<std::size_t> y(labels.begin(), labels.end());
  const double n = static_cast<double>(rows);
  return logits.tape->record(Tensor::scalar(loss / n), {logits}, [logits, probs, y, n, classes](Tape& t,
                                                                                                const Tensor& g) {
    Tensor gz = probs;
    auto d = gz.data();
    for (std::size_t i = 0; i < y.size(); ++i) d[i * classes + y[i]] -= 1.0;
    gz *= g.item() / n;
    t.accumulate(logits, gz);
  });
}

}  // namespace tnfn::ad
