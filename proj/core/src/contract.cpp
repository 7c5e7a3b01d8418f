#include "tnfn/contract.hpp"

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>

namespace tnfn {

namespace {

bool is_index_letter(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

std::string letter_name(char c) { return std::string("'") + c + "'"; }

}  // namespace

ContractionSpec ContractionSpec::parse(std::string_view expression) {
  const auto arrow = expression.find("->");
  if (arrow == std::string_view::npos)
    throw ShapeError("contraction '" + std::string(expression) + "' is missing '->'");

  ContractionSpec spec;
  std::string_view lhs = expression.substr(0, arrow);
  std::string_view rhs = expression.substr(arrow + 2);

  std::string current;
  for (char c : lhs) {
    if (c == ',') {
      spec.operands_.push_back(current);
      current.clear();
    } else if (c != ' ') {
      if (!is_index_letter(c)) throw ShapeError("invalid index character '" + std::string(1, c) + "'");
      current.push_back(c);
    }
  }
  spec.operands_.push_back(current);

  for (char c : rhs) {
    if (c == ' ') continue;
    if (!is_index_letter(c)) throw ShapeError("invalid index character '" + std::string(1, c) + "'");
    if (spec.output_.find(c) != std::string::npos)
      throw ShapeError("output index " + letter_name(c) + " repeated");
    spec.output_.push_back(c);
  }

  for (char c : spec.output_) {
    const bool present = std::any_of(spec.operands_.begin(), spec.operands_.end(),
                                     [c](const std::string& op) { return op.find(c) != std::string::npos; });
    if (!present) throw ShapeError("output index " + letter_name(c) + " does not appear in any operand");
  }

  spec.loop_letters_ = spec.output_;
  for (const auto& op : spec.operands_)
    for (char c : op)
      if (spec.loop_letters_.find(c) == std::string::npos) spec.loop_letters_.push_back(c);
  return spec;
}

std::string ContractionSpec::str() const {
  std::string s;
  for (std::size_t i = 0; i < operands_.size(); ++i) {
    if (i) s.push_back(',');
    s += operands_[i];
  }
  return s + "->" + output_;
}

std::map<char, std::size_t> ContractionSpec::bind(std::span<const Tensor* const> inputs) const {
  if (inputs.size() != operands_.size())
    throw ShapeError("contraction " + str() + " expects " + std::to_string(operands_.size()) + " operands, got " +
                     std::to_string(inputs.size()));
  std::map<char, std::size_t> extent;
  std::map<char, std::size_t> first_operand;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto& letters = operands_[k];
    const auto& shape = inputs[k]->shape();
    if (letters.size() != shape.size())
      throw ShapeError("contraction " + str() + ": operand " + std::to_string(k) + " has rank " +
                       std::to_string(shape.size()) + " but subscript '" + letters + "'");
    for (std::size_t a = 0; a < letters.size(); ++a) {
      const char c = letters[a];
      auto it = extent.find(c);
      if (it == extent.end()) {
        extent[c] = shape[a];
        first_operand[c] = k;
      } else if (it->second != shape[a]) {
        throw ShapeError("contraction " + str() + ": index " + letter_name(c) + " has size " +
                         std::to_string(shape[a]) + " in operand " + std::to_string(k) + " but size " +
                         std::to_string(it->second) + " in operand " + std::to_string(first_operand[c]));
      }
    }
  }
  return extent;
}

namespace {

struct LoopNest {
  std::vector<std::size_t> extent;                 // per loop letter
  std::vector<std::vector<std::ptrdiff_t>> stride;  // [operand][loop letter]
  std::size_t outer = 0;                           // number of output letters
};

LoopNest build_nest(const ContractionSpec& spec, std::span<const Tensor* const> inputs) {
  const auto extents = spec.bind(inputs);
  const auto& letters = spec.loop_letters();
  LoopNest nest;
  nest.outer = spec.output().size();
  nest.extent.resize(letters.size());
  for (std::size_t l = 0; l < letters.size(); ++l) nest.extent[l] = extents.at(letters[l]);

  nest.stride.assign(inputs.size(), std::vector<std::ptrdiff_t>(letters.size(), 0));
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto& subs = spec.operands()[k];
    const auto& shape = inputs[k]->shape();
    std::ptrdiff_t s = 1;
    for (std::size_t a = subs.size(); a-- > 0;) {
      const auto l = letters.find(subs[a]);
      nest.stride[k][l] += s;  // repeated letters accumulate: diagonal access
      s *= static_cast<std::ptrdiff_t>(shape[a]);
    }
  }
  return nest;
}

}  // namespace

namespace {

std::size_t extent_product(const std::string& letters, const std::map<char, std::size_t>& ext) {
  std::size_t n = 1;
  for (char c : letters) n *= ext.at(c);
  return n;
}

bool has_repeat(const std::string& s) {
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.find(s[i], i + 1) != std::string::npos) return true;
  return false;
}

// Copies src (laid out by src_letters) into a contiguous buffer laid out by
// dst_letters. Both name the same set of letters.
void permute_into(const double* src, const std::string& src_letters, const std::string& dst_letters,
                  const std::map<char, std::size_t>& ext, double* dst) {
  if (src_letters == dst_letters) {
    std::copy_n(src, extent_product(dst_letters, ext), dst);
    return;
  }
  const std::size_t n = dst_letters.size();
  std::vector<std::ptrdiff_t> stride(n, 0);
  std::vector<std::size_t> extent(n);
  {
    std::ptrdiff_t s = 1;
    for (std::size_t a = src_letters.size(); a-- > 0;) {
      stride[dst_letters.find(src_letters[a])] = s;
      s *= static_cast<std::ptrdiff_t>(ext.at(src_letters[a]));
    }
  }
  for (std::size_t l = 0; l < n; ++l) extent[l] = ext.at(dst_letters[l]);
  const std::size_t inner = extent[n - 1];
  const std::ptrdiff_t si = stride[n - 1];
  std::vector<std::size_t> idx(n - 1, 0);
  std::ptrdiff_t off = 0;
  while (true) {
    for (std::size_t t = 0; t < inner; ++t) *dst++ = src[off + static_cast<std::ptrdiff_t>(t) * si];
    std::size_t i = n - 1;
    bool done = true;
    while (i-- > 0) {
      if (++idx[i] < extent[i]) {
        off += stride[i];
        done = false;
        break;
      }
      idx[i] = 0;
      off -= stride[i] * static_cast<std::ptrdiff_t>(extent[i] - 1);
    }
    if (done) break;
  }
}

Tensor contract_loops(const ContractionSpec& spec, std::span<const Tensor* const> inputs);

// Two operands without diagonals, as a batched matrix product. Letters held by
// only one operand are summed out first. Each output element then adds its
// terms in row-major order over the shared summed letters.
Tensor contract_pair(const ContractionSpec& spec, std::span<const Tensor* const> inputs) {
  const auto ext = spec.bind(inputs);
  const std::string& out = spec.output();
  std::string sub[2] = {spec.operands()[0], spec.operands()[1]};
  Tensor reduced[2];
  const Tensor* op[2] = {inputs[0], inputs[1]};
  for (int k = 0; k < 2; ++k) {
    std::string keep;
    for (char c : sub[k])
      if (out.find(c) != std::string::npos || sub[1 - k].find(c) != std::string::npos) keep.push_back(c);
    if (keep.size() != sub[k].size()) {
      const auto single = ContractionSpec::parse(sub[k] + "->" + keep);
      reduced[k] = contract_loops(single, std::span<const Tensor* const>(&op[k], 1));
      op[k] = &reduced[k];
      sub[k] = keep;
    }
  }

  std::string batch, m, n, kk;
  for (char c : out) {
    const bool in_a = sub[0].find(c) != std::string::npos;
    const bool in_b = sub[1].find(c) != std::string::npos;
    (in_a && in_b ? batch : in_a ? m : n).push_back(c);
  }
  for (char c : sub[0])
    if (out.find(c) == std::string::npos) kk.push_back(c);

  // The longer free side runs along the contiguous inner loop.
  int a_side = 0;
  if (extent_product(n, ext) < extent_product(m, ext)) {
    std::swap(m, n);
    a_side = 1;
  }
  const std::size_t nb = extent_product(batch, ext), nm = extent_product(m, ext), nn = extent_product(n, ext),
                    nk = extent_product(kk, ext);

  std::vector<double> a(nb * nm * nk), b(nb * nk * nn), c(nb * nm * nn, 0.0);
  permute_into(op[a_side]->data().data(), sub[a_side], batch + m + kk, ext, a.data());
  permute_into(op[1 - a_side]->data().data(), sub[1 - a_side], batch + kk + n, ext, b.data());

  for (std::size_t q = 0; q < nb; ++q) {
    const double* aq = a.data() + q * nm * nk;
    const double* bq = b.data() + q * nk * nn;
    double* cq = c.data() + q * nm * nn;
    for (std::size_t i = 0; i < nm; ++i) {
      double* ci = cq + i * nn;
      for (std::size_t k = 0; k < nk; ++k) {
        const double x = aq[i * nk + k];
        const double* bk = bq + k * nn;
        for (std::size_t j = 0; j < nn; ++j) ci[j] += x * bk[j];
      }
    }
  }

  Shape out_shape;
  for (char ch : out) out_shape.push_back(ext.at(ch));
  Tensor result(out_shape);
  permute_into(c.data(), batch + m + n, out, ext, result.data().data());
  return result;
}

}  // namespace

Tensor contract(const ContractionSpec& spec, std::span<const Tensor* const> inputs) {
  if (inputs.size() == 2 && spec.operands().size() == 2 && !has_repeat(spec.operands()[0]) &&
      !has_repeat(spec.operands()[1]) && !spec.output().empty())
    return contract_pair(spec, inputs);
  return contract_loops(spec, inputs);
}

namespace {

Tensor contract_loops(const ContractionSpec& spec, std::span<const Tensor* const> inputs) {
  const LoopNest nest = build_nest(spec, inputs);
  const std::size_t n_ops = inputs.size();
  const std::size_t n_loops = nest.extent.size();

  Shape out_shape(nest.extent.begin(), nest.extent.begin() + static_cast<std::ptrdiff_t>(nest.outer));
  Tensor out(out_shape);
  double* const dst = out.data().data();

  std::vector<const double*> base(n_ops);
  for (std::size_t k = 0; k < n_ops; ++k) base[k] = inputs[k]->data().data();

  if (n_loops == 0) {
    double p = 1.0;
    for (std::size_t k = 0; k < n_ops; ++k) p *= base[k][0];
    dst[0] = 0.0 + p;
    return out;
  }

  // Output strides (zero on summed letters).
  std::vector<std::ptrdiff_t> out_stride(n_loops, 0);
  {
    std::ptrdiff_t s = 1;
    for (std::size_t l = nest.outer; l-- > 0;) {
      out_stride[l] = s;
      s *= static_cast<std::ptrdiff_t>(nest.extent[l]);
    }
  }

  // Every output element receives its terms in row-major order over the summed
  // letters, so the summed letters keep their relative nesting. Output letters
  // may sit anywhere; the tight loop is the longest of the output letters and
  // the last summed letter.
  std::size_t tight = n_loops - 1;
  for (std::size_t l = 0; l < nest.outer; ++l)
    if (nest.extent[l] > nest.extent[tight]) tight = l;
  std::vector<std::size_t> order;
  for (std::size_t l = 0; l < nest.outer; ++l)
    if (l != tight) order.push_back(l);
  for (std::size_t l = nest.outer; l < n_loops; ++l)
    if (l != tight) order.push_back(l);

  const std::size_t n_tight = nest.extent[tight];
  const std::ptrdiff_t so = out_stride[tight];
  std::vector<std::ptrdiff_t> st(n_ops);
  for (std::size_t k = 0; k < n_ops; ++k) st[k] = nest.stride[k][tight];

  std::vector<std::size_t> idx(order.size(), 0);
  std::vector<std::ptrdiff_t> off(n_ops, 0);
  std::ptrdiff_t o_off = 0;
  while (true) {
    double* o = dst + o_off;
    if (so == 0) {
      double acc = *o;
      if (n_ops == 1) {
        const double* a = base[0] + off[0];
        for (std::size_t t = 0; t < n_tight; ++t) acc += a[static_cast<std::ptrdiff_t>(t) * st[0]];
      } else if (n_ops == 2) {
        const double* a = base[0] + off[0];
        const double* b = base[1] + off[1];
        const std::ptrdiff_t sa = st[0], sb = st[1];
        for (std::size_t t = 0; t < n_tight; ++t) {
          const auto ti = static_cast<std::ptrdiff_t>(t);
          acc += a[ti * sa] * b[ti * sb];
        }
      } else {
        for (std::size_t t = 0; t < n_tight; ++t) {
          double p = 1.0;
          for (std::size_t k = 0; k < n_ops; ++k) p *= base[k][off[k] + static_cast<std::ptrdiff_t>(t) * st[k]];
          acc += p;
        }
      }
      *o = acc;
    } else if (n_ops == 1) {
      const double* a = base[0] + off[0];
      const std::ptrdiff_t sa = st[0];
      for (std::size_t t = 0; t < n_tight; ++t) {
        const auto ti = static_cast<std::ptrdiff_t>(t);
        o[ti * so] += a[ti * sa];
      }
    } else if (n_ops == 2) {
      const double* a = base[0] + off[0];
      const double* b = base[1] + off[1];
      const std::ptrdiff_t sa = st[0], sb = st[1];
      for (std::size_t t = 0; t < n_tight; ++t) {
        const auto ti = static_cast<std::ptrdiff_t>(t);
        o[ti * so] += a[ti * sa] * b[ti * sb];
      }
    } else {
      for (std::size_t t = 0; t < n_tight; ++t) {
        double p = 1.0;
        for (std::size_t k = 0; k < n_ops; ++k) p *= base[k][off[k] + static_cast<std::ptrdiff_t>(t) * st[k]];
        o[static_cast<std::ptrdiff_t>(t) * so] += p;
      }
    }

    std::size_t i = order.size();
    bool done = true;
    while (i-- > 0) {
      const std::size_t l = order[i];
      if (++idx[i] < nest.extent[l]) {
        for (std::size_t k = 0; k < n_ops; ++k) off[k] += nest.stride[k][l];
        o_off += out_stride[l];
        done = false;
        break;
      }
      idx[i] = 0;
      const auto back = static_cast<std::ptrdiff_t>(nest.extent[l] - 1);
      for (std::size_t k = 0; k < n_ops; ++k) off[k] -= nest.stride[k][l] * back;
      o_off -= out_stride[l] * back;
    }
    if (done) break;
  }
  return out;
}

}  // namespace

Tensor expand(std::string_view expression, const Tensor& input, const std::map<char, std::size_t>& new_extents) {
  const auto arrow = expression.find("->");
  if (arrow == std::string_view::npos) throw ShapeError("expand expression is missing '->'");
  const std::string in(expression.substr(0, arrow));
  const std::string out(expression.substr(arrow + 2));
  if (in.size() != input.rank())
    throw ShapeError("expand: subscript '" + in + "' does not match rank of " + shape_to_string(input.shape()));

  Shape out_shape;
  std::vector<std::size_t> src_stride(out.size(), 0);
  std::vector<std::size_t> in_stride(in.size(), 1);
  for (std::size_t a = in.size(); a-- > 1;) in_stride[a - 1] = in_stride[a] * input.dim(a);
  for (std::size_t a = 0; a < out.size(); ++a) {
    const char c = out[a];
    const auto pos = in.find(c);
    if (pos != std::string::npos) {
      out_shape.push_back(input.dim(pos));
      src_stride[a] = in_stride[pos];
    } else {
      auto it = new_extents.find(c);
      if (it == new_extents.end()) throw ShapeError("expand: no extent given for new index " + letter_name(c));
      out_shape.push_back(it->second);
    }
  }
  for (char c : in)
    if (out.find(c) == std::string::npos) throw ShapeError("expand: index " + letter_name(c) + " would be dropped");

  Tensor result(out_shape);
  auto dst = result.data();
  auto src = input.data();
  if (out.empty()) {
    dst[0] = src[0];
    return result;
  }
  const std::size_t n = out.size();
  const std::size_t inner = out_shape[n - 1];
  const std::size_t si = src_stride[n - 1];
  std::vector<std::size_t> idx(n - 1, 0);
  std::size_t src_off = 0;
  double* d = dst.data();
  while (true) {
    const double* s0 = src.data() + src_off;
    if (si == 0)
      std::fill_n(d, inner, *s0);
    else
      for (std::size_t t = 0; t < inner; ++t) d[t] = s0[t * si];
    d += inner;
    std::size_t a = n - 1;
    bool done = true;
    while (a-- > 0) {
      if (++idx[a] < out_shape[a]) {
        src_off += src_stride[a];
        done = false;
        break;
      }
      idx[a] = 0;
      src_off -= src_stride[a] * (out_shape[a] - 1);
    }
    if (done) break;
  }
  return result;
}

}  // namespace tnfn
