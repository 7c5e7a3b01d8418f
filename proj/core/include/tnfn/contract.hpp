#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tnfn/tensor.hpp"

namespace tnfn {

/// Parsed einsum-style expression such as "bdhpq,edkpq->bek".
///
/// Every output letter must occur in at least one operand and at most once in
/// the output. A letter repeated within one operand selects the diagonal.
/// Letters that occur only on the input side are summed.
class ContractionSpec {
 public:
  static ContractionSpec parse(std::string_view expression);

  const std::vector<std::string>& operands() const { return operands_; }
  const std::string& output() const { return output_; }
  /// Letters in loop order: output letters first (output order), then summed
  /// letters in order of first appearance across the operands.
  const std::string& loop_letters() const { return loop_letters_; }
  std::string str() const;

  /// Resolves the extent of every letter, throwing ShapeError that names the
  /// offending letter when ranks or sizes disagree.
  std::map<char, std::size_t> bind(std::span<const Tensor* const> inputs) const;

 private:
  std::vector<std::string> operands_;
  std::string output_;
  std::string loop_letters_;
};

/// out[o] = sum over summed letters of prod_k input_k[...].
///
/// The summation order is a fixed function of the expression and the operand
/// shapes, so repeated calls give bit-identical results. Two operands without
/// diagonals go through a batched matrix product; anything else through a
/// direct loop nest.
Tensor contract(const ContractionSpec& spec, std::span<const Tensor* const> inputs);

template <class... Ts>
Tensor contract(std::string_view expression, const Ts&... inputs) {
  const Tensor* ptrs[] = {&inputs...};
  return contract(ContractionSpec::parse(expression), std::span<const Tensor* const>(ptrs));
}

/// Inserts new axes and repeats values along them, e.g. expand("be->bejk", x,
/// {{'j', 3}, {'k', 4}}). The output may also drop nothing and reorder axes.
Tensor expand(std::string_view expression, const Tensor& input, const std::map<char, std::size_t>& new_extents);

}  // namespace tnfn
