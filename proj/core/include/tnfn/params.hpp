#pragma once

#include <map>
#include <string>
#include <vector>

#include "tnfn/autodiff.hpp"

namespace tnfn {

struct ParamBlock {
  std::string name;
  Tensor value;
};

/// Ordered, named parameter tensors.
class ParamSet {
 public:
  void add(std::string name, Shape shape);
  void add(std::string name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<ParamBlock>& blocks() { return blocks_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::size_t scalar_count() const;

 private:
  std::vector<ParamBlock> blocks_;
};

using VarMap = std::map<std::string, ad::Var>;

/// Puts every block of set on the tape under prefix + name.
VarMap bind_params(ad::Tape& tape, const ParamSet& set, bool requires_grad, const std::string& prefix = "");

const ad::Var& lookup(const VarMap& vars, const std::string& name);

}  // namespace tnfn
