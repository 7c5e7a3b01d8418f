#include "tnfn/params.hpp"

#include <stdexcept>

namespace tnfn {

void ParamSet::add(std::string name, Shape shape) { add(std::move(name), Tensor(std::move(shape))); }

void ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter block " + name);
  blocks_.push_back({std::move(name), std::move(value)});
}

Tensor& ParamSet::at(const std::string& name) {
  for (auto& b : blocks_)
    if (b.name == name) return b.value;
  throw std::out_of_range("no parameter block " + name);
}

const Tensor& ParamSet::at(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b.value;
  throw std::out_of_range("no parameter block " + name);
}

bool ParamSet::contains(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return true;
  return false;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.value.size();
  return n;
}

VarMap bind_params(ad::Tape& tape, const ParamSet& set, bool requires_grad, const std::string& prefix) {
  VarMap out;
  for (const auto& b : set.blocks()) out.emplace(prefix + b.name, tape.leaf(b.value, requires_grad));
  return out;
}

const ad::Var& lookup(const VarMap& vars, const std::string& name) {
  auto it = vars.find(name);
  if (it == vars.end()) throw std::invalid_argument("parameter block " + name + " is not bound");
  return it->second;
}

}  // namespace tnfn
