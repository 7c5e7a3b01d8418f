#pragma once

#include "tnfn/nfn_layers.hpp"

namespace tnfn::testing {

// Entry-by-entry loop evaluation of the equivariant and invariant layers,
// sharing only parameter names with the library.
MultiChannelWeights naive_equivariant(const EquivariantParams& p, const MultiChannelWeights& u);
// [e, D'].
Tensor naive_invariant(const InvariantParams& p, const MultiChannelWeights& u);

}  // namespace tnfn::testing
