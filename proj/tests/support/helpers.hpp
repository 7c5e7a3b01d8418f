#pragma once

#include <cstdint>

#include "tnfn/nfn_layers.hpp"

namespace tnfn::testing {

inline MultiChannelWeights random_channels(std::uint64_t seed, const BlockDims& dims, std::size_t channels,
                                           double stddev = 1.0) {
  MultiChannelWeights u{dims, {}};
  for (std::size_t c = 0; c < channels; ++c) u.channels.push_back(random_block(mix_seed(seed, c), dims, stddev));
  return u;
}

// Every block Gaussian, biases included, so bias terms are exercised too.
template <class Params>
void fill_gaussian(Params& p, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& b : p.set.blocks())
    for (auto& v : b.value.data()) v = rng.gaussian();
}

}  // namespace tnfn::testing
