#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tnfn/tensor.hpp"

namespace tnfn {

/// xoshiro256** (Blackman & Vigna) seeded through splitmix64.
///
/// The standard <random> distributions are implementation-defined, so all
/// derived draws (uniform doubles, Gaussians, permutations) are computed here
/// to keep results bit-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// 53-bit uniform double in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via the Marsaglia polar method.
  double gaussian();
  /// Uniform integer in [0, n), rejection-sampled (no modulo bias).
  std::size_t below(std::size_t n);
  /// Uniform permutation of [0, n) by Fisher-Yates.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

Tensor rng_gaussian(std::uint64_t seed, Shape shape, double stddev = 1.0);
Tensor rng_uniform(std::uint64_t seed, double lo, double hi, Shape shape);

/// Fills a tensor from an existing stream (row-major order).
Tensor gaussian_tensor(Rng& rng, Shape shape, double stddev = 1.0);
Tensor uniform_tensor(Rng& rng, Shape shape, double lo, double hi);

}  // namespace tnfn
