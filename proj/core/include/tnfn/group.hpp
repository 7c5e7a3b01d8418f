#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tnfn/block.hpp"
#include "tnfn/tensor.hpp"

namespace tnfn {

/// Bijection of [0, n) stored as its forward index map.
///
/// The associated matrix P has P[map[j], j] = 1, so for a row vector x,
/// (x P)_j = x_{map[j]} and (P^{-1} W)_{i,:} = W_{map[i],:}.
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<std::size_t> map);
  static Permutation identity(std::size_t n);

  std::size_t size() const { return map_.size(); }
  std::size_t operator()(std::size_t i) const { return map_.at(i); }
  const std::vector<std::size_t>& map() const { return map_; }

  Permutation inverse() const;
  /// (this o other)(i) = this(other(i)); matrix identity P_{this o other} = P_this P_other.
  Permutation compose(const Permutation& other) const;
  Tensor matrix() const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<std::size_t> map_;
};

/// g = (tau, (M_i), (N_i), P_{pi_O}, P_{pi_A}).
struct GroupElement {
  Permutation head_perm;           // tau over heads
  std::vector<Tensor> query_key;   // M_i, key x key
  std::vector<Tensor> value_output;  // N_i, value x value
  Permutation model_perm;          // pi_O over model width
  Permutation hidden_perm;         // pi_A over MLP hidden width
};

class GroupSamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Condition-number threshold for sampled M_i / N_i.
inline constexpr double kInvertibilityGate = 1e4;

GroupElement identity_element(const BlockDims& dims);

/// Uniform permutations and entries of M_i, N_i uniform in [lo, hi), each
/// matrix redrawn until its condition number is below the gate (at most 100
/// redraws, then GroupSamplingError).
GroupElement sample_group_element(std::uint64_t seed, const BlockDims& dims, double lo, double hi);

/// Right action gU:
///   Q_i <- Q_{tau(i)} M_{tau(i)}^T          K_i <- K_{tau(i)} M_{tau(i)}^{-1}
///   V_i <- V_{tau(i)} N_{tau(i)}            O_i <- N_{tau(i)}^{-1} O_{tau(i)} P_O
///   Wa  <- P_O^{-1} Wa P_A    Wb <- P_A^{-1} Wb    ba <- ba P_A    bb <- bb
BlockWeights act(const GroupElement& g, const BlockWeights& weights);

/// Product satisfying act(second, act(first, U)) == act(compose(first, second), U):
///   tau = tau1 o tau2, pi = pi1 o pi2,
///   M_j = M2_{tau1^{-1}(j)} M1_j,   N_j = N1_j N2_{tau1^{-1}(j)}.
GroupElement compose(const GroupElement& first, const GroupElement& second);

/// Largest condition number over the M_i and N_i of g.
double max_condition(const GroupElement& g);

/// Head-wise products Wq Wk^T and Wv Wo, each model x model.
struct DerivedTerms {
  std::vector<Tensor> query_key;
  std::vector<Tensor> value_output;
};

DerivedTerms derived_terms(const BlockWeights& weights);

/// Q diag(1, X) Q^T with Q orthonormal, first column 1/sqrt(D), and X a random
/// orthogonal (D-1) x (D-1) matrix: orthogonal with unit row and column sums.
Tensor build_doubly_stochastic_orthogonal(std::uint64_t seed, std::size_t dim);

}  // namespace tnfn
