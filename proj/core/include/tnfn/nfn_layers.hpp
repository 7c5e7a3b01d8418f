#pragma once

#include <map>
#include <string>
#include <vector>

#include "tnfn/autodiff.hpp"
#include "tnfn/params.hpp"
#include "tnfn/rng.hpp"
#include "tnfn/weight_batch.hpp"

namespace tnfn {

/// Parameters of the equivariant layer U^d -> U^e at model width D.
///
/// Blocks (for the output component named first):
///   Q_block, K_block, V_block                 e x d x D x D
///   O_rowsum, O_pointwise                     e x d
///   A_from_{QK, VO_1, VO_2, A_1..A_4, B_1, B_2, bA_1, bA_2, bB}, A_bias
///   bA_from_{QK, VO, A_1, A_2, B_1, B_2, bA_1, bA_2, bB}, bA_bias
///   B_from_{QK, VO, A_1, A_2, B_1, B_2, bA_1, bA_2, bB}, B_bias
///   bB_from_{QK, VO, A, B, bA, bB}, bB_bias
struct EquivariantParams {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t model = 1;
  ParamSet set;

  static EquivariantParams zeros(std::size_t in_channels, std::size_t out_channels, std::size_t model);
};

/// Parameters of the invariant layer U^d -> R^{e x D'}: I_QK, I_VO, I_A, I_B,
/// I_bA, I_bB, I_bias.
struct InvariantParams {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t model = 1;
  std::size_t features = 1;
  ParamSet set;

  static InvariantParams zeros(std::size_t in_channels, std::size_t out_channels, std::size_t model,
                               std::size_t features);
};

/// Gaussian weights with std 1/sqrt(fan-in of the block's contraction); biases zero.
/// With nonnegative_input (an invariant layer fed by ReLU outputs) terms that
/// pool over n entries without a parameter index get a further 1/sqrt(n).
void init_params(Rng& rng, EquivariantParams& p, const BlockDims& dims);
void init_params(Rng& rng, InvariantParams& p, const BlockDims& dims, bool nonnegative_input = false);

/// e d (2 D^3 + 12 D^2 + 15 D + 12) + 2 e + 2 e D.
std::size_t equivariant_param_count(std::size_t in_channels, std::size_t out_channels, std::size_t model);
/// e d D' (D^2 + 3 D + 2) + e D'.
std::size_t invariant_param_count(std::size_t in_channels, std::size_t out_channels, std::size_t model,
                                  std::size_t features);

/// Tape versions; vars must hold every block of p (see bind_params).
WeightVars equivariant_forward(const EquivariantParams& p, const VarMap& vars, const WeightVars& u,
                               const std::string& prefix = "");
/// Returns [b, e, D'].
ad::Var invariant_forward(const InvariantParams& p, const VarMap& vars, const WeightVars& u,
                          const std::string& prefix = "");
/// ReLU on the MLP weights and biases only. break_placement also rectifies the
/// query factors, which is not equivariant (negative control).
WeightVars relu_equivariant(const WeightVars& u, bool break_placement = false);

MultiChannelWeights equivariant_forward(const EquivariantParams& p, const MultiChannelWeights& u);
/// e x D'.
Tensor invariant_forward(const InvariantParams& p, const MultiChannelWeights& u);
MultiChannelWeights relu_equivariant(const MultiChannelWeights& u, bool break_placement = false);

}  // namespace tnfn
