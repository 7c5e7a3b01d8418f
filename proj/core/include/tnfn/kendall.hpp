#pragma once

#include <span>

namespace tnfn {

/// Kendall rank correlation, tau-b (tie-corrected), by pairwise enumeration.
/// Throws std::invalid_argument for length mismatch, fewer than two points,
/// or when either side is constant (tau undefined).
double kendall_tau(std::span<const double> pred, std::span<const double> truth);

}  // namespace tnfn
