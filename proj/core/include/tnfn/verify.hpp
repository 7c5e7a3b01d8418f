#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tnfn/block.hpp"

namespace tnfn {

struct VerifyOptions {
  std::uint64_t seed = 0;
  BlockDims dims{2, 8, 4, 4, 8};
  std::size_t instances = 100;
  /// Each r samples group matrices with entries in [-r, r].
  std::vector<double> scale_ranges{1.0, 100.0};
  /// Channels d -> e of the equivariant layer and D' of the invariant layer.
  std::size_t in_channels = 2;
  std::size_t out_channels = 2;
  std::size_t features = 3;
  bool break_relu_placement = false;

  /// Bound for ranges r <= 1, and for wider ranges.
  double tol_unit = 1e-9;
  double tol_wide = 1e-6;
  double tol_products = 1e-10;
  double tol_layernorm = 1e-10;
  std::size_t layernorm_rows = 1000;
  double witness_threshold = 1e-6;
  std::size_t witness_instances = 50;
  std::size_t witness_draws = 1000;
  /// Smallest |f(gU) - f(U)| the flattened-MLP control must exhibit.
  double mlp_gap = 1e-3;

  void validate() const;
};

struct PropertyResult {
  std::string name;
  std::size_t instances = 0;
  /// Worst measured value: an error for upper bounds, a separation for lower bounds.
  double max_error = 0.0;
  double tolerance = 0.0;
  /// Upper bounds pass when max_error < tolerance; lower bounds (witness
  /// searches, negative controls) pass when max_error > tolerance. For the
  /// witness search max_error is the weakest instance's best witness.
  bool lower_bound = false;
  bool passed = false;
  double seconds = 0.0;
};

struct VerifyReport {
  std::vector<PropertyResult> properties;

  bool passed() const;
  const PropertyResult& at(const std::string& name) const;
  nlohmann::json to_json() const;
};

inline constexpr const char* kVerifySchema = "tnfn-verify/1";

VerifyReport run_verify(const VerifyOptions& opts);

}  // namespace tnfn
