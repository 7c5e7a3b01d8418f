#pragma once

#include <cstdint>
#include <span>

#include "tnfn/trainer.hpp"

namespace tnfn::testing {

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t resampled = 0;
  double max_rel_error = 0.0;
};

// Central differences on `count` randomly drawn scalar parameters of model.
// A draw whose one-sided slopes disagree (a ReLU kink inside the stencil) is
// replaced by a fresh draw. Relative error is |fd - g| / max(|fd|, |g|, floor).
GradCheckResult gradient_check(Predictor& model, std::span<const WeightSample* const> batch, LossKind loss,
                               std::size_t count, std::uint64_t seed, double step = 1e-5, double floor = 1e-6);

}  // namespace tnfn::testing
