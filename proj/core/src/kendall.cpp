#include "tnfn/kendall.hpp"

#include <cmath>
#include <stdexcept>

namespace tnfn {

double kendall_tau(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("kendall_tau: length mismatch");
  if (pred.size() < 2) throw std::invalid_argument("kendall_tau: need at least two points");
  long long concordant = 0, discordant = 0, tied_pred = 0, tied_truth = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = i + 1; j < pred.size(); ++j) {
      const double a = pred[i] - pred[j];
      const double b = truth[i] - truth[j];
      if (std::isnan(a) || std::isnan(b)) throw std::invalid_argument("kendall_tau: NaN input");
      if (a == 0.0) ++tied_pred;
      if (b == 0.0) ++tied_truth;
      if (a == 0.0 || b == 0.0) continue;
      if ((a > 0) == (b > 0))
        ++concordant;
      else
        ++discordant;
    }
  }
  const long long pairs = static_cast<long long>(pred.size() * (pred.size() - 1) / 2);
  if (tied_pred == pairs || tied_truth == pairs)
    throw std::invalid_argument("kendall_tau: undefined for a constant input");
  const double denom =
      std::sqrt(static_cast<double>(pairs - tied_pred) * static_cast<double>(pairs - tied_truth));
  return static_cast<double>(concordant - discordant) / denom;
}

}  // namespace tnfn
