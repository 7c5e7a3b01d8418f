#pragma once

#include <stdexcept>
#include <vector>

#include "tnfn/rng.hpp"
#include "tnfn/tensor.hpp"

namespace tnfn {

class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gauss-Jordan elimination with partial pivoting.
Tensor inverse(const Tensor& m);

/// Singular values in descending order (one-sided Jacobi).
std::vector<double> singular_values(const Tensor& m);

/// sigma_max / sigma_min; +inf for a numerically singular matrix.
double condition_number(const Tensor& m);

/// Orthonormalizes the columns of m (modified Gram-Schmidt, two passes).
Tensor orthonormalize_columns(const Tensor& m);

/// Haar-distributed orthogonal n x n matrix (QR of a Gaussian matrix with sign fix).
Tensor random_orthogonal(Rng& rng, std::size_t n);

}  // namespace tnfn
