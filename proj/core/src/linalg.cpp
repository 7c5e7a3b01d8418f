#include "tnfn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tnfn {

namespace {

void require_square(const Tensor& m, const char* what) {
  if (m.rank() != 2 || m.dim(0) != m.dim(1))
    throw ShapeError(std::string(what) + " expects a square matrix, got " + shape_to_string(m.shape()));
}

}  // namespace

Tensor inverse(const Tensor& m) {
  require_square(m, "inverse");
  const std::size_t n = m.dim(0);
  // Augmented [A | I], reduced in place.
  std::vector<double> a(m.data().begin(), m.data().end());
  Tensor inv = Tensor::identity(n);
  auto b = inv.data();
  const double scale = std::max(max_abs(m), std::numeric_limits<double>::min());

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    const double p = a[pivot * n + col];
    if (std::abs(p) <= scale * 1e-14) throw SingularMatrixError("matrix is singular to working precision");
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(a[pivot * n + j], a[col * n + j]);
        std::swap(b[pivot * n + j], b[col * n + j]);
      }
    }
    const double inv_p = 1.0 / p;
    for (std::size_t j = 0; j < n; ++j) {
      a[col * n + j] *= inv_p;
      b[col * n + j] *= inv_p;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r * n + col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        a[r * n + j] -= f * a[col * n + j];
        b[r * n + j] -= f * b[col * n + j];
      }
    }
  }
  return inv;
}

std::vector<double> singular_values(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("singular_values expects rank 2");
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  // Work on columns of U = A; rotate pairs of columns until mutually orthogonal.
  std::vector<double> u(m.data().begin(), m.data().end());
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < cols; ++p) {
      for (std::size_t q = p + 1; q < cols; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
          const double up = u[i * cols + p], uq = u[i * cols + q];
          alpha += up * up;
          beta += uq * uq;
          gamma += up * uq;
        }
        if (gamma == 0.0) continue;
        off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta));
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double up = u[i * cols + p], uq = u[i * cols + q];
          u[i * cols + p] = c * up - s * uq;
          u[i * cols + q] = s * up + c * uq;
        }
      }
    }
    if (off < 1e-15) break;
  }
  std::vector<double> sv(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double norm2 = 0.0;
    for (std::size_t i = 0; i < rows; ++i) norm2 += u[i * cols + j] * u[i * cols + j];
    sv[j] = std::sqrt(norm2);
  }
  std::sort(sv.begin(), sv.end(), std::greater<>());
  if (rows < cols) sv.resize(rows);
  return sv;
}

double condition_number(const Tensor& m) {
  const auto sv = singular_values(m);
  if (sv.empty() || sv.back() <= sv.front() * 1e-300) return std::numeric_limits<double>::infinity();
  return sv.front() / sv.back();
}

Tensor orthonormalize_columns(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("orthonormalize_columns expects rank 2");
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  Tensor q = m;
  auto d = q.data();
  for (std::size_t j = 0; j < cols; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        double dot = 0.0;
        for (std::size_t i = 0; i < rows; ++i) dot += d[i * cols + k] * d[i * cols + j];
        for (std::size_t i = 0; i < rows; ++i) d[i * cols + j] -= dot * d[i * cols + k];
      }
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < rows; ++i) norm += d[i * cols + j] * d[i * cols + j];
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw SingularMatrixError("columns are linearly dependent");
    for (std::size_t i = 0; i < rows; ++i) d[i * cols + j] /= norm;
  }
  return q;
}

Tensor random_orthogonal(Rng& rng, std::size_t n) {
  while (true) {
    Tensor g = gaussian_tensor(rng, {n, n});
    try {
      return orthonormalize_columns(g);
    } catch (const SingularMatrixError&) {
      // measure-zero event; draw again
    }
  }
}

}  // namespace tnfn
