#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace xfc::linalg {

// Dense row-major square matrix, sized for the handful of unknowns in the
// hybrid fit.
struct SymMatrix {
  std::size_t n = 0;
  std::vector<double> a;

  explicit SymMatrix(std::size_t size = 0) : n(size), a(size * size, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return a[r * n + c]; }
  double operator()(std::size_t r, std::size_t c) const { return a[r * n + c]; }
};

struct EigenSystem {
  std::vector<double> values;   // unsorted
  std::vector<double> vectors;  // column j is the eigenvector of values[j]
};

// Cyclic Jacobi rotations. Converges quadratically; plenty for n <= 8.
inline EigenSystem symmetric_eigen(SymMatrix m, int max_sweeps = 100) {
  const std::size_t n = m.n;
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      diag += m(p, p) * m(p, p);
      for (std::size_t q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
    }
    if (off <= 1e-30 * diag || off == 0.0) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (apq == 0.0) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = m(k, p), akq = m(k, q);
          m(k, p) = c * akp - s * akq;
          m(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = m(p, k), aqk = m(q, k);
          m(p, k) = c * apk - s * aqk;
          m(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  EigenSystem out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = m(i, i);
  out.vectors = std::move(v);
  return out;
}

// Solves (A + ridge*I) x = b for symmetric positive semi-definite A, discarding
// eigen-directions with eigenvalue below rel_cutoff * max eigenvalue. On a
// rank-deficient A this yields the minimum-norm least-squares solution.
inline std::vector<double> solve_psd(const SymMatrix& a, const std::vector<double>& b, double ridge,
                                     double rel_cutoff = 1e-13) {
  const std::size_t n = a.n;
  auto es = symmetric_eigen(a);
  double lmax = 0.0;
  for (double l : es.values) lmax = std::max(lmax, l);
  std::vector<double> x(n, 0.0);
  if (lmax <= 0.0) return x;
  for (std::size_t j = 0; j < n; ++j) {
    const double l = es.values[j];
    if (l <= rel_cutoff * lmax) continue;
    double proj = 0.0;
    for (std::size_t k = 0; k < n; ++k) proj += es.vectors[k * n + j] * b[k];
    const double coef = proj / (l + ridge);
    for (std::size_t k = 0; k < n; ++k) x[k] += coef * es.vectors[k * n + j];
  }
  return x;
}

} // namespace xfc::linalg
