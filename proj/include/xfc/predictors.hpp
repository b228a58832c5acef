#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "xfc/error.hpp"
#include "xfc/field.hpp"
#include "xfc/linalg.hpp"
#include "xfc/quantizer.hpp"

namespace xfc {

// Affine fusion of [lorenzo, axis0, ..., axis(n-1)] predictions.
struct HybridWeights {
  std::vector<double> weights;
  double bias = 0.0;

  static HybridWeights lorenzo_only(std::size_t ndim) {
    HybridWeights w;
    w.weights.assign(ndim + 1, 0.0);
    w.weights[0] = 1.0;
    return w;
  }

  // Weights rescaled to sum to one in absolute value; reporting only.
  std::vector<double> shares() const {
    double total = 0.0;
    for (double w : weights) total += std::fabs(w);
    std::vector<double> out(weights.size(), 0.0);
    if (total > 0)
      for (std::size_t i = 0; i < weights.size(); ++i) out[i] = std::fabs(weights[i]) / total;
    return out;
  }
};

struct DeltaField {
  Dims dims;
  std::vector<Code> deltas;
};

// Index arithmetic over a field padded to three axes ([1, Y, X] for 2D).
struct Grid {
  std::size_t nz, ny, nx;
  std::size_t ndim;

  explicit Grid(const Dims& dims) : ndim(dims.size()) {
    check_dims(dims);
    auto d = as_3d(dims);
    nz = d[0];
    ny = d[1];
    nx = d[2];
  }

  std::size_t size() const { return nz * ny * nx; }
  std::size_t sz() const { return ny * nx; }
  std::size_t sy() const { return nx; }

  // Field axis -> padded axis.
  std::size_t padded_axis(std::size_t axis) const { return axis + (3 - ndim); }
  std::size_t step(std::size_t axis) const {
    switch (padded_axis(axis)) {
    case 0: return sz();
    case 1: return sy();
    default: return 1;
    }
  }
};

// 1-layer Lorenzo on the code lattice. Evaluated as the 3D stencil; on a
// padded 2D grid the z-1 terms are ghost zeros and it reduces to the 2D form.
inline Code lorenzo_at(const Code* q, const Grid& g, std::size_t z, std::size_t y, std::size_t x) {
  const std::size_t idx = (z * g.ny + y) * g.nx + x;
  const std::size_t sz = g.sz(), sy = g.sy();
  const bool hz = z > 0, hy = y > 0, hx = x > 0;
  const Code c100 = hz ? q[idx - sz] : 0;
  const Code c010 = hy ? q[idx - sy] : 0;
  const Code c001 = hx ? q[idx - 1] : 0;
  const Code c110 = hz && hy ? q[idx - sz - sy] : 0;
  const Code c101 = hz && hx ? q[idx - sz - 1] : 0;
  const Code c011 = hy && hx ? q[idx - sy - 1] : 0;
  const Code c111 = hz && hy && hx ? q[idx - sz - sy - 1] : 0;
  // Two's-complement wraparound keeps the stencil total for any codes; the
  // residual replay inverts it modulo 2^64.
  using U = std::uint64_t;
  return static_cast<Code>(U(c100) + U(c010) + U(c001) - U(c110) - U(c101) - U(c011) + U(c111));
}

inline std::array<std::size_t, 3> padded_coord(const Grid& g, std::span<const std::size_t> idx) {
  if (idx.size() != g.ndim) throw ArgumentError("position rank does not match field rank");
  if (g.ndim == 2) return {0, idx[0], idx[1]};
  return {idx[0], idx[1], idx[2]};
}

inline Code lorenzo_predict(std::span<const Code> q, const Dims& dims, std::span<const std::size_t> idx) {
  Grid g(dims);
  auto [z, y, x] = padded_coord(g, idx);
  if (z >= g.nz || y >= g.ny || x >= g.nx) throw ArgumentError("position out of bounds");
  return lorenzo_at(q.data(), g, z, y, x);
}

inline Code crossfield_at(const Code* q, const Grid& g, std::size_t linear,
                          const std::array<std::size_t, 3>& coord, std::size_t axis, Code d_quant) {
  const std::size_t pa = g.padded_axis(axis);
  const Code prev = coord[pa] > 0 ? q[linear - g.step(axis)] : 0;
  return prev + d_quant;
}

// q(idx - e_axis) + d_quant, with a ghost zero before the first slice.
inline Code crossfield_predict(std::span<const Code> q, const Dims& dims, Code d_quant,
                               std::span<const std::size_t> idx, std::size_t axis) {
  Grid g(dims);
  if (axis >= g.ndim) throw ArgumentError("axis out of range");
  auto c = padded_coord(g, idx);
  if (c[0] >= g.nz || c[1] >= g.ny || c[2] >= g.nx) throw ArgumentError("position out of bounds");
  return crossfield_at(q.data(), g, (c[0] * g.ny + c[1]) * g.nx + c[2], c, axis, d_quant);
}

// Shared by compression and decompression so both sides evaluate the fusion
// with the same operation order.
inline Code hybrid_predict(std::span<const Code> preds, const HybridWeights& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.weights.size(); ++i) acc += w.weights[i] * static_cast<double>(preds[i]);
  acc += w.bias;
  acc = round_half_away(acc);
  if (!(acc < kCodeLimit)) return static_cast<Code>(kCodeLimit);
  if (!(acc > -kCodeLimit)) return -static_cast<Code>(kCodeLimit);
  return static_cast<Code>(acc);
}

// Real-valued cross-field differences (original units) to code units.
inline std::vector<Code> quantize_diff(std::span<const float> diff, double eb_abs) {
  std::vector<Code> out(diff.size());
  const double inv = 1.0 / (2.0 * eb_abs);
  const auto n = static_cast<std::ptrdiff_t>(diff.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double s = round_half_away(static_cast<double>(diff[i]) * inv);
    s = std::clamp(s, -kCodeLimit / 4, kCodeLimit / 4);
    out[i] = static_cast<Code>(s);
  }
  return out;
}

// Row-major sample matrix: one row of predictor outputs per sampled position.
struct PredictorSamples {
  std::size_t cols = 0;
  std::vector<double> x;
  std::vector<double> y;

  std::size_t rows() const { return y.size(); }
};

// Closed-form least squares of y on [X | 1] with a small ridge term; the bias
// is the coefficient of the constant column.
inline HybridWeights fit_hybrid_weights(const PredictorSamples& s, double ridge = 1e-8) {
  const std::size_t k = s.cols;
  if (k == 0) throw FitError("no predictors to fit");
  if (s.x.size() != s.rows() * k) throw FitError("sample matrix shape mismatch");
  if (s.rows() < k + 1) throw FitError("need at least " + std::to_string(k + 1) + " samples, got " +
                                       std::to_string(s.rows()));
  const std::size_t p = k + 1;
  linalg::SymMatrix gram(p);
  std::vector<double> rhs(p, 0.0);
  std::vector<double> row(p, 1.0);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    for (std::size_t c = 0; c < k; ++c) row[c] = s.x[r * k + c];
    const double yv = s.y[r];
    for (std::size_t i = 0; i < p; ++i) {
      rhs[i] += row[i] * yv;
      for (std::size_t j = i; j < p; ++j) gram(i, j) += row[i] * row[j];
    }
  }
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < i; ++j) gram(i, j) = gram(j, i);
  auto sol = linalg::solve_psd(gram, rhs, ridge);
  for (double v : sol)
    if (!std::isfinite(v)) throw FitError("hybrid fit produced non-finite weights");
  HybridWeights w;
  w.weights.assign(sol.begin(), sol.begin() + static_cast<std::ptrdiff_t>(k));
  w.bias = sol[k];
  return w;
}

inline constexpr std::size_t kMaxFitSamples = std::size_t{1} << 24;

// Gathers the n+1 predictions and true codes. Positions on a leading
// boundary plane are skipped: there the backward differences degenerate to
// raw values and would dominate the squared loss. Sampling strides uniformly
// over the interior when it exceeds max_samples points.
inline PredictorSamples collect_predictor_samples(const PrequantField& q,
                                                  const std::vector<std::vector<Code>>& d_quant,
                                                  std::size_t max_samples = kMaxFitSamples) {
  Grid g(q.dims);
  const std::size_t n = g.ndim;
  if (d_quant.size() != n) throw ArgumentError("need one quantized diff array per axis");
  const std::size_t z0 = g.nz > 1 ? 1 : 0, y0 = g.ny > 1 ? 1 : 0, x0 = g.nx > 1 ? 1 : 0;
  const std::size_t interior = (g.nz - z0) * (g.ny - y0) * (g.nx - x0);
  const std::size_t stride = interior <= max_samples ? 1 : (interior + max_samples - 1) / max_samples;
  PredictorSamples s;
  s.cols = n + 1;
  s.x.reserve((interior / stride + 1) * s.cols);
  s.y.reserve(interior / stride + 1);
  std::size_t counter = 0;
  for (std::size_t z = z0; z < g.nz; ++z)
    for (std::size_t y = y0; y < g.ny; ++y)
      for (std::size_t x = x0; x < g.nx; ++x) {
        if (counter++ % stride != 0) continue;
        const std::size_t idx = (z * g.ny + y) * g.nx + x;
        const std::array<std::size_t, 3> c{z, y, x};
        s.x.push_back(static_cast<double>(lorenzo_at(q.codes.data(), g, z, y, x)));
        for (std::size_t a = 0; a < n; ++a)
          s.x.push_back(static_cast<double>(crossfield_at(q.codes.data(), g, idx, c, a, d_quant[a][idx])));
        s.y.push_back(static_cast<double>(q.codes[idx]));
      }
  return s;
}

// Compression-side prediction. Every position reads only true codes, so the
// loop has no carried dependency and runs in parallel.
inline DeltaField predict_field_lorenzo(const PrequantField& q) {
  Grid g(q.dims);
  DeltaField out{q.dims, std::vector<Code>(g.size())};
  const Code* codes = q.codes.data();
  const auto planes = static_cast<std::ptrdiff_t>(g.nz * g.ny);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t zy = 0; zy < planes; ++zy) {
    const std::size_t z = static_cast<std::size_t>(zy) / g.ny, y = static_cast<std::size_t>(zy) % g.ny;
    for (std::size_t x = 0; x < g.nx; ++x) {
      const std::size_t idx = static_cast<std::size_t>(zy) * g.nx + x;
      out.deltas[idx] = postquant_delta(codes[idx], lorenzo_at(codes, g, z, y, x));
    }
  }
  return out;
}

inline DeltaField predict_field_for_compression(const PrequantField& q,
                                                const std::vector<std::vector<Code>>& d_quant,
                                                const HybridWeights& w) {
  Grid g(q.dims);
  const std::size_t n = g.ndim;
  if (d_quant.size() != n) throw ArgumentError("need one quantized diff array per axis");
  if (w.weights.size() != n + 1) throw ArgumentError("hybrid weight count must be ndim + 1");
  DeltaField out{q.dims, std::vector<Code>(g.size())};
  const Code* codes = q.codes.data();
  const auto planes = static_cast<std::ptrdiff_t>(g.nz * g.ny);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t zy = 0; zy < planes; ++zy) {
    const std::size_t z = static_cast<std::size_t>(zy) / g.ny, y = static_cast<std::size_t>(zy) % g.ny;
    std::array<Code, 4> preds{};
    for (std::size_t x = 0; x < g.nx; ++x) {
      const std::size_t idx = static_cast<std::size_t>(zy) * g.nx + x;
      const std::array<std::size_t, 3> c{z, y, x};
      preds[0] = lorenzo_at(codes, g, z, y, x);
      for (std::size_t a = 0; a < n; ++a) preds[a + 1] = crossfield_at(codes, g, idx, c, a, d_quant[a][idx]);
      out.deltas[idx] = postquant_delta(codes[idx], hybrid_predict({preds.data(), n + 1}, w));
    }
  }
  return out;
}

// Decompression-side replay: strictly sequential in row-major order since each
// prediction reads codes reconstructed earlier in the scan.
inline std::vector<Code> reconstruct_codes_lorenzo(const DeltaField& d) {
  Grid g(d.dims);
  std::vector<Code> q(g.size());
  std::size_t idx = 0;
  for (std::size_t z = 0; z < g.nz; ++z)
    for (std::size_t y = 0; y < g.ny; ++y)
      for (std::size_t x = 0; x < g.nx; ++x, ++idx)
        q[idx] = reconstruct(lorenzo_at(q.data(), g, z, y, x), d.deltas[idx]);
  return q;
}

inline std::vector<Code> reconstruct_codes_hybrid(const DeltaField& d,
                                                  const std::vector<std::vector<Code>>& d_quant,
                                                  const HybridWeights& w) {
  Grid g(d.dims);
  const std::size_t n = g.ndim;
  if (d_quant.size() != n) throw ArgumentError("need one quantized diff array per axis");
  if (w.weights.size() != n + 1) throw ArgumentError("hybrid weight count must be ndim + 1");
  std::vector<Code> q(g.size());
  std::array<Code, 4> preds{};
  std::size_t idx = 0;
  for (std::size_t z = 0; z < g.nz; ++z)
    for (std::size_t y = 0; y < g.ny; ++y)
      for (std::size_t x = 0; x < g.nx; ++x, ++idx) {
        const std::array<std::size_t, 3> c{z, y, x};
        preds[0] = lorenzo_at(q.data(), g, z, y, x);
        for (std::size_t a = 0; a < n; ++a) preds[a + 1] = crossfield_at(q.data(), g, idx, c, a, d_quant[a][idx]);
        q[idx] = reconstruct(hybrid_predict({preds.data(), n + 1}, w), d.deltas[idx]);
      }
  return q;
}

} // namespace xfc
