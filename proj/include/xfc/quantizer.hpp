#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "xfc/error.hpp"
#include "xfc/field.hpp"

namespace xfc {

using Code = std::int64_t;

// Largest admissible |code|.
inline constexpr double kCodeLimit = 4611686018427387904.0; // 2^62

// Prequantized field: codes on the lattice of multiples of 2*eb_abs.
struct PrequantField {
  Dims dims;
  Dtype dtype = Dtype::f32;
  double eb_abs = 0;
  std::vector<Code> codes;
};

// Lattice point of a code, rounded to the source precision.
inline double lattice_value(Code q, double eb_abs, Dtype dtype) {
  const double v = static_cast<double>(q) * (2.0 * eb_abs);
  return dtype == Dtype::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

// Worst-case rounding introduced when a lattice point is computed in double
// and stored at the source precision, with a factor four of slack. Depends on
// the field's largest magnitude only through its power-of-two bucket, so a
// decompressed field usually gets the same lattice as its original.
inline double precision_headroom(const Field& field) {
  double peak = 0.0;
  for (double v : field.data) peak = std::max(peak, std::fabs(v));
  if (peak == 0.0) return 0.0;
  int e = 0;
  std::frexp(peak, &e);  // peak < 2^e
  return std::ldexp(1.0, e - (field.dtype == Dtype::f32 ? 23 : 51));
}

// Half-step of the lattice used for a field under a user bound. Reconstruction
// error is at most half-step + source rounding, which the headroom keeps
// within eb_abs.
inline double lattice_half_step(const Field& field, double eb_abs) {
  const double h = eb_abs - precision_headroom(field);
  if (!(h >= 0.5 * eb_abs))
    throw PrecisionError("field '" + field.name + "': error bound too small for value range at " +
                         to_string(field.dtype) + " precision");
  return h;
}

// q = round(v / (2 * half_step)), verified against `bound` after rounding the
// lattice value to the source precision. Double rounding in the division can
// land one step off near a lattice midpoint; the neighbors are tried then.
inline Code prequantize_value(double v, double half_step, Dtype dtype, double bound) {
  const double scaled = v / (2.0 * half_step);
  if (!(std::fabs(scaled) < kCodeLimit))
    throw PrecisionError("error bound too small for value range");
  const Code q = static_cast<Code>(round_half_away(scaled));
  if (std::fabs(v - lattice_value(q, half_step, dtype)) <= bound) return q;
  for (Code alt : {q - 1, q + 1})
    if (std::fabs(v - lattice_value(alt, half_step, dtype)) <= bound) return alt;
  throw PrecisionError("error bound too small for value range (value " + std::to_string(v) +
                       " not representable within bound)");
}

inline Code prequantize_value(double v, double eb_abs, Dtype dtype) {
  return prequantize_value(v, eb_abs, dtype, eb_abs);
}

// Prequantizes on the lattice of step 2*half_step. `bound` is the error each
// reconstructed value must respect; it defaults to the half-step itself.
inline PrequantField prequantize(const Field& field, double half_step, double bound = 0.0) {
  if (!(half_step > 0) || !std::isfinite(half_step))
    throw ArgumentError("absolute error bound must be positive and finite");
  if (bound <= 0.0) bound = half_step;
  PrequantField out{field.dims, field.dtype, half_step, std::vector<Code>(field.size())};
  const auto n = static_cast<std::ptrdiff_t>(field.size());
  const double* src = field.data.data();
  Code* dst = out.codes.data();
  const Dtype dtype = field.dtype;
  bool failed = false;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      dst[i] = prequantize_value(src[i], half_step, dtype, bound);
    } catch (const PrecisionError&) {
#pragma omp atomic write
      failed = true;
    }
  }
  if (failed)
    throw PrecisionError("field '" + field.name + "': error bound too small for value range");
  return out;
}

inline Field dequantize(const PrequantField& q, std::string name = {}) {
  Field f{std::move(name), q.dims, q.dtype, std::vector<double>(q.codes.size())};
  const auto n = static_cast<std::ptrdiff_t>(q.codes.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) f.data[i] = lattice_value(q.codes[i], q.eb_abs, q.dtype);
  return f;
}

// Residual arithmetic is modulo 2^64 so reconstruct is the exact inverse of
// postquant_delta for every pair of codes.
inline Code postquant_delta(Code q_actual, Code q_pred) {
  return static_cast<Code>(static_cast<std::uint64_t>(q_actual) - static_cast<std::uint64_t>(q_pred));
}

inline Code reconstruct(Code q_pred, Code delta) {
  return static_cast<Code>(static_cast<std::uint64_t>(q_pred) + static_cast<std::uint64_t>(delta));
}

} // namespace xfc
