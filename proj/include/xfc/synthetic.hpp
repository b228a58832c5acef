#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "xfc/field.hpp"

namespace xfc::synthetic {

// splitmix64; fixed output sequence on every platform, unlike the standard
// library distributions.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
  std::uint64_t state_;
};

struct NoiseSpec {
  std::size_t modes = 24;
  double min_freq = 0.01;  // cycles per sample
  double max_freq = 0.1;
  double slope = 1.0;      // amplitude ~ |f|^-slope
  std::uint64_t seed = 1;
};

// Band-limited random field: a sum of plane waves with random wave vectors
// in the [min_freq, max_freq] shell, normalized to unit peak magnitude.
inline std::vector<double> band_limited_noise(const Dims& dims, const NoiseSpec& spec) {
  check_dims(dims);
  Rng rng(spec.seed);
  const auto d = as_3d(dims);
  struct Wave {
    double kz, ky, kx, phase, amp;
  };
  std::vector<Wave> waves;
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t m = 0; m < spec.modes; ++m) {
    double v[3];
    double norm = 0;
    do {
      norm = 0;
      for (double& c : v) {
        c = rng.uniform(-1.0, 1.0);
        norm += c * c;
      }
    } while (norm < 1e-6 || norm > 1.0);
    norm = std::sqrt(norm);
    const double f = rng.uniform(spec.min_freq, spec.max_freq);
    if (dims.size() == 2) v[0] = 0;
    Wave w{two_pi * f * v[0] / norm, two_pi * f * v[1] / norm, two_pi * f * v[2] / norm,
           rng.uniform(0.0, two_pi), std::pow(f / spec.max_freq, -spec.slope)};
    waves.push_back(w);
  }
  std::vector<double> out(d[0] * d[1] * d[2], 0.0);
  std::size_t idx = 0;
  for (std::size_t z = 0; z < d[0]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[2]; ++x, ++idx) {
        double s = 0;
        for (const auto& w : waves) s += w.amp * std::sin(w.kz * z + w.ky * y + w.kx * x + w.phase);
        out[idx] = s;
      }
  double peak = 0;
  for (double v : out) peak = std::max(peak, std::fabs(v));
  if (peak > 0)
    for (double& v : out) v /= peak;
  return out;
}

struct CrossFieldDataset {
  Field anchor_a;  // wide-band component
  Field anchor_b;  // mid-band component
  Field target;
};

// Two anchors and a target that depends on them nonlinearly:
//   target = a + 0.6 b + 0.3 b^2 + 0.05 n
// with a wide-band, b mid-band and n smooth. f32 precision.
inline CrossFieldDataset make_crossfield_dataset(const Dims& dims, std::uint64_t seed = 2024) {
  auto a = band_limited_noise(dims, {48, 0.05, 0.3, 0.5, seed * 3 + 1});
  auto b = band_limited_noise(dims, {32, 0.01, 0.08, 0.5, seed * 3 + 2});
  auto n = band_limited_noise(dims, {16, 0.005, 0.03, 1.0, seed * 3 + 3});
  auto to_f32 = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  std::vector<double> t(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = to_f32(a[i]);
    b[i] = to_f32(b[i]);
    t[i] = to_f32(a[i] + 0.6 * b[i] + 0.3 * b[i] * b[i] + 0.05 * n[i]);
  }
  return {Field{"A", dims, Dtype::f32, std::move(a)}, Field{"B", dims, Dtype::f32, std::move(b)},
          Field{"T", dims, Dtype::f32, std::move(t)}};
}

} // namespace xfc::synthetic
