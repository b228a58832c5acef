#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "xfc/bytes.hpp"
#include "xfc/error.hpp"

namespace xfc {

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

inline std::size_t dtype_size(Dtype t) { return t == Dtype::f32 ? 4 : 8; }

inline std::string to_string(Dtype t) { return t == Dtype::f32 ? "f32" : "f64"; }

inline Dtype parse_dtype(const std::string& s) {
  if (s == "f32") return Dtype::f32;
  if (s == "f64") return Dtype::f64;
  throw ArgumentError("unknown dtype '" + s + "' (expected f32 or f64)");
}

using Dims = std::vector<std::size_t>;

inline std::size_t element_count(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
}

// Row-major strides; last dimension is contiguous.
inline Dims strides_of(const Dims& dims) {
  Dims s(dims.size(), 1);
  for (std::size_t i = dims.size(); i-- > 1;) s[i - 1] = s[i] * dims[i];
  return s;
}

// Dims padded to three axes with leading 1s: a 2D [Y, X] field is handled
// by the kernels as [1, Y, X].
inline std::array<std::size_t, 3> as_3d(const Dims& dims) {
  if (dims.size() == 2) return {1, dims[0], dims[1]};
  return {dims[0], dims[1], dims[2]};
}

inline void check_dims(const Dims& dims) {
  if (dims.size() != 2 && dims.size() != 3)
    throw ArgumentError("fields must be 2D or 3D, got " + std::to_string(dims.size()) + " dims");
  for (auto d : dims)
    if (d == 0) throw ArgumentError("dimension extents must be positive");
}

// round-half-away-from-zero, the single rounding rule used for every
// real-to-lattice conversion.
inline double round_half_away(double x) { return std::round(x); }

// Values are held in double regardless of source precision; f32 sources are
// exactly representable so nothing is lost, and the dtype tag decides the
// precision of anything written back out.
struct Field {
  std::string name;
  Dims dims;
  Dtype dtype = Dtype::f32;
  std::vector<double> data;

  std::size_t size() const { return data.size(); }
  std::size_t ndim() const { return dims.size(); }
  std::size_t source_bytes() const { return data.size() * dtype_size(dtype); }
};

inline Field make_field(std::string name, Dims dims, Dtype dtype, std::vector<double> data) {
  check_dims(dims);
  if (element_count(dims) != data.size())
    throw ArgumentError("field '" + name + "': data length does not match dims");
  return Field{std::move(name), std::move(dims), dtype, std::move(data)};
}

inline void validate_finite(const Field& f) {
  for (std::size_t i = 0; i < f.data.size(); ++i)
    if (!std::isfinite(f.data[i]))
      throw DataError("field '" + f.name + "': non-finite value at index " + std::to_string(i));
}

inline Field decode_raw_field(std::span<const std::uint8_t> bytes, const Dims& dims, Dtype dtype,
                              std::string name = {}) {
  check_dims(dims);
  const std::size_t n = element_count(dims);
  if (bytes.size() != n * dtype_size(dtype))
    throw FormatError("raw field '" + name + "': expected " + std::to_string(n * dtype_size(dtype)) +
                      " bytes, got " + std::to_string(bytes.size()));
  std::vector<double> data(n);
  if (dtype == Dtype::f32) {
    for (std::size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, bytes.data() + 4 * i, 4);
      data[i] = v;
    }
  } else {
    std::memcpy(data.data(), bytes.data(), 8 * n);
  }
  Field f{std::move(name), dims, dtype, std::move(data)};
  validate_finite(f);
  return f;
}

inline Bytes encode_raw_field(const Field& f) {
  Bytes out(f.source_bytes());
  if (f.dtype == Dtype::f32) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      auto v = static_cast<float>(f.data[i]);
      std::memcpy(out.data() + 4 * i, &v, 4);
    }
  } else {
    std::memcpy(out.data(), f.data.data(), out.size());
  }
  return out;
}

inline Field load_raw_field(const std::filesystem::path& path, const Dims& dims, Dtype dtype,
                            std::string name = {}) {
  if (name.empty()) name = path.stem().string();
  return decode_raw_field(read_file(path), dims, dtype, std::move(name));
}

inline void store_raw_field(const std::filesystem::path& path, const Field& f) {
  write_file(path, encode_raw_field(f));
}

enum class EbMode : std::uint8_t { absolute = 0, relative = 1 };

inline std::string to_string(EbMode m) { return m == EbMode::absolute ? "abs" : "rel"; }

inline EbMode parse_eb_mode(const std::string& s) {
  if (s == "abs" || s == "absolute") return EbMode::absolute;
  if (s == "rel" || s == "relative") return EbMode::relative;
  throw ArgumentError("unknown error-bound mode '" + s + "' (expected abs or rel)");
}

struct ErrorBoundSpec {
  EbMode mode = EbMode::relative;
  double value = 1e-3;
};

inline std::pair<double, double> value_range(const Field& f) {
  if (f.data.empty()) throw ArgumentError("field '" + f.name + "' is empty");
  auto [lo, hi] = std::minmax_element(f.data.begin(), f.data.end());
  return {*lo, *hi};
}

inline double resolve_error_bound(const ErrorBoundSpec& spec, const Field& field) {
  if (!(spec.value > 0) || !std::isfinite(spec.value))
    throw ArgumentError("error bound must be a positive finite number");
  if (field.data.empty()) throw ArgumentError("field '" + field.name + "' is empty");
  if (spec.mode == EbMode::absolute) return spec.value;
  auto [lo, hi] = value_range(field);
  if (!(hi > lo))
    throw DegenerateFieldError("field '" + field.name +
                               "' has zero value range; relative error bound is undefined");
  return spec.value * (hi - lo);
}

// First-order backward difference along one axis of a real or integer array.
// The position with index 0 along the axis keeps the source value (the
// neighbor outside the domain is taken as zero).
template <class T>
std::vector<T> backward_diff(std::span<const T> values, const Dims& dims, std::size_t axis) {
  if (axis >= dims.size())
    throw ArgumentError("axis " + std::to_string(axis) + " out of range for " +
                        std::to_string(dims.size()) + "D data");
  const auto strides = strides_of(dims);
  const std::size_t step = strides[axis];
  const std::size_t extent = dims[axis];
  std::vector<T> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t coord = (i / step) % extent;
    out[i] = coord == 0 ? values[i] : static_cast<T>(values[i] - values[i - step]);
  }
  return out;
}

struct DiffField {
  std::size_t axis = 0;
  Dims dims;
  std::vector<double> data;
};

inline DiffField backward_diff(const Field& field, std::size_t axis) {
  return DiffField{axis, field.dims,
                   backward_diff<double>(std::span<const double>(field.data), field.dims, axis)};
}

// Inverse of backward_diff: cumulative sum along the axis.
inline std::vector<double> integrate_diff(const DiffField& d) {
  const auto strides = strides_of(d.dims);
  const std::size_t step = strides[d.axis];
  const std::size_t extent = d.dims[d.axis];
  std::vector<double> out(d.data);
  for (std::size_t i = 0; i < out.size(); ++i)
    if ((i / step) % extent != 0) out[i] += out[i - step];
  return out;
}

} // namespace xfc
