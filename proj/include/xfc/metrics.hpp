#pragma once

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "xfc/error.hpp"
#include "xfc/field.hpp"
#include "xfc/pipeline.hpp"

namespace xfc::metrics {

inline void require_same_shape(const Field& a, const Field& b) {
  if (a.dims != b.dims || a.size() != b.size())
    throw ArgumentError("fields '" + a.name + "' and '" + b.name + "' have different dims");
}

inline double max_abs_error(const Field& orig, const Field& recon) {
  require_same_shape(orig, recon);
  double m = 0.0;
  for (std::size_t i = 0; i < orig.size(); ++i) m = std::max(m, std::fabs(orig.data[i] - recon.data[i]));
  return m;
}

// Accumulated in double whatever the source precision.
inline double mse(const Field& orig, const Field& recon) {
  require_same_shape(orig, recon);
  double acc = 0.0;
  for (std::size_t i = 0; i < orig.size(); ++i) {
    const double e = orig.data[i] - recon.data[i];
    acc += e * e;
  }
  return orig.size() ? acc / static_cast<double>(orig.size()) : 0.0;
}

// +infinity when the reconstruction is exact.
inline double psnr(const Field& orig, const Field& recon) {
  auto [lo, hi] = value_range(orig);
  if (!(hi > lo)) throw DegenerateFieldError("PSNR undefined: field '" + orig.name + "' has zero value range");
  const double e = mse(orig, recon);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(hi - lo) - 10.0 * std::log10(e);
}

inline double compression_ratio(std::size_t original_bytes, std::size_t compressed_bytes) {
  if (compressed_bytes == 0) throw ArgumentError("compressed size must be positive");
  return static_cast<double>(original_bytes) / static_cast<double>(compressed_bytes);
}

// Average compressed bits per data point.
inline double bitrate(std::size_t compressed_bytes, std::size_t points) {
  if (points == 0) throw ArgumentError("bit-rate of an empty field");
  return 8.0 * static_cast<double>(compressed_bytes) / static_cast<double>(points);
}

struct Row {
  std::string field;
  EbMode eb_mode = EbMode::relative;
  double eb_value = 0;
  std::string config;
  double bitrate = 0;
  double psnr = 0;
  double cr = 0;
  double max_err = 0;
  double eb_abs = 0;
};

inline constexpr const char* kCsvHeader = "field,eb_mode,eb_value,config,bitrate,psnr,cr,max_err";

inline void write_csv(std::ostream& out, std::span<const Row> rows) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.field << ',' << to_string(r.eb_mode) << ',' << std::setprecision(6) << r.eb_value << ',' << r.config
        << ',' << std::setprecision(8) << r.bitrate << ',';
    if (std::isinf(r.psnr)) out << "inf";
    else out << r.psnr;
    out << ',' << r.cr << ',' << std::setprecision(10) << r.max_err << '\n';
  }
}

// Metrics rows for one compression run against the original inputs.
inline std::vector<Row> evaluate(const std::vector<FieldInput>& inputs, const CompressionResult& result,
                                 const std::vector<DecodedField>& decoded, const std::string& config) {
  std::vector<Row> rows;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Field& orig = inputs[i].field;
    const auto& st = result.stats[i];
    const auto& rec = result.archive.fields[i];
    Row r;
    r.field = orig.name;
    r.eb_mode = rec.eb_mode;
    r.eb_value = rec.eb_value;
    r.eb_abs = resolve_error_bound({rec.eb_mode, rec.eb_value}, orig);
    r.config = config;
    r.bitrate = bitrate(st.compressed_bytes, st.points);
    r.cr = compression_ratio(st.original_bytes, st.compressed_bytes);
    r.max_err = max_abs_error(orig, decoded[i].field);
    auto [lo, hi] = value_range(orig);
    r.psnr = hi > lo ? psnr(orig, decoded[i].field) : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(std::move(r));
  }
  return rows;
}

// Bit-rate/PSNR table for every field at every bound, once with Lorenzo-only
// prediction and once with the configured cross-field targets.
inline std::vector<Row> rate_distortion_sweep(const std::vector<FieldInput>& inputs, EbMode mode,
                                              std::span<const double> bounds, Backend backend = Backend::deflate) {
  std::vector<Row> rows;
  for (double eb : bounds) {
    for (bool baseline : {true, false}) {
      CompressOptions opt;
      opt.eb = {mode, eb};
      opt.backend = backend;
      opt.lorenzo_only = baseline;
      auto result = compress_fields(inputs, opt);
      auto decoded = decompress_archive(result.archive);
      auto part = evaluate(inputs, result, decoded, baseline ? "lorenzo" : "hybrid");
      rows.insert(rows.end(), part.begin(), part.end());
    }
  }
  return rows;
}

} // namespace xfc::metrics
