#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "xfc/bytes.hpp"
#include "xfc/error.hpp"
#include "xfc/field.hpp"
#include "xfc/lossless.hpp"
#include "xfc/predictors.hpp"

namespace xfc {

enum class PredictorKind : std::uint8_t { lorenzo = 0, hybrid = 1 };

inline std::string to_string(PredictorKind k) { return k == PredictorKind::lorenzo ? "lorenzo" : "hybrid"; }

namespace stream {
enum Id : std::size_t { code_table, bitstream, outliers, model_blob, hybrid_weights };
}
inline constexpr std::size_t kStreamCount = 5;

inline constexpr std::array<const char*, kStreamCount> kStreamNames{"code-table", "bitstream", "outliers", "model",
                                                                    "hybrid-weights"};

struct FieldRecord {
  std::string name;
  Dims dims;
  Dtype dtype = Dtype::f32;
  EbMode eb_mode = EbMode::relative;
  double eb_value = 0;
  double eb_abs = 0;  // lattice half-step: resolved bound minus precision headroom
  PredictorKind predictor = PredictorKind::lorenzo;
  std::vector<std::string> anchors;
  Backend backend = Backend::deflate;
  std::array<Bytes, kStreamCount> streams;

  std::size_t payload_bytes() const {
    std::size_t n = 0;
    for (const auto& s : streams) n += s.size();
    return n;
  }
};

struct Archive {
  std::vector<FieldRecord> fields;

  const FieldRecord& find(const std::string& name) const {
    for (const auto& f : fields)
      if (f.name == name) return f;
    throw ArgumentError("archive has no field '" + name + "'");
  }
};

inline Bytes encode_hybrid_weights(const HybridWeights& w) {
  ByteWriter out;
  for (double v : w.weights) out.put<double>(v);
  out.put<double>(w.bias);
  return out.take();
}

inline HybridWeights decode_hybrid_weights(std::span<const std::uint8_t> bytes, std::size_t ndim) {
  if (bytes.size() != 8 * (ndim + 2)) throw FormatError("hybrid weight stream has wrong length");
  ByteReader in(bytes, "hybrid weights");
  HybridWeights w;
  for (std::size_t i = 0; i <= ndim; ++i) w.weights.push_back(in.get<double>());
  w.bias = in.get<double>();
  return w;
}

inline Bytes encode_outliers(std::span<const Code> values) {
  ByteWriter out;
  out.put_array<Code>(values);
  return out.take();
}

inline std::vector<Code> decode_outliers(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 8 != 0) throw CorruptStreamError("outlier stream length is not a multiple of 8");
  ByteReader in(bytes, "outliers");
  return in.get_array<Code>(bytes.size() / 8);
}

namespace detail {

inline void write_table(ByteWriter& out, const Archive& a, const std::vector<std::array<std::uint64_t, kStreamCount>>& offsets) {
  out.put_magic("XFC1");
  out.put<std::uint32_t>(1);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(a.fields.size()));
  for (std::size_t i = 0; i < a.fields.size(); ++i) {
    const auto& f = a.fields[i];
    out.put_string(f.name);
    out.put<std::uint8_t>(static_cast<std::uint8_t>(f.dims.size()));
    for (auto d : f.dims) out.put<std::uint64_t>(d);
    out.put<std::uint8_t>(static_cast<std::uint8_t>(f.dtype));
    out.put<std::uint8_t>(static_cast<std::uint8_t>(f.eb_mode));
    out.put<double>(f.eb_value);
    out.put<double>(f.eb_abs);
    out.put<std::uint8_t>(static_cast<std::uint8_t>(f.predictor));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(f.anchors.size()));
    for (const auto& an : f.anchors) out.put_string(an);
    out.put<std::uint8_t>(static_cast<std::uint8_t>(f.backend));
    for (std::size_t s = 0; s < kStreamCount; ++s) {
      out.put<std::uint64_t>(offsets.empty() ? 0 : offsets[i][s]);
      out.put<std::uint64_t>(f.streams[s].size());
      out.put<std::uint32_t>(crc32(f.streams[s]));
    }
  }
}

} // namespace detail

// "XFC1" | u32 version | u32 field count | field table | payloads. Stream
// offsets are absolute file positions; payloads follow the table in field
// order, streams in kStreamNames order.
inline Bytes write_archive(const Archive& a) {
  ByteWriter probe;
  detail::write_table(probe, a, {});
  std::uint64_t pos = probe.size();
  std::vector<std::array<std::uint64_t, kStreamCount>> offsets(a.fields.size());
  for (std::size_t i = 0; i < a.fields.size(); ++i)
    for (std::size_t s = 0; s < kStreamCount; ++s) {
      offsets[i][s] = pos;
      pos += a.fields[i].streams[s].size();
    }
  ByteWriter out;
  detail::write_table(out, a, offsets);
  for (const auto& f : a.fields)
    for (const auto& s : f.streams) out.put_bytes(s);
  return out.take();
}

inline Archive read_archive(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "XFC1");
  in.expect_magic("XFC1");
  if (auto version = in.get<std::uint32_t>(); version != 1)
    throw FormatError("XFC1: unsupported version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();
  Archive a;
  struct Span {
    std::uint64_t offset, length, field, stream;
  };
  std::vector<Span> spans;
  std::vector<std::array<std::uint32_t, kStreamCount>> crcs;
  for (std::uint32_t i = 0; i < count; ++i) {
    FieldRecord f;
    f.name = in.get_string();
    const auto ndim = in.get<std::uint8_t>();
    if (ndim != 2 && ndim != 3) throw FormatError("XFC1: field '" + f.name + "' has unsupported rank");
    for (std::uint8_t d = 0; d < ndim; ++d) {
      auto e = in.get<std::uint64_t>();
      if (e == 0) throw FormatError("XFC1: field '" + f.name + "' has a zero extent");
      f.dims.push_back(static_cast<std::size_t>(e));
    }
    const auto dtype = in.get<std::uint8_t>();
    if (dtype > 1) throw FormatError("XFC1: field '" + f.name + "' has unknown dtype");
    f.dtype = static_cast<Dtype>(dtype);
    const auto mode = in.get<std::uint8_t>();
    if (mode > 1) throw FormatError("XFC1: field '" + f.name + "' has unknown error-bound mode");
    f.eb_mode = static_cast<EbMode>(mode);
    f.eb_value = in.get<double>();
    f.eb_abs = in.get<double>();
    if (!(f.eb_abs > 0)) throw FormatError("XFC1: field '" + f.name + "' has a non-positive error bound");
    const auto kind = in.get<std::uint8_t>();
    if (kind > 1) throw FormatError("XFC1: field '" + f.name + "' has unknown predictor kind");
    f.predictor = static_cast<PredictorKind>(kind);
    const auto n_anchors = in.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < n_anchors; ++k) f.anchors.push_back(in.get_string());
    f.backend = backend_from_byte(in.get<std::uint8_t>());
    std::array<std::uint32_t, kStreamCount> crc{};
    for (std::size_t s = 0; s < kStreamCount; ++s) {
      const auto off = in.get<std::uint64_t>();
      const auto len = in.get<std::uint64_t>();
      crc[s] = in.get<std::uint32_t>();
      spans.push_back({off, len, i, s});
    }
    crcs.push_back(crc);
    a.fields.push_back(std::move(f));
  }
  const std::uint64_t table_end = in.position();
  std::sort(spans.begin(), spans.end(), [](const Span& x, const Span& y) {
    return x.offset != y.offset ? x.offset < y.offset : x.length < y.length;
  });
  std::uint64_t cursor = table_end;
  for (const auto& sp : spans) {
    if (sp.offset < cursor || sp.length > bytes.size() || sp.offset > bytes.size() - sp.length)
      throw FormatError("XFC1: stream offsets overlap or exceed the file");
    cursor = sp.offset + sp.length;
    auto& f = a.fields[sp.field];
    auto data = bytes.subspan(sp.offset, sp.length);
    if (crc32(data) != crcs[sp.field][sp.stream])
      throw IntegrityError("XFC1: checksum mismatch in " + std::string(kStreamNames[sp.stream]) + " stream of field '" +
                           f.name + "'");
    f.streams[sp.stream].assign(data.begin(), data.end());
  }
  if (cursor != bytes.size()) throw FormatError("XFC1: unexpected bytes after the last stream");
  std::set<std::string> names;
  for (const auto& f : a.fields)
    if (!names.insert(f.name).second) throw FormatError("XFC1: duplicate field '" + f.name + "'");
  for (const auto& f : a.fields) {
    if (f.predictor == PredictorKind::hybrid) {
      if (f.anchors.empty()) throw FormatError("XFC1: hybrid field '" + f.name + "' lists no anchors");
      if (f.streams[stream::model_blob].empty()) throw FormatError("XFC1: hybrid field '" + f.name + "' has no model");
    }
    for (const auto& an : f.anchors)
      if (!names.count(an)) throw FormatError("XFC1: field '" + f.name + "' references unknown anchor '" + an + "'");
  }
  return a;
}

inline Archive load_archive(const std::filesystem::path& path) { return read_archive(read_file(path)); }

} // namespace xfc
