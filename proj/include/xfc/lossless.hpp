#pragma once

#include <cstdint>
#include <span>
#include <string>

#include <zlib.h>

#include "xfc/bytes.hpp"
#include "xfc/error.hpp"

namespace xfc {

// Byte-level stage applied after Huffman coding.
enum class Backend : std::uint8_t { none = 0, deflate = 1 };

inline std::string to_string(Backend b) { return b == Backend::none ? "none" : "deflate"; }

inline Backend parse_backend(const std::string& s) {
  if (s == "none") return Backend::none;
  if (s == "deflate") return Backend::deflate;
  throw ArgumentError("unknown lossless backend '" + s + "' (expected none or deflate)");
}

inline Backend backend_from_byte(std::uint8_t b) {
  if (b > 1) throw FormatError("unknown lossless backend mode " + std::to_string(b));
  return static_cast<Backend>(b);
}

// Output layout: u64 original length, then the backend payload.
inline Bytes backend_encode(std::span<const std::uint8_t> data, Backend mode) {
  ByteWriter out;
  out.put<std::uint64_t>(data.size());
  if (mode == Backend::none) {
    out.put_bytes(data);
    return out.take();
  }
  Bytes packed(compressBound(static_cast<uLong>(data.size())));
  uLongf packed_len = packed.size();
  if (compress2(packed.data(), &packed_len, data.data(), static_cast<uLong>(data.size()), Z_BEST_COMPRESSION) != Z_OK)
    throw Error("deflate failed");
  packed.resize(packed_len);
  out.put_bytes(packed);
  return out.take();
}

inline Bytes backend_decode(std::span<const std::uint8_t> data, Backend mode) {
  ByteReader in(data, "lossless stream");
  const auto raw_len = in.get<std::uint64_t>();
  auto body = in.get_span(in.remaining());
  if (mode == Backend::none) {
    if (body.size() != raw_len) throw CorruptStreamError("stored stream length mismatch");
    return Bytes(body.begin(), body.end());
  }
  if (raw_len > (std::uint64_t{1} << 40)) throw CorruptStreamError("implausible inflated length");
  Bytes out(static_cast<std::size_t>(raw_len));
  uLongf out_len = out.size();
  if (uncompress(out.data(), &out_len, body.data(), static_cast<uLong>(body.size())) != Z_OK || out_len != raw_len)
    throw CorruptStreamError("inflate failed");
  return out;
}

} // namespace xfc
