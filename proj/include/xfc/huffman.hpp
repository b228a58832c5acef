#pragma once

#include <algorithm>
#include <cstdint>
#include <queue>
#include <span>
#include <vector>

#include "xfc/bytes.hpp"
#include "xfc/error.hpp"
#include "xfc/quantizer.hpp"

namespace xfc::huffman {

inline constexpr std::uint32_t kDefaultRadius = 512;
inline constexpr unsigned kMaxCodeLength = 64;

// Alphabet: residuals in [-R, R) map to indices [0, 2R); index 2R is ESCAPE.
inline std::size_t alphabet_size(std::uint32_t radius) { return 2 * std::size_t{radius} + 1; }

inline std::size_t symbol_of(Code delta, std::uint32_t radius) {
  const auto r = static_cast<Code>(radius);
  return delta >= -r && delta < r ? static_cast<std::size_t>(delta + r) : 2 * std::size_t{radius};
}

inline std::vector<std::uint64_t> histogram(std::span<const Code> deltas, std::uint32_t radius = kDefaultRadius) {
  std::vector<std::uint64_t> h(alphabet_size(radius), 0);
  for (Code d : deltas) ++h[symbol_of(d, radius)];
  return h;
}

// Canonical Huffman code over the alphabet. lengths[s] == 0 means symbol s
// has no code.
struct CodeTable {
  std::uint32_t radius = kDefaultRadius;
  std::vector<std::uint8_t> lengths;
  std::vector<std::uint64_t> codes;

  // Canonical decoding tables, indexed by code length.
  std::vector<std::uint64_t> first_code;
  std::vector<std::uint32_t> first_index;
  std::vector<std::uint32_t> count;
  std::vector<std::uint32_t> sorted_symbols;
  unsigned max_length = 0;

  std::size_t escape() const { return 2 * std::size_t{radius}; }
};

namespace detail {

// Assigns canonical codes from lengths: shorter codes first, ties broken by
// symbol index.
inline void assign_canonical(CodeTable& t) {
  const std::size_t n = t.lengths.size();
  t.codes.assign(n, 0);
  t.max_length = 0;
  for (auto l : t.lengths) t.max_length = std::max<unsigned>(t.max_length, l);
  t.count.assign(t.max_length + 1, 0);
  for (auto l : t.lengths)
    if (l) ++t.count[l];
  t.sorted_symbols.clear();
  for (unsigned len = 1; len <= t.max_length; ++len)
    for (std::size_t s = 0; s < n; ++s)
      if (t.lengths[s] == len) t.sorted_symbols.push_back(static_cast<std::uint32_t>(s));
  t.first_code.assign(t.max_length + 1, 0);
  t.first_index.assign(t.max_length + 1, 0);
  std::uint64_t code = 0;
  std::uint32_t index = 0;
  for (unsigned len = 1; len <= t.max_length; ++len) {
    code = len == 1 ? 0 : (code + t.count[len - 1]) << 1;
    t.first_code[len] = code;
    t.first_index[len] = index;
    for (std::uint32_t i = 0; i < t.count[len]; ++i)
      t.codes[t.sorted_symbols[index + i]] = code + i;
    index += t.count[len];
  }
}

// Kraft sum check in exact integer arithmetic: sum 2^(max-l) <= 2^max.
inline bool kraft_ok(const std::vector<std::uint8_t>& lengths) {
  unsigned max_len = 0;
  for (auto l : lengths) max_len = std::max<unsigned>(max_len, l);
  if (max_len == 0 || max_len > kMaxCodeLength) return false;
  // Accumulate per length to avoid 2^64 overflow.
  std::vector<std::uint64_t> per(max_len + 1, 0);
  for (auto l : lengths)
    if (l) ++per[l];
  // Walk from longest to shortest, carrying pairs upward.
  std::uint64_t carry = 0;
  for (unsigned len = max_len; len >= 1; --len) {
    std::uint64_t total = per[len] + carry;
    if (len == 1) return total <= 2;
    carry = (total + 1) / 2;
  }
  return true;
}

} // namespace detail

inline CodeTable build_code_table(std::span<const std::uint64_t> hist, std::uint32_t radius = kDefaultRadius) {
  if (hist.size() != alphabet_size(radius)) throw ArgumentError("histogram size does not match radius");
  struct Node {
    std::uint64_t weight;
    std::uint64_t order;
    int left = -1, right = -1;
    std::uint32_t symbol = 0;
  };
  std::vector<Node> nodes;
  for (std::size_t s = 0; s < hist.size(); ++s)
    if (hist[s] > 0) nodes.push_back(Node{hist[s], s, -1, -1, static_cast<std::uint32_t>(s)});
  if (nodes.empty()) throw ArgumentError("cannot build a code table from an empty histogram");

  CodeTable t;
  t.radius = radius;
  t.lengths.assign(hist.size(), 0);
  if (nodes.size() == 1) {
    t.lengths[nodes[0].symbol] = 1;
    detail::assign_canonical(t);
    return t;
  }
  // Min-heap on (weight, order): lower symbol first at equal weight, and
  // internal nodes order after every leaf in creation sequence.
  auto cmp = [&](int a, int b) {
    if (nodes[a].weight != nodes[b].weight) return nodes[a].weight > nodes[b].weight;
    return nodes[a].order > nodes[b].order;
  };
  std::priority_queue<int, std::vector<int>, decltype(cmp)> heap(cmp);
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) heap.push(i);
  std::uint64_t next_order = hist.size();
  while (heap.size() > 1) {
    int a = heap.top();
    heap.pop();
    int b = heap.top();
    heap.pop();
    nodes.push_back(Node{nodes[a].weight + nodes[b].weight, next_order++, a, b, 0});
    heap.push(static_cast<int>(nodes.size()) - 1);
  }
  // Depth-first walk to assign lengths.
  std::vector<std::pair<int, unsigned>> stack{{heap.top(), 0u}};
  while (!stack.empty()) {
    auto [i, depth] = stack.back();
    stack.pop_back();
    if (nodes[i].left < 0) {
      if (depth > kMaxCodeLength) throw Error("Huffman code length exceeds 64 bits");
      t.lengths[nodes[i].symbol] = static_cast<std::uint8_t>(depth);
      continue;
    }
    stack.push_back({nodes[i].left, depth + 1});
    stack.push_back({nodes[i].right, depth + 1});
  }
  detail::assign_canonical(t);
  return t;
}

inline CodeTable table_from_lengths(std::vector<std::uint8_t> lengths, std::uint32_t radius) {
  if (lengths.size() != alphabet_size(radius)) throw CorruptStreamError("code table: wrong alphabet size");
  if (!detail::kraft_ok(lengths)) throw CorruptStreamError("code table: lengths violate the Kraft inequality");
  CodeTable t;
  t.radius = radius;
  t.lengths = std::move(lengths);
  detail::assign_canonical(t);
  return t;
}

// u32 radius, u32 run count, then (u8 length, u32 run) pairs over the
// alphabet's code-length array.
inline Bytes serialize_table(const CodeTable& t) {
  ByteWriter out;
  out.put<std::uint32_t>(t.radius);
  std::vector<std::pair<std::uint8_t, std::uint32_t>> runs;
  for (auto l : t.lengths) {
    if (!runs.empty() && runs.back().first == l) ++runs.back().second;
    else runs.push_back({l, 1});
  }
  out.put<std::uint32_t>(static_cast<std::uint32_t>(runs.size()));
  for (auto [l, n] : runs) {
    out.put<std::uint8_t>(l);
    out.put<std::uint32_t>(n);
  }
  return out.take();
}

inline CodeTable parse_table(std::span<const std::uint8_t> bytes) {
  try {
    ByteReader in(bytes, "code table");
    const auto radius = in.get<std::uint32_t>();
    if (radius == 0 || radius > (1u << 24)) throw CorruptStreamError("code table: implausible radius");
    const auto runs = in.get<std::uint32_t>();
    std::vector<std::uint8_t> lengths;
    const std::size_t n = alphabet_size(radius);
    for (std::uint32_t i = 0; i < runs; ++i) {
      const auto l = in.get<std::uint8_t>();
      const auto count = in.get<std::uint32_t>();
      if (count > n - lengths.size()) throw CorruptStreamError("code table: run overflows alphabet");
      lengths.insert(lengths.end(), count, l);
    }
    if (!in.at_end()) throw CorruptStreamError("code table: trailing bytes");
    return table_from_lengths(std::move(lengths), radius);
  } catch (const FormatError& e) {
    throw CorruptStreamError(e.what());
  }
}

class BitWriter {
public:
  void put(std::uint64_t code, unsigned length) {
    for (unsigned i = length; i-- > 0;) {
      acc_ = static_cast<std::uint8_t>((acc_ << 1) | ((code >> i) & 1u));
      if (++fill_ == 8) {
        bytes_.push_back(acc_);
        acc_ = 0;
        fill_ = 0;
      }
    }
  }

  Bytes finish() {
    if (fill_ > 0) bytes_.push_back(static_cast<std::uint8_t>(acc_ << (8 - fill_)));
    acc_ = 0;
    fill_ = 0;
    return std::move(bytes_);
  }

private:
  Bytes bytes_;
  std::uint8_t acc_ = 0;
  unsigned fill_ = 0;
};

struct EncodedDeltas {
  Bytes bitstream;
  std::vector<Code> outliers;
};

inline EncodedDeltas encode_deltas(std::span<const Code> deltas, const CodeTable& t) {
  BitWriter bits;
  EncodedDeltas out;
  for (Code d : deltas) {
    const std::size_t s = symbol_of(d, t.radius);
    if (t.lengths[s] == 0) throw ArgumentError("code table has no code for a residual in this stream");
    bits.put(t.codes[s], t.lengths[s]);
    if (s == t.escape()) out.outliers.push_back(d);
  }
  out.bitstream = bits.finish();
  return out;
}

inline std::vector<Code> decode_deltas(std::span<const std::uint8_t> bitstream, const CodeTable& t,
                                       std::span<const Code> outliers, std::size_t count) {
  std::vector<Code> out(count);
  const std::size_t total_bits = bitstream.size() * 8;
  std::size_t bit = 0, next_outlier = 0;
  const auto r = static_cast<Code>(t.radius);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t code = 0;
    unsigned len = 0;
    for (;;) {
      if (bit >= total_bits) throw CorruptStreamError("bitstream underrun");
      code = (code << 1) | ((bitstream[bit >> 3] >> (7 - (bit & 7))) & 1u);
      ++bit;
      ++len;
      if (len > t.max_length) throw CorruptStreamError("invalid code in bitstream");
      if (t.count[len] && code - t.first_code[len] < t.count[len] && code >= t.first_code[len]) break;
    }
    const std::uint32_t s = t.sorted_symbols[t.first_index[len] + static_cast<std::uint32_t>(code - t.first_code[len])];
    if (s == t.escape()) {
      if (next_outlier >= outliers.size()) throw CorruptStreamError("outlier stream exhausted");
      out[i] = outliers[next_outlier++];
    } else {
      out[i] = static_cast<Code>(s) - r;
    }
  }
  if (bitstream.size() * 8 - bit >= 8) throw CorruptStreamError("bitstream overrun: unused trailing bytes");
  if (next_outlier != outliers.size()) throw CorruptStreamError("unused outliers after decoding");
  return out;
}

// Mean code length (bits/symbol) of a histogram under a table.
inline double average_code_length(std::span<const std::uint64_t> hist, const CodeTable& t) {
  double bits = 0, n = 0;
  for (std::size_t s = 0; s < hist.size(); ++s) {
    bits += static_cast<double>(hist[s]) * t.lengths[s];
    n += static_cast<double>(hist[s]);
  }
  return n > 0 ? bits / n : 0.0;
}

inline double entropy_bits(std::span<const std::uint64_t> hist) {
  double n = 0;
  for (auto c : hist) n += static_cast<double>(c);
  double h = 0;
  for (auto c : hist)
    if (c) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log2(p);
    }
  return h;
}

} // namespace xfc::huffman
