#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "xfc/bytes.hpp"
#include "xfc/error.hpp"
#include "xfc/field.hpp"

namespace xfc::cfnn {

// Architecture hyperparameters as recorded in the CFW1 header.
struct Config {
  std::uint8_t ndim = 3;
  std::uint16_t c_in = 0;
  std::uint16_t hidden = 16;
  std::uint16_t reduction = 4;
  std::uint16_t c_out = 0;
  std::uint16_t kernel = 3;
  std::uint16_t n_anchors = 0;

  std::size_t taps() const { return ndim == 2 ? std::size_t{kernel} * kernel : std::size_t{kernel} * kernel * kernel; }
  std::size_t squeezed() const { return hidden / reduction; }

  static Config for_anchors(std::uint8_t ndim, std::uint16_t n_anchors, std::uint16_t hidden = 16,
                            std::uint16_t reduction = 4, std::uint16_t kernel = 3) {
    return Config{ndim, static_cast<std::uint16_t>(n_anchors * ndim), hidden, reduction, ndim, kernel, n_anchors};
  }
};

// Affine channel normalization: normalized = (x - offset) / scale.
struct ChannelNorm {
  float offset = 0.0f;
  float scale = 1.0f;
};

// Layer order is the serialization order.
enum Layer : std::size_t {
  conv1_w, conv1_b, dw_w, dw_b, pw_w, pw_b, fc1_w, fc1_b, fc2_w, fc2_b, conv2_w, conv2_b, kLayerCount
};

inline std::array<std::size_t, kLayerCount> layer_sizes(const Config& c) {
  const std::size_t h = c.hidden, t = c.taps(), s = c.squeezed();
  return {h * c.c_in * t, h, h * t, h, h * h, h, s * h, s, h * s, h, std::size_t{c.c_out} * h * t, c.c_out};
}

struct Weights {
  Config config;
  std::vector<ChannelNorm> in_norm;
  std::vector<ChannelNorm> out_norm;
  std::array<std::vector<float>, kLayerCount> params;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.size();
    return n;
  }

  // All-zero network with identity normalization.
  static Weights zeros(const Config& c) {
    Weights w;
    w.config = c;
    w.in_norm.assign(c.c_in, ChannelNorm{});
    w.out_norm.assign(c.c_out, ChannelNorm{});
    auto sizes = layer_sizes(c);
    for (std::size_t i = 0; i < kLayerCount; ++i) w.params[i].assign(sizes[i], 0.0f);
    return w;
  }
};

inline void validate(const Weights& w) {
  const auto& c = w.config;
  if (c.ndim != 2 && c.ndim != 3) throw FormatError("CFW1: ndim must be 2 or 3");
  if (c.hidden == 0 || c.reduction == 0) throw FormatError("CFW1: hidden width and reduction must be positive");
  if (c.hidden % c.reduction != 0) throw FormatError("CFW1: hidden width not divisible by reduction");
  if (c.kernel == 0 || c.kernel % 2 == 0) throw FormatError("CFW1: kernel size must be odd");
  if (c.c_out != c.ndim) throw FormatError("CFW1: output channels must equal ndim");
  if (c.n_anchors == 0 || c.c_in != c.n_anchors * c.ndim)
    throw FormatError("CFW1: input channels must equal anchors x ndim");
  if (w.in_norm.size() != c.c_in || w.out_norm.size() != c.c_out)
    throw FormatError("CFW1: normalization table size mismatch");
  for (const auto* norms : {&w.in_norm, &w.out_norm})
    for (const auto& n : *norms)
      if (!std::isfinite(n.offset) || !std::isfinite(n.scale) || !(n.scale > 0))
        throw FormatError("CFW1: normalization scale must be positive and finite");
  auto sizes = layer_sizes(c);
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    if (w.params[i].size() != sizes[i])
      throw FormatError("CFW1: parameter blob " + std::to_string(i) + " has " +
                        std::to_string(w.params[i].size()) + " elements, expected " + std::to_string(sizes[i]));
    for (float v : w.params[i])
      if (!std::isfinite(v)) throw FormatError("CFW1: non-finite parameter in blob " + std::to_string(i));
  }
}

inline Bytes serialize_weights(const Weights& w) {
  validate(w);
  const auto& c = w.config;
  ByteWriter out;
  out.put_magic("CFW1");
  out.put<std::uint32_t>(1);
  out.put<std::uint8_t>(c.ndim);
  out.put<std::uint16_t>(c.c_in);
  out.put<std::uint16_t>(c.hidden);
  out.put<std::uint16_t>(c.reduction);
  out.put<std::uint16_t>(c.c_out);
  out.put<std::uint16_t>(c.kernel);
  out.put<std::uint16_t>(c.n_anchors);
  for (const auto* norms : {&w.in_norm, &w.out_norm})
    for (const auto& n : *norms) {
      out.put<float>(n.offset);
      out.put<float>(n.scale);
    }
  for (const auto& p : w.params) {
    out.put<std::uint64_t>(p.size());
    out.put_array<float>(p);
  }
  out.put<std::uint32_t>(crc32(out.bytes()));
  return out.take();
}

inline Weights parse_weights(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "CFW1");
  in.expect_magic("CFW1");
  if (auto version = in.get<std::uint32_t>(); version != 1)
    throw FormatError("CFW1: unsupported version " + std::to_string(version));
  Weights w;
  auto& c = w.config;
  c.ndim = in.get<std::uint8_t>();
  c.c_in = in.get<std::uint16_t>();
  c.hidden = in.get<std::uint16_t>();
  c.reduction = in.get<std::uint16_t>();
  c.c_out = in.get<std::uint16_t>();
  c.kernel = in.get<std::uint16_t>();
  c.n_anchors = in.get<std::uint16_t>();
  auto read_norms = [&](std::size_t count) {
    std::vector<ChannelNorm> v(count);
    for (auto& n : v) {
      n.offset = in.get<float>();
      n.scale = in.get<float>();
    }
    return v;
  };
  w.in_norm = read_norms(c.c_in);
  w.out_norm = read_norms(c.c_out);
  for (auto& p : w.params) {
    auto count = in.get<std::uint64_t>();
    p = in.get_array<float>(static_cast<std::size_t>(count));
  }
  const std::size_t body = in.position();
  const auto stored = in.get<std::uint32_t>();
  if (!in.at_end()) throw FormatError("CFW1: trailing bytes after checksum");
  if (crc32(bytes.first(body)) != stored) throw IntegrityError("CFW1: checksum mismatch");
  validate(w);
  return w;
}

inline Weights load_weights(const std::filesystem::path& path) { return parse_weights(read_file(path)); }

inline void save_weights(const std::filesystem::path& path, const Weights& w) {
  write_file(path, serialize_weights(w));
}

// Channel-major stack of spatial arrays.
struct DiffTensor {
  std::size_t channels = 0;
  Dims dims;
  std::vector<float> data;

  std::size_t plane() const { return element_count(dims); }
  std::span<float> channel(std::size_t c) { return {data.data() + c * plane(), plane()}; }
  std::span<const float> channel(std::size_t c) const { return {data.data() + c * plane(), plane()}; }
};

// Raw (unnormalized) backward differences, anchor-major then axis.
inline std::vector<std::vector<double>> anchor_diff_channels(std::span<const Field* const> anchors) {
  if (anchors.empty()) throw ArgumentError("at least one anchor field is required");
  const Dims& dims = anchors.front()->dims;
  std::vector<std::vector<double>> out;
  for (const Field* a : anchors) {
    if (a->dims != dims) throw ArgumentError("anchor '" + a->name + "' dims differ from the other anchors");
    for (std::size_t axis = 0; axis < dims.size(); ++axis)
      out.push_back(backward_diff<double>(std::span<const double>(a->data), dims, axis));
  }
  return out;
}

inline DiffTensor build_input_tensor(std::span<const Field* const> anchors, std::span<const ChannelNorm> norms) {
  auto raw = anchor_diff_channels(anchors);
  if (raw.size() != norms.size())
    throw ArgumentError("input tensor has " + std::to_string(raw.size()) + " channels, model expects " +
                        std::to_string(norms.size()));
  DiffTensor t{raw.size(), anchors.front()->dims, {}};
  t.data.resize(t.channels * t.plane());
  for (std::size_t c = 0; c < t.channels; ++c) {
    auto dst = t.channel(c);
    const double off = norms[c].offset, scale = norms[c].scale;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>((raw[c][i] - off) / scale);
  }
  return t;
}

namespace detail {

struct Volume {
  std::size_t nz, ny, nx;
  std::size_t size() const { return nz * ny * nx; }
};

// Zero-padded "same" convolution. groups == 1 is a dense convolution,
// groups == channels is depthwise. Each output point accumulates bias first,
// then input channels in order, then taps in row-major order, independent of
// how output channels are distributed over threads.
inline void conv_same(const float* in, std::size_t c_in, float* out, std::size_t c_out, const Volume& v,
                      std::size_t kz, std::size_t k, const float* weight, const float* bias, bool depthwise) {
  const std::size_t plane = v.size();
  const std::size_t taps = kz * k * k;
  const std::ptrdiff_t rz = static_cast<std::ptrdiff_t>(kz / 2), r = static_cast<std::ptrdiff_t>(k / 2);
  const std::ptrdiff_t nz = static_cast<std::ptrdiff_t>(v.nz), ny = static_cast<std::ptrdiff_t>(v.ny),
                       nx = static_cast<std::ptrdiff_t>(v.nx);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t oc = 0; oc < static_cast<std::ptrdiff_t>(c_out); ++oc) {
    float* o = out + static_cast<std::size_t>(oc) * plane;
    std::fill(o, o + plane, bias[oc]);
    const std::size_t ic_begin = depthwise ? static_cast<std::size_t>(oc) : 0;
    const std::size_t ic_end = depthwise ? ic_begin + 1 : c_in;
    for (std::size_t ic = ic_begin; ic < ic_end; ++ic) {
      const float* src = in + ic * plane;
      const float* wk = weight + (depthwise ? static_cast<std::size_t>(oc) * taps
                                            : (static_cast<std::size_t>(oc) * c_in + ic) * taps);
      for (std::size_t t = 0; t < taps; ++t) {
        const float w = wk[t];
        const std::ptrdiff_t dz = static_cast<std::ptrdiff_t>(t / (k * k)) - rz;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>((t / k) % k) - r;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(t % k) - r;
        const std::ptrdiff_t z0 = std::max<std::ptrdiff_t>(0, -dz), z1 = std::min(nz, nz - dz);
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy), y1 = std::min(ny, ny - dy);
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx), x1 = std::min(nx, nx - dx);
        for (std::ptrdiff_t z = z0; z < z1; ++z)
          for (std::ptrdiff_t y = y0; y < y1; ++y) {
            float* orow = o + (z * ny + y) * nx;
            const float* irow = src + ((z + dz) * ny + (y + dy)) * nx + dx;
            for (std::ptrdiff_t x = x0; x < x1; ++x) orow[x] += w * irow[x];
          }
      }
    }
  }
}

inline void relu(std::span<float> v) {
  for (float& x : v) x = x > 0.0f ? x : 0.0f;
}

inline float sigmoid(float x) {
  float s = 1.0f / (1.0f + std::exp(-x));
  // Keep the gate inside the open interval even where float saturates.
  return std::clamp(s, std::numeric_limits<float>::min(), 1.0f - std::numeric_limits<float>::epsilon() / 2);
}

// FC2(ReLU(FC1(p))) for one pooled descriptor.
inline std::vector<float> shared_mlp(const Weights& w, const std::vector<float>& pooled) {
  const std::size_t h = w.config.hidden, s = w.config.squeezed();
  std::vector<float> mid(s), out(h);
  for (std::size_t i = 0; i < s; ++i) {
    float acc = w.params[fc1_b][i];
    for (std::size_t j = 0; j < h; ++j) acc += w.params[fc1_w][i * h + j] * pooled[j];
    mid[i] = acc > 0.0f ? acc : 0.0f;
  }
  for (std::size_t i = 0; i < h; ++i) {
    float acc = w.params[fc2_b][i];
    for (std::size_t j = 0; j < s; ++j) acc += w.params[fc2_w][i * s + j] * mid[j];
    out[i] = acc;
  }
  return out;
}

} // namespace detail

// Channel-attention gate values for a hidden feature stack (exposed for tests).
inline std::vector<float> attention_gate(const Weights& w, const std::vector<float>& features, std::size_t plane) {
  const std::size_t h = w.config.hidden;
  std::vector<float> avg(h), mx(h);
  for (std::size_t c = 0; c < h; ++c) {
    const float* p = features.data() + c * plane;
    double sum = 0.0;
    float m = p[0];
    for (std::size_t i = 0; i < plane; ++i) {
      sum += p[i];
      m = std::max(m, p[i]);
    }
    avg[c] = static_cast<float>(sum / static_cast<double>(plane));
    mx[c] = m;
  }
  auto a = detail::shared_mlp(w, avg);
  auto b = detail::shared_mlp(w, mx);
  std::vector<float> gate(h);
  for (std::size_t c = 0; c < h; ++c) gate[c] = detail::sigmoid(a[c] + b[c]);
  return gate;
}

// Network forward pass. Input is the normalized anchor-difference stack;
// output holds the predicted target differences in original units, one
// channel per axis. The error bound never enters the computation.
inline DiffTensor forward(const Weights& w, const DiffTensor& x) {
  const auto& c = w.config;
  if (x.channels != c.c_in)
    throw ArgumentError("model expects " + std::to_string(c.c_in) + " input channels, got " +
                        std::to_string(x.channels));
  if (x.dims.size() != c.ndim) throw ArgumentError("input rank does not match model ndim");
  const auto d3 = as_3d(x.dims);
  const detail::Volume v{d3[0], d3[1], d3[2]};
  const std::size_t plane = v.size();
  const std::size_t k = c.kernel, kz = c.ndim == 2 ? 1 : k, h = c.hidden;

  std::vector<float> h1(h * plane), h2(h * plane);
  detail::conv_same(x.data.data(), c.c_in, h1.data(), h, v, kz, k, w.params[conv1_w].data(),
                    w.params[conv1_b].data(), false);
  detail::relu(h1);
  detail::conv_same(h1.data(), h, h2.data(), h, v, kz, k, w.params[dw_w].data(), w.params[dw_b].data(), true);
  detail::conv_same(h2.data(), h, h1.data(), h, v, 1, 1, w.params[pw_w].data(), w.params[pw_b].data(), false);
  detail::relu(h1);

  const auto gate = attention_gate(w, h1, plane);
  for (std::size_t ch = 0; ch < h; ++ch) {
    float* p = h1.data() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] *= gate[ch];
  }

  DiffTensor y{c.c_out, x.dims, std::vector<float>(c.c_out * plane)};
  detail::conv_same(h1.data(), h, y.data.data(), c.c_out, v, kz, k, w.params[conv2_w].data(),
                    w.params[conv2_b].data(), false);
  for (std::size_t ch = 0; ch < c.c_out; ++ch) {
    const double scale = w.out_norm[ch].scale, off = w.out_norm[ch].offset;
    for (float& val : y.channel(ch)) val = static_cast<float>(static_cast<double>(val) * scale + off);
  }
  return y;
}

// ---- NDT1 training tensors -------------------------------------------------

struct TrainingTensors {
  Dims dims;
  std::uint32_t c_in = 0;
  std::uint32_t c_target = 0;
  std::vector<ChannelNorm> norms; // c_in + c_target entries
  std::vector<float> data;        // channel-major, inputs then targets
};

inline Bytes serialize_tensors(const TrainingTensors& t) {
  const std::size_t channels = std::size_t{t.c_in} + t.c_target;
  if (t.norms.size() != channels || t.data.size() != channels * element_count(t.dims))
    throw ArgumentError("NDT1: inconsistent tensor shapes");
  ByteWriter out;
  out.put_magic("NDT1");
  out.put<std::uint8_t>(static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) out.put<std::uint64_t>(d);
  out.put<std::uint32_t>(t.c_in);
  out.put<std::uint32_t>(t.c_target);
  for (const auto& n : t.norms) {
    out.put<float>(n.offset);
    out.put<float>(n.scale);
  }
  out.put_array<float>(t.data);
  return out.take();
}

inline TrainingTensors parse_tensors(ByteReader& in) {
  in.expect_magic("NDT1");
  TrainingTensors t;
  const auto ndim = in.get<std::uint8_t>();
  if (ndim != 2 && ndim != 3) throw FormatError("NDT1: ndim must be 2 or 3");
  for (std::uint8_t i = 0; i < ndim; ++i) t.dims.push_back(static_cast<std::size_t>(in.get<std::uint64_t>()));
  t.c_in = in.get<std::uint32_t>();
  t.c_target = in.get<std::uint32_t>();
  const std::size_t channels = std::size_t{t.c_in} + t.c_target;
  t.norms.resize(channels);
  for (auto& n : t.norms) {
    n.offset = in.get<float>();
    n.scale = in.get<float>();
  }
  t.data = in.get_array<float>(channels * element_count(t.dims));
  return t;
}

inline TrainingTensors parse_tensors(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "NDT1");
  auto t = parse_tensors(in);
  if (!in.at_end()) throw FormatError("NDT1: trailing bytes");
  return t;
}

// Min-max mapping of a channel onto [0, span].
inline ChannelNorm minmax_norm(std::span<const double> values, double span = 300.0) {
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  ChannelNorm n;
  n.offset = static_cast<float>(*lo);
  const double range = *hi - *lo;
  n.scale = range > 0 ? static_cast<float>(range / span) : 1.0f;
  if (!(n.scale > 0)) n.scale = 1.0f;
  return n;
}

// Training pairs from ORIGINAL data: normalized anchor differences as inputs,
// normalized target differences as targets.
inline TrainingTensors make_training_tensors(std::span<const Field* const> anchors, const Field& target,
                                             double span = 300.0) {
  auto inputs = anchor_diff_channels(anchors);
  if (target.dims != anchors.front()->dims) throw ArgumentError("target dims differ from anchor dims");
  std::vector<std::vector<double>> targets;
  for (std::size_t axis = 0; axis < target.dims.size(); ++axis)
    targets.push_back(backward_diff<double>(std::span<const double>(target.data), target.dims, axis));
  TrainingTensors t;
  t.dims = target.dims;
  t.c_in = static_cast<std::uint32_t>(inputs.size());
  t.c_target = static_cast<std::uint32_t>(targets.size());
  const std::size_t plane = element_count(t.dims);
  t.data.reserve((inputs.size() + targets.size()) * plane);
  for (const auto* group : {&inputs, &targets})
    for (const auto& ch : *group) {
      auto n = minmax_norm(ch, span);
      t.norms.push_back(n);
      for (double v : ch) t.data.push_back(static_cast<float>((v - n.offset) / n.scale));
    }
  return t;
}

inline void export_training_tensors(std::span<const Field* const> anchors, const Field& target,
                                    const std::filesystem::path& path, double span = 300.0) {
  write_file(path, serialize_tensors(make_training_tensors(anchors, target, span)));
}

// ---- CKV1 cross-check vectors ---------------------------------------------
//
// "CKV1", u32 count, then per vector an NDT1 record holding the input stack
// (c_target = 0) followed by an NDT1 record holding the expected output.

struct CheckVector {
  DiffTensor input;
  DiffTensor expected;
};

inline TrainingTensors as_record(const DiffTensor& t) {
  return TrainingTensors{t.dims, static_cast<std::uint32_t>(t.channels), 0,
                         std::vector<ChannelNorm>(t.channels), t.data};
}

inline DiffTensor from_record(TrainingTensors r) {
  if (r.c_target != 0) throw FormatError("CKV1: record must not carry target channels");
  return DiffTensor{r.c_in, std::move(r.dims), std::move(r.data)};
}

inline Bytes serialize_check_vectors(std::span<const CheckVector> vectors) {
  ByteWriter out;
  out.put_magic("CKV1");
  out.put<std::uint32_t>(static_cast<std::uint32_t>(vectors.size()));
  for (const auto& v : vectors) {
    out.put_bytes(serialize_tensors(as_record(v.input)));
    out.put_bytes(serialize_tensors(as_record(v.expected)));
  }
  return out.take();
}

inline std::vector<CheckVector> parse_check_vectors(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "CKV1");
  in.expect_magic("CKV1");
  const auto count = in.get<std::uint32_t>();
  std::vector<CheckVector> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto input = from_record(parse_tensors(in));
    auto expected = from_record(parse_tensors(in));
    out.push_back({std::move(input), std::move(expected)});
  }
  if (!in.at_end()) throw FormatError("CKV1: trailing bytes");
  return out;
}

} // namespace xfc::cfnn
