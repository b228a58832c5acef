#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xfc/archive.hpp"
#include "xfc/cfnn.hpp"
#include "xfc/field.hpp"
#include "xfc/huffman.hpp"
#include "xfc/lossless.hpp"
#include "xfc/manifest.hpp"
#include "xfc/predictors.hpp"
#include "xfc/quantizer.hpp"

namespace xfc {

struct CompressOptions {
  ErrorBoundSpec eb;
  Backend backend = Backend::deflate;
  std::uint32_t radius = huffman::kDefaultRadius;
  // Compress targets with Lorenzo only (the baseline configuration).
  bool lorenzo_only = false;
};

struct FieldStats {
  std::string name;
  PredictorKind predictor = PredictorKind::lorenzo;
  double eb_abs = 0;     // resolved user bound
  double half_step = 0;  // lattice half-step actually used (<= eb_abs)
  std::size_t points = 0;
  std::size_t original_bytes = 0;
  std::size_t compressed_bytes = 0; // all streams, model blob included
  std::size_t model_bytes = 0;
  std::size_t outliers = 0;
  double entropy = 0;               // bits per symbol over the clamped alphabet
  double zero_fraction = 0;         // share of residuals equal to 0
  std::optional<HybridWeights> weights;
  std::uint64_t code_hash = 0;      // FNV-1a over the prequant codes
  std::uint64_t dquant_hash = 0;    // FNV-1a over the cross-field diff codes (hybrid only)

  double ratio() const { return compressed_bytes ? double(original_bytes) / double(compressed_bytes) : 0.0; }
};

struct CompressedField {
  FieldRecord record;
  FieldStats stats;
  PrequantField codes;
};

inline std::uint64_t fnv1a(std::span<const Code> values) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
  for (std::size_t i = 0; i < values.size_bytes(); ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::vector<std::vector<Code>>& arrays) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& a : arrays) h ^= fnv1a(a) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

namespace detail {

inline void encode_residuals(FieldRecord& rec, FieldStats& st, const DeltaField& d, const CompressOptions& opt) {
  auto hist = huffman::histogram(d.deltas, opt.radius);
  auto table = huffman::build_code_table(hist, opt.radius);
  auto enc = huffman::encode_deltas(d.deltas, table);
  rec.streams[stream::code_table] = huffman::serialize_table(table);
  rec.streams[stream::bitstream] = backend_encode(enc.bitstream, opt.backend);
  rec.streams[stream::outliers] = encode_outliers(enc.outliers);
  st.outliers = enc.outliers.size();
  st.entropy = huffman::entropy_bits(hist);
  st.zero_fraction = d.deltas.empty() ? 0.0
                                      : double(hist[huffman::symbol_of(0, opt.radius)]) / double(d.deltas.size());
}

inline std::vector<Code> decode_residuals(const FieldRecord& rec) {
  auto table = huffman::parse_table(rec.streams[stream::code_table]);
  auto bits = backend_decode(rec.streams[stream::bitstream], rec.backend);
  auto outs = decode_outliers(rec.streams[stream::outliers]);
  return huffman::decode_deltas(bits, table, outs, element_count(rec.dims));
}

// Re-raises the in-flight error with the field name prepended, keeping its type.
[[noreturn]] inline void rethrow_for_field(const std::string& name) {
  const std::string prefix = "field '" + name + "': ";
  try {
    throw;
  } catch (const FormatError& e) {
    throw FormatError(prefix + e.what());
  } catch (const IntegrityError& e) {
    throw IntegrityError(prefix + e.what());
  } catch (const CorruptStreamError& e) {
    throw CorruptStreamError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const DegenerateFieldError& e) {
    throw DegenerateFieldError(prefix + e.what());
  } catch (const ArgumentError& e) {
    throw ArgumentError(prefix + e.what());
  } catch (const ManifestError& e) {
    throw ManifestError(prefix + e.what());
  } catch (const PrecisionError& e) {
    throw PrecisionError(prefix + e.what());
  } catch (const FitError& e) {
    throw FitError(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  }
}

inline FieldRecord make_record(const Field& f, const CompressOptions& opt, double half_step) {
  FieldRecord rec;
  rec.name = f.name;
  rec.dims = f.dims;
  rec.dtype = f.dtype;
  rec.eb_mode = opt.eb.mode;
  rec.eb_value = opt.eb.value;
  rec.eb_abs = half_step;
  rec.backend = opt.backend;
  return rec;
}

inline FieldStats make_stats(const FieldRecord& rec, const PrequantField& q) {
  FieldStats st;
  st.name = rec.name;
  st.predictor = rec.predictor;
  st.half_step = rec.eb_abs;
  st.points = q.codes.size();
  st.original_bytes = q.codes.size() * dtype_size(rec.dtype);
  st.code_hash = fnv1a(q.codes);
  return st;
}

} // namespace detail

// Per-axis cross-field differences in code units, from decompressed anchors.
inline std::vector<std::vector<Code>> crossfield_diff_codes(const cfnn::Weights& model,
                                                            std::span<const Field* const> anchors, double eb_abs) {
  auto x = cfnn::build_input_tensor(anchors, model.in_norm);
  auto y = cfnn::forward(model, x);
  std::vector<std::vector<Code>> out;
  for (std::size_t a = 0; a < y.channels; ++a) out.push_back(quantize_diff(y.channel(a), eb_abs));
  return out;
}

// eb_abs is the resolved user bound; the field is quantized on a lattice
// whose half-step leaves room for rounding to the source precision.
inline CompressedField compress_field_lorenzo(const Field& field, double eb_abs, const CompressOptions& opt) {
  const double h = lattice_half_step(field, eb_abs);
  auto q = prequantize(field, h, eb_abs);
  auto rec = detail::make_record(field, opt, h);
  rec.predictor = PredictorKind::lorenzo;
  auto st = detail::make_stats(rec, q);
  st.eb_abs = eb_abs;
  detail::encode_residuals(rec, st, predict_field_lorenzo(q), opt);
  st.compressed_bytes = rec.payload_bytes();
  return {std::move(rec), std::move(st), std::move(q)};
}

// anchors must be the decompressed anchor fields, in model channel order.
inline CompressedField compress_field_hybrid(const Field& target, std::span<const Field* const> anchors,
                                             std::span<const std::uint8_t> model_bytes, double eb_abs,
                                             const CompressOptions& opt) {
  auto model = cfnn::parse_weights(model_bytes);
  if (model.config.ndim != target.ndim())
    throw ArgumentError("target '" + target.name + "': model rank does not match field rank");
  if (model.config.n_anchors != anchors.size())
    throw ArgumentError("target '" + target.name + "': model expects " + std::to_string(model.config.n_anchors) +
                        " anchors, got " + std::to_string(anchors.size()));
  for (const Field* a : anchors)
    if (a->dims != target.dims)
      throw ArgumentError("target '" + target.name + "': anchor '" + a->name + "' has different dims");

  const double h = lattice_half_step(target, eb_abs);
  auto q = prequantize(target, h, eb_abs);
  auto d_quant = crossfield_diff_codes(model, anchors, h);
  auto weights = fit_hybrid_weights(collect_predictor_samples(q, d_quant));

  auto rec = detail::make_record(target, opt, h);
  rec.predictor = PredictorKind::hybrid;
  for (const Field* a : anchors) rec.anchors.push_back(a->name);
  rec.streams[stream::model_blob] = Bytes(model_bytes.begin(), model_bytes.end());
  rec.streams[stream::hybrid_weights] = encode_hybrid_weights(weights);

  auto st = detail::make_stats(rec, q);
  st.eb_abs = eb_abs;
  st.dquant_hash = fnv1a(d_quant);
  detail::encode_residuals(rec, st, predict_field_for_compression(q, d_quant, weights), opt);
  st.weights = weights;
  st.model_bytes = rec.streams[stream::model_blob].size();
  st.compressed_bytes = rec.payload_bytes();
  return {std::move(rec), std::move(st), std::move(q)};
}

struct DecodedField {
  Field field;
  std::vector<Code> codes;
  std::uint64_t dquant_hash = 0;
};

inline DecodedField decompress_field(const FieldRecord& rec, std::span<const Field* const> anchors = {}) {
  DeltaField deltas{rec.dims, detail::decode_residuals(rec)};
  DecodedField out;
  if (rec.predictor == PredictorKind::lorenzo) {
    out.codes = reconstruct_codes_lorenzo(deltas);
  } else {
    if (anchors.size() != rec.anchors.size())
      throw ArgumentError("field '" + rec.name + "' needs its " + std::to_string(rec.anchors.size()) +
                          " decompressed anchors");
    auto model = cfnn::parse_weights(rec.streams[stream::model_blob]);
    auto weights = decode_hybrid_weights(rec.streams[stream::hybrid_weights], rec.dims.size());
    auto d_quant = crossfield_diff_codes(model, anchors, rec.eb_abs);
    out.dquant_hash = fnv1a(d_quant);
    out.codes = reconstruct_codes_hybrid(deltas, d_quant, weights);
  }
  PrequantField q{rec.dims, rec.dtype, rec.eb_abs, std::move(out.codes)};
  out.field = dequantize(q, rec.name);
  out.codes = std::move(q.codes);
  return out;
}

// One field to compress. Targets carry their anchor names and CFW1 blob.
struct FieldInput {
  Field field;
  std::vector<std::string> anchors;
  Bytes model;
};

struct CompressionResult {
  Archive archive;
  std::vector<FieldStats> stats;
};

// Fields must be in plan order: anchors before the targets that read them.
inline CompressionResult compress_fields(const std::vector<FieldInput>& inputs, const CompressOptions& opt) {
  CompressionResult res;
  std::map<std::string, Field> decompressed;
  for (const auto& in : inputs) {
    const Field& f = in.field;
    try {
      const double eb_abs = resolve_error_bound(opt.eb, f);
      CompressedField cf;
      if (in.anchors.empty() || opt.lorenzo_only) {
        cf = compress_field_lorenzo(f, eb_abs, opt);
      } else {
        std::vector<const Field*> anchors;
        for (const auto& name : in.anchors) {
          auto it = decompressed.find(name);
          if (it == decompressed.end())
            throw ArgumentError("anchor '" + name + "' must be compressed before its target");
          anchors.push_back(&it->second);
        }
        cf = compress_field_hybrid(f, anchors, in.model, eb_abs, opt);
      }
      decompressed[f.name] = dequantize(cf.codes, f.name);
      res.stats.push_back(std::move(cf.stats));
      res.archive.fields.push_back(std::move(cf.record));
    } catch (...) {
      detail::rethrow_for_field(f.name);
    }
  }
  return res;
}

inline std::vector<DecodedField> decompress_archive(const Archive& archive) {
  std::vector<DecodedField> out;
  std::map<std::string, std::size_t> index;
  for (const auto& rec : archive.fields) {
    std::vector<const Field*> anchors;
    for (const auto& name : rec.anchors) {
      auto it = index.find(name);
      if (it == index.end())
        throw FormatError("field '" + rec.name + "': anchor '" + name + "' is not decoded before it");
      anchors.push_back(&out[it->second].field);
    }
    auto decoded = decompress_field(rec, anchors);
    index[rec.name] = out.size();
    out.push_back(std::move(decoded));
  }
  return out;
}

// Loads every field of a validated plan from disk.
inline std::vector<FieldInput> load_plan_inputs(const CompressionPlan& plan) {
  std::vector<FieldInput> inputs;
  for (const auto& e : plan.order) {
    FieldInput in;
    in.field = load_raw_field(e.file, e.dims, e.dtype, e.name);
    if (e.role == FieldRole::target) {
      in.anchors = e.anchors;
      try {
        in.model = read_file(e.cfnn);
      } catch (const IoError&) {
        throw ManifestError("target '" + e.name + "': cannot read cfnn weight file " + e.cfnn.string());
      }
      auto model = cfnn::parse_weights(in.model);
      if (model.config.ndim != e.dims.size() || model.config.n_anchors != e.anchors.size())
        throw ManifestError("target '" + e.name + "': cfnn model shape does not match its anchors");
    }
    inputs.push_back(std::move(in));
  }
  return inputs;
}

inline CompressionResult run_plan(const CompressionPlan& plan, const CompressOptions& opt) {
  return compress_fields(load_plan_inputs(plan), opt);
}

inline std::vector<std::filesystem::path> run_decompress(const Archive& archive, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& d : decompress_archive(archive)) {
    auto path = out_dir / (d.field.name + "." + to_string(d.field.dtype) + ".raw");
    store_raw_field(path, d.field);
    written.push_back(path);
  }
  return written;
}

} // namespace xfc
