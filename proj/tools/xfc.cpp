// xfc: command-line front end for the cross-field compressor.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "xfc/xfc.hpp"

namespace fs = std::filesystem;

namespace {

// 0 ok, 1 internal error, 2 user/config error, 3 integrity or bound violation.
enum Exit : int { kOk = 0, kInternal = 1, kUser = 2, kIntegrity = 3 };

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const xfc::FormatError*>(&e) || dynamic_cast<const xfc::IntegrityError*>(&e) ||
      dynamic_cast<const xfc::CorruptStreamError*>(&e))
    return kIntegrity;
  if (dynamic_cast<const xfc::ManifestError*>(&e) || dynamic_cast<const xfc::ArgumentError*>(&e) ||
      dynamic_cast<const xfc::DataError*>(&e) || dynamic_cast<const xfc::DegenerateFieldError*>(&e) ||
      dynamic_cast<const xfc::PrecisionError*>(&e) || dynamic_cast<const xfc::FitError*>(&e) ||
      dynamic_cast<const xfc::IoError*>(&e))
    return kUser;
  return kInternal;
}

std::string human_bytes(std::size_t n) {
  std::ostringstream s;
  s << n;
  return s.str();
}

void print_stats(const xfc::CompressionResult& r, std::size_t archive_bytes) {
  std::printf("%-16s %-8s %12s %12s %10s %9s %9s %9s\n", "field", "pred", "orig_bytes", "comp_bytes", "model", "CR",
              "entropy", "outliers");
  std::size_t orig = 0;
  for (const auto& s : r.stats) {
    orig += s.original_bytes;
    std::printf("%-16s %-8s %12zu %12zu %10zu %9.3f %9.4f %9zu\n", s.name.c_str(), xfc::to_string(s.predictor).c_str(),
                s.original_bytes, s.compressed_bytes, s.model_bytes, s.ratio(), s.entropy, s.outliers);
    if (s.weights) {
      std::printf("  hybrid weights [lorenzo");
      for (std::size_t a = 1; a < s.weights->weights.size(); ++a) std::printf(", axis%zu", a - 1);
      std::printf("]:");
      for (double w : s.weights->weights) std::printf(" %.4f", w);
      std::printf("  bias %.4f  shares:", s.weights->bias);
      for (double w : s.weights->shares()) std::printf(" %.1f%%", 100.0 * w);
      std::printf("\n");
    }
  }
  std::printf("total: %zu -> %zu bytes, CR %.3f\n", orig, archive_bytes,
              archive_bytes ? double(orig) / double(archive_bytes) : 0.0);
}

int cmd_compress(const fs::path& manifest, const std::string& eb_mode, double eb, const fs::path& output,
                 const std::string& backend, bool baseline) {
  auto plan = xfc::validate_manifest(xfc::load_manifest(manifest));
  xfc::CompressOptions opt;
  opt.eb = {xfc::parse_eb_mode(eb_mode), eb};
  opt.backend = xfc::parse_backend(backend);
  opt.lorenzo_only = baseline;
  auto result = xfc::run_plan(plan, opt);
  auto bytes = xfc::write_archive(result.archive);
  xfc::write_file(output, bytes);
  print_stats(result, bytes.size());
  return kOk;
}

int cmd_decompress(const fs::path& input, const fs::path& outdir) {
  auto archive = xfc::load_archive(input);
  for (const auto& p : xfc::run_decompress(archive, outdir)) std::printf("wrote %s\n", p.string().c_str());
  return kOk;
}

int cmd_inspect(const fs::path& input) {
  auto bytes = xfc::read_file(input);
  auto archive = xfc::read_archive(bytes);
  std::printf("archive %s: %zu bytes, %zu fields\n", input.string().c_str(), bytes.size(), archive.fields.size());
  for (const auto& f : archive.fields) {
    std::ostringstream dims;
    for (std::size_t i = 0; i < f.dims.size(); ++i) dims << (i ? "x" : "") << f.dims[i];
    std::printf("- %s: dims %s %s, eb %s %.6g (lattice half-step %.6g), predictor %s, backend %s\n", f.name.c_str(),
                dims.str().c_str(), xfc::to_string(f.dtype).c_str(), xfc::to_string(f.eb_mode).c_str(), f.eb_value,
                f.eb_abs, xfc::to_string(f.predictor).c_str(), xfc::to_string(f.backend).c_str());
    if (!f.anchors.empty()) {
      std::printf("    anchors:");
      for (const auto& a : f.anchors) std::printf(" %s", a.c_str());
      std::printf("\n");
    }
    for (std::size_t s = 0; s < xfc::kStreamCount; ++s)
      std::printf("    %-15s %10s bytes\n", xfc::kStreamNames[s], human_bytes(f.streams[s].size()).c_str());
    if (f.predictor == xfc::PredictorKind::hybrid) {
      auto model = xfc::cfnn::parse_weights(f.streams[xfc::stream::model_blob]);
      auto w = xfc::decode_hybrid_weights(f.streams[xfc::stream::hybrid_weights], f.dims.size());
      std::printf("    model: %zu parameters, hidden %u, reduction %u\n", model.parameter_count(),
                  unsigned(model.config.hidden), unsigned(model.config.reduction));
      std::printf("    hybrid weights:");
      for (double v : w.weights) std::printf(" %.5f", v);
      std::printf(" bias %.5f\n", w.bias);
    }
  }
  return kOk;
}

int cmd_evaluate(const fs::path& manifest, const fs::path& archive_path, const fs::path& csv_out) {
  auto plan = xfc::validate_manifest(xfc::load_manifest(manifest));
  auto archive_bytes = xfc::read_file(archive_path);
  auto archive = xfc::read_archive(archive_bytes);
  auto decoded = xfc::decompress_archive(archive);
  std::vector<xfc::metrics::Row> rows;
  bool violated = false;
  for (std::size_t i = 0; i < archive.fields.size(); ++i) {
    const auto& rec = archive.fields[i];
    const auto& entry = plan.order.at(plan.index_of(rec.name));
    if (entry.dims != rec.dims) throw xfc::ArgumentError("field '" + rec.name + "': manifest dims differ from archive");
    auto orig = xfc::load_raw_field(entry.file, entry.dims, entry.dtype, entry.name);
    xfc::metrics::Row r;
    r.field = rec.name;
    r.eb_mode = rec.eb_mode;
    r.eb_value = rec.eb_value;
    r.eb_abs = xfc::resolve_error_bound({rec.eb_mode, rec.eb_value}, orig);
    r.config = xfc::to_string(rec.predictor);
    r.bitrate = xfc::metrics::bitrate(rec.payload_bytes(), orig.size());
    r.cr = xfc::metrics::compression_ratio(orig.source_bytes(), rec.payload_bytes());
    r.max_err = xfc::metrics::max_abs_error(orig, decoded[i].field);
    auto [lo, hi] = xfc::value_range(orig);
    r.psnr = hi > lo ? xfc::metrics::psnr(orig, decoded[i].field) : std::numeric_limits<double>::quiet_NaN();
    if (r.max_err > r.eb_abs) {
      violated = true;
      std::fprintf(stderr, "error bound violated for field '%s': max error %.10g > %.10g\n", rec.name.c_str(),
                   r.max_err, r.eb_abs);
    }
    rows.push_back(r);
  }
  if (csv_out.empty()) {
    xfc::metrics::write_csv(std::cout, rows);
  } else {
    std::ofstream out(csv_out);
    xfc::metrics::write_csv(out, rows);
  }
  return violated ? kIntegrity : kOk;
}

int cmd_sweep(const fs::path& manifest, const std::string& eb_mode, const std::vector<double>& bounds,
              const std::string& backend, const fs::path& csv_out) {
  auto plan = xfc::validate_manifest(xfc::load_manifest(manifest));
  auto inputs = xfc::load_plan_inputs(plan);
  auto rows = xfc::metrics::rate_distortion_sweep(inputs, xfc::parse_eb_mode(eb_mode), bounds,
                                                  xfc::parse_backend(backend));
  if (csv_out.empty()) {
    xfc::metrics::write_csv(std::cout, rows);
  } else {
    std::ofstream out(csv_out);
    xfc::metrics::write_csv(out, rows);
  }
  return kOk;
}

int cmd_export_training(const fs::path& manifest, const std::string& target, const fs::path& output) {
  auto plan = xfc::validate_manifest(xfc::load_manifest(manifest));
  const auto& entry = plan.order.at(plan.index_of(target));
  if (entry.role != xfc::FieldRole::target)
    throw xfc::ArgumentError("field '" + target + "' is not a target (it has no anchors)");
  std::vector<xfc::Field> anchors;
  for (const auto& name : entry.anchors) {
    const auto& a = plan.order.at(plan.index_of(name));
    anchors.push_back(xfc::load_raw_field(a.file, a.dims, a.dtype, a.name));
  }
  std::vector<const xfc::Field*> ptrs;
  for (const auto& a : anchors) ptrs.push_back(&a);
  auto field = xfc::load_raw_field(entry.file, entry.dims, entry.dtype, entry.name);
  xfc::cfnn::export_training_tensors(ptrs, field, output);
  std::printf("wrote %s: %zu input + %zu target channels\n", output.string().c_str(), ptrs.size() * field.ndim(),
              field.ndim());
  return kOk;
}

int cmd_synth(const fs::path& outdir, std::size_t size, bool two_d, std::uint64_t seed, const std::string& cfnn) {
  fs::create_directories(outdir);
  xfc::Dims dims = two_d ? xfc::Dims{size, size} : xfc::Dims{size, size, size};
  auto ds = xfc::synthetic::make_crossfield_dataset(dims, seed);
  std::ostringstream dim_str;
  for (auto d : dims) dim_str << ' ' << d;
  std::ofstream m(outdir / "manifest.txt");
  m << "# synthetic cross-field dataset (seed " << seed << ")\n";
  for (const auto* f : {&ds.anchor_a, &ds.anchor_b, &ds.target}) {
    xfc::store_raw_field(outdir / (f->name + ".f32"), *f);
    m << "field " << f->name << "\nfile " << f->name << ".f32\ndims" << dim_str.str() << "\ndtype f32\n";
    if (f == &ds.target)
      m << "role target\nanchors " << ds.anchor_a.name << ' ' << ds.anchor_b.name << "\ncfnn " << cfnn << "\n";
    else
      m << "role anchor\n";
    m << "\n";
  }
  std::printf("wrote synthetic dataset to %s\n", outdir.string().c_str());
  return kOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Error-bounded lossy compressor with cross-field prediction"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: XFC_THREADS or all cores)");

  std::string manifest, eb_mode = "rel", backend = "deflate", output, input, outdir, archive, target, csv, cfnn = "T.cfw";
  double eb = 1e-3;
  bool baseline = false, two_d = false;
  std::vector<double> bounds{5e-3, 2e-3, 1e-3, 5e-4, 2e-4};
  std::size_t size = 64;
  std::uint64_t seed = 2024;

  auto* compress = app.add_subcommand("compress", "Compress the fields of a manifest into an archive");
  compress->add_option("--manifest", manifest)->required();
  compress->add_option("--eb-mode", eb_mode)->check(CLI::IsMember({"abs", "rel"}));
  compress->add_option("--eb", eb)->required();
  compress->add_option("--output,-o", output)->required();
  compress->add_option("--backend", backend)->check(CLI::IsMember({"none", "deflate"}));
  compress->add_flag("--lorenzo-only", baseline, "Ignore cross-field targets (baseline configuration)");

  auto* decompress = app.add_subcommand("decompress", "Decompress every field of an archive");
  decompress->add_option("--input,-i", input)->required();
  decompress->add_option("--outdir", outdir)->required();

  auto* inspect = app.add_subcommand("inspect", "Print an archive's header");
  inspect->add_option("--input,-i", input)->required();

  auto* evaluate = app.add_subcommand("evaluate", "Compare an archive against the manifest's originals");
  evaluate->add_option("--manifest", manifest)->required();
  evaluate->add_option("--archive", archive)->required();
  evaluate->add_option("--csv", csv, "Write the CSV here instead of stdout");

  auto* sweep = app.add_subcommand("sweep", "Rate-distortion sweep, Lorenzo-only vs hybrid");
  sweep->add_option("--manifest", manifest)->required();
  sweep->add_option("--eb-mode", eb_mode)->check(CLI::IsMember({"abs", "rel"}));
  sweep->add_option("--ebs", bounds, "Error bounds to sweep");
  sweep->add_option("--backend", backend)->check(CLI::IsMember({"none", "deflate"}));
  sweep->add_option("--csv", csv);

  auto* export_training = app.add_subcommand("export-training", "Write NDT1 training tensors for a target field");
  export_training->add_option("--manifest", manifest)->required();
  export_training->add_option("--target", target)->required();
  export_training->add_option("--output,-o", output)->required();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic anchor/target dataset and manifest");
  synth->add_option("--outdir", outdir)->required();
  synth->add_option("--size", size, "Extent of every axis");
  synth->add_flag("--2d", two_d);
  synth->add_option("--seed", seed);
  synth->add_option("--cfnn", cfnn, "Weight file path written into the manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUser;
  }

  xfc::configure_threads(threads);
  try {
    if (*compress) return cmd_compress(manifest, eb_mode, eb, output, backend, baseline);
    if (*decompress) return cmd_decompress(input, outdir);
    if (*inspect) return cmd_inspect(input);
    if (*evaluate) return cmd_evaluate(manifest, archive, csv);
    if (*sweep) return cmd_sweep(manifest, eb_mode, bounds, backend, csv);
    if (*export_training) return cmd_export_training(manifest, target, output);
    if (*synth) return cmd_synth(outdir, size, two_d, seed, cfnn);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "xfc: %s\n", e.what());
    return exit_code_for(e);
  }
  return kInternal;
}
