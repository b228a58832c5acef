// Acceptance suite: one PASS/FAIL line per gating criterion.
#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "test_util.hpp"

using namespace xfc;

namespace {

int failures = 0;

void report(bool ok, const char* name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Bytes zero_model(std::uint8_t ndim, std::uint16_t anchors) {
  return cfnn::serialize_weights(cfnn::Weights::zeros(cfnn::Config::for_anchors(ndim, anchors)));
}

// Smooth field with random amplitude, offset, noise level and optional spikes.
Field random_case_field(const Dims& dims, Dtype dtype, std::mt19937_64& rng, const std::string& name) {
  std::uniform_real_distribution<double> u(0, 1);
  const double scale = std::pow(10.0, -3 + 6 * u(rng));
  const double offset = scale * (4 * u(rng) - 2);
  auto f = xfc::testing::random_field(dims, dtype, rng(), scale, offset, name);
  if (u(rng) < 0.25) {
    std::normal_distribution<double> heavy(0, 20 * scale);
    for (int k = 0; k < 3; ++k) {
      const double v = offset + heavy(rng);
      f.data[rng() % f.size()] = dtype == Dtype::f32 ? static_cast<double>(static_cast<float>(v)) : v;
    }
  }
  return f;
}

struct BoundStats {
  std::size_t cases = 0, violations = 0, skipped = 0, hash_checks = 0, hash_mismatches = 0;
};

// Compresses inputs, decompresses the serialized archive and checks every
// field's bound and its code and cross-field hashes.
void check_round_trip(const std::vector<FieldInput>& inputs, const ErrorBoundSpec& eb, BoundStats& st) {
  CompressOptions opt;
  opt.eb = eb;
  CompressionResult res;
  try {
    res = compress_fields(inputs, opt);
  } catch (const PrecisionError&) {
    ++st.skipped;
    return;
  }
  auto out = decompress_archive(read_archive(write_archive(res.archive)));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    ++st.cases;
    const double bound = resolve_error_bound(eb, inputs[i].field);
    if (metrics::max_abs_error(inputs[i].field, out[i].field) > bound) ++st.violations;
    ++st.hash_checks;
    if (fnv1a(out[i].codes) != res.stats[i].code_hash) ++st.hash_mismatches;
    if (res.stats[i].predictor == PredictorKind::hybrid) {
      ++st.hash_checks;
      if (out[i].dquant_hash != res.stats[i].dquant_hash) ++st.hash_mismatches;
    }
  }
}

BoundStats error_bound_cases() {
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> u(0, 1);
  const Bytes trained = read_file(xfc::testing::fixture("synthetic_T.cfw"));
  BoundStats st;
  for (int trial = 0; st.cases < 1200; ++trial) {
    const bool three = trial % 2 == 0;
    Dims dims = three ? Dims{4 + rng() % 12, 4 + rng() % 12, 4 + rng() % 12} : Dims{4 + rng() % 40, 4 + rng() % 40};
    const Dtype dtype = (trial / 2) % 2 ? Dtype::f64 : Dtype::f32;
    const int config = (trial / 4) % 3;  // lorenzo, hybrid zero model, hybrid trained model
    const double rel = std::pow(10.0, -6 + 5 * u(rng));
    std::vector<FieldInput> in;
    auto add = [&](const std::string& name) {
      FieldInput fi;
      fi.field = random_case_field(dims, dtype, rng, name);
      in.push_back(std::move(fi));
    };
    if (config == 0) {
      add("t");
    } else {
      const std::uint16_t n = config == 2 && three ? 2 : 1 + static_cast<std::uint16_t>(rng() % 2);
      for (std::uint16_t a = 0; a < n; ++a) add("a" + std::to_string(a));
      add("t");
      for (std::uint16_t a = 0; a < n; ++a) in.back().anchors.push_back("a" + std::to_string(a));
      in.back().model = config == 2 && three ? trained : zero_model(static_cast<std::uint8_t>(dims.size()), n);
    }
    if (trial % 8 < 4) {
      check_round_trip(in, {EbMode::relative, rel}, st);
    } else {
      auto [lo, hi] = value_range(in.back().field);
      check_round_trip(in, {EbMode::absolute, rel * (hi - lo)}, st);
    }
  }
  return st;
}

void codec_round_trip() {
  using namespace huffman;
  std::mt19937_64 rng(77);
  std::geometric_distribution<int> small(0.1);
  const Code r = kDefaultRadius;
  const std::array<Code, 10> edges{r, -r, r - 1, -r - 1, r + 1, Code{1} << 40, -(Code{1} << 40), static_cast<Code>(kCodeLimit / 2),
                                   -static_cast<Code>(kCodeLimit / 2), 0};
  std::vector<Code> d(1000000);
  std::size_t edge_count = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (rng() % 50 == 0) {
      d[i] = edges[rng() % edges.size()];
      ++edge_count;
    } else {
      d[i] = (rng() % 2 ? 1 : -1) * static_cast<Code>(small(rng));
    }
  }
  auto table = build_code_table(histogram(d));
  auto enc = encode_deltas(d, table);
  auto bits = backend_decode(backend_encode(enc.bitstream, Backend::deflate), Backend::deflate);
  auto outliers = decode_outliers(encode_outliers(enc.outliers));
  bool ok = decode_deltas(bits, parse_table(serialize_table(table)), outliers, d.size()) == d;

  std::size_t within = 0;
  double worst = -1e300;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::uint64_t> h(alphabet_size(kDefaultRadius), 0);
    const int used = 1 + static_cast<int>(rng() % 300);
    for (int k = 0; k < used; ++k) h[rng() % h.size()] += 1 + rng() % (trial % 2 ? 100 : 1000000);
    auto t = build_code_table(h);
    const double gap = average_code_length(h, t) - entropy_bits(h);
    worst = std::max(worst, gap);
    if (gap <= 1.0 + 1e-12) ++within;
  }
  report(ok && within == 100, "codec_round_trip",
         fmt("10^6 deltas (%zu boundary values, %zu escapes) %s; %zu/100 histograms avg length <= entropy+1 "
             "(max excess %.4f bits)",
             edge_count, enc.outliers.size(), ok ? "decoded exactly" : "MISMATCH", within, worst));
}

void lorenzo_exactness() {
  std::mt19937_64 rng(5);
  std::size_t checked = 0, nonzero = 0;
  for (int trial = 0; trial < 40; ++trial) {
    Dims dims = trial % 2 ? Dims{5 + rng() % 20, 5 + rng() % 20} : Dims{3 + rng() % 9, 3 + rng() % 9, 3 + rng() % 9};
    std::uniform_int_distribution<Code> coef(-1000, 1000);
    const Code c0 = coef(rng) * 1000, cz = coef(rng), cy = coef(rng), cx = coef(rng);
    Grid g(dims);
    std::vector<Code> q(g.size());
    std::size_t idx = 0;
    for (std::size_t z = 0; z < g.nz; ++z)
      for (std::size_t y = 0; y < g.ny; ++y)
        for (std::size_t x = 0; x < g.nx; ++x, ++idx)
          q[idx] = c0 + cz * static_cast<Code>(z) + cy * static_cast<Code>(y) + cx * static_cast<Code>(x);
    auto d = predict_field_lorenzo(PrequantField{dims, Dtype::f64, 0.5, q});
    idx = 0;
    for (std::size_t z = 0; z < g.nz; ++z)
      for (std::size_t y = 0; y < g.ny; ++y)
        for (std::size_t x = 0; x < g.nx; ++x, ++idx)
          if (y > 0 && x > 0 && (dims.size() == 2 || z > 0)) {
            ++checked;
            if (d.deltas[idx] != 0) ++nonzero;
          }
  }
  report(nonzero == 0, "lorenzo_exactness",
         fmt("%zu interior deltas over 40 random 2D/3D integer affine ramps, %zu nonzero", checked, nonzero));
}

double sample_mse(const PredictorSamples& s, const std::vector<double>& w, double bias) {
  double acc = 0;
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double p = bias;
    for (std::size_t c = 0; c < s.cols; ++c) p += w[c] * s.x[r * s.cols + c];
    acc += (p - s.y[r]) * (p - s.y[r]);
  }
  return acc / static_cast<double>(s.rows());
}

void fit_dominance() {
  std::mt19937_64 rng(99);
  int dominated = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t cols = 3 + trial % 2;
    std::normal_distribution<double> truth(0, 500), noise(0, 1 + trial % 17);
    PredictorSamples s{cols, {}, {}};
    for (int r = 0; r < 300; ++r) {
      const double y = std::round(truth(rng));
      for (std::size_t c = 0; c < cols; ++c)
        s.x.push_back(std::round(y * (1 + 0.01 * static_cast<double>(c)) + noise(rng) * static_cast<double>(c + 1)));
      s.y.push_back(y);
    }
    auto w = fit_hybrid_weights(s);
    const double fitted = sample_mse(s, w.weights, w.bias);
    bool ok = true;
    for (std::size_t k = 0; k < cols; ++k) {
      std::vector<double> unit(cols, 0.0);
      unit[k] = 1.0;
      ok = ok && fitted <= sample_mse(s, unit, 0.0) * (1 + 1e-9);
    }
    dominated += ok;
  }

  // y = 2 p0 - p1 + 0 p2 + 0 p3 + 3, solved against a dense QR oracle.
  PredictorSamples s{4, {}, {}};
  std::uniform_int_distribution<Code> v(-5000, 5000);
  for (int r = 0; r < 500; ++r) {
    double p[4];
    for (double& x : p) x = static_cast<double>(v(rng));
    s.x.insert(s.x.end(), p, p + 4);
    s.y.push_back(2 * p[0] - p[1] + 3);
  }
  auto w = fit_hybrid_weights(s);
  Eigen::MatrixXd a(s.rows(), 5);
  Eigen::VectorXd y(s.rows());
  for (std::size_t r = 0; r < s.rows(); ++r) {
    for (std::size_t c = 0; c < 4; ++c) a(r, c) = s.x[r * 4 + c];
    a(r, 4) = 1.0;
    y(r) = s.y[r];
  }
  Eigen::VectorXd o = a.colPivHouseholderQr().solve(y);
  const std::array<double, 5> expect{2, -1, 0, 0, 3};
  double dev_oracle = 0, dev_truth = 0;
  for (std::size_t c = 0; c < 5; ++c) {
    const double got = c < 4 ? w.weights[c] : w.bias;
    dev_oracle = std::max(dev_oracle, std::fabs(got - o(static_cast<Eigen::Index>(c))));
    dev_truth = std::max(dev_truth, std::fabs(got - expect[c]));
  }
  report(dominated == 100 && dev_oracle <= 1e-6 && dev_truth <= 1e-6, "hybrid_fit_dominance",
         fmt("%d/100 fits beat every single predictor; recovery max deviation %.2e vs oracle, %.2e vs truth",
             dominated, dev_oracle, dev_truth));
}

std::vector<FieldInput> synthetic_inputs(const Dims& dims) {
  auto ds = synthetic::make_crossfield_dataset(dims);
  std::vector<FieldInput> in(3);
  in[0].field = ds.anchor_a;
  in[1].field = ds.anchor_b;
  in[2].field = ds.target;
  in[2].anchors = {"A", "B"};
  in[2].model = read_file(xfc::testing::fixture("synthetic_T.cfw"));
  return in;
}

CompressOptions rel_opts(double eb, bool baseline) {
  CompressOptions opt;
  opt.eb = {EbMode::relative, eb};
  opt.lorenzo_only = baseline;
  return opt;
}

void synthetic_gain_and_equality() {
  auto in = synthetic_inputs({64, 64, 64});
  std::size_t original = 0;
  for (const auto& f : in) original += f.field.source_bytes();
  auto base = compress_fields(in, rel_opts(1e-3, true));
  auto hyb = compress_fields(in, rel_opts(1e-3, false));
  const auto base_bytes = write_archive(base.archive), hyb_bytes = write_archive(hyb.archive);
  const double cr_base = metrics::compression_ratio(original, base_bytes.size());
  const double cr_hyb = metrics::compression_ratio(original, hyb_bytes.size());
  const auto& t = hyb.stats[2];
  const double target_gain = static_cast<double>(base.stats[2].compressed_bytes) / static_cast<double>(t.compressed_bytes);
  report(cr_hyb >= 1.05 * cr_base, "synthetic_crossfield_gain",
         fmt("64^3 x3 fields at rel 1e-3: archive CR lorenzo %.4f, hybrid %.4f (%+.2f%%, model %zu bytes included); "
             "target alone %+.2f%%",
             cr_base, cr_hyb, 100 * (cr_hyb / cr_base - 1), t.model_bytes, 100 * (target_gain - 1)));

  // Distortion equality: both configurations decode to the same values.
  std::size_t fields = 0, identical = 0;
  auto compare = [&](const CompressionResult& a, const CompressionResult& b) {
    auto da = decompress_archive(read_archive(write_archive(a.archive)));
    auto db = decompress_archive(read_archive(write_archive(b.archive)));
    for (std::size_t i = 0; i < da.size(); ++i) {
      ++fields;
      if (da[i].field.data == db[i].field.data && da[i].codes == db[i].codes) ++identical;
    }
  };
  compare(base, hyb);
  auto small = synthetic_inputs({24, 20, 16});
  for (double eb : {1e-2, 1e-4}) compare(compress_fields(small, rel_opts(eb, true)), compress_fields(small, rel_opts(eb, false)));
  report(identical == fields, "baseline_hybrid_distortion_equality",
         fmt("%zu/%zu decompressed fields bit-identical between lorenzo-only and hybrid archives", identical, fields));
}

void determinism() {
  auto in = synthetic_inputs({32, 32, 32});
  set_thread_count(1);
  auto a = write_archive(compress_fields(in, rel_opts(1e-3, false)).archive);
  auto b = write_archive(compress_fields(in, rel_opts(1e-3, false)).archive);
  set_thread_count(4);
  auto c = write_archive(compress_fields(in, rel_opts(1e-3, false)).archive);
  auto dec4 = decompress_archive(read_archive(c));
  set_thread_count(1);
  auto dec1 = decompress_archive(read_archive(c));
  bool decoded_same = true;
  for (std::size_t i = 0; i < dec1.size(); ++i) decoded_same = decoded_same && dec1[i].field.data == dec4[i].field.data;
  report(a == b && a == c && decoded_same, "determinism",
         fmt("repeat run %s, 4 threads vs 1 %s (%zu bytes), decoded fields %s", a == b ? "identical" : "DIFFERS",
             a == c ? "identical" : "DIFFERS", a.size(), decoded_same ? "identical" : "DIFFER"));
}

} // namespace

int main() {
  try {
    auto t0 = std::chrono::steady_clock::now();
    auto st = error_bound_cases();
    const double secs = seconds_since(t0);
    report(st.violations == 0 && st.cases >= 1000 && secs < 60.0, "error_bound_guarantee",
           fmt("%zu (field, eb) cases over 2D/3D, abs/rel, f32/f64, lorenzo/hybrid: %zu violations, "
               "%zu runs below source precision skipped, %.1f s",
               st.cases, st.violations, st.skipped, secs));
    report(st.hash_mismatches == 0 && st.hash_checks > 0, "dual_quant_consistency",
           fmt("%zu code and cross-field hash comparisons, %zu mismatches", st.hash_checks, st.hash_mismatches));
    codec_round_trip();
    lorenzo_exactness();
    fit_dominance();
    synthetic_gain_and_equality();
    determinism();
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance: unexpected error: %s\n", e.what());
    return 1;
  }
  return failures == 0 ? 0 : 1;
}
