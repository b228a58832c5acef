#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"

using namespace xfc;
using xfc::testing::random_field;

namespace {

CompressOptions options(EbMode mode, double eb) {
  CompressOptions opt;
  opt.eb = {mode, eb};
  return opt;
}

// A network that copies each anchor difference channel to the output:
// conv1 splits every input into its positive and negative parts, the
// depthwise and pointwise stages pass them through, the gate saturates near
// one and conv2 recombines the two parts.
Bytes copy_model(std::uint8_t ndim) {
  auto c = cfnn::Config::for_anchors(ndim, 1, static_cast<std::uint16_t>(2 * ndim), ndim);
  auto w = cfnn::Weights::zeros(c);
  const std::size_t t = c.taps(), center = t / 2, h = c.hidden;
  for (std::size_t a = 0; a < ndim; ++a) {
    w.params[cfnn::conv1_w][((2 * a) * c.c_in + a) * t + center] = 1.0f;
    w.params[cfnn::conv1_w][((2 * a + 1) * c.c_in + a) * t + center] = -1.0f;
    w.params[cfnn::conv2_w][(a * h + 2 * a) * t + center] = 1.0f;
    w.params[cfnn::conv2_w][(a * h + 2 * a + 1) * t + center] = -1.0f;
  }
  for (std::size_t k = 0; k < h; ++k) {
    w.params[cfnn::dw_w][k * t + center] = 1.0f;
    w.params[cfnn::pw_w][k * h + k] = 1.0f;
    w.params[cfnn::fc2_b][k] = 40.0f;
  }
  return cfnn::serialize_weights(w);
}

Bytes zero_model(std::uint8_t ndim, std::uint16_t anchors) {
  return cfnn::serialize_weights(cfnn::Weights::zeros(cfnn::Config::for_anchors(ndim, anchors)));
}

std::vector<FieldInput> anchor_target(const Field& anchor, const Field& target, Bytes model) {
  std::vector<FieldInput> in(2);
  in[0].field = anchor;
  in[1].field = target;
  in[1].anchors = {anchor.name};
  in[1].model = std::move(model);
  return in;
}

} // namespace

TEST(Pipeline, LorenzoRoundTripHonorsBound) {
  for (Dtype t : {Dtype::f32, Dtype::f64})
    for (Dims dims : {Dims{17, 23}, Dims{9, 10, 11}, Dims{1, 1, 1}, Dims{1, 5}})
      for (auto [mode, eb] : {std::pair{EbMode::absolute, 1e-2}, std::pair{EbMode::relative, 1e-4}}) {
        auto f = random_field(dims, t, 11, 30.0, 5.0);
        if (mode == EbMode::relative && f.size() == 1) continue;
        std::vector<FieldInput> in(1);
        in[0].field = f;
        auto res = compress_fields(in, options(mode, eb));
        auto bytes = write_archive(res.archive);
        auto out = decompress_archive(read_archive(bytes));
        const double bound = resolve_error_bound({mode, eb}, f);
        EXPECT_LE(metrics::max_abs_error(f, out[0].field), bound);
        EXPECT_EQ(out[0].field.dims, dims);
        EXPECT_EQ(out[0].field.dtype, t);
      }
}

TEST(Pipeline, HybridDecodesToCompressorCodes) {
  auto a = random_field({12, 13, 14}, Dtype::f32, 1, 5.0, 0.0, "a");
  auto b = random_field({12, 13, 14}, Dtype::f32, 2, 3.0, 1.0, "b");
  std::vector<FieldInput> in(3);
  in[0].field = a;
  in[1].field = b;
  in[2].field = random_field({12, 13, 14}, Dtype::f32, 3, 4.0, 0.0, "t");
  in[2].anchors = {"a", "b"};
  in[2].model = zero_model(3, 2);
  auto res = compress_fields(in, options(EbMode::relative, 1e-3));
  ASSERT_EQ(res.stats[2].predictor, PredictorKind::hybrid);
  auto out = decompress_archive(read_archive(write_archive(res.archive)));
  EXPECT_EQ(fnv1a(out[2].codes), res.stats[2].code_hash);
  EXPECT_EQ(out[2].dquant_hash, res.stats[2].dquant_hash);
  EXPECT_LE(metrics::max_abs_error(in[2].field, out[2].field), res.stats[2].eb_abs);
}

TEST(Pipeline, LorenzoFieldDecodesWithoutModel) {
  std::vector<FieldInput> in(1);
  in[0].field = random_field({8, 8, 8}, Dtype::f32, 4);
  auto res = compress_fields(in, options(EbMode::absolute, 1e-3));
  const auto& rec = res.archive.fields[0];
  EXPECT_TRUE(rec.streams[stream::model_blob].empty());
  EXPECT_TRUE(rec.streams[stream::hybrid_weights].empty());
  auto out = decompress_field(rec);
  EXPECT_LE(metrics::max_abs_error(in[0].field, out.field), 1e-3);
}

TEST(Pipeline, CopyModelMakesResidualsVanish) {
  for (std::uint8_t ndim : {std::uint8_t{2}, std::uint8_t{3}}) {
    Dims dims = ndim == 2 ? Dims{40, 50} : Dims{16, 18, 20};
    auto a = random_field(dims, Dtype::f32, 5, 10.0, 0.0, "a");
    auto t = a;
    t.name = "t";
    auto res = compress_fields(anchor_target(a, t, copy_model(ndim)), options(EbMode::absolute, 1e-3));
    const auto& st = res.stats[1];
    EXPECT_GT(st.zero_fraction, 0.99) << "ndim " << int(ndim);
    EXPECT_LT(st.compressed_bytes - st.model_bytes, res.stats[0].compressed_bytes);
    auto out = decompress_archive(res.archive);
    EXPECT_EQ(out[1].codes, out[0].codes);
  }
}

TEST(Pipeline, ZeroModelStillHonorsBound) {
  auto a = random_field({10, 11, 12}, Dtype::f64, 6, 2.0, 0.0, "a");
  auto t = random_field({10, 11, 12}, Dtype::f64, 7, 9.0, 3.0, "t");
  auto res = compress_fields(anchor_target(a, t, zero_model(3, 1)), options(EbMode::relative, 1e-4));
  auto out = decompress_archive(res.archive);
  EXPECT_LE(metrics::max_abs_error(t, out[1].field), res.stats[1].eb_abs);
}

TEST(Pipeline, RecompressionIsStableInAbsoluteMode) {
  auto a = random_field({10, 12, 14}, Dtype::f32, 8, 4.0, 0.0, "a");
  auto t = random_field({10, 12, 14}, Dtype::f32, 9, 6.0, 0.0, "t");
  auto opt = options(EbMode::absolute, 2e-3);
  auto first = compress_fields(anchor_target(a, t, copy_model(3)), opt);
  auto out = decompress_archive(first.archive);
  auto second = compress_fields(anchor_target(out[0].field, out[1].field, copy_model(3)), opt);
  EXPECT_EQ(write_archive(first.archive), write_archive(second.archive));
}

TEST(Pipeline, DeterministicAcrossThreadCounts) {
  auto ds = synthetic::make_crossfield_dataset({20, 22, 24}, 5);
  std::vector<FieldInput> in(3);
  in[0].field = ds.anchor_a;
  in[1].field = ds.anchor_b;
  in[2].field = ds.target;
  in[2].anchors = {"A", "B"};
  in[2].model = read_file(xfc::testing::fixture("synthetic_T.cfw"));
  set_thread_count(1);
  auto one = write_archive(compress_fields(in, options(EbMode::relative, 1e-3)).archive);
  set_thread_count(4);
  auto four = write_archive(compress_fields(in, options(EbMode::relative, 1e-3)).archive);
  auto decoded = decompress_archive(read_archive(four));
  set_thread_count(1);
  EXPECT_EQ(one, four);
  auto again = decompress_archive(read_archive(one));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(decoded[i].codes, again[i].codes);
}

TEST(Pipeline, BaselineAndHybridBothReproduceTheirCodes) {
  auto ds = synthetic::make_crossfield_dataset({16, 16, 16}, 3);
  std::vector<FieldInput> in(3);
  in[0].field = ds.anchor_a;
  in[1].field = ds.anchor_b;
  in[2].field = ds.target;
  in[2].anchors = {"A", "B"};
  in[2].model = read_file(xfc::testing::fixture("synthetic_T.cfw"));
  for (bool baseline : {true, false}) {
    auto opt = options(EbMode::relative, 1e-3);
    opt.lorenzo_only = baseline;
    auto res = compress_fields(in, opt);
    EXPECT_EQ(res.stats[2].predictor, baseline ? PredictorKind::lorenzo : PredictorKind::hybrid);
    auto out = decompress_archive(read_archive(write_archive(res.archive)));
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(fnv1a(out[i].codes), res.stats[i].code_hash);
      EXPECT_LE(metrics::max_abs_error(in[i].field, out[i].field), res.stats[i].eb_abs);
    }
  }
}

TEST(Pipeline, AnchorOrderIsEnforced) {
  auto a = random_field({6, 6}, Dtype::f32, 1, 1.0, 0.0, "a");
  auto in = anchor_target(a, random_field({6, 6}, Dtype::f32, 2, 1.0, 0.0, "t"), zero_model(2, 1));
  std::swap(in[0], in[1]);
  EXPECT_THROW(compress_fields(in, options(EbMode::absolute, 1e-2)), ArgumentError);
}

TEST(Pipeline, ModelShapeMismatchIsArgumentError) {
  auto a = random_field({6, 6, 6}, Dtype::f32, 1, 1.0, 0.0, "a");
  auto t = random_field({6, 6, 6}, Dtype::f32, 2, 1.0, 0.0, "t");
  EXPECT_THROW(compress_fields(anchor_target(a, t, zero_model(3, 2)), options(EbMode::absolute, 1e-2)),
               ArgumentError);
  EXPECT_THROW(compress_fields(anchor_target(a, t, zero_model(2, 1)), options(EbMode::absolute, 1e-2)),
               ArgumentError);
}

TEST(Pipeline, MissingWeightFileIsManifestError) {
  xfc::testing::TempDir dir("plan");
  auto a = random_field({4, 4}, Dtype::f32, 1, 1.0, 0.0, "A");
  store_raw_field(dir.path / "A.f32", a);
  store_raw_field(dir.path / "T.f32", a);
  std::istringstream text("field A\nfile A.f32\ndims 4 4\nrole anchor\n\n"
                          "field T\nfile T.f32\ndims 4 4\nrole target\nanchors A\ncfnn missing.cfw\n");
  auto plan = validate_manifest(parse_manifest(text, dir.path));
  EXPECT_THROW(load_plan_inputs(plan), ManifestError);
}

// ---- metrics -----------------------------------------------------------------

TEST(Metrics, PsnrWorkedValue) {
  auto orig = make_field("o", {2, 2}, Dtype::f64, {0.0, 1.0, 0.0, 1.0});
  auto recon = make_field("r", {2, 2}, Dtype::f64, {1e-3, 1.0 - 1e-3, -1e-3, 1.0 + 1e-3});
  EXPECT_NEAR(metrics::mse(orig, recon), 1e-6, 1e-18);
  EXPECT_NEAR(metrics::psnr(orig, recon), 60.0, 1e-9);
  EXPECT_TRUE(std::isinf(metrics::psnr(orig, orig)));
  EXPECT_NEAR(metrics::max_abs_error(orig, recon), 1e-3, 1e-15);
  auto flat = make_field("c", {2, 2}, Dtype::f64, {1, 1, 1, 1});
  EXPECT_THROW(metrics::psnr(flat, flat), DegenerateFieldError);
}

TEST(Metrics, RatioAndBitrate) {
  EXPECT_EQ(metrics::compression_ratio(4000, 400), 10.0);
  // CR 16 on f32 data is 2 bits per point.
  EXPECT_EQ(metrics::bitrate(1000 * 4 / 16, 1000), 2.0);
  EXPECT_THROW(metrics::compression_ratio(10, 0), ArgumentError);
}

TEST(Metrics, SweepHasTwoRowsPerFieldAndBound) {
  auto a = random_field({8, 9, 10}, Dtype::f32, 1, 2.0, 0.0, "a");
  auto t = random_field({8, 9, 10}, Dtype::f32, 2, 2.0, 0.0, "t");
  auto in = anchor_target(a, t, zero_model(3, 1));
  std::vector<double> bounds{1e-2, 1e-3};
  auto rows = metrics::rate_distortion_sweep(in, EbMode::relative, bounds);
  ASSERT_EQ(rows.size(), 2u * 2u * bounds.size());
  for (const auto& r : rows) {
    EXPECT_LE(r.max_err, r.eb_abs);
    EXPECT_GT(r.cr, 0.0);
  }
  // Anchors are compressed the same way in both configurations.
  EXPECT_EQ(rows[0].cr, rows[2].cr);
  EXPECT_EQ(rows[0].config, "lorenzo");
  EXPECT_EQ(rows[2].config, "hybrid");
  std::ostringstream csv;
  metrics::write_csv(csv, rows);
  const std::string text = csv.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), metrics::kCsvHeader);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), static_cast<long>(rows.size() + 1));
}
