// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <random>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "mxvit/config.hpp"
#include "mxvit/eval.hpp"
#include "mxvit/io.hpp"

using namespace mxvit;
namespace fs = std::filesystem;

namespace {

std::vector<double> randn(std::mt19937_64& rng, std::size_t n, double sd) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

ModelWeights random_model(const ModelDims& d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelWeights w;
  w.dims = d;
  const double s_in = 1.0 / std::sqrt(double(d.patch_dim()));
  const double s_d = 1.0 / std::sqrt(double(d.dim));
  const double s_m = 1.0 / std::sqrt(double(d.mlp_dim));
  w.embed_w = randn(rng, d.dim * d.patch_dim(), s_in);
  w.embed_b = randn(rng, d.dim, 0.1);
  w.cls_token = randn(rng, d.dim, 0.5);
  w.pos_embed = randn(rng, d.tokens() * d.dim, 0.1);
  for (std::size_t l = 0; l < d.layers; ++l) {
    BlockWeights b;
    b.dim = d.dim;
    b.heads = d.heads;
    b.head_dim = d.head_dim();
    b.mlp_dim = d.mlp_dim;
    b.ln1_gamma = std::vector<double>(d.dim, 1.0);
    b.ln1_beta = randn(rng, d.dim, 0.1);
    for (std::size_t h = 0; h < d.heads; ++h) {
      b.wq.push_back(randn(rng, b.head_dim * d.dim, s_d));
      b.wk.push_back(randn(rng, b.head_dim * d.dim, s_d));
      b.wv.push_back(randn(rng, b.head_dim * d.dim, s_d));
      b.bq.push_back(randn(rng, b.head_dim, 0.1));
      b.bk.push_back(randn(rng, b.head_dim, 0.1));
      b.bv.push_back(randn(rng, b.head_dim, 0.1));
    }
    b.wo = randn(rng, d.dim * d.dim, s_d);
    b.bo = randn(rng, d.dim, 0.1);
    b.ln2_gamma = std::vector<double>(d.dim, 1.0);
    b.ln2_beta = randn(rng, d.dim, 0.1);
    b.wu = randn(rng, d.mlp_dim * d.dim, s_d);
    b.bu = randn(rng, d.mlp_dim, 0.1);
    b.wd = randn(rng, d.dim * d.mlp_dim, s_m);
    b.bd = randn(rng, d.dim, 0.1);
    w.blocks.push_back(std::move(b));
  }
  w.norm_gamma = std::vector<double>(d.dim, 1.0);
  w.norm_beta = randn(rng, d.dim, 0.1);
  w.head_w = randn(rng, d.classes * d.dim, s_d);
  w.head_b = randn(rng, d.classes, 0.1);
  return w;
}

ModelDims small_dims(std::size_t layers) {
  ModelDims d;
  d.image_size = 8;
  d.patch_size = 4;
  d.dim = 16;
  d.heads = 2;
  d.mlp_dim = 32;
  d.layers = layers;
  d.classes = 3;
  return d;
}

EffectiveConfig high_precision() {
  EffectiveConfig c;
  c.quant.weight_mantissa_bits = 16;
  c.quant.activation_mantissa_bits = 16;
  c.quant.accumulator_mantissa_bits = 16;
  c.nonlinear.layernorm_lut_bits = 8;
  c.nonlinear.gelu_lut_bits = 8;
  c.nonlinear.softmax_r_bits = 8;
  return c;
}

using Trace = std::map<std::string, std::vector<double>>;

TraceFn recorder(Trace& t) {
  return [&t](const std::string& name, std::size_t, std::size_t,
              std::span<const double> v) { t[name].assign(v.begin(), v.end()); };
}

double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double e = 0, r = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    e = std::max(e, std::fabs(a[i] - b[i]));
    r = std::max(r, std::fabs(b[i]));
  }
  return e / r;
}

fs::path data_dir() { return fs::path(MXVIT_DATA_DIR); }
fs::path golden_dir() { return fs::path(MXVIT_GOLDEN_DIR); }

// Round-to-nearest-even on a 2^exp grid.
double on_grid(double v, int exp) {
  return std::ldexp(std::nearbyint(std::ldexp(v, -exp)), exp);
}

// Exponent an m-bit block picks for a block maximum `max_abs`.
int block_exp(double max_abs, int m) {
  int e = 0;
  std::frexp(max_abs, &e);
  return (e - 1) - (m - 2);
}

double gelu_ref(double x) { return 0.5 * x * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("patchify orders patches row-major with row-major pixels") {
  ModelDims d = small_dims(0);
  std::vector<double> img(64);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = double(i);
  const auto p = patchify(img, d);
  REQUIRE(p.size() == 4 * 16);
  CHECK(p[0] == 0);
  CHECK(p[3] == 3);
  CHECK(p[4] == 8);      // second pixel row of the first patch
  CHECK(p[16] == 4);     // first pixel of the second patch
  CHECK(p[32] == 32);    // third patch starts on image row 4
  CHECK_THROWS_AS(patchify(std::vector<double>(10), d), ConfigError);
}

TEST_CASE("L = 0 model matches the reference at high precision") {
  const auto w = random_model(small_dims(0), 11);
  const auto c = high_precision();
  const ModelRunner mx(w, Mode::kMxint, c.quant, c.nonlinear);
  const ModelRunner ref(w, Mode::kReference, c.quant, c.nonlinear);
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const auto img = randn(rng, w.dims.input_size(), 1.0);
    CHECK(rel_error(mx.logits(img), ref.logits(img)) < 0.02);
  }
}

TEST_CASE("same input twice gives bit-identical logits") {
  const auto w = random_model(small_dims(2), 3);
  EffectiveConfig c;
  const ModelRunner mx(w, Mode::kMxint, c.quant, c.nonlinear);
  std::mt19937_64 rng(9);
  const auto img = randn(rng, w.dims.input_size(), 1.0);
  const auto a = mx.logits(img);
  const auto b = mx.logits(img);
  CHECK(a == b);
}

TEST_CASE("both paths emit the same named intermediates in order") {
  const auto w = random_model(small_dims(1), 4);
  EffectiveConfig c;
  std::vector<std::string> names_mx, names_ref;
  auto rec = [](std::vector<std::string>& out) {
    return [&out](const std::string& n, std::size_t, std::size_t,
                  std::span<const double>) { out.push_back(n); };
  };
  const std::vector<double> img(w.dims.input_size(), 0.25);
  ModelRunner(w, Mode::kMxint, c.quant, c.nonlinear).logits(img, rec(names_mx));
  ModelRunner(w, Mode::kReference, c.quant, c.nonlinear)
      .logits(img, rec(names_ref));
  const std::vector<std::string> expected = {
      "embed",         "block0.ln1",      "block0.attn_scores",
      "block0.softmax", "block0.attn_heads", "block0.attn_proj",
      "block0.ln2",    "block0.mlp_up",   "block0.gelu",
      "block0.mlp_down", "block0.output", "final_norm",
      "logits"};
  CHECK(names_mx == expected);
  CHECK(names_ref == expected);
}

TEST_CASE("zeroing W_D makes the block output equal the LN2 output") {
  auto w = random_model(small_dims(2), 21);
  for (auto& b : w.blocks) {
    std::fill(b.wd.begin(), b.wd.end(), 0.0);
    std::fill(b.bd.begin(), b.bd.end(), 0.0);
  }
  EffectiveConfig c;
  std::mt19937_64 rng(2);
  for (int t = 0; t < 5; ++t) {
    const auto img = randn(rng, w.dims.input_size(), 1.0);
    for (Mode mode : {Mode::kMxint, Mode::kReference}) {
      Trace tr;
      ModelRunner(w, mode, c.quant, c.nonlinear).logits(img, recorder(tr));
      for (int l = 0; l < 2; ++l) {
        const std::string p = "block" + std::to_string(l);
        CHECK(tr[p + ".output"] == tr[p + ".ln2"]);
      }
    }
  }
}

TEST_CASE("one-token single-head block matches a hand trace") {
  // dim 4, one head, identity projections, zero biases. LN1 has gamma 0 so
  // X_n = beta1 = [1, -1, 1, -1] whatever X is.
  ModelDims d;
  d.image_size = 2;
  d.patch_size = 2;
  d.dim = 4;
  d.heads = 1;
  d.mlp_dim = 4;
  d.layers = 1;
  d.classes = 2;
  ModelWeights w = random_model(d, 1);
  const std::vector<double> eye = {1, 0, 0, 0, 0, 1, 0, 0,
                                   0, 0, 1, 0, 0, 0, 0, 1};
  const std::vector<double> zero(4, 0.0);
  auto& b = w.blocks[0];
  b.ln1_gamma = zero;
  b.ln1_beta = {1, -1, 1, -1};
  b.wq = {eye};
  b.wk = {eye};
  b.wv = {eye};
  b.bq = b.bk = b.bv = {zero};
  b.wo = eye;
  b.bo = zero;
  b.ln2_gamma = {1, 1, 1, 1};
  b.ln2_beta = zero;
  b.wu = eye;
  b.bu = zero;
  b.wd = eye;
  b.bd = zero;
  EffectiveConfig c;  // W6 A8, LUT bits 5/5/2, a = 3
  const QuantModel q = quantize_model(w, c.quant, c.nonlinear);
  const MXIntTensor x = quantize_tensor(std::vector<double>{3, 1, 0.5, -2},
                                        {1, 4}, c.quant,
                                        TensorClass::kActivation);
  Trace tr;
  const MXIntTensor out =
      run_block_mxint(x, q.blocks[0], q, recorder(tr), "b");

  const std::vector<double> xn = {1, -1, 1, -1};
  CHECK(tr["b.ln1"] == xn);
  // Q.K = 4, scaled by 1/sqrt(4) as an exponent shift.
  CHECK(tr["b.attn_scores"] == std::vector<double>{2.0});
  // A single score normalizes to exactly 1.
  CHECK(tr["b.softmax"] == std::vector<double>{1.0});
  CHECK(tr["b.attn_heads"] == xn);
  CHECK(tr["b.attn_proj"] == xn);

  // LN2 of [2,-2,2,-2]: mean 0, variance 4 = 1.0 * 2^2 (even exponent), so
  // 1/sqrt(4) = LUT(1.0) / 2. LUT(1.0) is the left edge of the bucket that
  // holds 1.0, stored with 5 + 4 fractional bits.
  const int inv_bits = 5;
  const double step = 1.5 / double(1 << inv_bits);
  const double edge = 0.5 + std::floor((1.0 - 0.5) / step) * step;
  const double entry = on_grid(1.0 / std::sqrt(edge), -(inv_bits + 4));
  const double ln = on_grid(2.0 * entry / 2.0, block_exp(entry, 8));
  const std::vector<double> bn = {ln, -ln, ln, -ln};
  CHECK(tr["b.ln2"] == bn);
  CHECK(tr["b.mlp_up"] == bn);

  // GELU LUT over [-3, 3) with 32 buckets, entries at 9 fractional bits,
  // snapped to the input block's grid.
  auto gelu_lut = [&](double v) {
    const double gs = 6.0 / 32.0;
    const double left = -3.0 + std::floor((v + 3.0) / gs) * gs;
    const double e = on_grid(gelu_ref(left), -9);
    return on_grid(e, block_exp(ln, 8));
  };
  const double gp = gelu_lut(ln);
  const double gn = gelu_lut(-ln);
  CHECK(tr["b.gelu"] == std::vector<double>{gp, gn, gp, gn});

  const int de = block_exp(std::max(std::fabs(gp), std::fabs(gn)), 8);
  const double dp = on_grid(gp, de);
  const double dn = on_grid(gn, de);
  CHECK(tr["b.mlp_down"] == std::vector<double>{dp, dn, dp, dn});

  const double op = dp + ln;
  const double on = dn - ln;
  const int oe = block_exp(std::max(std::fabs(op), std::fabs(on)), 8);
  const std::vector<double> o = {on_grid(op, oe), on_grid(on, oe),
                                 on_grid(op, oe), on_grid(on, oe)};
  CHECK(tr["b.output"] == o);
  CHECK(out.dequantize() == o);
}

TEST_CASE("random tiny block stays inside the recorded error bound") {
  ModelDims d = small_dims(1);
  d.dim = 32;
  d.heads = 2;
  d.mlp_dim = 64;
  const auto w = random_model(d, 77);
  EffectiveConfig c;
  const QuantModel q = quantize_model(w, c.quant, c.nonlinear);
  std::mt19937_64 rng(78);
  const std::size_t tokens = 8;
  const auto x = randn(rng, tokens * d.dim, 1.0);
  const auto xq = quantize_tensor(x, {tokens, d.dim}, c.quant,
                                  TensorClass::kActivation);
  const auto got = run_block_mxint(xq, q.blocks[0], q).dequantize();
  const auto ref =
      run_block_reference(xq.dequantize(), tokens, w.blocks[0], c.nonlinear);
  double err = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    err = std::max(err, std::fabs(got[i] - ref[i]));
  }
  const auto golden = nlohmann::json::parse(
      read_text(golden_dir() / "tiny_block_error.json"));
  MESSAGE("tiny block max error " << std::setprecision(17) << err);
  CHECK(err <= golden.at("bound").get<double>());
  CHECK(err == doctest::Approx(golden.at("measured").get<double>()).epsilon(1e-12));
}

TEST_CASE("shape errors name the block step") {
  const auto w = random_model(small_dims(1), 8);
  EffectiveConfig c;
  const QuantModel q = quantize_model(w, c.quant, c.nonlinear);
  const auto bad = quantize_tensor(std::vector<double>(3 * 8, 0.5), {3, 8},
                                   c.quant, TensorClass::kActivation);
  try {
    run_block_mxint(bad, q.blocks[0], q);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("LayerNorm(X)") != std::string::npos);
  }
}

TEST_CASE("model_stats counts the toy model") {
  const ModelStats s = model_stats(ModelDims{});
  // embed 32x16+32, per block 12704, norm 64, head 4x32+4.
  CHECK(s.weight_elements == 544 + 2 * 12704 + 64 + 132);
  // patches 256 + embed 512 + tokens 544, per block 11560, final 32 + 4.
  CHECK(s.activation_elements == 1312 + 2 * 11560 + 36);
}

TEST_CASE("manifest loading checks files and digests") {
  const fs::path tmp = fs::temp_directory_path() / "mxvit_manifest_test";
  fs::remove_all(tmp);
  fs::copy(data_dir() / "toy_vit", tmp);
  CHECK_NOTHROW(load_weights(load_manifest(tmp)));

  SUBCASE("digest mismatch") {
    auto bytes = read_bytes(tmp / "head.bias.f32");
    bytes[0] ^= 1;
    write_bytes(tmp / "head.bias.f32", bytes);
    CHECK_THROWS_AS(load_weights(load_manifest(tmp)), IoError);
  }
  SUBCASE("missing weight file") {
    fs::remove(tmp / "cls_token.f32");
    CHECK_THROWS_AS(load_weights(load_manifest(tmp)), IoError);
  }
  SUBCASE("missing manifest") {
    CHECK_THROWS_AS(load_manifest(tmp / "nope"), IoError);
  }
  SUBCASE("bad dimensions") {
    auto doc = nlohmann::json::parse(read_text(tmp / "manifest.json"));
    doc["model"]["heads"] = 5;
    write_text(tmp / "manifest.json", doc.dump());
    CHECK_THROWS_AS(load_manifest(tmp), ConfigError);
  }
  SUBCASE("manifest config sections") {
    auto doc = nlohmann::json::parse(read_text(tmp / "manifest.json"));
    doc["quant"] = {{"weight_mantissa_bits", 5}};
    doc["nonlinear"] = {{"gelu_domain", 4.0}};
    write_text(tmp / "manifest.json", doc.dump());
    const auto m = load_manifest(tmp);
    REQUIRE(m.quant.has_value());
    CHECK(m.quant->weight_mantissa_bits == 5);
    CHECK(m.nonlinear->gelu_domain == 4.0);
  }
  fs::remove_all(tmp);
}

TEST_CASE("dataset loading") {
  const fs::path tmp = fs::temp_directory_path() / "mxvit_dataset_test";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  write_text(tmp / "labels.csv", "file,label\n");
  CHECK_THROWS_AS(load_dataset(tmp, 256), IoError);
  CHECK_THROWS_AS(load_dataset(tmp / "missing", 256), IoError);
  const std::vector<std::uint8_t> four(16, 0);
  write_bytes(tmp / "a.f32", four);
  write_text(tmp / "labels.csv", "file,label\na.f32,1\n");
  CHECK_THROWS_AS(load_dataset(tmp, 256), ConfigError);
  const Dataset ok = load_dataset(tmp, 4);
  CHECK(ok.size() == 1);
  CHECK(ok.samples[0].label == 1);
  fs::remove_all(tmp);
}

TEST_CASE("bundled toy model accuracy matches the golden record") {
  const auto w = load_weights(load_manifest(data_dir() / "toy_vit"));
  const auto data = load_dataset(data_dir() / "toy_eval", w.dims.input_size());
  const auto golden =
      nlohmann::json::parse(read_text(golden_dir() / "toy_accuracy.json"));
  EffectiveConfig c;
  const auto ref =
      evaluate(ModelRunner(w, Mode::kReference, c.quant, c.nonlinear), data);
  const auto mx =
      evaluate(ModelRunner(w, Mode::kMxint, c.quant, c.nonlinear), data);
  const auto hp = high_precision();
  const auto hi =
      evaluate(ModelRunner(w, Mode::kMxint, hp.quant, hp.nonlinear), data);
  CHECK(ref.total == golden.at("samples").get<std::size_t>());
  CHECK(ref.correct == golden.at("reference_correct").get<std::size_t>());
  CHECK(mx.correct == golden.at("mxint_default_correct").get<std::size_t>());
  CHECK(hi.correct == golden.at("mxint_m16_correct").get<std::size_t>());
  // Every prediction agrees with the reference at high precision.
  CHECK(hi.predictions == ref.predictions);
  CHECK(agreement(hi.predictions, ref.predictions) == 100.0);
  CHECK(ref.accuracy - mx.accuracy <= 1.0);
}

TEST_CASE("evaluation does not depend on the thread count") {
  const auto w = load_weights(load_manifest(data_dir() / "toy_vit"));
  auto data = load_dataset(data_dir() / "toy_eval", w.dims.input_size());
  data.samples.resize(24);
  EffectiveConfig c;
  const ModelRunner mx(w, Mode::kMxint, c.quant, c.nonlinear);
  const auto a = evaluate(mx, data, 1);
  const auto b = evaluate(mx, data, 3);
  CHECK(a.predictions == b.predictions);
  CHECK(a.logits == b.logits);
  // Reversing the sample order reverses the outputs.
  Dataset rev = data;
  std::reverse(rev.samples.begin(), rev.samples.end());
  const auto r = evaluate(mx, rev, 2);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(r.logits[data.size() - 1 - i] == a.logits[i]);
  }
}

TEST_CASE("parse_mode and agreement") {
  CHECK(parse_mode("mxint") == Mode::kMxint);
  CHECK(parse_mode("reference") == Mode::kReference);
  CHECK_THROWS_AS(parse_mode("fp8"), ConfigError);
  CHECK(agreement({1, 2, 3, 4}, {1, 2, 0, 4}) == 75.0);
  CHECK_THROWS_AS(agreement({1}, {1, 2}), ConfigError);
}
