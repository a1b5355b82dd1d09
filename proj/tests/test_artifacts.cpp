// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "mxvit/compare.hpp"
#include "mxvit/config.hpp"
#include "mxvit/error.hpp"
#include "mxvit/lut.hpp"

using namespace mxvit;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

LutTable table(LutKind kind, int bits) {
  switch (kind) {
    case LutKind::kInvSqrt: return build_inv_sqrt_lut(bits);
    case LutKind::kGelu: return build_gelu_lut(bits, 3.0);
    default: return build_pow2_lut(bits);
  }
}

double oracle(LutKind kind, double x) {
  switch (kind) {
    case LutKind::kInvSqrt: return 1.0 / std::sqrt(x);
    case LutKind::kGelu: return 0.5 * x * std::erfc(-x / std::sqrt(2.0));
    default: return std::exp2(x);
  }
}

}  // namespace

TEST_CASE("lut hex dumps match the frozen goldens") {
  const fs::path dir(MXVIT_GOLDEN_DIR);
  const struct {
    LutKind kind;
    int bits;
  } cases[] = {{LutKind::kInvSqrt, 5}, {LutKind::kInvSqrt, 8},
               {LutKind::kGelu, 5},    {LutKind::kGelu, 8},
               {LutKind::kPow2, 2},    {LutKind::kPow2, 8}};
  for (const auto& c : cases) {
    const std::string name =
        std::string(to_string(c.kind)) + "_" + std::to_string(c.bits) + ".hex";
    CAPTURE(name);
    const auto t = table(c.kind, c.bits);
    const std::string golden = slurp(dir / name);
    CHECK(lut_to_hex(t) == golden);

    // The golden words themselves sit within half an entry step of the
    // function at each bucket's evaluation point.
    LutTable g = t;
    load_lut_hex(g, golden);
    const double half = std::ldexp(0.5, -t.frac_bits);
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(std::abs(g.entry_value(i) - oracle(c.kind, g.eval_point_at(i))) <=
            half);
    }
  }
}

TEST_CASE("two-bit pow2 table") {
  const auto t = build_pow2_lut(2);
  CHECK(lut_to_hex(t) == "40\n4c\n5b\n6c\n");
  CHECK(t.entry_value(0) == 1.0);
  CHECK(lut_to_csv(t).rfind("index,input,entry,value\n0,", 0) == 0);
}

TEST_CASE("load_lut_hex round trip and errors") {
  auto t = build_gelu_lut(4, 3.0);
  const auto saved = t.entries;
  load_lut_hex(t, lut_to_hex(t));
  CHECK(t.entries == saved);
  CHECK_THROWS(load_lut_hex(t, "00\n01\n"));
  CHECK_THROWS(load_lut_hex(t, std::string(16, 'z')));
}

TEST_CASE("layer comparison localizes a corrupted table") {
  const fs::path data(MXVIT_DATA_DIR);
  const auto w = load_weights(load_manifest(data / "toy_vit"));
  const auto set = load_dataset(data / "toy_eval", w.dims.input_size());
  EffectiveConfig c;
  c.quant.weight_mantissa_bits = 16;
  c.quant.activation_mantissa_bits = 16;
  c.quant.accumulator_mantissa_bits = 16;
  c.nonlinear.layernorm_lut_bits = 8;
  c.nonlinear.gelu_lut_bits = 8;
  const ModelRunner ref(w, Mode::kReference, c.quant, c.nonlinear);

  SUBCASE("high precision flags nothing") {
    c.nonlinear.softmax_r_bits = 8;
    const ModelRunner mx(w, Mode::kMxint, c.quant, c.nonlinear);
    const auto r = compare_modes(mx, ref, set, kDefaultCompareThreshold, 4);
    CHECK(r.samples == set.samples.size());
    CHECK(!r.first_flagged);
    CHECK(r.layers.front().name == "embed");
    CHECK(r.layers.back().name == "logits");
    for (const auto& l : r.layers) CHECK(l.max_rel < 0.1);
  }
  SUBCASE("rotated pow2 table trips block0.softmax first") {
    c.nonlinear.softmax_r_bits = 2;
    auto luts = LutSet::build(c.nonlinear);
    load_lut_hex(luts.pow2,
                 slurp(fs::path(MXVIT_FIXTURE_DIR) / "pow2_2_rotated.hex"));
    const ModelRunner mx(w, Mode::kMxint, c.quant, c.nonlinear, luts);
    const auto r = compare_modes(mx, ref, set, kDefaultCompareThreshold, 4);
    REQUIRE(r.first_flagged);
    CHECK(r.layers[*r.first_flagged].name == "block0.softmax");
    const auto csv = compare_csv(r);
    CHECK(csv.find("block0.softmax") != std::string::npos);
  }
  SUBCASE("empty dataset") {
    const ModelRunner mx(w, Mode::kMxint, c.quant, c.nonlinear);
    CHECK_THROWS_AS(compare_modes(mx, ref, Dataset{}), IoError);
  }
}
