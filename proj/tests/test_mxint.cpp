// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "mxvit/mxint.hpp"

using namespace mxvit;

namespace {

BlockFormat fmt(int m, std::size_t b) { return BlockFormat{m, b, 8}; }

std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo,
                            double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Independent oracle: exponent from a linear scan of powers of two.
int oracle_exponent(const std::vector<double>& v, int m) {
  double mx = 0;
  for (double x : v) mx = std::max(mx, std::fabs(x));
  int e = -1100;
  while (std::ldexp(1.0, e + 1) <= mx) ++e;
  return e - (m - 2);
}

double max_roundtrip_error(const std::vector<double>& v, int m) {
  const auto b = quantize_block(v, fmt(m, v.size()));
  const auto back = dequantize_block(b);
  double err = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    err = std::max(err, std::fabs(v[i] - back[i]));
  }
  return err;
}

}  // namespace

TEST_CASE("quantize_block: exact powers of two") {
  const std::vector<double> v = {1.0, 0.5, -0.25, 0.0};
  const auto b = quantize_block(v, fmt(8, 4));
  CHECK(b.exponent == -6);
  CHECK(b.mantissas == std::vector<std::int32_t>{64, 32, -16, 0});
  CHECK(b.valid == 4);
  CHECK(dequantize_block(b) == v);
}

TEST_CASE("quantize_block: all-zero block uses the minimum exponent") {
  const std::vector<double> v(4, 0.0);
  const auto b = quantize_block(v, fmt(8, 4));
  CHECK(b.exponent == -127);
  CHECK(b.is_zero());
  CHECK(dequantize_block(b) == v);
  CHECK_NOTHROW(check_block(b, fmt(8, 4)));
}

TEST_CASE("quantize_block: non-finite input names the index") {
  std::vector<double> v = {0.0, 1.0, NAN, 2.0};
  try {
    quantize_block(v, fmt(8, 4));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("index 2") != std::string::npos);
  }
  v[2] = INFINITY;
  CHECK_THROWS_AS(quantize_block(v, fmt(8, 4)), NumericError);
}

TEST_CASE("quantize_block: random blocks obey the half-step bound") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const auto v = uniform(rng, 16, -1.0, 1.0);
    const auto b = quantize_block(v, fmt(8, 16));
    CHECK(b.exponent == oracle_exponent(v, 8));
    const double half = std::ldexp(1.0, b.exponent - 1);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const bool saturated = std::abs(b.mantissas[i]) == 127;
      if (!saturated) CHECK(std::fabs(v[i] - b.value(i)) <= half);
    }
    CHECK_NOTHROW(check_block(b, fmt(8, 16)));
  }
}

TEST_CASE("quantize_block: ties round to even") {
  // 1.0 sets E = -2 for m = 4, so the grid step is 0.25.
  const std::vector<double> v = {1.0, 0.125, 0.375, -0.125};
  const auto b = quantize_block(v, fmt(4, 4));
  CHECK(b.exponent == -2);
  CHECK(b.mantissas == std::vector<std::int32_t>{4, 0, 2, 0});
}

TEST_CASE("quantize_block: boundary rounding saturates symmetrically") {
  // 1.99 normalizes to 127.36 at m = 8 -> rounds to 127; 1.999 -> 128 clamps.
  const std::vector<double> v = {1.999, -1.999};
  const auto b = quantize_block(v, fmt(8, 2));
  CHECK(b.exponent == -6);
  CHECK(b.mantissas == std::vector<std::int32_t>{127, -127});
}

TEST_CASE("dequantize round trip is identity on representable values") {
  // Every m = 4 mantissa pattern of a 3-element block at E = -3.
  const int e = -3;
  const auto f = fmt(4, 3);
  for (int a = -7; a <= 7; ++a) {
    for (int b = -7; b <= 7; ++b) {
      for (int c = -7; c <= 7; ++c) {
        const std::vector<double> v = {std::ldexp(a, e), std::ldexp(b, e),
                                       std::ldexp(c, e)};
        const auto q = quantize_block(v, f);
        REQUIRE(dequantize_block(q) == v);
        const int top = std::max({std::abs(a), std::abs(b), std::abs(c)});
        if (top >= 4) {
          CHECK(q.exponent == e);
          CHECK(q.mantissas == std::vector<std::int32_t>{a, b, c});
        }
      }
    }
  }
}

TEST_CASE("requantize agrees with quantize_block on exact dyadics") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::int64_t> mant(-100000, 100000);
  std::uniform_int_distribution<int> ex(-30, 10);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<Dyadic> d(16);
    std::vector<double> v(16);
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] = Dyadic{mant(rng), ex(rng)};
      v[i] = d[i].to_double();
    }
    const int m = 2 + int(trial % 15);
    REQUIRE(requantize(d, fmt(m, 16)) == quantize_block(v, fmt(m, 16)));
  }
}

TEST_CASE("quantize_tensor: tiling and padding") {
  std::mt19937_64 rng(3);
  QuantConfig cfg;
  SUBCASE("[2,16] with B=16 gives 2 blocks") {
    const auto v = uniform(rng, 32, -1, 1);
    const auto t = quantize_tensor(v, {2, 16}, cfg, TensorClass::kActivation);
    CHECK(t.blocks.size() == 2);
    CHECK(t.blocks_per_row() == 1);
  }
  SUBCASE("[1,20] with B=16 pads 12 zeros") {
    const auto v = uniform(rng, 20, 0.5, 1);
    const auto t = quantize_tensor(v, {1, 20}, cfg, TensorClass::kActivation);
    REQUIRE(t.blocks.size() == 2);
    CHECK(t.blocks[1].valid == 4);
    for (std::size_t i = 4; i < 16; ++i) CHECK(t.blocks[1].mantissas[i] == 0);
    CHECK(t.dequantize().size() == 20);
  }
  SUBCASE("4x256 weights: one block per row with the row's exponent") {
    auto v = uniform(rng, 4 * 256, -1, 1);
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 256; ++c) v[r * 256 + c] *= std::ldexp(1.0, 3 * r);
    }
    const auto t = quantize_tensor(v, {4, 256}, cfg, TensorClass::kWeight);
    REQUIRE(t.blocks.size() == 4);
    for (int r = 0; r < 4; ++r) {
      const std::vector<double> row(v.begin() + r * 256,
                                    v.begin() + (r + 1) * 256);
      CHECK(t.blocks[r].exponent == oracle_exponent(row, 6));
      CHECK(t.blocks[r].mantissa_bits == 6);
    }
  }
  SUBCASE("shape errors") {
    const auto v = uniform(rng, 10, -1, 1);
    CHECK_THROWS_AS(quantize_tensor(v, {3, 4}, cfg, TensorClass::kWeight),
                    ConfigError);
    CHECK_THROWS_AS(
        quantize_tensor(std::span<const double>{}, {0}, cfg, TensorClass::kWeight),
        ConfigError);
  }
}

TEST_CASE("align_blocks: shift semantics") {
  MXIntBlock a{0, 8, {3}, 1};
  MXIntBlock b{2, 8, {3}, 1};
  const MXIntBlock blocks[] = {a, b};
  const auto g = align_blocks(blocks);
  CHECK(g.common_exponent == 2);
  CHECK(g.mantissas == std::vector<std::int32_t>{0, 3});

  const MXIntBlock same[] = {MXIntBlock{-4, 8, {5, -7}, 2},
                             MXIntBlock{-4, 8, {1, 2}, 2}};
  const auto h = align_blocks(same);
  CHECK(h.common_exponent == -4);
  CHECK(h.mantissas == std::vector<std::int32_t>{5, -7, 1, 2});

  const MXIntBlock neg[] = {MXIntBlock{0, 8, {-3}, 1},
                            MXIntBlock{1, 8, {1}, 1}};
  CHECK(align_blocks(neg).mantissas.front() == -2);  // toward -inf
}

TEST_CASE("align_blocks: error bound and magnitude property") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> ex(-4, 4);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<MXIntBlock> blocks;
    std::vector<double> exact;
    for (int k = 0; k < 4; ++k) {
      auto v = uniform(rng, 16, -1, 1);
      for (auto& x : v) x = std::ldexp(x, ex(rng));
      blocks.push_back(quantize_block(v, fmt(8, 16)));
      for (std::size_t i = 0; i < 16; ++i) exact.push_back(blocks.back().value(i));
    }
    const auto g = align_blocks(blocks);
    int emax = -1000;
    for (const auto& b : blocks) emax = std::max(emax, b.exponent);
    CHECK(g.common_exponent == emax);
    for (std::size_t i = 0; i < exact.size(); ++i) {
      const double aligned = std::ldexp(g.mantissas[i], g.common_exponent);
      CHECK(std::fabs(aligned) <= std::fabs(exact[i]) + std::ldexp(1.0, emax));
      CHECK(std::abs(g.mantissas[i]) <=
            std::abs(blocks[i / 16].mantissas[i % 16]));
      CHECK(exact[i] - aligned >= 0.0);  // truncation toward -inf
      CHECK(exact[i] - aligned < std::ldexp(1.0, emax));
    }
  }
}

TEST_CASE("to_minifloat") {
  auto mf = to_minifloat(4, 0, 4);
  CHECK(mf.significand() == 1.0);
  CHECK(mf.exp == 2);
  mf = to_minifloat(3, 0, 4);
  CHECK(mf.significand() == 1.5);
  CHECK(mf.exp == 1);
  // frexp oracle: 1000003 * 2^-10 = f * 2^e with f in [0.5, 1).
  int e = 0;
  const double f = std::frexp(std::ldexp(1000003.0, -10), &e);
  const double want_sig = std::nearbyint(std::ldexp(2 * f, 4)) / 16.0;
  mf = to_minifloat(1000003, -10, 4);
  CHECK(mf.exp == e - 1);
  CHECK(mf.significand() == want_sig);
  // Rounding up to 2.0 renormalizes.
  mf = to_minifloat(31, 0, 3);  // 1.9375 * 2^4 -> 2.0 * 2^4
  CHECK(mf.significand() == 1.0);
  CHECK(mf.exp == 5);
  CHECK_THROWS_AS(to_minifloat(0, 0, 4), NumericError);
  CHECK_THROWS_AS(to_minifloat(-5, 0, 4), NumericError);
}

TEST_CASE("property: monotonic fidelity in mantissa width") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const auto v = uniform(rng, 16, -3, 3);
    for (int m = 2; m < 16; ++m) {
      const auto a = quantize_block(v, fmt(m, 16));
      const auto b = quantize_block(v, fmt(m + 1, 16));
      CHECK(b.exponent == a.exponent - 1);
      CHECK(max_roundtrip_error(v, m + 1) <= max_roundtrip_error(v, m));
    }
  }
}

TEST_CASE("property: exponent dominance") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = 2 + trial % 15;
    const auto v = uniform(rng, 16, -10, 10);
    const auto b = quantize_block(v, fmt(m, 16));
    int top = 0;
    for (auto x : b.mantissas) top = std::max(top, std::abs(x));
    CHECK(top >= (1 << (m - 2)));
  }
}

TEST_CASE("bits-per-element accounting") {
  std::vector<double> v(16 * 3, 0.25);
  const auto t = quantize_tensor(v, {3, 16}, BlockFormat{8, 16, 8},
                                 TensorClass::kActivation);
  CHECK(t.stored_bits() == 3 * 8 + 48 * 8);
  CHECK(double(t.stored_bits()) / double(t.num_elements()) == 8.5);
  const auto p = quantize_tensor(std::vector<double>(20, 1.0), {1, 20},
                                 BlockFormat{8, 16, 8}, TensorClass::kActivation);
  CHECK(p.stored_bits() == 2 * 8 + 32 * 8);
}

TEST_CASE("config validation") {
  QuantConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.accumulator_mantissa_bits = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = QuantConfig{};
  cfg.weight_mantissa_bits = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
