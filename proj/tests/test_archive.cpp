// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "mxvit/archive.hpp"
#include "mxvit/error.hpp"

using namespace mxvit;

namespace {

std::vector<double> random_values(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng) * std::exp2(int(rng() % 9) - 4);
  return v;
}

}  // namespace

TEST_CASE("archive byte layout of a single tiny tensor") {
  const std::vector<double> v{1.0, -0.5};
  BlockFormat fmt{4, 2, 8};
  // max 1.0 -> E = 0 - (4 - 2) = -2; mantissas 4 and -2.
  const auto t = quantize_tensor(v, {2}, fmt, TensorClass::kWeight);
  const std::vector<ArchiveEntry> entries{{"w", t}};
  const std::vector<std::uint8_t> expect{
      'M', 'X', 'V', 'A', 1, 0, 0, 0, 1, 0, 0, 0,  // magic, version, count
      1, 0, 0, 0, 'w',                             // name
      0, 1, 2, 0, 0, 0, 0, 0, 0, 0,                // class, rank, dims
      4, 2, 0, 0, 0, 8,                            // m, B, e
      1, 0, 0, 0, 0, 0, 0, 0,                      // block count
      0xfe,                                        // exponent -2
      0x04, 0xfe};                                 // mantissas 4, -2
  CHECK(encode_archive(entries) == expect);
}

TEST_CASE("wide mantissas and exponents use multi-byte fields") {
  const std::vector<double> v{1000.0, -3.0, 0.0};
  BlockFormat fmt{12, 4, 10};
  const auto t = quantize_tensor(v, {1, 3}, fmt, TensorClass::kActivation);
  const auto bytes = encode_archive(std::vector<ArchiveEntry>{{"a", t}});
  // header 12 + name 5 + class/rank 2 + dims 16 + fmt 6 + count 8
  // + exponent 2 + 4 mantissas x 2.
  CHECK(bytes.size() == 12 + 5 + 2 + 16 + 6 + 8 + 2 + 8);
  const auto back = decode_archive(bytes);
  REQUIRE(back.size() == 1);
  CHECK(back[0].tensor == t);
}

TEST_CASE("quantize, encode, decode, dequantize, quantize is byte-stable") {
  for (int m : {2, 4, 6, 8, 12, 16}) {
    for (std::size_t b : {16u, 256u}) {
      CAPTURE(m);
      CAPTURE(b);
      BlockFormat fmt{m, b, 8};
      const auto v = random_values(3 * 300, unsigned(m * 1000 + b));
      const auto t = quantize_tensor(v, {3, 300}, fmt, TensorClass::kWeight);
      const std::vector<ArchiveEntry> e1{{"x", t}};
      const auto bytes = encode_archive(e1);
      const auto decoded = decode_archive(bytes);
      REQUIRE(decoded == e1);
      const auto again = quantize_tensor(decoded[0].tensor.dequantize(),
                                         {3, 300}, fmt, TensorClass::kWeight);
      CHECK(encode_archive(std::vector<ArchiveEntry>{{"x", again}}) == bytes);
    }
  }
}

TEST_CASE("malformed archives raise IoError") {
  const auto v = random_values(40, 3);
  const auto t =
      quantize_tensor(v, {2, 20}, BlockFormat{6, 16, 8}, TensorClass::kWeight);
  const auto good = encode_archive(std::vector<ArchiveEntry>{{"t", t}});
  for (std::size_t cut : {std::size_t(0), std::size_t(3), std::size_t(11),
                          std::size_t(20), good.size() - 1}) {
    CAPTURE(cut);
    std::vector<std::uint8_t> bad(good.begin(), good.begin() + long(cut));
    CHECK_THROWS_AS(decode_archive(bad), IoError);
  }
  auto magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_archive(magic), IoError);
  auto trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_archive(trailing), IoError);
  auto version = good;
  version[4] = 9;
  CHECK_THROWS_AS(decode_archive(version), IoError);
}

TEST_CASE("quant_stats stays within the half-step bound") {
  for (int m : {3, 5, 8}) {
    BlockFormat fmt{m, 16, 8};
    const auto v = random_values(64 * 16, unsigned(m));
    const auto t = quantize_tensor(v, {64, 16}, fmt, TensorClass::kActivation);
    const auto s = quant_stats("v", v, t);
    CHECK(s.elements == v.size());
    CHECK(s.tensor_class == "activation");
    CHECK(s.max_half_step_ratio <= 1.0);
    // Oracle: recompute the worst absolute error from dequantized values.
    const auto d = t.dequantize();
    double worst = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      worst = std::max(worst, std::abs(d[i] - v[i]));
    }
    CHECK(s.max_abs_error == worst);
  }
}
