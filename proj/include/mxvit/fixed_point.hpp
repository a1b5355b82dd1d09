// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

// Integer helpers shared by every datapath: rounding shifts, exact dyadic
// values and the small normalized floating-point pair used for variances
// and divisions.

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>

#include "mxvit/error.hpp"

namespace mxvit {

using i128 = __int128;

// Number of bits needed to hold |v| (0 for v == 0).
constexpr int bit_length(std::uint64_t v) noexcept {
  return 64 - std::countl_zero(v);
}

constexpr std::uint64_t magnitude(std::int64_t v) noexcept {
  return v < 0 ? std::uint64_t(0) - std::uint64_t(v) : std::uint64_t(v);
}

constexpr int bit_length_signed(std::int64_t v) noexcept {
  return bit_length(magnitude(v));
}

// Floor division of a by 2^shift (arithmetic right shift). shift <= 0 is a
// left shift, which must not overflow.
inline std::int64_t shift_floor(std::int64_t v, int shift) {
  if (shift >= 63) return v < 0 ? -1 : 0;
  if (shift >= 0) return v >> shift;
  if (-shift >= 63 || (v != 0 && bit_length_signed(v) - shift > 62)) {
    throw NumericError("left shift overflows 64-bit register");
  }
  return v * (std::int64_t(1) << -shift);
}

// v / 2^shift rounded to nearest, ties to even. shift <= 0 is an exact left
// shift.
inline std::int64_t shift_round_even(std::int64_t v, int shift) {
  if (shift <= 0) return shift_floor(v, shift);
  if (shift >= 64) return 0;
  const i128 wide = v;
  const i128 q = wide >> shift;  // floor
  const i128 rem = wide - (q << shift);
  const i128 half = i128(1) << (shift - 1);
  if (rem > half || (rem == half && (q & 1) != 0)) return std::int64_t(q + 1);
  return std::int64_t(q);
}

// a / b rounded to nearest, ties to even. b must be non-zero.
inline i128 div_round_even(i128 a, i128 b) {
  if (b < 0) {
    a = -a;
    b = -b;
  }
  i128 q = a / b;
  i128 r = a % b;
  if (r < 0) {  // normalise to floor division
    q -= 1;
    r += b;
  }
  const i128 twice = 2 * r;
  if (twice > b || (twice == b && (q & 1) != 0)) q += 1;
  return q;
}

// Exact value mant * 2^exp.
struct Dyadic {
  std::int64_t mant = 0;
  int exp = 0;

  double to_double() const { return std::ldexp(double(mant), exp); }
};

// Positive normalized pair: value = (mant / 2^frac_bits) * 2^exp with
// mant in [2^frac_bits, 2^(frac_bits+1)), i.e. a significand in [1, 2).
struct MiniFloat {
  std::int64_t mant = 0;
  int frac_bits = 0;
  int exp = 0;

  double significand() const { return std::ldexp(double(mant), -frac_bits); }
  double to_double() const { return std::ldexp(double(mant), exp - frac_bits); }
  friend bool operator==(const MiniFloat&, const MiniFloat&) = default;
};

// Normalizes a positive integer (value * 2^exp) without rounding.
inline MiniFloat normalize_exact(std::int64_t value, int exp) {
  if (value <= 0) throw NumericError("normalize_exact: value must be positive");
  const int len = bit_length(std::uint64_t(value));
  return MiniFloat{value, len - 1, exp + len - 1};
}

}  // namespace mxvit
