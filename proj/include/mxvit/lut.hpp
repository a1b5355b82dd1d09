// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mxvit {

enum class LutKind { kInvSqrt, kGelu, kPow2 };
enum class EvalPoint { kLeftEdge, kMidpoint };

const char* to_string(LutKind kind);
LutKind parse_lut_kind(const std::string& name);

// Uniformly indexed table over [lo, hi). Entries are two's-complement
// fixed-point numbers with `frac_bits` fractional bits.
struct LutTable {
  LutKind kind = LutKind::kPow2;
  int index_bits = 0;
  double lo = 0.0;
  double hi = 1.0;
  int frac_bits = 0;
  EvalPoint eval_point = EvalPoint::kLeftEdge;
  std::vector<std::int64_t> entries;

  std::size_t size() const { return entries.size(); }
  double step() const;
  double eval_point_at(std::size_t i) const;
  double entry_value(std::size_t i) const;
  // Bucket holding x, clamped into [0, size).
  std::size_t index_of(double x) const;
  // Width of the stored two's-complement word (sign included).
  int entry_bits() const;
};

// Entry precision: index bits + 4 fractional bits.
int lut_frac_bits(int index_bits);

double gelu_exact(double x);

LutTable build_inv_sqrt_lut(int index_bits);
LutTable build_gelu_lut(int index_bits, double domain);
LutTable build_pow2_lut(int index_bits);

// Memory-initialization text: one entry per line, lowercase hex of the
// two's-complement word, ceil(entry_bits / 4) digits.
std::string lut_to_hex(const LutTable& t);
// index,input,entry,value with the input at the table's evaluation point.
std::string lut_to_csv(const LutTable& t);
// Replaces the entries of `t` with a hex dump. Each line is sign-extended
// from 4 bits per digit; the line count must equal the table size.
void load_lut_hex(LutTable& t, const std::string& text);

}  // namespace mxvit
