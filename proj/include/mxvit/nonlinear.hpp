// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

// LUT-based LayerNorm, GELU and Softmax datapaths working on the mantissa
// domain of MXInt rows.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mxvit/lut.hpp"
#include "mxvit/mxint.hpp"

namespace mxvit {

struct NonlinearConfig {
  int layernorm_lut_bits = 5;
  int gelu_lut_bits = 5;
  double gelu_domain = 3.0;
  int softmax_r_bits = 2;
  // Only the double-precision reference path uses epsilon; the MXInt
  // LayerNorm drops it so the shared scale cancels.
  double epsilon = 1e-6;
  // Fractional bits of t = x*log2(e); 0 selects m_act + r_bits + 2.
  int exp_frac_bits = 0;

  void validate() const;
  friend bool operator==(const NonlinearConfig&,
                         const NonlinearConfig&) = default;
};

// The three tables a datapath needs, built once from a NonlinearConfig.
struct LutSet {
  LutTable inv_sqrt;
  LutTable gelu;
  LutTable pow2;

  static LutSet build(const NonlinearConfig& nl);
};

// 1/sqrt(v): the even/odd exponent split keeps the LUT input in [0.5, 2).
MiniFloat inv_sqrt(const MiniFloat& v, const LutTable& lut);

// Normalizes one row given as MXInt blocks. gamma and beta hold the row's
// affine parameters at weight precision. Returns a [1 x n] activation row.
MXIntTensor layernorm_mxint(std::span<const MXIntBlock> row,
                            const MXIntTensor& gamma, const MXIntTensor& beta,
                            const LutTable& lut, const QuantConfig& cfg);
MXIntTensor layernorm_rows(const MXIntTensor& x, const MXIntTensor& gamma,
                           const MXIntTensor& beta, const LutTable& lut,
                           const QuantConfig& cfg);

// Three-region GELU; the block exponent is forwarded unchanged.
MXIntBlock gelu_mxint(const MXIntBlock& x, const LutTable& lut,
                      int exponent_bits = 8);
MXIntTensor gelu_tensor(const MXIntTensor& x, const LutTable& lut);

struct ExpParts {
  std::int64_t n = 0;
  std::int64_t r_index = 0;
  friend bool operator==(const ExpParts&, const ExpParts&) = default;
};

// e^x = 2^n * 2^r with t = x*log2(e) rounded to `t_frac_bits` fractional
// bits, n = floor(t) clamped to [-n_limit, n_limit], r_index the top r_bits
// of r = t - n.
ExpParts exp_decompose(Dyadic x, int r_bits, int t_frac_bits,
                       std::int64_t n_limit);

// (num / den) with the significand ratio rounded to out_bits fractional
// bits and renormalized into [1, 2).
MiniFloat mxint_divide(const MiniFloat& num, const MiniFloat& den,
                       int out_bits);

// Division stage of Softmax over e^{x_i} held as (LUT entry, 2^n) pairs.
// Returns per-element probabilities as exact dyadics.
std::vector<Dyadic> softmax_from_pairs(std::span<const std::int64_t> entries,
                                       std::span<const std::int64_t> n,
                                       int entry_frac_bits,
                                       const QuantConfig& cfg);

MXIntTensor softmax_mxint(std::span<const MXIntBlock> row,
                          const LutTable& pow2, const QuantConfig& cfg,
                          const NonlinearConfig& nl);
MXIntTensor softmax_rows(const MXIntTensor& x, const LutTable& pow2,
                         const QuantConfig& cfg, const NonlinearConfig& nl);

}  // namespace mxvit
