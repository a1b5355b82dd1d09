// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

// Integer-only linear algebra on MXInt tensors. Every block pair costs one
// exponent addition; mantissa products are reduced exactly in an
// accumulator register and re-quantized once per output block.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "mxvit/mxint.hpp"

namespace mxvit {

int ceil_log2(std::size_t n);

// Signed register with `width` bits: |value| < 2^(width-1), value scaled by
// 2^scale_exponent.
struct Accumulator {
  std::int64_t value = 0;
  int scale_exponent = 0;
  int width = 0;

  std::int64_t capacity() const { return std::int64_t(1) << (width - 1); }
};

// Register width for reducing `terms` products of m_x- and m_w-bit
// mantissas. The stored magnitude width is the configured accumulator width,
// never narrower than an exact product, plus ceil(log2(terms)) guard bits
// and the sign bit.
int accumulator_width(const QuantConfig& cfg, int x_bits, int w_bits,
                      std::size_t terms);

struct BlockSlice {
  std::span<const std::int32_t> mantissas;
  int exponent = 0;
};

// sum_i x_i * w_i at exponent x_E + w_E. Throws NumericError when any
// running sum leaves the register.
Dyadic mxint_dot(BlockSlice x, BlockSlice w, int width);
Dyadic mxint_dot(const MXIntBlock& x, const MXIntBlock& w, int width);

// Reduces block partials into one register: partials are aligned onto a
// frame below the largest partial, keeping width-1 magnitude bits; bits
// under the frame are truncated toward zero. Exact whenever
// sum_j |p_j| * 2^(e_j - min e) < 2^(width-1). Order independent.
Accumulator accumulate_partials(std::span<const Dyadic> partials, int width);

// A (M x K) times B^T where B is given as N x K; both are blocked along K.
// Output is M x N, re-quantized per activation block.
MXIntTensor mxint_matmul(const MXIntTensor& a, const MXIntTensor& b_t,
                         const QuantConfig& cfg, int threads = 1);

struct LinearParams {
  MXIntTensor weights;  // out_features x in_features
  std::optional<MXIntTensor> bias;  // [out_features]

  std::size_t in_features() const { return weights.cols(); }
  std::size_t out_features() const { return weights.rows(); }
};

LinearParams make_linear(std::span<const double> weights, std::size_t out,
                         std::size_t in, std::span<const double> bias,
                         const QuantConfig& cfg);

// x * W^T + b; the bias joins the partial sums before re-quantization.
MXIntTensor mxint_linear(const MXIntTensor& x, const LinearParams& p,
                         const QuantConfig& cfg, int threads = 1);

// Block-wise a + b: both blocks shifted onto a common frame inside the
// accumulator, added exactly, re-quantized.
MXIntTensor residual_add(const MXIntTensor& a, const MXIntTensor& b,
                         const QuantConfig& cfg);

// Multiplies every element by a constant quantized to weight precision.
MXIntTensor scale_by_constant(const MXIntTensor& t, double c,
                              const QuantConfig& cfg);

// Multiplies by 1/sqrt(d_k): a pure exponent shift when d_k is a power of
// four, otherwise scale_by_constant.
MXIntTensor scale_attention(const MXIntTensor& scores, std::size_t d_k,
                            const QuantConfig& cfg);

// Regrouping helpers. Re-blocking moves values between blocks, so the
// result is re-quantized (round to nearest even) in `cls` format.
MXIntTensor transpose(const MXIntTensor& t, const QuantConfig& cfg,
                      TensorClass cls);
MXIntTensor concat_columns(std::span<const MXIntTensor> parts,
                           const QuantConfig& cfg, TensorClass cls);
MXIntTensor slice_columns(const MXIntTensor& t, std::size_t begin,
                          std::size_t count, const QuantConfig& cfg,
                          TensorClass cls);

}  // namespace mxvit
