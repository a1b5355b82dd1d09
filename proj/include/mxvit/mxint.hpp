// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

// MXInt number format: a block of signed integer mantissas sharing one
// power-of-two exponent. value_i = mantissa_i * 2^exponent.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mxvit/fixed_point.hpp"

namespace mxvit {

enum class TensorClass { kWeight, kActivation };

const char* to_string(TensorClass cls);

// Bit-level shape of one block.
struct BlockFormat {
  int mantissa_bits = 8;
  std::size_t block_size = 16;
  int exponent_bits = 8;

  // Symmetric signed exponent range, e.g. [-127, 127] for 8 bits.
  int exponent_max() const { return (1 << (exponent_bits - 1)) - 1; }
  int exponent_min() const { return -exponent_max(); }
  std::int32_t mantissa_max() const { return (1 << (mantissa_bits - 1)) - 1; }
  std::int32_t mantissa_min() const { return -(1 << (mantissa_bits - 1)); }
  void validate() const;
  friend bool operator==(const BlockFormat&, const BlockFormat&) = default;
};

struct QuantConfig {
  int weight_mantissa_bits = 6;
  int activation_mantissa_bits = 8;
  int weight_block_size = 256;
  int activation_block_size = 16;
  int exponent_bits = 8;
  // Magnitude bits of the linear-operator accumulator. A reduction over k
  // terms gets ceil(log2(k)) guard bits on top, plus the sign bit.
  int accumulator_mantissa_bits = 12;

  void validate() const;
  BlockFormat format(TensorClass cls) const;
  int mantissa_bits(TensorClass cls) const;
  friend bool operator==(const QuantConfig&, const QuantConfig&) = default;
};

struct MXIntBlock {
  int exponent = -127;
  int mantissa_bits = 8;
  std::vector<std::int32_t> mantissas;
  // Leading elements that carry data; the rest is zero padding.
  std::size_t valid = 0;

  std::size_t size() const { return mantissas.size(); }
  bool is_zero() const;
  double value(std::size_t i) const {
    return std::ldexp(double(mantissas[i]), exponent);
  }
  friend bool operator==(const MXIntBlock&, const MXIntBlock&) = default;
};

// Checks the block invariants against `fmt`; throws NumericError naming the
// violated rule.
void check_block(const MXIntBlock& block, const BlockFormat& fmt);

// Exponent chosen so that floor(log2(max|v|)) lands on mantissa bit m-2.
MXIntBlock quantize_block(std::span<const double> values,
                          const BlockFormat& fmt);
std::vector<double> dequantize_block(const MXIntBlock& block);

// Round-to-nearest-even quantization of exact dyadic values into one block;
// integer-only route used to re-quantize datapath results.
MXIntBlock requantize(std::span<const Dyadic> values, const BlockFormat& fmt);

// Same as requantize but with a caller-chosen exponent (no normalization);
// mantissas saturate to the symmetric range.
MXIntBlock requantize_at(std::span<const Dyadic> values, int exponent,
                         const BlockFormat& fmt);

struct MXIntTensor {
  std::vector<std::size_t> shape;
  TensorClass tensor_class = TensorClass::kActivation;
  BlockFormat format;
  // Blocks run along the last dimension; each row (product of the leading
  // dimensions) starts a new block and is zero padded to a whole block.
  std::vector<MXIntBlock> blocks;

  std::size_t rows() const;
  std::size_t cols() const { return shape.empty() ? 0 : shape.back(); }
  std::size_t blocks_per_row() const;
  std::size_t block_axis() const { return shape.size() - 1; }
  std::size_t num_elements() const;
  std::size_t num_elements_padded() const {
    return blocks.size() * format.block_size;
  }

  std::span<const MXIntBlock> row(std::size_t r) const;
  std::span<MXIntBlock> row(std::size_t r);
  const MXIntBlock& block_of(std::size_t r, std::size_t c) const {
    return blocks[r * blocks_per_row() + c / format.block_size];
  }
  std::int32_t mantissa(std::size_t r, std::size_t c) const {
    return block_of(r, c).mantissas[c % format.block_size];
  }
  double value(std::size_t r, std::size_t c) const {
    return block_of(r, c).value(c % format.block_size);
  }

  std::vector<double> dequantize() const;
  // num_blocks * e_bits + num_elements_padded * m.
  std::size_t stored_bits() const;
  friend bool operator==(const MXIntTensor&, const MXIntTensor&) = default;
};

MXIntTensor quantize_tensor(std::span<const double> values,
                            std::vector<std::size_t> shape,
                            const QuantConfig& cfg, TensorClass cls);
MXIntTensor quantize_tensor(std::span<const double> values,
                            std::vector<std::size_t> shape,
                            const BlockFormat& fmt, TensorClass cls);

// Builds a row-blocked tensor from per-element dyadic values (row-major,
// rows x cols), re-quantizing each block with round-to-nearest-even.
MXIntTensor requantize_rows(std::span<const Dyadic> values, std::size_t rows,
                            std::size_t cols, const BlockFormat& fmt,
                            TensorClass cls);

struct AlignedGroup {
  int common_exponent = 0;
  int mantissa_bits = 0;
  // Valid (non-padding) elements of every member block, in order.
  std::vector<std::int32_t> mantissas;
};

// Right-shifts every block onto the largest member exponent. Bits shifted
// out are dropped (arithmetic shift, toward -inf).
AlignedGroup align_blocks(std::span<const MXIntBlock> blocks);

// Casts value * 2^exponent (value > 0) to a normalized pair with
// `target_bits` fractional significand bits, rounding to nearest even.
MiniFloat to_minifloat(std::int64_t value, int exponent, int target_bits);

}  // namespace mxvit
