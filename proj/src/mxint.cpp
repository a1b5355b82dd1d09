// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxvit/mxint.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

namespace mxvit {

const char* to_string(TensorClass cls) {
  return cls == TensorClass::kWeight ? "weight" : "activation";
}

void BlockFormat::validate() const {
  if (mantissa_bits < 2 || mantissa_bits > 16) {
    throw ConfigError("mantissa_bits must be in [2, 16], got " +
                      std::to_string(mantissa_bits));
  }
  if (block_size < 1) throw ConfigError("block_size must be >= 1");
  if (exponent_bits < 2 || exponent_bits > 16) {
    throw ConfigError("exponent_bits must be in [2, 16], got " +
                      std::to_string(exponent_bits));
  }
}

void QuantConfig::validate() const {
  format(TensorClass::kWeight).validate();
  format(TensorClass::kActivation).validate();
  const int widest = std::max(weight_mantissa_bits, activation_mantissa_bits);
  if (accumulator_mantissa_bits < widest) {
    throw ConfigError("accumulator_mantissa_bits (" +
                      std::to_string(accumulator_mantissa_bits) +
                      ") must be >= max mantissa width (" +
                      std::to_string(widest) + ")");
  }
  if (accumulator_mantissa_bits > 48) {
    throw ConfigError("accumulator_mantissa_bits must be <= 48");
  }
}

BlockFormat QuantConfig::format(TensorClass cls) const {
  if (cls == TensorClass::kWeight) {
    return {weight_mantissa_bits, std::size_t(std::max(weight_block_size, 0)),
            exponent_bits};
  }
  return {activation_mantissa_bits,
          std::size_t(std::max(activation_block_size, 0)), exponent_bits};
}

int QuantConfig::mantissa_bits(TensorClass cls) const {
  return cls == TensorClass::kWeight ? weight_mantissa_bits
                                     : activation_mantissa_bits;
}

bool MXIntBlock::is_zero() const {
  return std::all_of(mantissas.begin(), mantissas.end(),
                     [](std::int32_t m) { return m == 0; });
}

void check_block(const MXIntBlock& block, const BlockFormat& fmt) {
  if (block.mantissa_bits != fmt.mantissa_bits) {
    throw NumericError("block mantissa width differs from format");
  }
  if (block.size() != fmt.block_size) {
    throw NumericError("block length " + std::to_string(block.size()) +
                       " != block size " + std::to_string(fmt.block_size));
  }
  if (block.valid > block.size()) throw NumericError("valid count > size");
  for (std::size_t i = 0; i < block.size(); ++i) {
    const auto m = block.mantissas[i];
    if (m < fmt.mantissa_min() || m > fmt.mantissa_max()) {
      throw NumericError("mantissa " + std::to_string(m) + " at index " +
                         std::to_string(i) + " outside " +
                         std::to_string(fmt.mantissa_bits) + "-bit range");
    }
    if (i >= block.valid && m != 0) {
      throw NumericError("non-zero padding mantissa at index " +
                         std::to_string(i));
    }
  }
  if (block.exponent < fmt.exponent_min() ||
      block.exponent > fmt.exponent_max()) {
    throw NumericError("exponent " + std::to_string(block.exponent) +
                       " outside range");
  }
  if (block.is_zero() && block.exponent != fmt.exponent_min()) {
    throw NumericError("all-zero block must carry the minimum exponent");
  }
}

namespace {

MXIntBlock zero_block(const BlockFormat& fmt, std::size_t valid) {
  MXIntBlock b;
  b.exponent = fmt.exponent_min();
  b.mantissa_bits = fmt.mantissa_bits;
  b.mantissas.assign(fmt.block_size, 0);
  b.valid = valid;
  return b;
}

void check_block_input(std::size_t n, const BlockFormat& fmt) {
  fmt.validate();
  if (n == 0) throw ConfigError("quantize: empty block");
  if (n > fmt.block_size) {
    throw ConfigError("quantize: " + std::to_string(n) +
                      " values exceed block size " +
                      std::to_string(fmt.block_size));
  }
}

std::int32_t saturate(std::int64_t v, const BlockFormat& fmt) {
  // Symmetric range: -2^(m-1) is never produced by rounding so that a
  // re-quantized block keeps its exponent.
  const std::int64_t hi = fmt.mantissa_max();
  return std::int32_t(std::clamp<std::int64_t>(v, -hi, hi));
}

}  // namespace

MXIntBlock quantize_block(std::span<const double> values,
                          const BlockFormat& fmt) {
  check_block_input(values.size(), fmt);
  double max_abs = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError("quantize_block: non-finite value at index " +
                         std::to_string(i));
    }
    max_abs = std::max(max_abs, std::fabs(values[i]));
  }
  if (max_abs == 0.0) return zero_block(fmt, values.size());

  int frexp_exp = 0;
  std::frexp(max_abs, &frexp_exp);  // max_abs = f * 2^frexp_exp, f in [0.5,1)
  const int floor_log2 = frexp_exp - 1;
  const int exponent = std::clamp(floor_log2 - (fmt.mantissa_bits - 2),
                                  fmt.exponent_min(), fmt.exponent_max());

  MXIntBlock b = zero_block(fmt, values.size());
  b.exponent = exponent;
  const double hi = fmt.mantissa_max();
  for (std::size_t i = 0; i < values.size(); ++i) {
    // nearbyint honours the default round-to-nearest-even mode.
    const double scaled = std::nearbyint(std::ldexp(values[i], -exponent));
    b.mantissas[i] = std::int32_t(std::clamp(scaled, -hi, hi));
  }
  if (b.is_zero()) return zero_block(fmt, values.size());
  return b;
}

std::vector<double> dequantize_block(const MXIntBlock& block) {
  std::vector<double> out(block.size());
  for (std::size_t i = 0; i < block.size(); ++i) out[i] = block.value(i);
  return out;
}

MXIntBlock requantize_at(std::span<const Dyadic> values, int exponent,
                         const BlockFormat& fmt) {
  check_block_input(values.size(), fmt);
  MXIntBlock b = zero_block(fmt, values.size());
  b.exponent = std::clamp(exponent, fmt.exponent_min(), fmt.exponent_max());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& v = values[i];
    if (v.mant == 0) continue;
    const int shift = b.exponent - v.exp;
    if (shift < 0 && bit_length_signed(v.mant) - shift > 40) {
      b.mantissas[i] = v.mant < 0 ? -fmt.mantissa_max() : fmt.mantissa_max();
      continue;
    }
    b.mantissas[i] = saturate(shift_round_even(v.mant, shift), fmt);
  }
  if (b.is_zero()) return zero_block(fmt, values.size());
  return b;
}

MXIntBlock requantize(std::span<const Dyadic> values, const BlockFormat& fmt) {
  check_block_input(values.size(), fmt);
  bool any = false;
  int top = 0;
  for (const auto& v : values) {
    if (v.mant == 0) continue;
    const int msb = bit_length_signed(v.mant) - 1 + v.exp;
    top = any ? std::max(top, msb) : msb;
    any = true;
  }
  if (!any) return zero_block(fmt, values.size());
  return requantize_at(values, top - (fmt.mantissa_bits - 2), fmt);
}

std::size_t MXIntTensor::rows() const {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end() - 1, std::size_t(1),
                         std::multiplies<>());
}

std::size_t MXIntTensor::blocks_per_row() const {
  return (cols() + format.block_size - 1) / format.block_size;
}

std::size_t MXIntTensor::num_elements() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t(1),
                         std::multiplies<>());
}

std::span<const MXIntBlock> MXIntTensor::row(std::size_t r) const {
  const auto n = blocks_per_row();
  return std::span<const MXIntBlock>(blocks).subspan(r * n, n);
}

std::span<MXIntBlock> MXIntTensor::row(std::size_t r) {
  const auto n = blocks_per_row();
  return std::span<MXIntBlock>(blocks).subspan(r * n, n);
}

std::vector<double> MXIntTensor::dequantize() const {
  std::vector<double> out;
  out.reserve(num_elements());
  for (std::size_t r = 0; r < rows(); ++r) {
    for (const auto& b : row(r)) {
      for (std::size_t i = 0; i < b.valid; ++i) out.push_back(b.value(i));
    }
  }
  return out;
}

std::size_t MXIntTensor::stored_bits() const {
  return blocks.size() * std::size_t(format.exponent_bits) +
         num_elements_padded() * std::size_t(format.mantissa_bits);
}

namespace {

void check_shape(std::size_t n, const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw ConfigError("quantize_tensor: empty shape");
  const auto count = std::accumulate(shape.begin(), shape.end(), std::size_t(1),
                                     std::multiplies<>());
  if (count == 0) throw ConfigError("quantize_tensor: empty tensor");
  if (count != n) {
    throw ConfigError("quantize_tensor: shape holds " + std::to_string(count) +
                      " elements but " + std::to_string(n) + " were given");
  }
}

template <typename T, typename Fn>
MXIntTensor tile_rows(std::span<const T> values, std::vector<std::size_t> shape,
                      const BlockFormat& fmt, TensorClass cls, Fn&& make) {
  fmt.validate();
  check_shape(values.size(), shape);
  MXIntTensor t;
  t.shape = std::move(shape);
  t.tensor_class = cls;
  t.format = fmt;
  const std::size_t cols = t.cols();
  const std::size_t per_row = t.blocks_per_row();
  t.blocks.reserve(t.rows() * per_row);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t j = 0; j < per_row; ++j) {
      const std::size_t begin = j * fmt.block_size;
      const std::size_t len = std::min(fmt.block_size, cols - begin);
      try {
        t.blocks.push_back(make(values.subspan(r * cols + begin, len)));
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (row " +
                           std::to_string(r) + ", block " + std::to_string(j) +
                           ")");
      }
    }
  }
  return t;
}

}  // namespace

MXIntTensor quantize_tensor(std::span<const double> values,
                            std::vector<std::size_t> shape,
                            const BlockFormat& fmt, TensorClass cls) {
  return tile_rows(values, std::move(shape), fmt, cls,
                   [&](std::span<const double> v) {
                     return quantize_block(v, fmt);
                   });
}

MXIntTensor quantize_tensor(std::span<const double> values,
                            std::vector<std::size_t> shape,
                            const QuantConfig& cfg, TensorClass cls) {
  return quantize_tensor(values, std::move(shape), cfg.format(cls), cls);
}

MXIntTensor requantize_rows(std::span<const Dyadic> values, std::size_t rows,
                            std::size_t cols, const BlockFormat& fmt,
                            TensorClass cls) {
  return tile_rows(values, {rows, cols}, fmt, cls,
                   [&](std::span<const Dyadic> v) {
                     return requantize(v, fmt);
                   });
}

AlignedGroup align_blocks(std::span<const MXIntBlock> blocks) {
  if (blocks.empty()) throw ConfigError("align_blocks: no blocks");
  AlignedGroup g;
  g.mantissa_bits = blocks.front().mantissa_bits;
  g.common_exponent = blocks.front().exponent;
  for (const auto& b : blocks) {
    if (b.mantissa_bits != g.mantissa_bits) {
      throw ConfigError("align_blocks: mixed mantissa widths");
    }
    g.common_exponent = std::max(g.common_exponent, b.exponent);
  }
  for (const auto& b : blocks) {
    const int shift = std::min(g.common_exponent - b.exponent, 31);
    for (std::size_t i = 0; i < b.valid; ++i) {
      g.mantissas.push_back(b.mantissas[i] >> shift);
    }
  }
  return g;
}

MiniFloat to_minifloat(std::int64_t value, int exponent, int target_bits) {
  if (value <= 0) {
    throw NumericError("to_minifloat: value must be positive, got " +
                       std::to_string(value));
  }
  if (target_bits < 0 || target_bits > 60) {
    throw ConfigError("to_minifloat: target_bits out of range");
  }
  const int len = bit_length(std::uint64_t(value));
  std::int64_t mant = shift_round_even(value, (len - 1) - target_bits);
  int exp = exponent + len - 1;
  if (mant == (std::int64_t(1) << (target_bits + 1))) {
    mant >>= 1;
    ++exp;
  }
  return MiniFloat{mant, target_bits, exp};
}

}  // namespace mxvit
