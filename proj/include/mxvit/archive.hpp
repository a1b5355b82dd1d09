// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

// Packed MXInt tensor archive. All integers are little-endian.
//
//   "MXVA"  u32 version  u32 tensor_count
//   per tensor:
//     u32 name_length  name bytes
//     u8 class (0 weight, 1 activation)  u8 rank  u64 dims[rank]
//     u8 mantissa_bits  u32 block_size  u8 exponent_bits  u64 block_count
//     exponents: one signed byte each (two when exponent_bits > 8)
//     mantissas: block_count * block_size values, each sign-extended to
//                ceil(mantissa_bits / 8) bytes

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mxvit/mxint.hpp"

namespace mxvit {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct ArchiveEntry {
  std::string name;
  MXIntTensor tensor;
  friend bool operator==(const ArchiveEntry&, const ArchiveEntry&) = default;
};

std::vector<std::uint8_t> encode_archive(std::span<const ArchiveEntry> entries);
// Throws IoError on truncated or malformed input.
std::vector<ArchiveEntry> decode_archive(std::span<const std::uint8_t> bytes);

// Round-trip error of one quantized tensor against its source values.
struct QuantStats {
  std::string name;
  std::string tensor_class;
  std::size_t elements = 0;
  std::size_t saturated = 0;
  double max_abs_error = 0.0;
  // Largest error / 2^(E-1) over non-saturated elements; <= 1 by design.
  double max_half_step_ratio = 0.0;
};

QuantStats quant_stats(const std::string& name, std::span<const double> source,
                       const MXIntTensor& q);

}  // namespace mxvit
