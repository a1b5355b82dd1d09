// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mxvit {

// All helpers throw IoError with the offending path on failure.
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path,
                 std::span<const std::uint8_t> data);
void write_text(const std::filesystem::path& path, const std::string& text);

// Raw little-endian float32 file widened to double. `expected` of 0 accepts
// any length.
std::vector<double> read_f32(const std::filesystem::path& path,
                             std::size_t expected = 0);
std::vector<double> decode_f32(std::span<const std::uint8_t> bytes);

// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(const std::string& text);

}  // namespace mxvit
