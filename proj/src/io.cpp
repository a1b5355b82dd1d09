// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxvit/io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mxvit/error.hpp"

namespace mxvit {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return data;
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_bytes(const std::filesystem::path& path,
                 std::span<const std::uint8_t> data) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            std::streamsize(data.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(path, std::span<const std::uint8_t>(
                        reinterpret_cast<const std::uint8_t*>(text.data()),
                        text.size()));
}

std::vector<double> decode_f32(std::span<const std::uint8_t> bytes) {
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint32_t bits = std::uint32_t(bytes[4 * i]) |
                               std::uint32_t(bytes[4 * i + 1]) << 8 |
                               std::uint32_t(bytes[4 * i + 2]) << 16 |
                               std::uint32_t(bytes[4 * i + 3]) << 24;
    out[i] = double(std::bit_cast<float>(bits));
  }
  return out;
}

std::vector<double> read_f32(const std::filesystem::path& path,
                             std::size_t expected) {
  const auto bytes = read_bytes(path);
  if (bytes.size() % 4 != 0) {
    throw IoError(path.string() + ": size is not a multiple of 4 bytes");
  }
  if (expected != 0 && bytes.size() != expected * 4) {
    throw IoError(path.string() + ": expected " + std::to_string(expected) +
                  " floats, found " + std::to_string(bytes.size() / 4));
  }
  return decode_f32(bytes);
}

std::string sha256_hex(std::span<const std::uint8_t> data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) !=
      1) {
    throw IoError("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace mxvit
