// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxvit/archive.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "mxvit/error.hpp"

namespace mxvit {

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void uint(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) out_.push_back(std::uint8_t(v >> (8 * i)));
  }
  void sint(std::int64_t v, int width) { uint(std::uint64_t(v), width); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::span<const std::uint8_t> bytes(std::size_t n) {
    if (n > in_.size() - pos_) throw IoError("archive truncated");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t uint(int width) {
    const auto s = bytes(std::size_t(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= std::uint64_t(s[i]) << (8 * i);
    return v;
  }
  std::int64_t sint(int width) {
    const std::uint64_t v = uint(width);
    const int shift = 64 - 8 * width;
    return std::int64_t(v << shift) >> shift;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

int exponent_width(int e_bits) { return e_bits > 8 ? 2 : 1; }
int mantissa_width(int m) { return (m + 7) / 8; }

}  // namespace

std::vector<std::uint8_t> encode_archive(
    std::span<const ArchiveEntry> entries) {
  Writer w;
  w.bytes("MXVA", 4);
  w.uint(kArchiveVersion, 4);
  w.uint(entries.size(), 4);
  for (const auto& e : entries) {
    const MXIntTensor& t = e.tensor;
    const BlockFormat& f = t.format;
    w.uint(e.name.size(), 4);
    w.bytes(e.name.data(), e.name.size());
    w.uint(t.tensor_class == TensorClass::kWeight ? 0 : 1, 1);
    w.uint(t.shape.size(), 1);
    for (auto d : t.shape) w.uint(d, 8);
    w.uint(std::uint64_t(f.mantissa_bits), 1);
    w.uint(f.block_size, 4);
    w.uint(std::uint64_t(f.exponent_bits), 1);
    w.uint(t.blocks.size(), 8);
    const int ew = exponent_width(f.exponent_bits);
    for (const auto& b : t.blocks) w.sint(b.exponent, ew);
    const int mw = mantissa_width(f.mantissa_bits);
    for (const auto& b : t.blocks) {
      if (b.size() != f.block_size) {
        throw ConfigError("archive: block of '" + e.name +
                          "' does not match its format");
      }
      for (auto m : b.mantissas) w.sint(m, mw);
    }
  }
  return w.take();
}

std::vector<ArchiveEntry> decode_archive(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), "MXVA", 4) != 0) {
    throw IoError("not an mxvit archive (bad magic)");
  }
  const auto version = r.uint(4);
  if (version != kArchiveVersion) {
    throw IoError("unsupported archive version " + std::to_string(version));
  }
  const auto count = r.uint(4);
  std::vector<ArchiveEntry> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    ArchiveEntry e;
    const auto name = r.bytes(r.uint(4));
    e.name.assign(name.begin(), name.end());
    MXIntTensor& t = e.tensor;
    const auto cls = r.uint(1);
    if (cls > 1) throw IoError("archive: bad tensor class in '" + e.name + "'");
    t.tensor_class = cls == 0 ? TensorClass::kWeight : TensorClass::kActivation;
    const auto rank = r.uint(1);
    if (rank == 0) throw IoError("archive: rank 0 tensor '" + e.name + "'");
    for (std::uint64_t d = 0; d < rank; ++d) t.shape.push_back(r.uint(8));
    t.format.mantissa_bits = int(r.uint(1));
    t.format.block_size = r.uint(4);
    t.format.exponent_bits = int(r.uint(1));
    try {
      t.format.validate();
    } catch (const Error& err) {
      throw IoError("archive: tensor '" + e.name + "': " + err.what());
    }
    const auto nblocks = r.uint(8);
    const std::size_t cols = t.cols();
    const std::size_t bpr = (cols + t.format.block_size - 1) / t.format.block_size;
    if (nblocks != t.rows() * bpr) {
      throw IoError("archive: block count of '" + e.name +
                    "' disagrees with its shape");
    }
    const int ew = exponent_width(t.format.exponent_bits);
    t.blocks.resize(nblocks);
    for (std::size_t b = 0; b < nblocks; ++b) {
      auto& blk = t.blocks[b];
      blk.exponent = int(r.sint(ew));
      blk.mantissa_bits = t.format.mantissa_bits;
      const std::size_t start = (b % bpr) * t.format.block_size;
      blk.valid = std::min(t.format.block_size, cols - start);
    }
    const int mw = mantissa_width(t.format.mantissa_bits);
    for (auto& blk : t.blocks) {
      blk.mantissas.resize(t.format.block_size);
      for (auto& m : blk.mantissas) m = std::int32_t(r.sint(mw));
      try {
        check_block(blk, t.format);
      } catch (const Error& err) {
        throw IoError("archive: tensor '" + e.name + "': " + err.what());
      }
    }
    out.push_back(std::move(e));
  }
  if (!r.done()) throw IoError("archive has trailing bytes");
  return out;
}

QuantStats quant_stats(const std::string& name, std::span<const double> source,
                       const MXIntTensor& q) {
  if (source.size() != q.num_elements()) {
    throw ConfigError("quant_stats: '" + name + "' element count mismatch");
  }
  QuantStats s;
  s.name = name;
  s.tensor_class = to_string(q.tensor_class);
  s.elements = source.size();
  const std::size_t cols = q.cols();
  const std::int32_t top = q.format.mantissa_max();
  for (std::size_t i = 0; i < source.size(); ++i) {
    const std::size_t r = i / cols;
    const std::size_t c = i % cols;
    const auto& blk = q.block_of(r, c);
    const auto mant = blk.mantissas[c % q.format.block_size];
    const double err = std::fabs(source[i] - blk.value(c % q.format.block_size));
    s.max_abs_error = std::max(s.max_abs_error, err);
    if (std::abs(mant) == top) {
      ++s.saturated;
      continue;
    }
    s.max_half_step_ratio = std::max(
        s.max_half_step_ratio, err / std::ldexp(1.0, blk.exponent - 1));
  }
  return s;
}

}  // namespace mxvit
