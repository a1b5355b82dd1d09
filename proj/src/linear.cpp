// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxvit/linear.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mxvit/parallel.hpp"

namespace mxvit {

int ceil_log2(std::size_t n) {
  int b = 0;
  while ((std::size_t(1) << b) < n) ++b;
  return b;
}

int accumulator_width(const QuantConfig& cfg, int x_bits, int w_bits,
                      std::size_t terms) {
  const int product_bits = x_bits + w_bits - 2;
  return std::max(cfg.accumulator_mantissa_bits, product_bits) +
         ceil_log2(terms) + 1;
}

Dyadic mxint_dot(BlockSlice x, BlockSlice w, int width) {
  if (x.mantissas.size() != w.mantissas.size()) {
    throw ConfigError("mxint_dot: length mismatch " +
                      std::to_string(x.mantissas.size()) + " vs " +
                      std::to_string(w.mantissas.size()));
  }
  if (width < 2 || width > 62) throw ConfigError("mxint_dot: bad width");
  const std::int64_t cap = std::int64_t(1) << (width - 1);
  std::int64_t acc = 0;
  for (std::size_t i = 0; i < x.mantissas.size(); ++i) {
    acc += std::int64_t(x.mantissas[i]) * w.mantissas[i];
    if (acc >= cap || acc <= -cap) {
      throw NumericError("accumulator overflow at element " +
                         std::to_string(i) + " (width " +
                         std::to_string(width) + ")");
    }
  }
  // One exponent addition for the whole block.
  return Dyadic{acc, x.exponent + w.exponent};
}

Dyadic mxint_dot(const MXIntBlock& x, const MXIntBlock& w, int width) {
  const auto n = std::min(x.valid, w.valid);
  return mxint_dot(
      BlockSlice{std::span<const std::int32_t>(x.mantissas).first(n),
                 x.exponent},
      BlockSlice{std::span<const std::int32_t>(w.mantissas).first(n),
                 w.exponent},
      width);
}

Accumulator accumulate_partials(std::span<const Dyadic> partials, int width) {
  if (width < 2 || width > 62) throw ConfigError("accumulator: bad width");
  Accumulator acc;
  acc.width = width;
  bool any = false;
  int lo = 0;
  int hi = 0;
  for (const auto& p : partials) {
    if (p.mant == 0) continue;
    const int top = p.exp + bit_length_signed(p.mant);
    lo = any ? std::min(lo, p.exp) : p.exp;
    hi = any ? std::max(hi, top) : top;
    any = true;
  }
  if (!any) {
    acc.scale_exponent = partials.empty() ? 0 : partials.front().exp;
    for (const auto& p : partials) {
      acc.scale_exponent = std::max(acc.scale_exponent, p.exp);
    }
    return acc;
  }
  // Upper bound on the magnitude of the sum, measured from a base no more
  // than 100 bits under the largest partial (terms below the base are
  // rounded up so the bound stays safe).
  const int base = std::max(lo, hi - 100);
  i128 bound = 0;
  for (const auto& p : partials) {
    if (p.mant == 0) continue;
    const i128 mag = i128(magnitude(p.mant));
    const int shift = p.exp - base;
    if (shift >= 0) {
      bound += mag << shift;
    } else {
      bound += ((mag - 1) >> -shift) + 1;
    }
  }
  int bound_bits = 0;
  while (bound_bits < 127 && (i128(1) << bound_bits) <= bound) ++bound_bits;
  const int top = base + bound_bits;
  const int frame = std::max(lo, top - (width - 1));

  // Exact sum at the base, then one truncation toward zero onto the frame,
  // which keeps |value| under the bound.
  i128 exact = 0;
  for (const auto& p : partials) {
    if (p.mant == 0) continue;
    const int shift = p.exp - base;
    exact += shift >= 0 ? i128(p.mant) << shift
                        : i128(shift_floor(p.mant, -shift));
  }
  const int drop = frame - base;
  const i128 mag = (exact < 0 ? -exact : exact) >> drop;
  const std::int64_t sum = std::int64_t(exact < 0 ? -mag : mag);
  if (sum >= acc.capacity() || sum <= -acc.capacity()) {
    throw NumericError("accumulator overflow in block reduction");
  }
  acc.value = sum;
  acc.scale_exponent = frame;
  return acc;
}

namespace {

void check_format(const MXIntTensor& t, const char* what) {
  if (t.shape.size() != 2) {
    throw ConfigError(std::string(what) + ": expected a 2-D tensor");
  }
}

// Partials of row r of `a` against row c of `b_t`, one per segment where
// both operands stay inside a single block.
void row_partials(const MXIntTensor& a, std::size_t r, const MXIntTensor& b_t,
                  std::size_t c, int dot_width, std::vector<Dyadic>& out) {
  out.clear();
  const std::size_t k = a.cols();
  const std::size_t ba = a.format.block_size;
  const std::size_t bb = b_t.format.block_size;
  std::size_t pos = 0;
  while (pos < k) {
    const std::size_t end =
        std::min({k, (pos / ba + 1) * ba, (pos / bb + 1) * bb});
    const auto& xa = a.block_of(r, pos);
    const auto& wb = b_t.block_of(c, pos);
    const auto len = end - pos;
    try {
      out.push_back(mxint_dot(
          BlockSlice{std::span<const std::int32_t>(xa.mantissas)
                         .subspan(pos % ba, len),
                     xa.exponent},
          BlockSlice{std::span<const std::int32_t>(wb.mantissas)
                         .subspan(pos % bb, len),
                     wb.exponent},
          dot_width));
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " in block " +
                         std::to_string(pos / ba) + " of row " +
                         std::to_string(r));
    }
    pos = end;
  }
}

MXIntTensor matmul_impl(const MXIntTensor& a, const MXIntTensor& b_t,
                        const MXIntTensor* bias, const QuantConfig& cfg,
                        int threads) {
  check_format(a, "mxint_matmul");
  check_format(b_t, "mxint_matmul");
  if (a.cols() != b_t.cols()) {
    throw ConfigError("mxint_matmul: inner dimensions differ (" +
                      std::to_string(a.cols()) + " vs " +
                      std::to_string(b_t.cols()) + ")");
  }
  const std::size_t m = a.rows();
  const std::size_t n = b_t.rows();
  if (bias && bias->num_elements() != n) {
    throw ConfigError("mxint_linear: bias length " +
                      std::to_string(bias->num_elements()) + " != " +
                      std::to_string(n));
  }
  const std::size_t seg =
      std::min(a.format.block_size, b_t.format.block_size);
  const int width = accumulator_width(cfg, a.format.mantissa_bits,
                                      b_t.format.mantissa_bits, seg);
  const BlockFormat out_fmt = cfg.format(TensorClass::kActivation);

  std::vector<Dyadic> values(m * n);
  parallel_for(m, threads, [&](std::size_t r) {
    std::vector<Dyadic> partials;
    for (std::size_t c = 0; c < n; ++c) {
      row_partials(a, r, b_t, c, width, partials);
      if (bias) {
        const auto& bb = bias->block_of(0, c);
        partials.push_back(
            Dyadic{bb.mantissas[c % bias->format.block_size], bb.exponent});
      }
      const Accumulator acc = accumulate_partials(partials, width);
      values[r * n + c] = Dyadic{acc.value, acc.scale_exponent};
    }
  });
  return requantize_rows(values, m, n, out_fmt, TensorClass::kActivation);
}

}  // namespace

MXIntTensor mxint_matmul(const MXIntTensor& a, const MXIntTensor& b_t,
                         const QuantConfig& cfg, int threads) {
  return matmul_impl(a, b_t, nullptr, cfg, threads);
}

LinearParams make_linear(std::span<const double> weights, std::size_t out,
                         std::size_t in, std::span<const double> bias,
                         const QuantConfig& cfg) {
  LinearParams p;
  p.weights = quantize_tensor(weights, {out, in}, cfg, TensorClass::kWeight);
  if (!bias.empty()) {
    p.bias = quantize_tensor(bias, {out}, cfg, TensorClass::kWeight);
  }
  return p;
}

MXIntTensor mxint_linear(const MXIntTensor& x, const LinearParams& p,
                         const QuantConfig& cfg, int threads) {
  return matmul_impl(x, p.weights, p.bias ? &*p.bias : nullptr, cfg, threads);
}

MXIntTensor residual_add(const MXIntTensor& a, const MXIntTensor& b,
                         const QuantConfig& cfg) {
  if (a.shape != b.shape) throw ConfigError("residual_add: shape mismatch");
  if (a.format != b.format) throw ConfigError("residual_add: format mismatch");
  const int m = a.format.mantissa_bits;
  const int width = accumulator_width(cfg, m, 2, 2);
  MXIntTensor out;
  out.shape = a.shape;
  out.tensor_class = TensorClass::kActivation;
  out.format = a.format;
  out.blocks.reserve(a.blocks.size());
  std::vector<Dyadic> sums;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    const auto& x = a.blocks[i];
    const auto& y = b.blocks[i];
    const int hi = std::max(x.exponent, y.exponent);
    const int lo = std::min(x.exponent, y.exponent);
    // Two (m)-bit terms need m+1 magnitude bits above the frame.
    const int frame = std::max(lo, hi + m - (width - 1));
    sums.assign(x.valid, Dyadic{});
    for (std::size_t j = 0; j < x.valid; ++j) {
      const std::int64_t s = shift_floor(x.mantissas[j], frame - x.exponent) +
                             shift_floor(y.mantissas[j], frame - y.exponent);
      sums[j] = Dyadic{s, frame};
    }
    out.blocks.push_back(requantize(sums, a.format));
  }
  return out;
}

MXIntTensor scale_by_constant(const MXIntTensor& t, double c,
                              const QuantConfig& cfg) {
  const double one[] = {c};
  const MXIntBlock k =
      quantize_block(one, BlockFormat{cfg.weight_mantissa_bits, 1,
                                      cfg.exponent_bits});
  MXIntTensor out;
  out.shape = t.shape;
  out.tensor_class = t.tensor_class;
  out.format = t.format;
  std::vector<Dyadic> prod;
  for (const auto& b : t.blocks) {
    prod.assign(b.valid, Dyadic{});
    for (std::size_t j = 0; j < b.valid; ++j) {
      prod[j] = Dyadic{std::int64_t(b.mantissas[j]) * k.mantissas[0],
                       b.exponent + k.exponent};
    }
    out.blocks.push_back(requantize(prod, t.format));
  }
  return out;
}

MXIntTensor scale_attention(const MXIntTensor& scores, std::size_t d_k,
                            const QuantConfig& cfg) {
  if (d_k == 0) throw ConfigError("scale_attention: d_k must be positive");
  const int lg = ceil_log2(d_k);
  const bool power_of_four = (std::size_t(1) << lg) == d_k && lg % 2 == 0;
  if (!power_of_four) return scale_by_constant(scores, 1.0 / std::sqrt(double(d_k)), cfg);
  MXIntTensor out = scores;
  for (auto& b : out.blocks) {
    if (b.is_zero()) continue;
    b.exponent = std::max(b.exponent - lg / 2, out.format.exponent_min());
  }
  return out;
}

namespace {

MXIntTensor from_values(const std::vector<double>& v, std::size_t rows,
                        std::size_t cols, const QuantConfig& cfg,
                        TensorClass cls) {
  return quantize_tensor(v, {rows, cols}, cfg, cls);
}

}  // namespace

MXIntTensor transpose(const MXIntTensor& t, const QuantConfig& cfg,
                      TensorClass cls) {
  check_format(t, "transpose");
  const auto rows = t.rows();
  const auto cols = t.cols();
  std::vector<double> v(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) v[c * rows + r] = t.value(r, c);
  }
  return from_values(v, cols, rows, cfg, cls);
}

MXIntTensor concat_columns(std::span<const MXIntTensor> parts,
                           const QuantConfig& cfg, TensorClass cls) {
  if (parts.empty()) throw ConfigError("concat_columns: nothing to concat");
  const auto rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    check_format(p, "concat_columns");
    if (p.rows() != rows) throw ConfigError("concat_columns: row mismatch");
    cols += p.cols();
  }
  std::vector<double> v(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      for (std::size_t c = 0; c < p.cols(); ++c) {
        v[r * cols + off + c] = p.value(r, c);
      }
      off += p.cols();
    }
  }
  return from_values(v, rows, cols, cfg, cls);
}

MXIntTensor slice_columns(const MXIntTensor& t, std::size_t begin,
                          std::size_t count, const QuantConfig& cfg,
                          TensorClass cls) {
  check_format(t, "slice_columns");
  if (begin + count > t.cols()) throw ConfigError("slice_columns: range");
  const auto rows = t.rows();
  std::vector<double> v(rows * count);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < count; ++c) {
      v[r * count + c] = t.value(r, begin + c);
    }
  }
  return from_values(v, rows, count, cfg, cls);
}

}  // namespace mxvit
