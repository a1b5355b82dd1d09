// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxvit/nonlinear.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mxvit/linear.hpp"

namespace mxvit {

void NonlinearConfig::validate() const {
  auto check_bits = [](int v, const char* name) {
    if (v < 1 || v > 16) {
      throw ConfigError(std::string(name) + " must be in [1, 16], got " +
                        std::to_string(v));
    }
  };
  check_bits(layernorm_lut_bits, "layernorm_lut_bits");
  check_bits(gelu_lut_bits, "gelu_lut_bits");
  check_bits(softmax_r_bits, "softmax_r_bits");
  if (!(gelu_domain > 0.0) || !std::isfinite(gelu_domain)) {
    throw ConfigError("gelu_domain must be positive");
  }
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  if (exp_frac_bits != 0 && exp_frac_bits < softmax_r_bits) {
    throw ConfigError("exp_frac_bits must be 0 or >= softmax_r_bits");
  }
}

LutSet LutSet::build(const NonlinearConfig& nl) {
  nl.validate();
  return LutSet{build_inv_sqrt_lut(nl.layernorm_lut_bits),
                build_gelu_lut(nl.gelu_lut_bits, nl.gelu_domain),
                build_pow2_lut(nl.softmax_r_bits)};
}

MiniFloat inv_sqrt(const MiniFloat& v, const LutTable& lut) {
  if (v.mant <= 0) throw NumericError("inv_sqrt: input must be positive");
  const bool odd = (v.exp & 1) != 0;
  // Even: LUT(m) * 2^(-e/2). Odd: LUT(m/2) * 2^(-(e+1)/2).
  const double sig = std::ldexp(double(v.mant), -(v.frac_bits + (odd ? 1 : 0)));
  const int out_exp = odd ? -(v.exp + 1) / 2 : -v.exp / 2;
  const std::int64_t entry = lut.entries[lut.index_of(sig)];
  if (entry <= 0) throw NumericError("inv_sqrt: non-positive LUT entry");
  // Entries lie in (0.5, 2): at most one left shift normalizes them.
  if (entry >= (std::int64_t(1) << lut.frac_bits)) {
    if (entry >= (std::int64_t(1) << (lut.frac_bits + 1))) {
      throw NumericError("inv_sqrt: LUT entry out of range");
    }
    return MiniFloat{entry, lut.frac_bits, out_exp};
  }
  return MiniFloat{entry * 2, lut.frac_bits, out_exp - 1};
}

namespace {

Dyadic element_of(const MXIntTensor& t, std::size_t c) {
  const auto& b = t.block_of(0, c);
  return Dyadic{b.mantissas[c % t.format.block_size], b.exponent};
}

}  // namespace

MXIntTensor layernorm_mxint(std::span<const MXIntBlock> row,
                            const MXIntTensor& gamma, const MXIntTensor& beta,
                            const LutTable& lut, const QuantConfig& cfg) {
  const AlignedGroup g = align_blocks(row);
  const std::size_t n = g.mantissas.size();
  if (n < 2) throw ConfigError("layernorm: row length must be >= 2");
  if (gamma.num_elements() != n || beta.num_elements() != n) {
    throw ConfigError("layernorm: gamma/beta length " +
                      std::to_string(gamma.num_elements()) + " != row " +
                      std::to_string(n));
  }
  // Mean carries ceil(log2(n)) fractional bits; the common exponent of the
  // row never enters below this point.
  const int guard = ceil_log2(n);
  i128 sum = 0;
  for (auto m : g.mantissas) sum += m;
  const i128 mean = div_round_even(sum << guard, i128(n));
  std::vector<std::int64_t> centered(n);
  i128 sq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const i128 c = (i128(g.mantissas[i]) << guard) - mean;
    centered[i] = std::int64_t(c);
    sq += c * c;
  }
  const i128 var = div_round_even(sq, i128(n));

  std::vector<Dyadic> out(n);
  if (var == 0) {
    // Constant row: the normalized term vanishes and y = beta.
    for (std::size_t i = 0; i < n; ++i) out[i] = element_of(beta, i);
  } else {
    if (var >= (i128(1) << 62)) throw NumericError("layernorm: variance overflow");
    const MiniFloat v = to_minifloat(std::int64_t(var), -2 * guard,
                                     lut.frac_bits);
    const MiniFloat s = inv_sqrt(v, lut);
    for (std::size_t i = 0; i < n; ++i) {
      const Dyadic gm = element_of(gamma, i);
      const Dyadic bt = element_of(beta, i);
      i128 prod = i128(centered[i]) * s.mant * gm.mant;
      int prod_exp = s.exp - s.frac_bits - guard + gm.exp;
      while (prod >= (i128(1) << 61) || prod <= -(i128(1) << 61)) {
        prod >>= 1;
        ++prod_exp;
      }
      const Dyadic terms[2] = {Dyadic{std::int64_t(prod), prod_exp}, bt};
      const Accumulator acc = accumulate_partials(terms, 62);
      out[i] = Dyadic{acc.value, acc.scale_exponent};
    }
  }
  return requantize_rows(out, 1, n, cfg.format(TensorClass::kActivation),
                         TensorClass::kActivation);
}

MXIntTensor layernorm_rows(const MXIntTensor& x, const MXIntTensor& gamma,
                           const MXIntTensor& beta, const LutTable& lut,
                           const QuantConfig& cfg) {
  MXIntTensor out;
  out.shape = x.shape;
  out.tensor_class = TensorClass::kActivation;
  out.format = cfg.format(TensorClass::kActivation);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = layernorm_mxint(x.row(r), gamma, beta, lut, cfg);
    out.blocks.insert(out.blocks.end(), row.blocks.begin(), row.blocks.end());
  }
  return out;
}

MXIntBlock gelu_mxint(const MXIntBlock& x, const LutTable& lut,
                      int exponent_bits) {
  if (x.is_zero()) return x;
  const double a = lut.hi;
  const BlockFormat fmt{x.mantissa_bits, x.size(), exponent_bits};
  std::vector<Dyadic> vals(x.valid);
  for (std::size_t i = 0; i < x.valid; ++i) {
    const double v = x.value(i);
    if (v >= a) {
      vals[i] = Dyadic{x.mantissas[i], x.exponent};
    } else if (v <= -a) {
      vals[i] = Dyadic{0, x.exponent};
    } else {
      vals[i] = Dyadic{lut.entries[lut.index_of(v)], -lut.frac_bits};
    }
  }
  // Forwarded exponent: LUT outputs snap onto the input's mantissa grid.
  return requantize_at(vals, x.exponent, fmt);
}

MXIntTensor gelu_tensor(const MXIntTensor& x, const LutTable& lut) {
  MXIntTensor out = x;
  for (auto& b : out.blocks) b = gelu_mxint(b, lut, x.format.exponent_bits);
  return out;
}

ExpParts exp_decompose(Dyadic x, int r_bits, int t_frac_bits,
                       std::int64_t n_limit) {
  if (r_bits < 1 || t_frac_bits < r_bits || t_frac_bits > 40) {
    throw ConfigError("exp_decompose: need 1 <= r_bits <= t_frac_bits <= 40");
  }
  constexpr int kLog2eFrac = 30;
  static const std::int64_t kLog2e =
      std::llround(std::ldexp(1.4426950408889634, kLog2eFrac));
  ExpParts out;
  if (x.mant == 0) return out;
  // t * 2^T = mant * log2e_fixed * 2^(exp - 30 + T).
  const int shift = kLog2eFrac - t_frac_bits - x.exp;
  const i128 prod = i128(x.mant) * kLog2e;
  i128 t;
  if (shift >= 0) {
    t = shift >= 100 ? i128(prod < 0 ? -1 : 0)
                     : i128(shift_round_even(std::int64_t(prod), shift));
  } else {
    const int bits = bit_length_signed(std::int64_t(prod));
    if (bits - shift > 100) {
      out.n = prod < 0 ? -n_limit : n_limit;
      return out;
    }
    t = prod << -shift;
  }
  i128 n = t >> t_frac_bits;  // floor
  const i128 r = t - (n << t_frac_bits);
  out.r_index = std::int64_t(r >> (t_frac_bits - r_bits));
  n = std::clamp<i128>(n, -n_limit, n_limit);
  out.n = std::int64_t(n);
  return out;
}

namespace {

MiniFloat limit_precision(MiniFloat v, int max_frac) {
  if (v.frac_bits <= max_frac) return v;
  std::int64_t m = shift_round_even(v.mant, v.frac_bits - max_frac);
  int e = v.exp;
  if (m == (std::int64_t(1) << (max_frac + 1))) {
    m >>= 1;
    ++e;
  }
  return MiniFloat{m, max_frac, e};
}

}  // namespace

MiniFloat mxint_divide(const MiniFloat& num_in, const MiniFloat& den_in,
                       int out_bits) {
  if (den_in.mant <= 0) throw NumericError("mxint_divide: zero denominator");
  if (num_in.mant <= 0) throw NumericError("mxint_divide: non-positive numerator");
  if (out_bits < 1 || out_bits > 30) {
    throw ConfigError("mxint_divide: out_bits must be in [1, 30]");
  }
  const MiniFloat num = limit_precision(num_in, 48);
  const MiniFloat den = limit_precision(den_in, 48);
  // Significand ratio (num.mant / 2^nf) / (den.mant / 2^df).
  const i128 a = i128(num.mant) << den.frac_bits;
  const i128 b = i128(den.mant) << num.frac_bits;
  int exp = num.exp - den.exp;
  int scale = out_bits;
  if (a < b) {  // ratio in (0.5, 1)
    ++scale;
    --exp;
  }
  i128 q = div_round_even(a << scale, b);
  if (q == (i128(1) << (out_bits + 1))) {
    q >>= 1;
    ++exp;
  }
  return MiniFloat{std::int64_t(q), out_bits, exp};
}

std::vector<Dyadic> softmax_from_pairs(std::span<const std::int64_t> entries,
                                       std::span<const std::int64_t> n,
                                       int entry_frac_bits,
                                       const QuantConfig& cfg) {
  if (entries.empty() || entries.size() != n.size()) {
    throw ConfigError("softmax: empty row or mismatched pairs");
  }
  const std::size_t count = entries.size();
  std::vector<Dyadic> terms(count);
  for (std::size_t i = 0; i < count; ++i) {
    terms[i] = Dyadic{entries[i], int(n[i]) - entry_frac_bits};
  }
  const int width = std::max(cfg.accumulator_mantissa_bits, entry_frac_bits + 1) +
                    ceil_log2(count) + 1;
  const Accumulator den_acc = accumulate_partials(terms, width);
  const MiniFloat den = normalize_exact(den_acc.value, den_acc.scale_exponent);
  const int out_bits = cfg.activation_mantissa_bits;
  std::vector<Dyadic> probs(count);
  for (std::size_t i = 0; i < count; ++i) {
    const MiniFloat q =
        mxint_divide(normalize_exact(terms[i].mant, terms[i].exp), den, out_bits);
    // Truncated small terms can leave den a hair under a dominant
    // numerator; probabilities saturate at 1.
    if (q.exp >= 0) {
      probs[i] = Dyadic{1, 0};
    } else {
      probs[i] = Dyadic{q.mant, q.exp - q.frac_bits};
    }
  }
  return probs;
}

MXIntTensor softmax_mxint(std::span<const MXIntBlock> row,
                          const LutTable& pow2, const QuantConfig& cfg,
                          const NonlinearConfig& nl) {
  if (row.empty()) throw ConfigError("softmax: empty row");
  const AlignedGroup g = align_blocks(row);
  const std::size_t count = g.mantissas.size();
  if (count == 0) throw ConfigError("softmax: empty row");
  const int m = cfg.activation_mantissa_bits;
  const int t_bits = nl.exp_frac_bits > 0 ? nl.exp_frac_bits
                                          : m + pow2.index_bits + 2;
  const std::int64_t n_limit = (std::int64_t(1) << m) - 1;
  std::vector<std::int64_t> entries(count);
  std::vector<std::int64_t> n(count);
  for (std::size_t i = 0; i < count; ++i) {
    const ExpParts p = exp_decompose(Dyadic{g.mantissas[i], g.common_exponent},
                                     pow2.index_bits, t_bits, n_limit);
    entries[i] = pow2.entries[std::size_t(p.r_index)];
    n[i] = p.n;
  }
  const auto probs = softmax_from_pairs(entries, n, pow2.frac_bits, cfg);
  return requantize_rows(probs, 1, count, cfg.format(TensorClass::kActivation),
                         TensorClass::kActivation);
}

MXIntTensor softmax_rows(const MXIntTensor& x, const LutTable& pow2,
                         const QuantConfig& cfg, const NonlinearConfig& nl) {
  MXIntTensor out;
  out.shape = x.shape;
  out.tensor_class = TensorClass::kActivation;
  out.format = cfg.format(TensorClass::kActivation);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = softmax_mxint(x.row(r), pow2, cfg, nl);
    out.blocks.insert(out.blocks.end(), row.blocks.begin(), row.blocks.end());
  }
  return out;
}

}  // namespace mxvit
