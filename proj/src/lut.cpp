// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxvit/lut.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <functional>

#include "mxvit/error.hpp"
#include "mxvit/fixed_point.hpp"

namespace mxvit {

const char* to_string(LutKind kind) {
  switch (kind) {
    case LutKind::kInvSqrt:
      return "inv_sqrt";
    case LutKind::kGelu:
      return "gelu";
    case LutKind::kPow2:
      return "pow2";
  }
  return "?";
}

LutKind parse_lut_kind(const std::string& name) {
  if (name == "inv_sqrt" || name == "invsqrt" || name == "layernorm") {
    return LutKind::kInvSqrt;
  }
  if (name == "gelu") return LutKind::kGelu;
  if (name == "pow2" || name == "exp" || name == "softmax") {
    return LutKind::kPow2;
  }
  throw ConfigError("unknown LUT kind '" + name +
                    "' (expected inv_sqrt, gelu or pow2)");
}

double LutTable::step() const { return (hi - lo) / double(entries.size()); }

double LutTable::eval_point_at(std::size_t i) const {
  const double offset = eval_point == EvalPoint::kMidpoint ? 0.5 : 0.0;
  return lo + (double(i) + offset) * step();
}

double LutTable::entry_value(std::size_t i) const {
  return std::ldexp(double(entries[i]), -frac_bits);
}

std::size_t LutTable::index_of(double x) const {
  // Domain endpoints and inputs are short dyadics, so the quotient is
  // either exact or far from an integer; floor() matches bit truncation.
  const double pos = std::floor((x - lo) * double(entries.size()) / (hi - lo));
  if (pos <= 0.0) return 0;
  return std::min(std::size_t(pos), entries.size() - 1);
}

int LutTable::entry_bits() const {
  std::uint64_t widest = 0;
  for (auto e : entries) widest = std::max(widest, magnitude(e));
  return bit_length(widest) + 1;
}

int lut_frac_bits(int index_bits) { return index_bits + 4; }

double gelu_exact(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

namespace {

LutTable build(LutKind kind, int index_bits, double lo, double hi,
               const std::function<double(double)>& fn) {
  if (index_bits < 1 || index_bits > 16) {
    throw ConfigError("LUT index bits must be in [1, 16], got " +
                      std::to_string(index_bits));
  }
  LutTable t;
  t.kind = kind;
  t.index_bits = index_bits;
  t.lo = lo;
  t.hi = hi;
  t.frac_bits = lut_frac_bits(index_bits);
  t.entries.resize(std::size_t(1) << index_bits);
  for (std::size_t i = 0; i < t.entries.size(); ++i) {
    const double y = fn(t.eval_point_at(i));
    t.entries[i] = std::int64_t(std::nearbyint(std::ldexp(y, t.frac_bits)));
  }
  return t;
}

}  // namespace

LutTable build_inv_sqrt_lut(int index_bits) {
  return build(LutKind::kInvSqrt, index_bits, 0.5, 2.0,
               [](double x) { return 1.0 / std::sqrt(x); });
}

LutTable build_gelu_lut(int index_bits, double domain) {
  if (!(domain > 0.0) || !std::isfinite(domain)) {
    throw ConfigError("GELU LUT domain must be positive");
  }
  return build(LutKind::kGelu, index_bits, -domain, domain, gelu_exact);
}

LutTable build_pow2_lut(int index_bits) {
  return build(LutKind::kPow2, index_bits, 0.0, 1.0,
               [](double r) { return std::exp2(r); });
}

std::string lut_to_hex(const LutTable& t) {
  const int digits = (t.entry_bits() + 3) / 4;
  const std::uint64_t mask =
      digits >= 16 ? ~std::uint64_t(0) : (std::uint64_t(1) << (4 * digits)) - 1;
  std::string out;
  char buf[32];
  for (auto e : t.entries) {
    std::snprintf(buf, sizeof buf, "%0*llx\n", digits,
                  static_cast<unsigned long long>(std::uint64_t(e) & mask));
    out += buf;
  }
  return out;
}

std::string lut_to_csv(const LutTable& t) {
  std::string out = "index,input,entry,value\n";
  char buf[128];
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%lld,%.17g\n", i,
                  t.eval_point_at(i), static_cast<long long>(t.entries[i]),
                  t.entry_value(i));
    out += buf;
  }
  return out;
}

void load_lut_hex(LutTable& t, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::int64_t> entries;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    if (line.empty()) continue;
    if (line.size() > 15) {
      throw ConfigError("LUT hex line " + std::to_string(entries.size() + 1) +
                        " is too wide");
    }
    std::uint64_t v = 0;
    for (char c : line) {
      int d;
      if (c >= '0' && c <= '9') d = c - '0';
      else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
      else throw ConfigError("LUT hex line " + std::to_string(entries.size() + 1) +
                             ": bad digit '" + std::string(1, c) + "'");
      v = (v << 4) | std::uint64_t(d);
    }
    const int shift = 64 - 4 * int(line.size());
    entries.push_back(std::int64_t(v << shift) >> shift);
  }
  if (entries.size() != t.size()) {
    throw ConfigError(std::string(to_string(t.kind)) + " LUT expects " +
                      std::to_string(t.size()) + " entries, file has " +
                      std::to_string(entries.size()));
  }
  t.entries = std::move(entries);
}

}  // namespace mxvit
