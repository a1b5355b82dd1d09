// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxvit/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mxvit/error.hpp"
#include "mxvit/io.hpp"

namespace mxvit {

namespace {

int* int_field(EffectiveConfig& c, const std::string& key) {
  if (key == "weight_mantissa_bits") return &c.quant.weight_mantissa_bits;
  if (key == "activation_mantissa_bits") {
    return &c.quant.activation_mantissa_bits;
  }
  if (key == "weight_block_size") return &c.quant.weight_block_size;
  if (key == "activation_block_size") return &c.quant.activation_block_size;
  if (key == "exponent_bits") return &c.quant.exponent_bits;
  if (key == "accumulator_mantissa_bits") {
    return &c.quant.accumulator_mantissa_bits;
  }
  if (key == "layernorm_lut_bits") return &c.nonlinear.layernorm_lut_bits;
  if (key == "gelu_lut_bits") return &c.nonlinear.gelu_lut_bits;
  if (key == "softmax_r_bits") return &c.nonlinear.softmax_r_bits;
  if (key == "exp_frac_bits") return &c.nonlinear.exp_frac_bits;
  return nullptr;
}

double* real_field(EffectiveConfig& c, const std::string& key) {
  if (key == "gelu_domain") return &c.nonlinear.gelu_domain;
  if (key == "epsilon") return &c.nonlinear.epsilon;
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "weight_mantissa_bits",  "activation_mantissa_bits",
      "weight_block_size",     "activation_block_size",
      "exponent_bits",         "accumulator_mantissa_bits",
      "layernorm_lut_bits",    "gelu_lut_bits",
      "gelu_domain",           "softmax_r_bits",
      "exp_frac_bits",         "epsilon",
  };
  return keys;
}

void apply_setting(EffectiveConfig& cfg, const std::string& key_in,
                   const std::string& value_in) {
  const std::string key = trim(key_in);
  std::string value = trim(value_in);
  if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
    value = value.substr(1, value.size() - 2);
  }
  if (int* f = int_field(cfg, key)) {
    int v = 0;
    const auto* end = value.data() + value.size();
    const auto res = std::from_chars(value.data(), end, v);
    if (value.empty() || res.ec != std::errc() || res.ptr != end) {
      throw ConfigError("config key '" + key + "' expects an integer, got '" +
                        value + "'");
    }
    *f = v;
    return;
  }
  if (double* f = real_field(cfg, key)) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (value.empty() || used != value.size() || !std::isfinite(v)) {
      throw ConfigError("config key '" + key + "' expects a number, got '" +
                        value + "'");
    }
    *f = v;
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string get_setting(const EffectiveConfig& cfg_in, const std::string& key) {
  EffectiveConfig cfg = cfg_in;
  if (int* f = int_field(cfg, key)) return std::to_string(*f);
  if (double* f = real_field(cfg, key)) return format_real(*f);
  throw ConfigError("unknown config key '" + key + "'");
}

EffectiveConfig parse_config_text(const std::string& text,
                                  EffectiveConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": malformed section header");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    try {
      apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
  return base;
}

EffectiveConfig load_config_file(const std::filesystem::path& path,
                                 EffectiveConfig base) {
  return parse_config_text(read_text(path), base);
}

std::string to_config_text(const EffectiveConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) {
    out += k + " = " + get_setting(cfg, k) + "\n";
  }
  return out;
}

std::string fingerprint(const EffectiveConfig& cfg) {
  return sha256_hex(to_config_text(cfg)).substr(0, 16);
}

}  // namespace mxvit
