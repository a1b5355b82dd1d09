// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

// Key/value configuration shared by the config file, manifests and command
// line flags. The file format is a TOML subset:
//
//   # comment
//   [quant]                       (section headers are optional)
//   weight_mantissa_bits = 6
//   [nonlinear]
//   gelu_domain = 3.0
//
// Keys are unique across sections, so a section header only groups lines.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mxvit/mxint.hpp"
#include "mxvit/nonlinear.hpp"

namespace mxvit {

struct EffectiveConfig {
  QuantConfig quant;
  NonlinearConfig nonlinear;

  void validate() const {
    quant.validate();
    nonlinear.validate();
  }
  friend bool operator==(const EffectiveConfig&,
                         const EffectiveConfig&) = default;
};

// Every accepted key, in canonical order.
const std::vector<std::string>& config_keys();

// Sets one key from its textual value. Unknown keys and values that do not
// parse as the key's type throw ConfigError.
void apply_setting(EffectiveConfig& cfg, const std::string& key,
                   const std::string& value);
std::string get_setting(const EffectiveConfig& cfg, const std::string& key);

EffectiveConfig parse_config_text(const std::string& text,
                                  EffectiveConfig base = {});
EffectiveConfig load_config_file(const std::filesystem::path& path,
                                 EffectiveConfig base = {});

// One "key = value" line per key, in canonical order.
std::string to_config_text(const EffectiveConfig& cfg);

// First 16 hex digits of SHA-256 over to_config_text.
std::string fingerprint(const EffectiveConfig& cfg);

}  // namespace mxvit
