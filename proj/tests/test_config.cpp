// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>
#include <string>

#include "doctest.h"
#include "mxvit/config.hpp"
#include "mxvit/error.hpp"
#include "mxvit/io.hpp"

using namespace mxvit;

TEST_CASE("sha256_hex matches the standard test vectors") {
  CHECK(sha256_hex(std::string("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex(std::string()) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("config text round-trips every key") {
  EffectiveConfig c;
  c.quant.weight_mantissa_bits = 5;
  c.quant.activation_block_size = 32;
  c.nonlinear.gelu_domain = 2.75;
  c.nonlinear.epsilon = 1e-5;
  const std::string text = to_config_text(c);
  CHECK(parse_config_text(text) == c);
  // One line per key in canonical order.
  std::size_t lines = 0;
  for (char ch : text) lines += ch == '\n';
  CHECK(lines == config_keys().size());
  CHECK(text.rfind("weight_mantissa_bits = 5\n", 0) == 0);
}

TEST_CASE("config parser accepts sections, comments and quotes") {
  const auto c = parse_config_text(
      "# experiment\n"
      "[quant]\n"
      "weight_mantissa_bits = 4   # narrow\n"
      "\n"
      "[nonlinear]\n"
      "gelu_domain = \"4.5\"\n"
      "softmax_r_bits=3\n");
  CHECK(c.quant.weight_mantissa_bits == 4);
  CHECK(c.nonlinear.gelu_domain == 4.5);
  CHECK(c.nonlinear.softmax_r_bits == 3);
  // Untouched keys keep the base values.
  CHECK(c.quant.activation_mantissa_bits == 8);
}

TEST_CASE("config errors carry the line number") {
  auto message = [](const std::string& text) {
    try {
      parse_config_text(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("a = 1\n").find("line 1") != std::string::npos);
  CHECK(message("\nweight_mantissa_bits = six\n").find("line 2") !=
        std::string::npos);
  CHECK(message("gelu_domain = 3.0x\n").find("expects a number") !=
        std::string::npos);
  CHECK(message("[quant\n").find("section") != std::string::npos);
  CHECK(message("weight_mantissa_bits\n").find("key = value") !=
        std::string::npos);
  CHECK_THROWS_AS(load_config_file("/nonexistent/mxvit.toml"), IoError);
}

TEST_CASE("later settings override the base") {
  EffectiveConfig base;
  base.quant.weight_mantissa_bits = 4;
  const auto c = parse_config_text("activation_mantissa_bits = 6\n", base);
  CHECK(c.quant.weight_mantissa_bits == 4);
  CHECK(c.quant.activation_mantissa_bits == 6);
  EffectiveConfig d = c;
  apply_setting(d, "weight_mantissa_bits", "7");
  CHECK(d.quant.weight_mantissa_bits == 7);
  CHECK(get_setting(d, "weight_mantissa_bits") == "7");
  CHECK_THROWS_AS(get_setting(d, "nope"), ConfigError);
}

TEST_CASE("fingerprint is a stable hash of the effective config") {
  const EffectiveConfig c;
  const std::string fp = fingerprint(c);
  CHECK(fp.size() == 16);
  CHECK(fp == sha256_hex(to_config_text(c)).substr(0, 16));
  // Frozen: changes only if the canonical text format changes.
  CHECK(fp == "5a0d850755cf6753");
  for (const auto& key : config_keys()) {
    EffectiveConfig d = c;
    const std::string v = get_setting(d, key);
    apply_setting(d, key, key == "gelu_domain" || key == "epsilon"
                              ? v + "1"
                              : std::to_string(std::stoi(v) + 1));
    CHECK_MESSAGE(fingerprint(d) != fp, key);
  }
}
