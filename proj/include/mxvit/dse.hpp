// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

// Design-space exploration: single-parameter sweeps, a greedy bit-width
// search under an accuracy budget and a storage cost model.

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mxvit/config.hpp"
#include "mxvit/model.hpp"

namespace mxvit {

enum class SweepTarget {
  kLayernormLutBits,
  kGeluLutBits,
  kGeluDomain,
  kSoftmaxRBits,
  kWeightMantissa,
  kActivationMantissa,
};

const char* to_string(SweepTarget target);
// Accepts the names printed by to_string plus the config key spellings.
SweepTarget parse_sweep_target(const std::string& name);

// Sets one parameter. Mantissa widths above the accumulator width raise
// accumulator_mantissa_bits to match so the result stays valid.
EffectiveConfig with_value(EffectiveConfig cfg, SweepTarget target,
                           double value);
double value_of(const EffectiveConfig& cfg, SweepTarget target);

struct SweepSpec {
  SweepTarget target = SweepTarget::kGeluLutBits;
  std::vector<double> values;
  EffectiveConfig fixed;

  // Non-empty range, every point a valid config.
  void validate() const;
};

// Top-1 accuracy in percent for one configuration.
using AccuracyFn = std::function<double(const EffectiveConfig&)>;

struct CurvePoint {
  double value = 0.0;
  double accuracy = 0.0;
  double loss_pp = 0.0;  // reference accuracy minus accuracy
  std::string fingerprint;
};

struct Curve {
  std::string target;
  double reference_accuracy = 0.0;
  std::vector<CurvePoint> points;
};

// One accuracy evaluation per range point. Points may run concurrently; the
// curve keeps the range order.
Curve sweep(const SweepSpec& spec, double reference_accuracy,
            const AccuracyFn& accuracy, int threads = 1);

// target,value,accuracy_pct,loss_pp,fingerprint
std::string curve_csv(const Curve& curve);
std::string curve_json(const Curve& curve);

// Parameters walked by the greedy search, in tie-break order.
enum class SearchParam {
  kWeightMantissa,
  kActivationMantissa,
  kLayernormLutBits,
  kGeluLutBits,
  kSoftmaxRBits,
};
const char* to_string(SearchParam p);

struct SearchStep {
  SearchParam param;
  int new_value = 0;
  double accuracy = 0.0;
  double saved_bits = 0.0;
};

struct SearchResult {
  EffectiveConfig config;
  double reference_accuracy = 0.0;
  double accuracy = 0.0;
  double loss_pp = 0.0;
  std::vector<SearchStep> steps;
  std::size_t evaluations = 0;  // distinct configurations evaluated
};

struct SearchLimits {
  int max_mantissa = 16;
  int max_lut_bits = 8;
  int min_mantissa = 2;
  int min_lut_bits = 1;
};

// Storage proxy minimized by the search: weight and activation bits for one
// forward pass plus the three tables (entries x stored word width).
double storage_bits(const EffectiveConfig& cfg, const ModelStats& stats);

// Starts from `start` with every searched parameter at its maximum and
// repeatedly applies the one-step reduction that saves the most storage
// bits while keeping reference - accuracy <= budget_pp. Ties follow the
// SearchParam order. Stops when no single reduction fits. The accumulator
// width is start's, raised to the widest mantissa where needed.
SearchResult greedy_search(const AccuracyFn& accuracy,
                           double reference_accuracy, double budget_pp,
                           const ModelStats& stats,
                           const EffectiveConfig& start = {},
                           const SearchLimits& limits = {});

// Table entry widths of the unoptimized design used as the cost baseline.
struct VanillaLutBits {
  int gelu = 14;
  int softmax = 16;
  int layernorm = 13;
};

struct LutCost {
  std::string op;
  int entry_bits = 0;
  std::size_t entries = 0;
  int vanilla_entry_bits = 0;
  std::size_t vanilla_entries = 0;
  double reduction = 0.0;  // vanilla_entries / entries
};

struct ClassCost {
  int mantissa_bits = 0;
  int block_size = 0;
  int exponent_bits = 0;
  double bits_per_element = 0.0;  // m + e/B
  double density = 0.0;           // 32 / bits_per_element
};

struct CostReport {
  std::vector<LutCost> luts;  // gelu, softmax, layernorm
  ClassCost weights;
  ClassCost activations;
  std::size_t weight_elements = 0;
  std::size_t activation_elements = 0;
  double blended_bits_per_element = 0.0;
  double blended_density = 0.0;
  std::optional<double> accuracy;
  std::optional<double> loss_pp;
};

double bits_per_element(int mantissa_bits, int block_size, int exponent_bits);

CostReport cost_report(const EffectiveConfig& cfg, const ModelStats& stats,
                       std::optional<double> accuracy = std::nullopt,
                       std::optional<double> reference_accuracy = std::nullopt,
                       const VanillaLutBits& vanilla = {});

std::string cost_report_json(const CostReport& report);
// section,name,field,value rows.
std::string cost_report_csv(const CostReport& report);

}  // namespace mxvit
