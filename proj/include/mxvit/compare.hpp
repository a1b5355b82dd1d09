// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mxvit/eval.hpp"

namespace mxvit {

struct LayerError {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double max_abs = 0.0;
  double mean_abs = 0.0;
  // max over samples of max|mx - ref| / max|ref| for that sample.
  double max_rel = 0.0;
  bool flagged = false;
};

struct CompareReport {
  double threshold = 0.0;
  std::size_t samples = 0;
  std::vector<LayerError> layers;  // execution order
  std::optional<std::size_t> first_flagged;
};

inline constexpr double kDefaultCompareThreshold = 0.2;

// Traces both runners over every sample and reports per-layer divergence.
// A layer is flagged when max_rel exceeds `threshold`.
CompareReport compare_modes(const ModelRunner& mxint,
                            const ModelRunner& reference, const Dataset& data,
                            double threshold = kDefaultCompareThreshold,
                            int threads = 1);

std::string compare_csv(const CompareReport& report);
std::string compare_json(const CompareReport& report);

}  // namespace mxvit
