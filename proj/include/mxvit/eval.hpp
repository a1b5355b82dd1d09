// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "mxvit/model.hpp"

namespace mxvit {

struct Sample {
  std::string file;
  std::vector<double> input;
  int label = 0;
};

struct Dataset {
  std::filesystem::path root;
  std::vector<Sample> samples;
  std::size_t size() const { return samples.size(); }
};

// Reads <root>/labels.csv ("file,label" header) and the float32 inputs it
// lists. An empty or unreadable dataset throws IoError; inputs whose length
// differs from `input_size` throw ConfigError.
Dataset load_dataset(const std::filesystem::path& root,
                     std::size_t input_size);

struct EvalResult {
  std::string mode;
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;  // percent
  std::vector<int> predictions;
  std::vector<std::vector<double>> logits;
};

// Runs every sample through `runner`. Output order follows the dataset and
// does not depend on `threads`.
EvalResult evaluate(const ModelRunner& runner, const Dataset& data,
                    int threads = 1);

// Percentage of positions where both prediction lists agree.
double agreement(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace mxvit
