// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxvit/eval.hpp"

#include <charconv>
#include <sstream>

#include "mxvit/error.hpp"
#include "mxvit/io.hpp"
#include "mxvit/parallel.hpp"

namespace mxvit {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& root,
                     std::size_t input_size) {
  const auto csv = root / "labels.csv";
  if (!std::filesystem::exists(csv)) {
    throw IoError("dataset index not found: " + csv.string());
  }
  std::istringstream in(read_text(csv));
  std::string line;
  Dataset data;
  data.root = root;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line != "file,label") {
        throw IoError(csv.string() + ": expected header 'file,label'");
      }
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw IoError(csv.string() + ":" + std::to_string(lineno) +
                    ": expected 'file,label'");
    }
    Sample s;
    s.file = trim(line.substr(0, comma));
    const std::string label = trim(line.substr(comma + 1));
    const auto [ptr, ec] =
        std::from_chars(label.data(), label.data() + label.size(), s.label);
    if (ec != std::errc() || ptr != label.data() + label.size() ||
        s.label < 0) {
      throw IoError(csv.string() + ":" + std::to_string(lineno) +
                    ": bad label '" + label + "'");
    }
    s.input = read_f32(root / s.file);
    if (s.input.size() != input_size) {
      throw ConfigError(s.file + " has " + std::to_string(s.input.size()) +
                        " values, model expects " + std::to_string(input_size));
    }
    data.samples.push_back(std::move(s));
  }
  if (data.samples.empty()) {
    throw IoError("dataset " + root.string() + " has no samples");
  }
  return data;
}

EvalResult evaluate(const ModelRunner& runner, const Dataset& data,
                    int threads) {
  EvalResult r;
  r.mode = to_string(runner.mode());
  r.total = data.size();
  r.predictions.assign(r.total, -1);
  r.logits.assign(r.total, {});
  parallel_for(r.total, threads, [&](std::size_t i) {
    r.logits[i] = runner.logits(data.samples[i].input);
    r.predictions[i] = int(argmax(r.logits[i]));
  });
  for (std::size_t i = 0; i < r.total; ++i) {
    if (r.predictions[i] == data.samples[i].label) ++r.correct;
  }
  r.accuracy = r.total ? 100.0 * double(r.correct) / double(r.total) : 0.0;
  return r;
}

double agreement(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) {
    throw ConfigError("agreement: prediction lists differ in length");
  }
  if (a.empty()) return 100.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return 100.0 * double(same) / double(a.size());
}

}  // namespace mxvit
