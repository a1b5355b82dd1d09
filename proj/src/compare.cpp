// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxvit/compare.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "mxvit/error.hpp"
#include "mxvit/parallel.hpp"

namespace mxvit {

namespace {

struct Captured {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
};

std::vector<Captured> capture(const ModelRunner& runner,
                              std::span<const double> input) {
  std::vector<Captured> out;
  runner.logits(input, [&](const std::string& name, std::size_t rows,
                           std::size_t cols, std::span<const double> v) {
    out.push_back({name, rows, cols, {v.begin(), v.end()}});
  });
  return out;
}

struct SampleError {
  double max_abs = 0.0;
  double sum_abs = 0.0;
  double rel = 0.0;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

CompareReport compare_modes(const ModelRunner& mxint,
                            const ModelRunner& reference, const Dataset& data,
                            double threshold, int threads) {
  if (data.samples.empty()) throw IoError("compare: dataset has no samples");
  if (!(threshold > 0.0)) throw ConfigError("compare: threshold must be > 0");
  CompareReport report;
  report.threshold = threshold;
  report.samples = data.size();

  std::vector<std::vector<SampleError>> per_sample(data.size());
  std::vector<Captured> layout;
  parallel_for(data.size(), threads, [&](std::size_t s) {
    const auto a = capture(mxint, data.samples[s].input);
    const auto b = capture(reference, data.samples[s].input);
    if (a.size() != b.size()) {
      throw ConfigError("compare: the two paths emit different layer lists");
    }
    auto& errs = per_sample[s];
    for (std::size_t l = 0; l < a.size(); ++l) {
      if (a[l].name != b[l].name || a[l].values.size() != b[l].values.size()) {
        throw ConfigError("compare: layer '" + a[l].name +
                          "' does not line up with the reference trace");
      }
      SampleError e;
      double ref_max = 0.0;
      for (std::size_t i = 0; i < a[l].values.size(); ++i) {
        const double d = std::fabs(a[l].values[i] - b[l].values[i]);
        e.max_abs = std::max(e.max_abs, d);
        e.sum_abs += d;
        ref_max = std::max(ref_max, std::fabs(b[l].values[i]));
      }
      e.rel = ref_max > 0.0 ? e.max_abs / ref_max
                            : (e.max_abs > 0.0 ? INFINITY : 0.0);
      errs.push_back(e);
    }
    if (s == 0) {
      layout = a;
      for (auto& c : layout) c.values.clear();
    }
  });

  for (std::size_t l = 0; l < layout.size(); ++l) {
    LayerError le;
    le.name = layout[l].name;
    le.rows = layout[l].rows;
    le.cols = layout[l].cols;
    double sum = 0.0;
    for (const auto& errs : per_sample) {
      le.max_abs = std::max(le.max_abs, errs[l].max_abs);
      le.max_rel = std::max(le.max_rel, errs[l].rel);
      sum += errs[l].sum_abs;
    }
    le.mean_abs = sum / double(data.size() * le.rows * le.cols);
    le.flagged = le.max_rel > threshold;
    if (le.flagged && !report.first_flagged) report.first_flagged = l;
    report.layers.push_back(le);
  }
  return report;
}

std::string compare_csv(const CompareReport& r) {
  std::string out = "layer,rows,cols,max_abs,mean_abs,max_rel,flagged\n";
  for (const auto& l : r.layers) {
    out += l.name + "," + std::to_string(l.rows) + "," +
           std::to_string(l.cols) + "," + num(l.max_abs) + "," +
           num(l.mean_abs) + "," + num(l.max_rel) + "," +
           (l.flagged ? "1" : "0") + "\n";
  }
  return out;
}

std::string compare_json(const CompareReport& r) {
  nlohmann::ordered_json doc;
  doc["threshold"] = r.threshold;
  doc["samples"] = r.samples;
  doc["first_flagged"] = r.first_flagged
                             ? nlohmann::ordered_json(r.layers[*r.first_flagged].name)
                             : nlohmann::ordered_json(nullptr);
  doc["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : r.layers) {
    doc["layers"].push_back({{"name", l.name},
                             {"rows", l.rows},
                             {"cols", l.cols},
                             {"max_abs", l.max_abs},
                             {"mean_abs", l.mean_abs},
                             {"max_rel", l.max_rel},
                             {"flagged", l.flagged}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace mxvit
