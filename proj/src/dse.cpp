// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxvit/dse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "mxvit/error.hpp"
#include "mxvit/lut.hpp"
#include "mxvit/parallel.hpp"

namespace mxvit {

using json = nlohmann::ordered_json;

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

int as_int(double v, const char* what) {
  if (v != std::floor(v) || std::abs(v) > 1e6) {
    throw ConfigError(std::string(what) + " takes integer values, got " +
                      num(v));
  }
  return int(v);
}

void fit_accumulator(EffectiveConfig& cfg) {
  auto& q = cfg.quant;
  q.accumulator_mantissa_bits =
      std::max({q.accumulator_mantissa_bits, q.weight_mantissa_bits,
                q.activation_mantissa_bits});
}

}  // namespace

const char* to_string(SweepTarget target) {
  switch (target) {
    case SweepTarget::kLayernormLutBits: return "layernorm_lut_bits";
    case SweepTarget::kGeluLutBits: return "gelu_lut_bits";
    case SweepTarget::kGeluDomain: return "gelu_domain";
    case SweepTarget::kSoftmaxRBits: return "softmax_r_bits";
    case SweepTarget::kWeightMantissa: return "weight_m";
    case SweepTarget::kActivationMantissa: return "activation_m";
  }
  return "?";
}

SweepTarget parse_sweep_target(const std::string& name) {
  static const std::map<std::string, SweepTarget> names = {
      {"layernorm_lut_bits", SweepTarget::kLayernormLutBits},
      {"gelu_lut_bits", SweepTarget::kGeluLutBits},
      {"gelu_domain", SweepTarget::kGeluDomain},
      {"softmax_r_bits", SweepTarget::kSoftmaxRBits},
      {"weight_m", SweepTarget::kWeightMantissa},
      {"weight_mantissa_bits", SweepTarget::kWeightMantissa},
      {"activation_m", SweepTarget::kActivationMantissa},
      {"activation_mantissa_bits", SweepTarget::kActivationMantissa},
  };
  const auto it = names.find(name);
  if (it == names.end()) throw ConfigError("unknown sweep target '" + name + "'");
  return it->second;
}

EffectiveConfig with_value(EffectiveConfig cfg, SweepTarget target,
                           double value) {
  const char* what = to_string(target);
  switch (target) {
    case SweepTarget::kLayernormLutBits:
      cfg.nonlinear.layernorm_lut_bits = as_int(value, what);
      break;
    case SweepTarget::kGeluLutBits:
      cfg.nonlinear.gelu_lut_bits = as_int(value, what);
      break;
    case SweepTarget::kGeluDomain:
      cfg.nonlinear.gelu_domain = value;
      break;
    case SweepTarget::kSoftmaxRBits:
      cfg.nonlinear.softmax_r_bits = as_int(value, what);
      break;
    case SweepTarget::kWeightMantissa:
      cfg.quant.weight_mantissa_bits = as_int(value, what);
      fit_accumulator(cfg);
      break;
    case SweepTarget::kActivationMantissa:
      cfg.quant.activation_mantissa_bits = as_int(value, what);
      fit_accumulator(cfg);
      break;
  }
  return cfg;
}

double value_of(const EffectiveConfig& cfg, SweepTarget target) {
  switch (target) {
    case SweepTarget::kLayernormLutBits: return cfg.nonlinear.layernorm_lut_bits;
    case SweepTarget::kGeluLutBits: return cfg.nonlinear.gelu_lut_bits;
    case SweepTarget::kGeluDomain: return cfg.nonlinear.gelu_domain;
    case SweepTarget::kSoftmaxRBits: return cfg.nonlinear.softmax_r_bits;
    case SweepTarget::kWeightMantissa: return cfg.quant.weight_mantissa_bits;
    case SweepTarget::kActivationMantissa:
      return cfg.quant.activation_mantissa_bits;
  }
  return 0.0;
}

void SweepSpec::validate() const {
  if (values.empty()) throw ConfigError("sweep: empty value range");
  for (double v : values) with_value(fixed, target, v).validate();
}

Curve sweep(const SweepSpec& spec, double reference_accuracy,
            const AccuracyFn& accuracy, int threads) {
  spec.validate();
  Curve curve;
  curve.target = to_string(spec.target);
  curve.reference_accuracy = reference_accuracy;
  curve.points.resize(spec.values.size());
  parallel_for(spec.values.size(), threads, [&](std::size_t i) {
    const auto cfg = with_value(spec.fixed, spec.target, spec.values[i]);
    CurvePoint& p = curve.points[i];
    p.value = spec.values[i];
    p.accuracy = accuracy(cfg);
    p.loss_pp = reference_accuracy - p.accuracy;
    p.fingerprint = fingerprint(cfg);
  });
  return curve;
}

std::string curve_csv(const Curve& curve) {
  std::string out = "target,value,accuracy_pct,loss_pp,fingerprint\n";
  for (const auto& p : curve.points) {
    out += curve.target + "," + num(p.value) + "," + num(p.accuracy) + "," +
           num(p.loss_pp) + "," + p.fingerprint + "\n";
  }
  return out;
}

std::string curve_json(const Curve& curve) {
  json doc;
  doc["target"] = curve.target;
  doc["reference_accuracy_pct"] = curve.reference_accuracy;
  doc["points"] = json::array();
  for (const auto& p : curve.points) {
    doc["points"].push_back({{"value", p.value},
                             {"accuracy_pct", p.accuracy},
                             {"loss_pp", p.loss_pp},
                             {"fingerprint", p.fingerprint}});
  }
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Greedy search

const char* to_string(SearchParam p) {
  switch (p) {
    case SearchParam::kWeightMantissa: return "weight_mantissa_bits";
    case SearchParam::kActivationMantissa: return "activation_mantissa_bits";
    case SearchParam::kLayernormLutBits: return "layernorm_lut_bits";
    case SearchParam::kGeluLutBits: return "gelu_lut_bits";
    case SearchParam::kSoftmaxRBits: return "softmax_r_bits";
  }
  return "?";
}

namespace {

constexpr SearchParam kSearchOrder[] = {
    SearchParam::kWeightMantissa, SearchParam::kActivationMantissa,
    SearchParam::kLayernormLutBits, SearchParam::kGeluLutBits,
    SearchParam::kSoftmaxRBits};

int& param_ref(EffectiveConfig& cfg, SearchParam p) {
  switch (p) {
    case SearchParam::kWeightMantissa: return cfg.quant.weight_mantissa_bits;
    case SearchParam::kActivationMantissa:
      return cfg.quant.activation_mantissa_bits;
    case SearchParam::kLayernormLutBits:
      return cfg.nonlinear.layernorm_lut_bits;
    case SearchParam::kGeluLutBits: return cfg.nonlinear.gelu_lut_bits;
    case SearchParam::kSoftmaxRBits: return cfg.nonlinear.softmax_r_bits;
  }
  throw ConfigError("bad search parameter");
}

bool is_mantissa(SearchParam p) {
  return p == SearchParam::kWeightMantissa ||
         p == SearchParam::kActivationMantissa;
}

double table_bits(const LutTable& t) {
  return double(t.size()) * double(t.entry_bits());
}

}  // namespace

double storage_bits(const EffectiveConfig& cfg, const ModelStats& stats) {
  const auto& q = cfg.quant;
  const auto& nl = cfg.nonlinear;
  return double(stats.weight_elements) *
             bits_per_element(q.weight_mantissa_bits, q.weight_block_size,
                              q.exponent_bits) +
         double(stats.activation_elements) *
             bits_per_element(q.activation_mantissa_bits,
                              q.activation_block_size, q.exponent_bits) +
         table_bits(build_inv_sqrt_lut(nl.layernorm_lut_bits)) +
         table_bits(build_gelu_lut(nl.gelu_lut_bits, nl.gelu_domain)) +
         table_bits(build_pow2_lut(nl.softmax_r_bits));
}

SearchResult greedy_search(const AccuracyFn& accuracy,
                           double reference_accuracy, double budget_pp,
                           const ModelStats& stats,
                           const EffectiveConfig& start,
                           const SearchLimits& limits) {
  if (!(budget_pp >= 0.0)) {
    throw ConfigError("search: budget must be >= 0 percentage points");
  }
  if (limits.min_mantissa < 2 || limits.min_lut_bits < 1 ||
      limits.max_mantissa < limits.min_mantissa ||
      limits.max_lut_bits < limits.min_lut_bits) {
    throw ConfigError("search: inconsistent width limits");
  }
  const int base_acc = start.quant.accumulator_mantissa_bits;
  auto fit = [base_acc](EffectiveConfig& cfg) {
    cfg.quant.accumulator_mantissa_bits = base_acc;
    fit_accumulator(cfg);
  };
  EffectiveConfig cur = start;
  for (SearchParam p : kSearchOrder) {
    param_ref(cur, p) = is_mantissa(p) ? limits.max_mantissa
                                       : limits.max_lut_bits;
  }
  fit(cur);
  cur.validate();

  std::map<std::string, double> cache;
  auto acc_of = [&](const EffectiveConfig& cfg) {
    const std::string key = to_config_text(cfg);
    const auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const double a = accuracy(cfg);
    cache.emplace(key, a);
    return a;
  };
  // Accuracies are percentages of a finite set; the slack absorbs rounding.
  auto fits = [&](double a) {
    return reference_accuracy - a <= budget_pp + 1e-9;
  };

  SearchResult r;
  r.reference_accuracy = reference_accuracy;
  double cur_acc = acc_of(cur);
  for (;;) {
    struct Candidate {
      SearchParam p;
      EffectiveConfig cfg;
      double saved;
    };
    std::vector<Candidate> cands;
    const double base_bits = storage_bits(cur, stats);
    for (SearchParam p : kSearchOrder) {
      const int floor =
          is_mantissa(p) ? limits.min_mantissa : limits.min_lut_bits;
      if (param_ref(cur, p) <= floor) continue;
      EffectiveConfig next = cur;
      --param_ref(next, p);
      fit(next);
      cands.push_back({p, next, base_bits - storage_bits(next, stats)});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) {
                       return a.saved > b.saved;
                     });
    bool moved = false;
    for (const auto& c : cands) {
      const double a = acc_of(c.cfg);
      if (!fits(a)) continue;
      cur = c.cfg;
      cur_acc = a;
      r.steps.push_back({c.p, param_ref(cur, c.p), a, c.saved});
      moved = true;
      break;
    }
    if (!moved) break;
  }
  r.config = cur;
  r.accuracy = cur_acc;
  r.loss_pp = reference_accuracy - cur_acc;
  r.evaluations = cache.size();
  return r;
}

// ---------------------------------------------------------------------------
// Cost model

double bits_per_element(int mantissa_bits, int block_size, int exponent_bits) {
  return double(mantissa_bits) + double(exponent_bits) / double(block_size);
}

namespace {

ClassCost class_cost(int m, int b, int e) {
  ClassCost c;
  c.mantissa_bits = m;
  c.block_size = b;
  c.exponent_bits = e;
  c.bits_per_element = bits_per_element(m, b, e);
  c.density = 32.0 / c.bits_per_element;
  return c;
}

LutCost lut_cost(const char* op, int bits, int vanilla_bits) {
  LutCost c;
  c.op = op;
  c.entry_bits = bits;
  c.entries = std::size_t(1) << bits;
  c.vanilla_entry_bits = vanilla_bits;
  c.vanilla_entries = std::size_t(1) << vanilla_bits;
  c.reduction = double(c.vanilla_entries) / double(c.entries);
  return c;
}

}  // namespace

CostReport cost_report(const EffectiveConfig& cfg, const ModelStats& stats,
                       std::optional<double> accuracy,
                       std::optional<double> reference_accuracy,
                       const VanillaLutBits& vanilla) {
  cfg.validate();
  const auto& q = cfg.quant;
  const auto& nl = cfg.nonlinear;
  CostReport r;
  r.luts = {lut_cost("gelu", nl.gelu_lut_bits, vanilla.gelu),
            lut_cost("softmax", nl.softmax_r_bits, vanilla.softmax),
            lut_cost("layernorm", nl.layernorm_lut_bits, vanilla.layernorm)};
  r.weights = class_cost(q.weight_mantissa_bits, q.weight_block_size,
                         q.exponent_bits);
  r.activations = class_cost(q.activation_mantissa_bits,
                             q.activation_block_size, q.exponent_bits);
  r.weight_elements = stats.weight_elements;
  r.activation_elements = stats.activation_elements;
  const double total = double(stats.weight_elements + stats.activation_elements);
  if (total > 0) {
    r.blended_bits_per_element =
        (double(stats.weight_elements) * r.weights.bits_per_element +
         double(stats.activation_elements) * r.activations.bits_per_element) /
        total;
    r.blended_density = 32.0 / r.blended_bits_per_element;
  }
  r.accuracy = accuracy;
  if (accuracy && reference_accuracy) {
    r.loss_pp = *reference_accuracy - *accuracy;
  }
  return r;
}

std::string cost_report_json(const CostReport& r) {
  json doc;
  doc["luts"] = json::array();
  for (const auto& l : r.luts) {
    doc["luts"].push_back({{"op", l.op},
                           {"entry_bits", l.entry_bits},
                           {"entries", l.entries},
                           {"vanilla_entry_bits", l.vanilla_entry_bits},
                           {"vanilla_entries", l.vanilla_entries},
                           {"reduction", l.reduction}});
  }
  auto cls = [](const ClassCost& c) {
    return json{{"mantissa_bits", c.mantissa_bits},
                {"block_size", c.block_size},
                {"exponent_bits", c.exponent_bits},
                {"bits_per_element", c.bits_per_element},
                {"density", c.density}};
  };
  doc["weights"] = cls(r.weights);
  doc["activations"] = cls(r.activations);
  doc["weight_elements"] = r.weight_elements;
  doc["activation_elements"] = r.activation_elements;
  doc["blended_bits_per_element"] = r.blended_bits_per_element;
  doc["blended_density"] = r.blended_density;
  if (r.accuracy) doc["accuracy_pct"] = *r.accuracy;
  if (r.loss_pp) doc["loss_pp"] = *r.loss_pp;
  return doc.dump(2) + "\n";
}

std::string cost_report_csv(const CostReport& r) {
  std::string out = "section,name,field,value\n";
  auto row = [&](const std::string& s, const std::string& n,
                 const std::string& f, const std::string& v) {
    out += s + "," + n + "," + f + "," + v + "\n";
  };
  for (const auto& l : r.luts) {
    row("lut", l.op, "entry_bits", std::to_string(l.entry_bits));
    row("lut", l.op, "entries", std::to_string(l.entries));
    row("lut", l.op, "vanilla_entry_bits", std::to_string(l.vanilla_entry_bits));
    row("lut", l.op, "vanilla_entries", std::to_string(l.vanilla_entries));
    row("lut", l.op, "reduction", num(l.reduction));
  }
  for (const auto& [name, c] : {std::pair{"weights", r.weights},
                                std::pair{"activations", r.activations}}) {
    row("class", name, "mantissa_bits", std::to_string(c.mantissa_bits));
    row("class", name, "block_size", std::to_string(c.block_size));
    row("class", name, "exponent_bits", std::to_string(c.exponent_bits));
    row("class", name, "bits_per_element", num(c.bits_per_element));
    row("class", name, "density", num(c.density));
  }
  row("blend", "model", "weight_elements", std::to_string(r.weight_elements));
  row("blend", "model", "activation_elements",
      std::to_string(r.activation_elements));
  row("blend", "model", "bits_per_element", num(r.blended_bits_per_element));
  row("blend", "model", "density", num(r.blended_density));
  if (r.accuracy) row("accuracy", "model", "accuracy_pct", num(*r.accuracy));
  if (r.loss_pp) row("accuracy", "model", "loss_pp", num(*r.loss_pp));
  return out;
}

}  // namespace mxvit
