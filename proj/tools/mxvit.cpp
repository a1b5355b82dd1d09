// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

// mxvit command-line driver.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mxvit/archive.hpp"
#include "mxvit/compare.hpp"
#include "mxvit/config.hpp"
#include "mxvit/dse.hpp"
#include "mxvit/error.hpp"
#include "mxvit/eval.hpp"
#include "mxvit/io.hpp"
#include "mxvit/lut.hpp"
#include "mxvit/model.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace mxvit {
namespace {

struct Common {
  std::string manifest = "data/toy_vit";
  std::string dataset = "data/toy_eval";
  std::string config;
  std::string out = "out";
  std::string mode = "mxint";
  std::uint64_t seed = 0;
  int threads = 0;
  std::vector<std::string> sets;
  std::vector<std::string> lut_files;
  // One entry per config key, filled by the mirrored --key-name flags.
  std::map<std::string, std::string> keyed;
};

std::string flag_name(const std::string& key) {
  std::string f = key;
  std::replace(f.begin(), f.end(), '_', '-');
  return "--" + f;
}

void add_common(CLI::App* sub, Common& c, bool data = true) {
  sub->add_option("--manifest", c.manifest,
                  "Model manifest file or directory")
      ->capture_default_str();
  if (data) {
    sub->add_option("--dataset", c.dataset, "Dataset directory")
        ->capture_default_str();
  }
  sub->add_option("--config", c.config, "Config file (key = value)");
  sub->add_option("--out", c.out, "Output directory")->capture_default_str();
  sub->add_option("--mode", c.mode, "mxint or reference")
      ->capture_default_str();
  sub->add_option("--seed", c.seed, "Seed for generated inputs")
      ->capture_default_str();
  sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
  sub->add_option("--set", c.sets, "Override one setting, key=value");
  sub->add_option("--lut-file", c.lut_files,
                  "Replace a table with a hex dump, kind=path");
  for (const auto& key : config_keys()) {
    sub->add_option(flag_name(key), c.keyed[key], "Config key " + key);
  }
}

int thread_count(const Common& c) {
  if (c.threads > 0) return c.threads;
  return int(std::max(1u, std::thread::hardware_concurrency()));
}

// defaults < manifest < config file < flags
EffectiveConfig effective_config(const Common& c,
                                 const ModelManifest* manifest) {
  EffectiveConfig cfg;
  if (manifest) {
    if (manifest->quant) cfg.quant = *manifest->quant;
    if (manifest->nonlinear) cfg.nonlinear = *manifest->nonlinear;
  }
  if (!c.config.empty()) cfg = load_config_file(c.config, cfg);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + s + "'");
    }
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& key : config_keys()) {
    const auto it = c.keyed.find(key);
    if (it != c.keyed.end() && !it->second.empty()) {
      apply_setting(cfg, key, it->second);
    }
  }
  cfg.validate();
  return cfg;
}

LutSet build_luts(const Common& c, const EffectiveConfig& cfg) {
  LutSet luts = LutSet::build(cfg.nonlinear);
  for (const auto& spec : c.lut_files) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--lut-file expects kind=path, got '" + spec + "'");
    }
    const LutKind kind = parse_lut_kind(spec.substr(0, eq));
    const std::string text = read_text(spec.substr(eq + 1));
    LutTable& t = kind == LutKind::kInvSqrt ? luts.inv_sqrt
                  : kind == LutKind::kGelu  ? luts.gelu
                                            : luts.pow2;
    load_lut_hex(t, text);
  }
  return luts;
}

struct Loaded {
  ModelManifest manifest;
  ModelWeights weights;
  EffectiveConfig cfg;
  std::string fp;
};

Loaded load_all(const Common& c) {
  Loaded l;
  l.manifest = load_manifest(c.manifest);
  l.cfg = effective_config(c, &l.manifest);
  l.weights = load_weights(l.manifest);
  l.fp = fingerprint(l.cfg);
  return l;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

json config_json(const EffectiveConfig& cfg) {
  json out = json::object();
  for (const auto& key : config_keys()) {
    out[key] = json::parse(get_setting(cfg, key));
  }
  return out;
}

void header(const std::string& fp) { std::cout << "fingerprint: " << fp << "\n"; }

void wrote(const fs::path& p) { std::cout << "wrote " << p.string() << "\n"; }

// ---------------------------------------------------------------------------

int cmd_quantize(const Common& c) {
  const Loaded l = load_all(c);
  header(l.fp);
  std::vector<ArchiveEntry> entries;
  std::string csv =
      "tensor,class,elements,saturated,max_abs_error,max_half_step_ratio\n";
  std::size_t bad = 0;
  for (const auto& t : named_tensors(l.weights)) {
    ArchiveEntry e{t.name,
                   quantize_tensor(t.values, t.shape, l.cfg.quant,
                                   t.tensor_class)};
    const QuantStats s = quant_stats(t.name, t.values, e.tensor);
    if (s.max_half_step_ratio > 1.0) ++bad;
    csv += s.name + "," + s.tensor_class + "," + std::to_string(s.elements) +
           "," + std::to_string(s.saturated) + "," + num(s.max_abs_error) +
           "," + num(s.max_half_step_ratio) + "\n";
    entries.push_back(std::move(e));
  }
  const fs::path out(c.out);
  write_bytes(out / "weights.mxva", encode_archive(entries));
  wrote(out / "weights.mxva");
  write_text(out / "quant_stats.csv", "# fingerprint " + l.fp + "\n" + csv);
  wrote(out / "quant_stats.csv");
  write_text(out / "config.toml", to_config_text(l.cfg));
  wrote(out / "config.toml");
  std::cout << "tensors: " << entries.size()
            << "  over half-step bound: " << bad << "\n";
  if (bad) throw NumericError("quantization bound violated");
  return 0;
}

int cmd_run(const Common& c, const std::string& input, int sample,
            const std::string& trace_path) {
  const Loaded l = load_all(c);
  const Mode mode = parse_mode(c.mode);
  std::vector<double> image;
  std::string source;
  if (!input.empty()) {
    image = read_f32(input, l.weights.dims.input_size());
    source = input;
  } else if (sample >= 0) {
    const Dataset data = load_dataset(c.dataset, l.weights.dims.input_size());
    if (std::size_t(sample) >= data.size()) {
      throw ConfigError("--sample " + std::to_string(sample) +
                        " is out of range");
    }
    image = data.samples[std::size_t(sample)].input;
    source = data.samples[std::size_t(sample)].file;
  } else {
    std::mt19937_64 rng(c.seed);
    image.resize(l.weights.dims.input_size());
    for (auto& v : image) v = std::ldexp(double(rng() >> 11), -53);
    source = "uniform(seed=" + std::to_string(c.seed) + ")";
  }
  const ModelRunner runner(l.weights, mode, l.cfg.quant, l.cfg.nonlinear,
                           build_luts(c, l.cfg));
  std::string trace_csv = "layer,rows,cols,index,value\n";
  TraceFn trace;
  if (!trace_path.empty()) {
    trace = [&](const std::string& name, std::size_t rows, std::size_t cols,
                std::span<const double> v) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        trace_csv += name + "," + std::to_string(rows) + "," +
                     std::to_string(cols) + "," + std::to_string(i) + "," +
                     num(v[i]) + "\n";
      }
    };
  }
  const auto logits = runner.logits(image, trace);
  header(l.fp);
  std::cout << "mode: " << to_string(mode) << "\ninput: " << source
            << "\nlogits:";
  for (double v : logits) std::cout << " " << num(v);
  std::cout << "\nprediction: " << argmax(logits) << "\n";
  if (!trace_path.empty()) {
    write_text(trace_path, "# fingerprint " + l.fp + "\n" + trace_csv);
    wrote(trace_path);
  }
  return 0;
}

int cmd_evaluate(const Common& c) {
  const Loaded l = load_all(c);
  const Mode mode = parse_mode(c.mode);
  const Dataset data = load_dataset(c.dataset, l.weights.dims.input_size());
  const int threads = thread_count(c);
  const EvalResult ref = evaluate(
      ModelRunner(l.weights, Mode::kReference, l.cfg.quant, l.cfg.nonlinear),
      data, threads);
  const EvalResult res =
      mode == Mode::kReference
          ? ref
          : evaluate(ModelRunner(l.weights, mode, l.cfg.quant,
                                 l.cfg.nonlinear, build_luts(c, l.cfg)),
                     data, threads);
  const double agree = agreement(res.predictions, ref.predictions);

  std::string csv = "file,label,prediction,reference,agree";
  for (std::size_t k = 0; k < l.weights.dims.classes; ++k) {
    csv += ",logit" + std::to_string(k);
  }
  csv += "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    csv += data.samples[i].file + "," + std::to_string(data.samples[i].label) +
           "," + std::to_string(res.predictions[i]) + "," +
           std::to_string(ref.predictions[i]) + "," +
           (res.predictions[i] == ref.predictions[i] ? "1" : "0");
    for (double v : res.logits[i]) csv += "," + num(v);
    csv += "\n";
  }
  const CostReport cost = cost_report(l.cfg, model_stats(l.weights.dims),
                                      res.accuracy, ref.accuracy);
  json doc;
  doc["fingerprint"] = l.fp;
  doc["mode"] = res.mode;
  doc["samples"] = res.total;
  doc["correct"] = res.correct;
  doc["accuracy_pct"] = res.accuracy;
  doc["reference_accuracy_pct"] = ref.accuracy;
  doc["loss_pp"] = ref.accuracy - res.accuracy;
  doc["agreement_pct"] = agree;
  doc["config"] = config_json(l.cfg);
  doc["cost"] = json::parse(cost_report_json(cost));

  const fs::path out(c.out);
  write_text(out / "predictions.csv", "# fingerprint " + l.fp + "\n" + csv);
  write_text(out / "evaluate.json", doc.dump(2) + "\n");
  header(l.fp);
  std::cout << "mode: " << res.mode << "\naccuracy: " << num(res.accuracy)
            << "% (" << res.correct << "/" << res.total << ")\n"
            << "reference accuracy: " << num(ref.accuracy) << "%\n"
            << "loss: " << num(ref.accuracy - res.accuracy) << " pp\n"
            << "agreement with reference: " << num(agree) << "%\n";
  wrote(out / "predictions.csv");
  wrote(out / "evaluate.json");
  return 0;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  const auto colon = text.find(':');
  if (colon != std::string::npos && text.find(',') == std::string::npos) {
    const int lo = std::stoi(text.substr(0, colon));
    const int hi = std::stoi(text.substr(colon + 1));
    if (hi < lo) throw ConfigError("--values range " + text + " is empty");
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--values: bad number '" + item + "'");
    }
  }
  return out;
}

AccuracyFn accuracy_fn(const ModelWeights& w, const Dataset& data,
                       int threads) {
  return [&w, &data, threads](const EffectiveConfig& cfg) {
    return evaluate(ModelRunner(w, Mode::kMxint, cfg.quant, cfg.nonlinear),
                    data, threads)
        .accuracy;
  };
}

int cmd_sweep(const Common& c, const std::string& target,
              const std::string& values) {
  const Loaded l = load_all(c);
  SweepSpec spec;
  spec.target = parse_sweep_target(target);
  spec.values = parse_values(values);
  spec.fixed = l.cfg;
  spec.validate();
  const Dataset data = load_dataset(c.dataset, l.weights.dims.input_size());
  const int threads = thread_count(c);
  const double ref =
      evaluate(ModelRunner(l.weights, Mode::kReference, l.cfg.quant,
                           l.cfg.nonlinear),
               data, threads)
          .accuracy;
  const Curve curve = sweep(spec, ref, accuracy_fn(l.weights, data, threads));
  const fs::path out(c.out);
  const std::string stem = "sweep_" + curve.target;
  write_text(out / (stem + ".csv"), curve_csv(curve));
  write_text(out / (stem + ".json"), curve_json(curve));
  header(l.fp);
  std::cout << "target: " << curve.target << "\nreference accuracy: "
            << num(ref) << "%\n";
  for (const auto& p : curve.points) {
    std::cout << "  " << curve.target << "=" << num(p.value)
              << "  accuracy " << num(p.accuracy) << "%  loss "
              << num(p.loss_pp) << " pp  [" << p.fingerprint << "]\n";
  }
  wrote(out / (stem + ".csv"));
  wrote(out / (stem + ".json"));
  return 0;
}

int cmd_search(const Common& c, double budget) {
  const Loaded l = load_all(c);
  const Dataset data = load_dataset(c.dataset, l.weights.dims.input_size());
  const int threads = thread_count(c);
  const double ref =
      evaluate(ModelRunner(l.weights, Mode::kReference, l.cfg.quant,
                           l.cfg.nonlinear),
               data, threads)
          .accuracy;
  const ModelStats stats = model_stats(l.weights.dims);
  const SearchResult r = greedy_search(accuracy_fn(l.weights, data, threads),
                                       ref, budget, stats, l.cfg);
  const std::string fp = fingerprint(r.config);
  const CostReport cost = cost_report(r.config, stats, r.accuracy, ref);

  json doc;
  doc["start_fingerprint"] = l.fp;
  doc["fingerprint"] = fp;
  doc["budget_pp"] = budget;
  doc["reference_accuracy_pct"] = ref;
  doc["accuracy_pct"] = r.accuracy;
  doc["loss_pp"] = r.loss_pp;
  doc["evaluations"] = r.evaluations;
  doc["steps"] = json::array();
  for (const auto& s : r.steps) {
    doc["steps"].push_back({{"param", to_string(s.param)},
                            {"value", s.new_value},
                            {"accuracy_pct", s.accuracy},
                            {"saved_bits", s.saved_bits}});
  }
  doc["config"] = config_json(r.config);
  doc["cost"] = json::parse(cost_report_json(cost));
  const fs::path out(c.out);
  write_text(out / "search.json", doc.dump(2) + "\n");
  write_text(out / "search.toml",
             "# greedy search, budget " + num(budget) + " pp, fingerprint " +
                 fp + "\n" + to_config_text(r.config));
  write_text(out / "search_cost.csv", cost_report_csv(cost));
  header(fp);
  std::cout << "reference accuracy: " << num(ref) << "%\naccuracy: "
            << num(r.accuracy) << "%  loss " << num(r.loss_pp)
            << " pp (budget " << num(budget) << ")\n"
            << "steps: " << r.steps.size()
            << "  evaluations: " << r.evaluations << "\n";
  for (const SearchParam p :
       {SearchParam::kWeightMantissa, SearchParam::kActivationMantissa,
        SearchParam::kLayernormLutBits, SearchParam::kGeluLutBits,
        SearchParam::kSoftmaxRBits}) {
    std::cout << "  " << to_string(p) << " = "
              << get_setting(r.config, to_string(p)) << "\n";
  }
  std::cout << "weights " << num(cost.weights.bits_per_element)
            << " bits/element, activations "
            << num(cost.activations.bits_per_element)
            << " bits/element, blended density "
            << num(cost.blended_density) << "x\n";
  wrote(out / "search.json");
  wrote(out / "search.toml");
  wrote(out / "search_cost.csv");
  return 0;
}

int cmd_lut_dump(const Common& c, const std::string& kind_name,
                 const std::string& format) {
  std::optional<ModelManifest> manifest;
  if (fs::exists(c.manifest)) manifest = load_manifest(c.manifest);
  const EffectiveConfig cfg =
      effective_config(c, manifest ? &*manifest : nullptr);
  if (format != "hex" && format != "csv") {
    throw ConfigError("--format must be hex or csv");
  }
  const LutSet luts = build_luts(c, cfg);
  std::vector<LutKind> kinds;
  if (kind_name == "all") {
    kinds = {LutKind::kInvSqrt, LutKind::kGelu, LutKind::kPow2};
  } else {
    kinds = {parse_lut_kind(kind_name)};
  }
  header(fingerprint(cfg));
  for (LutKind k : kinds) {
    const LutTable& t = k == LutKind::kInvSqrt ? luts.inv_sqrt
                        : k == LutKind::kGelu  ? luts.gelu
                                               : luts.pow2;
    const fs::path p = fs::path(c.out) / (std::string(to_string(k)) + "_" +
                                          std::to_string(t.index_bits) + "." +
                                          format);
    write_text(p, format == "hex" ? lut_to_hex(t) : lut_to_csv(t));
    std::cout << to_string(k) << ": " << t.size() << " entries, "
              << t.entry_bits() << "-bit words, " << t.frac_bits
              << " fractional bits\n";
    wrote(p);
  }
  return 0;
}

int cmd_compare(const Common& c, double threshold) {
  const Loaded l = load_all(c);
  const Dataset data = load_dataset(c.dataset, l.weights.dims.input_size());
  const ModelRunner mx(l.weights, Mode::kMxint, l.cfg.quant, l.cfg.nonlinear,
                       build_luts(c, l.cfg));
  const ModelRunner ref(l.weights, Mode::kReference, l.cfg.quant,
                        l.cfg.nonlinear);
  const CompareReport r =
      compare_modes(mx, ref, data, threshold, thread_count(c));
  const fs::path out(c.out);
  write_text(out / "compare.csv",
             "# fingerprint " + l.fp + "\n" + compare_csv(r));
  json doc = json::parse(compare_json(r));
  doc["fingerprint"] = l.fp;
  write_text(out / "compare.json", doc.dump(2) + "\n");
  header(l.fp);
  std::printf("%-22s %12s %12s %10s\n", "layer", "max_abs", "mean_abs",
              "max_rel");
  for (const auto& e : r.layers) {
    std::printf("%-22s %12.6g %12.6g %10.4f%s\n", e.name.c_str(), e.max_abs,
                e.mean_abs, e.max_rel, e.flagged ? "  *" : "");
  }
  std::cout << "threshold: " << num(threshold) << "\nfirst flagged: "
            << (r.first_flagged ? r.layers[*r.first_flagged].name : "none")
            << "\n";
  wrote(out / "compare.csv");
  wrote(out / "compare.json");
  return 0;
}

}  // namespace
}  // namespace mxvit

int main(int argc, char** argv) {
  using namespace mxvit;
  CLI::App app{"MXInt vision transformer emulator"};
  app.require_subcommand(1);
  Common c;

  auto* quantize = app.add_subcommand(
      "quantize", "Quantize every weight tensor into a packed archive");
  add_common(quantize, c, false);

  std::string input, trace;
  int sample = -1;
  auto* run = app.add_subcommand("run", "Run one input and print logits");
  add_common(run, c);
  run->add_option("--input", input, "Raw float32 image");
  run->add_option("--sample", sample, "Dataset sample index");
  run->add_option("--trace", trace, "Write every intermediate to this CSV");

  auto* eval = app.add_subcommand("evaluate", "Top-1 accuracy on a dataset");
  add_common(eval, c);

  std::string target, values;
  auto* sw = app.add_subcommand("sweep", "Accuracy over one parameter");
  add_common(sw, c);
  sw->add_option("--target", target,
                 "layernorm_lut_bits, gelu_lut_bits, gelu_domain, "
                 "softmax_r_bits, weight_m or activation_m")
      ->required();
  sw->add_option("--values", values, "Comma list or lo:hi integer range")
      ->required();

  double budget = 1.0;
  auto* search = app.add_subcommand(
      "search", "Greedy bit-width search under an accuracy budget");
  add_common(search, c);
  search->add_option("--budget", budget, "Allowed loss in percentage points")
      ->capture_default_str();

  std::string kind = "all", format = "hex";
  auto* dump = app.add_subcommand("lut-dump", "Write LUT contents");
  add_common(dump, c, false);
  dump->add_option("--kind", kind, "inv_sqrt, gelu, pow2 or all")
      ->capture_default_str();
  dump->add_option("--format", format, "hex or csv")->capture_default_str();

  double threshold = kDefaultCompareThreshold;
  auto* cmp = app.add_subcommand(
      "compare", "Per-layer divergence between the MXInt and reference paths");
  add_common(cmp, c);
  cmp->add_option("--threshold", threshold,
                  "Relative error that flags a layer")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : int(ExitCode::kConfig);
  }

  try {
    if (*quantize) return cmd_quantize(c);
    if (*run) return cmd_run(c, input, sample, trace);
    if (*eval) return cmd_evaluate(c);
    if (*sw) return cmd_sweep(c, target, values);
    if (*search) return cmd_search(c, budget);
    if (*dump) return cmd_lut_dump(c, kind, format);
    if (*cmp) return cmd_compare(c, threshold);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(ExitCode::kIo);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
