// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxvit/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "mxvit/config.hpp"
#include "mxvit/error.hpp"
#include "mxvit/io.hpp"

namespace mxvit {

namespace fs = std::filesystem;
using json = nlohmann::json;

void ModelDims::validate() const {
  if (image_size == 0 || patch_size == 0 || image_size % patch_size != 0) {
    throw ConfigError("model: image_size must be a positive multiple of "
                      "patch_size");
  }
  if (channels == 0 || dim < 2 || heads == 0 || mlp_dim < 2 || classes == 0) {
    throw ConfigError("model: channels, dim, heads, mlp_dim and classes must "
                      "be positive (dim, mlp_dim >= 2)");
  }
  if (dim % heads != 0) {
    throw ConfigError("model: dim " + std::to_string(dim) +
                      " is not divisible by heads " + std::to_string(heads));
  }
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

std::size_t dim_field(const json& model, const char* key,
                      std::size_t fallback) {
  if (!model.contains(key)) return fallback;
  const auto& v = model.at(key);
  if (!v.is_number_unsigned()) {
    throw ConfigError(std::string("manifest: model.") + key +
                      " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

void apply_section(EffectiveConfig& cfg, const json& section,
                   const char* name) {
  if (!section.is_object()) {
    throw ConfigError(std::string("manifest: '") + name +
                      "' must be an object");
  }
  for (const auto& [key, value] : section.items()) {
    apply_setting(cfg, key, value.is_string() ? value.get<std::string>()
                                              : value.dump());
  }
}

}  // namespace

ModelManifest load_manifest(const fs::path& path_in) {
  fs::path path = path_in;
  if (fs::is_directory(path)) path /= "manifest.json";
  if (!fs::exists(path)) throw IoError("manifest not found: " + path.string());
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw IoError("manifest " + path.string() + " is not valid JSON: " +
                  e.what());
  }
  ModelManifest m;
  m.root = path.parent_path();
  try {
    const json& model = doc.at("model");
    ModelDims d;
    d.image_size = dim_field(model, "image_size", d.image_size);
    d.patch_size = dim_field(model, "patch_size", d.patch_size);
    d.channels = dim_field(model, "channels", d.channels);
    d.dim = dim_field(model, "dim", d.dim);
    d.heads = dim_field(model, "heads", d.heads);
    d.mlp_dim = dim_field(model, "mlp_dim", d.mlp_dim);
    d.layers = dim_field(model, "layers", d.layers);
    d.classes = dim_field(model, "classes", d.classes);
    d.validate();
    m.dims = d;
    for (const auto& [name, entry] : doc.at("tensors").items()) {
      TensorEntry t;
      t.file = entry.at("file").get<std::string>();
      t.shape = entry.at("shape").get<std::vector<std::size_t>>();
      t.digest = entry.value("digest", std::string());
      m.tensors.emplace(name, std::move(t));
    }
    EffectiveConfig cfg;
    if (doc.contains("quant")) {
      apply_section(cfg, doc.at("quant"), "quant");
      m.quant = cfg.quant;
    }
    if (doc.contains("nonlinear")) {
      apply_section(cfg, doc.at("nonlinear"), "nonlinear");
      m.nonlinear = cfg.nonlinear;
    }
  } catch (const json::exception& e) {
    throw IoError("manifest " + path.string() + " is malformed: " + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Weights

void BlockWeights::validate() const {
  auto need = [](const std::vector<double>& v, std::size_t n,
                 const std::string& what) {
    if (v.size() != n) {
      throw ConfigError("block weights: " + what + " has " +
                        std::to_string(v.size()) + " values, expected " +
                        std::to_string(n));
    }
  };
  if (heads == 0 || head_dim * heads != dim) {
    throw ConfigError("block weights: heads x head_dim must equal dim");
  }
  need(ln1_gamma, dim, "ln1.gamma");
  need(ln1_beta, dim, "ln1.beta");
  for (const auto* per_head : {&wq, &wk, &wv, &bq, &bk, &bv}) {
    if (per_head->size() != heads) {
      throw ConfigError("block weights: per-head projections for " +
                        std::to_string(per_head->size()) + " heads, expected " +
                        std::to_string(heads));
    }
  }
  for (std::size_t h = 0; h < heads; ++h) {
    need(wq[h], head_dim * dim, "W_Q");
    need(wk[h], head_dim * dim, "W_K");
    need(wv[h], head_dim * dim, "W_V");
    need(bq[h], head_dim, "b_Q");
    need(bk[h], head_dim, "b_K");
    need(bv[h], head_dim, "b_V");
  }
  need(wo, dim * dim, "W_0");
  need(bo, dim, "b_0");
  need(ln2_gamma, dim, "ln2.gamma");
  need(ln2_beta, dim, "ln2.beta");
  need(wu, mlp_dim * dim, "W_U");
  need(bu, mlp_dim, "b_U");
  need(wd, dim * mlp_dim, "W_D");
  need(bd, dim, "b_D");
}

void ModelWeights::validate() const {
  dims.validate();
  auto need = [](const std::vector<double>& v, std::size_t n,
                 const char* what) {
    if (v.size() != n) {
      throw ConfigError(std::string("model weights: ") + what + " has " +
                        std::to_string(v.size()) + " values, expected " +
                        std::to_string(n));
    }
  };
  need(embed_w, dims.dim * dims.patch_dim(), "embed.weight");
  need(embed_b, dims.dim, "embed.bias");
  need(cls_token, dims.dim, "cls_token");
  need(pos_embed, dims.tokens() * dims.dim, "pos_embed");
  need(norm_gamma, dims.dim, "norm.gamma");
  need(norm_beta, dims.dim, "norm.beta");
  need(head_w, dims.classes * dims.dim, "head.weight");
  need(head_b, dims.classes, "head.bias");
  if (blocks.size() != dims.layers) {
    throw ConfigError("model weights: " + std::to_string(blocks.size()) +
                      " blocks for " + std::to_string(dims.layers) + " layers");
  }
  for (const auto& b : blocks) {
    if (b.dim != dims.dim || b.heads != dims.heads ||
        b.mlp_dim != dims.mlp_dim) {
      throw ConfigError("model weights: block dimensions disagree with model");
    }
    b.validate();
  }
}

std::vector<NamedTensor> named_tensors(const ModelWeights& w) {
  const auto& d = w.dims;
  const auto W = TensorClass::kWeight;
  const auto A = TensorClass::kActivation;
  std::vector<NamedTensor> out = {
      {"embed.weight", {d.dim, d.patch_dim()}, W, w.embed_w},
      {"embed.bias", {d.dim}, W, w.embed_b},
      {"cls_token", {d.dim}, A, w.cls_token},
      {"pos_embed", {d.tokens(), d.dim}, A, w.pos_embed},
  };
  for (std::size_t l = 0; l < w.blocks.size(); ++l) {
    const auto& b = w.blocks[l];
    const std::string p = "blocks." + std::to_string(l) + ".";
    out.push_back({p + "ln1.gamma", {d.dim}, W, b.ln1_gamma});
    out.push_back({p + "ln1.beta", {d.dim}, W, b.ln1_beta});
    for (std::size_t h = 0; h < b.heads; ++h) {
      const std::string hp = p + "attn.head" + std::to_string(h) + ".";
      const std::vector<std::size_t> ws = {b.head_dim, d.dim};
      const std::vector<std::size_t> bs = {b.head_dim};
      out.push_back({hp + "wq", ws, W, b.wq[h]});
      out.push_back({hp + "bq", bs, W, b.bq[h]});
      out.push_back({hp + "wk", ws, W, b.wk[h]});
      out.push_back({hp + "bk", bs, W, b.bk[h]});
      out.push_back({hp + "wv", ws, W, b.wv[h]});
      out.push_back({hp + "bv", bs, W, b.bv[h]});
    }
    out.push_back({p + "attn.wo", {d.dim, d.dim}, W, b.wo});
    out.push_back({p + "attn.bo", {d.dim}, W, b.bo});
    out.push_back({p + "ln2.gamma", {d.dim}, W, b.ln2_gamma});
    out.push_back({p + "ln2.beta", {d.dim}, W, b.ln2_beta});
    out.push_back({p + "mlp.wu", {d.mlp_dim, d.dim}, W, b.wu});
    out.push_back({p + "mlp.bu", {d.mlp_dim}, W, b.bu});
    out.push_back({p + "mlp.wd", {d.dim, d.mlp_dim}, W, b.wd});
    out.push_back({p + "mlp.bd", {d.dim}, W, b.bd});
  }
  out.push_back({"norm.gamma", {d.dim}, W, w.norm_gamma});
  out.push_back({"norm.beta", {d.dim}, W, w.norm_beta});
  out.push_back({"head.weight", {d.classes, d.dim}, W, w.head_w});
  out.push_back({"head.bias", {d.classes}, W, w.head_b});
  return out;
}

ModelWeights load_weights(const ModelManifest& manifest) {
  const auto& d = manifest.dims;
  d.validate();
  // Expected names and shapes come from an empty model of the right size.
  ModelWeights w;
  w.dims = d;
  w.blocks.resize(d.layers);
  for (auto& b : w.blocks) {
    b.dim = d.dim;
    b.heads = d.heads;
    b.head_dim = d.head_dim();
    b.mlp_dim = d.mlp_dim;
    for (auto* v : {&b.wq, &b.wk, &b.wv, &b.bq, &b.bk, &b.bv}) {
      v->resize(d.heads);
    }
  }
  std::map<std::string, std::vector<double>> loaded;
  for (const auto& t : named_tensors(w)) {
    const auto it = manifest.tensors.find(t.name);
    if (it == manifest.tensors.end()) {
      throw IoError("manifest has no entry for tensor '" + t.name + "'");
    }
    const TensorEntry& e = it->second;
    if (e.shape != t.shape) {
      throw ConfigError("tensor '" + t.name + "' has an unexpected shape");
    }
    const std::size_t count = std::accumulate(
        t.shape.begin(), t.shape.end(), std::size_t(1), std::multiplies<>());
    const fs::path file = manifest.root / e.file;
    if (!fs::exists(file)) {
      throw IoError("missing weight file " + file.string());
    }
    const auto bytes = read_bytes(file);
    if (!e.digest.empty()) {
      const std::string got = "sha256:" + sha256_hex(bytes);
      if (got != e.digest) {
        throw IoError("digest mismatch for " + file.string() + ": manifest " +
                      e.digest + ", file " + got);
      }
    }
    if (bytes.size() != count * 4) {
      throw IoError(file.string() + ": expected " + std::to_string(count) +
                    " float32 values");
    }
    loaded[t.name] = decode_f32(bytes);
  }
  auto take = [&](const std::string& name) { return std::move(loaded.at(name)); };
  w.embed_w = take("embed.weight");
  w.embed_b = take("embed.bias");
  w.cls_token = take("cls_token");
  w.pos_embed = take("pos_embed");
  for (std::size_t l = 0; l < d.layers; ++l) {
    auto& b = w.blocks[l];
    const std::string p = "blocks." + std::to_string(l) + ".";
    b.ln1_gamma = take(p + "ln1.gamma");
    b.ln1_beta = take(p + "ln1.beta");
    for (std::size_t h = 0; h < d.heads; ++h) {
      const std::string hp = p + "attn.head" + std::to_string(h) + ".";
      b.wq[h] = take(hp + "wq");
      b.bq[h] = take(hp + "bq");
      b.wk[h] = take(hp + "wk");
      b.bk[h] = take(hp + "bk");
      b.wv[h] = take(hp + "wv");
      b.bv[h] = take(hp + "bv");
    }
    b.wo = take(p + "attn.wo");
    b.bo = take(p + "attn.bo");
    b.ln2_gamma = take(p + "ln2.gamma");
    b.ln2_beta = take(p + "ln2.beta");
    b.wu = take(p + "mlp.wu");
    b.bu = take(p + "mlp.bu");
    b.wd = take(p + "mlp.wd");
    b.bd = take(p + "mlp.bd");
  }
  w.norm_gamma = take("norm.gamma");
  w.norm_beta = take("norm.beta");
  w.head_w = take("head.weight");
  w.head_b = take("head.bias");
  w.validate();
  return w;
}

ModelStats model_stats(const ModelDims& d) {
  ModelStats s;
  ModelWeights empty;
  empty.dims = d;
  empty.blocks.resize(d.layers);
  for (auto& b : empty.blocks) {
    b.dim = d.dim;
    b.heads = d.heads;
    b.head_dim = d.head_dim();
    b.mlp_dim = d.mlp_dim;
    for (auto* v : {&b.wq, &b.wk, &b.wv, &b.bq, &b.bk, &b.bv}) {
      v->resize(d.heads);
    }
  }
  for (const auto& t : named_tensors(empty)) {
    if (t.tensor_class != TensorClass::kWeight) continue;
    s.weight_elements += std::accumulate(t.shape.begin(), t.shape.end(),
                                         std::size_t(1), std::multiplies<>());
  }
  const std::size_t T = d.tokens();
  // Input patches, embedding output, token matrix after the position add.
  std::size_t acts = d.patches() * d.patch_dim() + d.patches() * d.dim +
                     T * d.dim;
  // Per block: LN1, Q/K/V, scores, probabilities, head outputs, W_0
  // output, LN2, MLP up, GELU, MLP down, block output.
  const std::size_t per_block = T * d.dim + 3 * T * d.dim +
                                2 * d.heads * T * T + T * d.dim + T * d.dim +
                                T * d.dim + 2 * T * d.mlp_dim + 2 * T * d.dim;
  acts += d.layers * per_block;
  acts += d.dim + d.classes;  // final LayerNorm on CLS, logits
  s.activation_elements = acts;
  return s;
}

const char* to_string(Mode mode) {
  return mode == Mode::kMxint ? "mxint" : "reference";
}

Mode parse_mode(const std::string& name) {
  if (name == "mxint") return Mode::kMxint;
  if (name == "reference" || name == "ref") return Mode::kReference;
  throw ConfigError("unknown mode '" + name + "' (expected mxint or reference)");
}

std::vector<double> patchify(std::span<const double> image,
                             const ModelDims& d) {
  if (image.size() != d.input_size()) {
    throw ConfigError("input has " + std::to_string(image.size()) +
                      " values, model expects " +
                      std::to_string(d.input_size()));
  }
  const std::size_t g = d.image_size / d.patch_size;
  const std::size_t ps = d.patch_size;
  const std::size_t hw = d.image_size * d.image_size;
  std::vector<double> out;
  out.reserve(d.patches() * d.patch_dim());
  for (std::size_t py = 0; py < g; ++py) {
    for (std::size_t px = 0; px < g; ++px) {
      for (std::size_t c = 0; c < d.channels; ++c) {
        for (std::size_t y = 0; y < ps; ++y) {
          for (std::size_t x = 0; x < ps; ++x) {
            out.push_back(image[c * hw + (py * ps + y) * d.image_size +
                                px * ps + x]);
          }
        }
      }
    }
  }
  return out;
}

std::size_t argmax(std::span<const double> logits) {
  return std::size_t(std::max_element(logits.begin(), logits.end()) -
                     logits.begin());
}

// ---------------------------------------------------------------------------
// Reference path

namespace {

std::vector<double> linear_ref(std::span<const double> x, std::size_t rows,
                               std::size_t in, std::span<const double> w,
                               std::span<const double> b, std::size_t out) {
  std::vector<double> y(rows * out);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = b.empty() ? 0.0 : b[o];
      for (std::size_t k = 0; k < in; ++k) s += x[r * in + k] * w[o * in + k];
      y[r * out + o] = s;
    }
  }
  return y;
}

std::vector<double> layernorm_ref(std::span<const double> x, std::size_t rows,
                                  std::size_t n, std::span<const double> g,
                                  std::span<const double> b, double eps) {
  std::vector<double> y(rows * n);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = x.subspan(r * n, n);
    double mean = 0;
    for (double v : row) mean += v;
    mean /= double(n);
    double var = 0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= double(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
      y[r * n + i] = (row[i] - mean) * inv * g[i] + b[i];
    }
  }
  return y;
}

void softmax_ref_rows(std::vector<double>& a, std::size_t rows,
                      std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = a.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0;
    for (std::size_t i = 0; i < n; ++i) {
      row[i] = std::exp(row[i] - mx);
      z += row[i];
    }
    for (std::size_t i = 0; i < n; ++i) row[i] /= z;
  }
}

void emit(const TraceFn& trace, const std::string& name, std::size_t rows,
          std::size_t cols, std::span<const double> v) {
  if (trace) trace(name, rows, cols, v);
}

void emit(const TraceFn& trace, const std::string& name,
          const MXIntTensor& t) {
  if (trace) {
    const auto v = t.dequantize();
    trace(name, t.rows(), t.cols(), v);
  }
}

// Places per-head [rows x width] matrices side by side.
std::vector<double> side_by_side(const std::vector<std::vector<double>>& parts,
                                 std::size_t rows, std::size_t width) {
  std::vector<double> out(rows * width * parts.size());
  for (std::size_t h = 0; h < parts.size(); ++h) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(parts[h].begin() + r * width, width,
                  out.begin() + r * width * parts.size() + h * width);
    }
  }
  return out;
}

}  // namespace

std::vector<double> run_block_reference(std::span<const double> x,
                                        std::size_t T, const BlockWeights& w,
                                        const NonlinearConfig& nl,
                                        const TraceFn& trace,
                                        const std::string& prefix) {
  const std::size_t D = w.dim;
  const std::size_t dk = w.head_dim;
  if (x.size() != T * D) {
    throw ConfigError(prefix + ": input must be tokens x dim (X_n = "
                      "LayerNorm(X))");
  }
  const auto xn =
      layernorm_ref(x, T, D, w.ln1_gamma, w.ln1_beta, nl.epsilon);
  emit(trace, prefix + ".ln1", T, D, xn);

  std::vector<std::vector<double>> scores(w.heads), probs(w.heads),
      outs(w.heads);
  const double scale = 1.0 / std::sqrt(double(dk));
  for (std::size_t h = 0; h < w.heads; ++h) {
    const auto q = linear_ref(xn, T, D, w.wq[h], w.bq[h], dk);
    const auto k = linear_ref(xn, T, D, w.wk[h], w.bk[h], dk);
    const auto v = linear_ref(xn, T, D, w.wv[h], w.bv[h], dk);
    auto& a = scores[h];
    a.assign(T * T, 0.0);
    for (std::size_t i = 0; i < T; ++i) {
      for (std::size_t j = 0; j < T; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < dk; ++c) s += q[i * dk + c] * k[j * dk + c];
        a[i * T + j] = s * scale;
      }
    }
    probs[h] = a;
    softmax_ref_rows(probs[h], T, T);
    auto& o = outs[h];
    o.assign(T * dk, 0.0);
    for (std::size_t i = 0; i < T; ++i) {
      for (std::size_t c = 0; c < dk; ++c) {
        double s = 0;
        for (std::size_t j = 0; j < T; ++j) s += probs[h][i * T + j] * v[j * dk + c];
        o[i * dk + c] = s;
      }
    }
  }
  if (trace) {
    emit(trace, prefix + ".attn_scores", T, T * w.heads,
         side_by_side(scores, T, T));
    emit(trace, prefix + ".softmax", T, T * w.heads, side_by_side(probs, T, T));
  }
  const auto bc = side_by_side(outs, T, dk);
  emit(trace, prefix + ".attn_heads", T, D, bc);
  const auto bo = linear_ref(bc, T, D, w.wo, w.bo, D);
  emit(trace, prefix + ".attn_proj", T, D, bo);
  std::vector<double> sum(T * D);
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = bo[i] + xn[i];
  const auto bn =
      layernorm_ref(sum, T, D, w.ln2_gamma, w.ln2_beta, nl.epsilon);
  emit(trace, prefix + ".ln2", T, D, bn);
  auto up = linear_ref(bn, T, D, w.wu, w.bu, w.mlp_dim);
  emit(trace, prefix + ".mlp_up", T, w.mlp_dim, up);
  for (auto& u : up) u = gelu_exact(u);
  emit(trace, prefix + ".gelu", T, w.mlp_dim, up);
  const auto d = linear_ref(up, T, w.mlp_dim, w.wd, w.bd, D);
  emit(trace, prefix + ".mlp_down", T, D, d);
  std::vector<double> out(T * D);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i] + bn[i];
  emit(trace, prefix + ".output", T, D, out);
  return out;
}

std::vector<double> run_model_reference(const ModelWeights& w,
                                        std::span<const double> image,
                                        const NonlinearConfig& nl,
                                        const TraceFn& trace) {
  const auto& d = w.dims;
  const auto patches = patchify(image, d);
  const auto emb = linear_ref(patches, d.patches(), d.patch_dim(), w.embed_w,
                              w.embed_b, d.dim);
  const std::size_t T = d.tokens();
  std::vector<double> x(T * d.dim);
  std::copy(w.cls_token.begin(), w.cls_token.end(), x.begin());
  std::copy(emb.begin(), emb.end(), x.begin() + d.dim);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += w.pos_embed[i];
  emit(trace, "embed", T, d.dim, x);
  for (std::size_t l = 0; l < w.blocks.size(); ++l) {
    x = run_block_reference(x, T, w.blocks[l], nl, trace,
                            "block" + std::to_string(l));
  }
  const auto cls = layernorm_ref(std::span<const double>(x).first(d.dim), 1,
                                 d.dim, w.norm_gamma, w.norm_beta, nl.epsilon);
  emit(trace, "final_norm", 1, d.dim, cls);
  const auto logits =
      linear_ref(cls, 1, d.dim, w.head_w, w.head_b, d.classes);
  emit(trace, "logits", 1, d.classes, logits);
  return logits;
}

// ---------------------------------------------------------------------------
// MXInt path

QuantModel quantize_model(const ModelWeights& w, const QuantConfig& quant,
                          const NonlinearConfig& nl) {
  quant.validate();
  w.validate();
  const auto& d = w.dims;
  QuantModel m;
  m.dims = d;
  m.quant = quant;
  m.nonlinear = nl;
  m.luts = LutSet::build(nl);
  const auto W = TensorClass::kWeight;
  const auto A = TensorClass::kActivation;
  m.embed = make_linear(w.embed_w, d.dim, d.patch_dim(), w.embed_b, quant);
  m.cls_token = quantize_tensor(w.cls_token, {1, d.dim}, quant, A);
  m.pos_embed = quantize_tensor(w.pos_embed, {d.tokens(), d.dim}, quant, A);
  for (const auto& b : w.blocks) {
    QuantBlock q;
    q.ln1_gamma = quantize_tensor(b.ln1_gamma, {d.dim}, quant, W);
    q.ln1_beta = quantize_tensor(b.ln1_beta, {d.dim}, quant, W);
    q.ln2_gamma = quantize_tensor(b.ln2_gamma, {d.dim}, quant, W);
    q.ln2_beta = quantize_tensor(b.ln2_beta, {d.dim}, quant, W);
    for (std::size_t h = 0; h < b.heads; ++h) {
      q.wq.push_back(make_linear(b.wq[h], b.head_dim, d.dim, b.bq[h], quant));
      q.wk.push_back(make_linear(b.wk[h], b.head_dim, d.dim, b.bk[h], quant));
      q.wv.push_back(make_linear(b.wv[h], b.head_dim, d.dim, b.bv[h], quant));
    }
    q.wo = make_linear(b.wo, d.dim, d.dim, b.bo, quant);
    q.wu = make_linear(b.wu, d.mlp_dim, d.dim, b.bu, quant);
    q.wd = make_linear(b.wd, d.dim, d.mlp_dim, b.bd, quant);
    m.blocks.push_back(std::move(q));
  }
  m.norm_gamma = quantize_tensor(w.norm_gamma, {d.dim}, quant, W);
  m.norm_beta = quantize_tensor(w.norm_beta, {d.dim}, quant, W);
  m.head = make_linear(w.head_w, d.classes, d.dim, w.head_b, quant);
  return m;
}

namespace {

void expect_cols(const MXIntTensor& t, std::size_t cols,
                 const std::string& step) {
  if (t.shape.size() != 2 || t.cols() != cols) {
    throw ConfigError("shape mismatch at block step '" + step + "': expected " +
                      std::to_string(cols) + " columns");
  }
}

std::vector<double> head_matrix(const std::vector<MXIntTensor>& parts) {
  std::vector<std::vector<double>> v;
  for (const auto& p : parts) v.push_back(p.dequantize());
  return side_by_side(v, parts.front().rows(), parts.front().cols());
}

}  // namespace

MXIntTensor run_block_mxint(const MXIntTensor& x, const QuantBlock& w,
                            const QuantModel& model, const TraceFn& trace,
                            const std::string& prefix) {
  const QuantConfig& cfg = model.quant;
  const auto& luts = model.luts;
  const auto A = TensorClass::kActivation;
  const std::size_t D = model.dims.dim;
  const std::size_t H = w.wq.size();
  const std::size_t dk = D / H;
  expect_cols(x, D, "X_n = LayerNorm(X)");
  const std::size_t T = x.rows();

  const MXIntTensor xn =
      layernorm_rows(x, w.ln1_gamma, w.ln1_beta, luts.inv_sqrt, cfg);
  emit(trace, prefix + ".ln1", xn);

  std::vector<MXIntTensor> scores, probs, outs;
  for (std::size_t h = 0; h < H; ++h) {
    const MXIntTensor q = mxint_linear(xn, w.wq[h], cfg);
    const MXIntTensor k = mxint_linear(xn, w.wk[h], cfg);
    const MXIntTensor v = mxint_linear(xn, w.wv[h], cfg);
    expect_cols(q, dk, "Q_i = W_Qi X_n");
    expect_cols(k, dk, "K_i = W_Ki X_n");
    expect_cols(v, dk, "V_i = W_Vi X_n");
    scores.push_back(scale_attention(mxint_matmul(q, k, cfg), dk, cfg));
    probs.push_back(softmax_rows(scores.back(), luts.pow2, cfg,
                                 model.nonlinear));
    outs.push_back(mxint_matmul(probs.back(), transpose(v, cfg, A), cfg));
  }
  if (trace) {
    emit(trace, prefix + ".attn_scores", T, T * H, head_matrix(scores));
    emit(trace, prefix + ".softmax", T, T * H, head_matrix(probs));
  }
  const MXIntTensor bc = concat_columns(outs, cfg, A);
  emit(trace, prefix + ".attn_heads", bc);
  const MXIntTensor bo = mxint_linear(bc, w.wo, cfg);
  expect_cols(bo, D, "B_o = W_0 B_c");
  emit(trace, prefix + ".attn_proj", bo);
  const MXIntTensor bn = layernorm_rows(residual_add(bo, xn, cfg), w.ln2_gamma,
                                        w.ln2_beta, luts.inv_sqrt, cfg);
  emit(trace, prefix + ".ln2", bn);
  const MXIntTensor up = mxint_linear(bn, w.wu, cfg);
  emit(trace, prefix + ".mlp_up", up);
  const MXIntTensor g = gelu_tensor(up, luts.gelu);
  emit(trace, prefix + ".gelu", g);
  const MXIntTensor dn = mxint_linear(g, w.wd, cfg);
  expect_cols(dn, D, "D = W_D GELU(W_U B_n)");
  emit(trace, prefix + ".mlp_down", dn);
  MXIntTensor out = residual_add(dn, bn, cfg);
  emit(trace, prefix + ".output", out);
  return out;
}

std::vector<double> run_model_mxint(const QuantModel& m,
                                    std::span<const double> image,
                                    const TraceFn& trace) {
  const auto& d = m.dims;
  const auto& cfg = m.quant;
  const auto A = TensorClass::kActivation;
  const auto patches = patchify(image, d);
  const MXIntTensor xq =
      quantize_tensor(patches, {d.patches(), d.patch_dim()}, cfg, A);
  const MXIntTensor emb = mxint_linear(xq, m.embed, cfg);
  // Rows own their blocks, so stacking CLS on top of the patch rows is a
  // plain block copy.
  MXIntTensor tokens = emb;
  tokens.shape = {d.tokens(), d.dim};
  tokens.blocks.insert(tokens.blocks.begin(), m.cls_token.blocks.begin(),
                       m.cls_token.blocks.end());
  MXIntTensor x = residual_add(tokens, m.pos_embed, cfg);
  emit(trace, "embed", x);
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    x = run_block_mxint(x, m.blocks[l], m, trace,
                        "block" + std::to_string(l));
  }
  MXIntTensor cls;
  cls.shape = {1, d.dim};
  cls.tensor_class = A;
  cls.format = x.format;
  const auto row = x.row(0);
  cls.blocks.assign(row.begin(), row.end());
  const MXIntTensor normed =
      layernorm_rows(cls, m.norm_gamma, m.norm_beta, m.luts.inv_sqrt, cfg);
  emit(trace, "final_norm", normed);
  const MXIntTensor logits = mxint_linear(normed, m.head, cfg);
  emit(trace, "logits", logits);
  return logits.dequantize();
}

// ---------------------------------------------------------------------------

ModelRunner::ModelRunner(const ModelWeights& weights, Mode mode,
                         const QuantConfig& quant, const NonlinearConfig& nl,
                         std::optional<LutSet> luts)
    : weights_(weights), mode_(mode), nl_(nl) {
  nl.validate();
  weights_.validate();
  if (mode == Mode::kMxint) {
    quantized_ = quantize_model(weights_, quant, nl);
    if (luts) quantized_->luts = std::move(*luts);
  }
}

std::vector<double> ModelRunner::logits(std::span<const double> image,
                                        const TraceFn& trace) const {
  if (mode_ == Mode::kMxint) return run_model_mxint(*quantized_, image, trace);
  return run_model_reference(weights_, image, nl_, trace);
}

}  // namespace mxvit
