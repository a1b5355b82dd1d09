// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

// Toy vision transformer: manifest loading, a double-precision reference
// path and the MXInt path built from the linear and non-linear datapaths.
//
// Block layout (pre-norm, per-head projections):
//   X_n = LayerNorm(X)
//   Q_i, K_i, V_i = W_Qi X_n, W_Ki X_n, W_Vi X_n          for each head i
//   A_i = Softmax(Q_i K_i^T / sqrt(d_k)),  B_i = A_i V_i
//   B_o = W_0 concat(B_1..B_H)
//   B_n = LayerNorm(B_o + X_n)
//   D   = W_D GELU(W_U B_n)
//   O   = D + B_n

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mxvit/linear.hpp"
#include "mxvit/nonlinear.hpp"

namespace mxvit {

struct ModelDims {
  std::size_t image_size = 16;
  std::size_t patch_size = 4;
  std::size_t channels = 1;
  std::size_t dim = 32;
  std::size_t heads = 4;
  std::size_t mlp_dim = 128;
  std::size_t layers = 2;
  std::size_t classes = 4;

  std::size_t patches() const {
    const auto g = image_size / patch_size;
    return g * g;
  }
  std::size_t tokens() const { return patches() + 1; }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t input_size() const { return image_size * image_size * channels; }
  std::size_t head_dim() const { return dim / heads; }
  void validate() const;
};

struct TensorEntry {
  std::string file;
  std::vector<std::size_t> shape;
  std::string digest;  // "sha256:<hex>"
};

struct ModelManifest {
  std::filesystem::path root;  // directory holding the tensor files
  ModelDims dims;
  std::map<std::string, TensorEntry> tensors;
  // Optional defaults carried by the manifest.
  std::optional<QuantConfig> quant;
  std::optional<NonlinearConfig> nonlinear;
};

// Parses manifest.json (or the manifest inside a directory).
ModelManifest load_manifest(const std::filesystem::path& path);

// Double-precision parameters of one block. Matrices are row-major
// out_features x in_features.
struct BlockWeights {
  std::size_t dim = 0;
  std::size_t heads = 0;
  std::size_t head_dim = 0;
  std::size_t mlp_dim = 0;
  std::vector<double> ln1_gamma, ln1_beta;
  std::vector<std::vector<double>> wq, wk, wv, bq, bk, bv;  // per head
  std::vector<double> wo, bo;
  std::vector<double> ln2_gamma, ln2_beta;
  std::vector<double> wu, bu, wd, bd;

  void validate() const;
};

struct ModelWeights {
  ModelDims dims;
  std::vector<double> embed_w, embed_b;  // dim x patch_dim, dim
  std::vector<double> cls_token;         // dim
  std::vector<double> pos_embed;         // tokens x dim
  std::vector<BlockWeights> blocks;
  std::vector<double> norm_gamma, norm_beta;
  std::vector<double> head_w, head_b;  // classes x dim, classes

  void validate() const;
};

// Reads every tensor, checking shapes and SHA-256 digests.
ModelWeights load_weights(const ModelManifest& manifest);

// Element counts used by the cost model.
struct ModelStats {
  std::size_t weight_elements = 0;
  // Activation elements produced by one forward pass.
  std::size_t activation_elements = 0;
};
ModelStats model_stats(const ModelDims& dims);

// Names and classes of every stored parameter, in manifest naming.
struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  TensorClass tensor_class = TensorClass::kWeight;
  std::vector<double> values;
};
std::vector<NamedTensor> named_tensors(const ModelWeights& w);

enum class Mode { kMxint, kReference };
const char* to_string(Mode mode);
Mode parse_mode(const std::string& name);

// Receives every named intermediate (rows x cols, row-major) in execution
// order. Names are shared by both paths, e.g. "block0.softmax".
using TraceFn = std::function<void(const std::string& name, std::size_t rows,
                                   std::size_t cols,
                                   std::span<const double> values)>;

// Weights quantized once for the MXInt path.
struct QuantBlock {
  MXIntTensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  std::vector<LinearParams> wq, wk, wv;
  LinearParams wo, wu, wd;
};

struct QuantModel {
  ModelDims dims;
  QuantConfig quant;
  NonlinearConfig nonlinear;
  LutSet luts;
  LinearParams embed;
  MXIntTensor cls_token;  // [1 x dim], activation format
  MXIntTensor pos_embed;  // [tokens x dim], activation format
  std::vector<QuantBlock> blocks;
  MXIntTensor norm_gamma, norm_beta;
  LinearParams head;
};

QuantModel quantize_model(const ModelWeights& w, const QuantConfig& quant,
                          const NonlinearConfig& nl);

// One block in each arithmetic. x is tokens x dim.
MXIntTensor run_block_mxint(const MXIntTensor& x, const QuantBlock& w,
                            const QuantModel& model,
                            const TraceFn& trace = nullptr,
                            const std::string& prefix = "block");
std::vector<double> run_block_reference(std::span<const double> x,
                                        std::size_t tokens,
                                        const BlockWeights& w,
                                        const NonlinearConfig& nl,
                                        const TraceFn& trace = nullptr,
                                        const std::string& prefix = "block");

// Image (channels x H x W, row-major) to logits.
std::vector<double> run_model_mxint(const QuantModel& model,
                                    std::span<const double> image,
                                    const TraceFn& trace = nullptr);
std::vector<double> run_model_reference(const ModelWeights& w,
                                        std::span<const double> image,
                                        const NonlinearConfig& nl,
                                        const TraceFn& trace = nullptr);

// Splits an image into flattened patches, one row per patch.
std::vector<double> patchify(std::span<const double> image,
                             const ModelDims& dims);

// Either path behind one interface; immutable after construction and safe
// to share between threads.
class ModelRunner {
 public:
  ModelRunner(const ModelWeights& weights, Mode mode,
              const QuantConfig& quant, const NonlinearConfig& nl,
              std::optional<LutSet> luts = std::nullopt);

  std::vector<double> logits(std::span<const double> image,
                             const TraceFn& trace = nullptr) const;
  Mode mode() const { return mode_; }
  const ModelDims& dims() const { return weights_.dims; }

 private:
  ModelWeights weights_;
  Mode mode_;
  NonlinearConfig nl_;
  std::optional<QuantModel> quantized_;
};

// First index of the largest logit.
std::size_t argmax(std::span<const double> logits);

}  // namespace mxvit
