// Copyright 2026 The purefood Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "purefood/layers.hpp"
#include "purefood/params.hpp"
#include "purefood/rng.hpp"
#include "purefood/tensor.hpp"

namespace pf {

struct ConvSpec {
  std::size_t filters = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::optional<std::size_t> padding;  // nullopt: same padding
  Activation activation = Activation::relu;
};

struct PoolSpec {
  PoolGeometry geometry;
};

struct FlattenSpec {};

struct DenseSpec {
  std::size_t units = 1;
  Activation activation = Activation::none;
};

struct DropoutSpec {
  double rate = 0.5;
};

struct BatchNormSpec {
  double eps = 1e-5;
  double momentum = 0.1;
};

// Alternative order must match LayerKind.
using LayerParams = std::variant<ConvSpec, PoolSpec, FlattenSpec, DenseSpec,
                                 DropoutSpec, BatchNormSpec>;
enum class LayerKind { conv, pool, flatten, dense, dropout, batchnorm };

std::string_view kind_name(LayerKind kind);

struct LayerSpec {
  std::string name;
  LayerParams params;
  bool trainable = true;

  LayerKind kind() const noexcept { return static_cast<LayerKind>(params.index()); }
  template <typename S>
  const S& as() const {
    return std::get<S>(params);
  }
};

// Sequential model description. `input` has i == 1. Layers at index
// >= top_boundary form the classification head ("top layers").
struct ModelSpec {
  Shape4 input{1, 1, 1, 1};
  std::vector<LayerSpec> layers;
  std::size_t top_boundary = 0;

  const LayerSpec* find(std::string_view name) const;
  // Layer index for `name`; config error when absent.
  std::size_t index_of(std::string_view name) const;
};

ConvGeometry conv_geometry(const ConvSpec& spec);

// Per-layer output shapes (batch extent 1). Geometry errors name the layer.
std::vector<Shape4> infer_shapes(const ModelSpec& spec);

// Checks names, hyperparameters, boundary, and end-to-end shape inference.
void validate(const ModelSpec& spec);

// Line-oriented text: `@input h= w= c=`, optional `@top <layer>`, then one
// `name kind key=value ...` line per layer. '#' starts a comment line.
std::string serialize_spec(const ModelSpec& spec);
ModelSpec parse_spec(std::string_view text);
ModelSpec load_spec(const std::string& path);
void save_spec(const std::string& path, const ModelSpec& spec);

// Architecture fingerprint; independent of trainable flags.
std::uint64_t spec_digest(const ModelSpec& spec);

// Blocks of (2, 3, 3) 3x3 same-padded ReLU convs with round(128/256/512 *
// width_scale) filters, each conv followed by batch norm and each block by a
// 2x2/2 max pool; head flatten -> dense(round(512 * width_scale), ReLU) ->
// dropout -> dense(num_classes, softmax).
ModelSpec build_purefoodnet(std::size_t num_classes, double width_scale = 1.0,
                            std::size_t input_side = 224,
                            double dropout_rate = 0.5);

struct HeadOptions {
  std::size_t units = 512;
  double dropout_rate = 0.5;
};

// Layers before top_boundary.
ModelSpec strip_top_layers(const ModelSpec& spec);

// Backbone plus a fresh flatten -> dense -> dropout -> dense(softmax) head.
ModelSpec attach_head(const ModelSpec& backbone, std::size_t num_classes,
                      const HeadOptions& options = {});

// Copy of `spec` with the named layers' trainable flag set to `flag`.
ModelSpec set_trainable(const ModelSpec& spec,
                        const std::vector<std::string>& layer_names, bool flag);

// Names of layers before top_boundary.
std::vector<std::string> backbone_layer_names(const ModelSpec& spec);

// Glorot-uniform bound sqrt(6 / (fan_in + fan_out)).
double glorot_limit(std::size_t fan_in, std::size_t fan_out);

enum class WeightLayout {
  conv,   // (f, k, k, c): fan_in = k*k*c, fan_out = k*k*f
  dense,  // (1, 1, n_in, n_out)
};

template <typename T>
Tensor<T> glorot_init(const Shape4& shape, WeightLayout layout, Rng& rng);

// Params for every layer of `spec` missing from `existing`; new weights are
// Glorot-uniform with a per-layer seed derived from (`seed`, layer name),
// biases and shifts zero, scales one, running stats (0, 1).
template <typename T>
ParamStore<T> complete_params(const ModelSpec& spec, ParamStore<T> existing,
                              std::uint64_t seed);

template <typename T>
ParamStore<T> init_params(const ModelSpec& spec, std::uint64_t seed) {
  return complete_params<T>(spec, ParamStore<T>{}, seed);
}

// Params whose layer name appears in `spec`, in spec order.
template <typename T>
ParamStore<T> select_params(const ModelSpec& spec, const ParamStore<T>& params);

enum class Mode { inference, training };

// Per-layer forward record consumed by Model::backward.
template <typename T>
struct ForwardTrace {
  Tensor<T> input;
  std::vector<Tensor<T>> outputs;
  std::vector<Tensor<T>> dropout_masks;
  std::vector<BatchNormCache<T>> bn_caches;
};

// A spec bound to its parameters.
template <typename T>
class Model {
 public:
  Model(ModelSpec spec, ParamStore<T> params);

  const ModelSpec& spec() const noexcept { return spec_; }
  const ParamStore<T>& params() const noexcept { return params_; }
  ParamStore<T>& params() noexcept { return params_; }
  void set_params(ParamStore<T> params);
  std::size_t num_outputs() const noexcept { return shapes_.back().size(); }
  const std::vector<Shape4>& layer_shapes() const noexcept { return shapes_; }

  // Training mode uses batch statistics in trainable batch-norm layers (and
  // updates their running stats) and samples dropout masks from `rng`.
  // Frozen batch-norm layers always run on their running statistics.
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng = nullptr,
                    ForwardTrace<T>* trace = nullptr);

  // Inference-mode forward; never mutates the model.
  Tensor<T> predict(const Tensor<T>& x, ForwardTrace<T>* trace = nullptr) const;

  // Inference-mode forward of layers [first, end) applied to `x`, the output
  // of layer first - 1 (or the model input when first == 0).
  Tensor<T> predict_from(std::size_t first, const Tensor<T>& x) const;

  // Parameter gradients given dL/d(output). With `dout_is_logits`, `dout` is
  // taken with respect to the pre-softmax input of the final dense layer.
  // Only trainable layers get entries.
  GradStore<T> backward(const ForwardTrace<T>& trace, const Tensor<T>& dout,
                        bool dout_is_logits = false,
                        Tensor<T>* dx = nullptr) const;

 private:
  Tensor<T> run(const Tensor<T>& x, Mode mode, Rng* rng, ForwardTrace<T>* trace,
                std::size_t first, bool update_stats) const;

  ModelSpec spec_;
  ParamStore<T> params_;
  std::vector<Shape4> shapes_;
};

extern template class Model<float>;
extern template class Model<double>;

// Inference-mode outputs of the named layers.
template <typename T>
std::map<std::string, Tensor<T>> capture_activations(
    const Model<T>& model, const Tensor<T>& x,
    const std::vector<std::string>& layer_names);

struct LayerLiveness {
  std::string layer;
  std::vector<bool> dead;  // per filter

  std::size_t dead_count() const;
  double dead_fraction() const;
};

// A conv filter is dead when its activation map is <= threshold everywhere
// for every image of the probe batch.
template <typename T>
std::vector<LayerLiveness> dead_filter_report(const Model<T>& model,
                                              const Tensor<T>& probe,
                                              double threshold = 0.0);

// PFW1 weight files: "PFW1", u64 spec digest, u64 count, then per tensor a
// u32 name length, UTF-8 name, and a PFT1 payload. All integers little-endian.

template <typename T>
void write_weights(std::ostream& out, const ModelSpec& spec,
                   const ParamStore<T>& params);
template <typename T>
void save_weights(const std::string& path, const ModelSpec& spec,
                  const ParamStore<T>& params);

// Reads weights for `spec`; mismatch error when the digest differs or the
// stored tensors do not cover the spec exactly.
template <typename T>
ParamStore<T> read_weights(std::istream& in, const ModelSpec& spec);
template <typename T>
ParamStore<T> load_weights(const std::string& path, const ModelSpec& spec);

struct WeightBlob {
  std::string name;
  std::string pft1;  // raw PFT1 payload bytes
};

struct WeightFile {
  std::uint64_t digest = 0;
  std::vector<WeightBlob> tensors;

  const WeightBlob* find(std::string_view name) const;
};

// Spec-free view of a PFW1 file.
WeightFile read_weight_file(const std::string& path);

}  // namespace pf
