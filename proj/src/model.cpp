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

#include "purefood/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "io_util.hpp"
#include "text_util.hpp"

namespace pf {

namespace {

struct ParamSlot {
  std::string name;
  ParamRole role;
  Shape4 shape;
  WeightLayout layout;
};

std::vector<ParamSlot> layer_slots(const LayerSpec& layer, const Shape4& in) {
  const std::string& n = layer.name;
  switch (layer.kind()) {
    case LayerKind::conv: {
      const auto& c = layer.as<ConvSpec>();
      return {{n + ".weight", ParamRole::weight, {c.filters, c.kernel, c.kernel, in.c}, WeightLayout::conv},
              {n + ".bias", ParamRole::bias, {1, 1, 1, c.filters}, WeightLayout::conv}};
    }
    case LayerKind::dense: {
      const auto& d = layer.as<DenseSpec>();
      return {{n + ".weight", ParamRole::weight, {1, 1, in.h * in.w * in.c, d.units}, WeightLayout::dense},
              {n + ".bias", ParamRole::bias, {1, 1, 1, d.units}, WeightLayout::dense}};
    }
    case LayerKind::batchnorm: {
      const Shape4 s{1, 1, 1, in.c};
      return {{n + ".gamma", ParamRole::scale, s, WeightLayout::dense},
              {n + ".beta", ParamRole::shift, s, WeightLayout::dense},
              {n + ".running_mean", ParamRole::statistic, s, WeightLayout::dense},
              {n + ".running_var", ParamRole::statistic, s, WeightLayout::dense}};
    }
    default:
      return {};
  }
}

std::vector<ParamSlot> param_layout(const ModelSpec& spec,
                                    const std::vector<Shape4>& shapes) {
  std::vector<ParamSlot> slots;
  for (std::size_t k = 0; k < spec.layers.size(); ++k) {
    const Shape4& in = k == 0 ? spec.input : shapes[k - 1];
    for (auto& s : layer_slots(spec.layers[k], in)) slots.push_back(std::move(s));
  }
  return slots;
}

bool has_params(LayerKind kind) {
  return kind == LayerKind::conv || kind == LayerKind::dense ||
         kind == LayerKind::batchnorm;
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::none:
      return "none";
    case Activation::relu:
      return "relu";
    case Activation::softmax:
      return "softmax";
  }
  return "none";
}

Activation parse_activation(const std::string& v, const std::string& where) {
  if (v == "none") return Activation::none;
  if (v == "relu") return Activation::relu;
  if (v == "softmax") return Activation::softmax;
  throw Error(ErrorKind::config, where + ": unknown activation '" + v + "'");
}

std::string serialize(const ModelSpec& spec, bool with_trainable) {
  std::ostringstream os;
  os << "@input h=" << spec.input.h << " w=" << spec.input.w
     << " c=" << spec.input.c << '\n';
  if (spec.top_boundary < spec.layers.size()) {
    os << "@top " << spec.layers[spec.top_boundary].name << '\n';
  }
  for (const auto& layer : spec.layers) {
    os << layer.name << ' ' << kind_name(layer.kind());
    std::visit(
        [&](const auto& p) {
          using S = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<S, ConvSpec>) {
            os << " filters=" << p.filters << " kernel=" << p.kernel
               << " stride=" << p.stride << " padding="
               << (p.padding ? std::to_string(*p.padding) : std::string("same"))
               << " activation=" << activation_name(p.activation);
          } else if constexpr (std::is_same_v<S, PoolSpec>) {
            os << " window=" << p.geometry.window << " stride=" << p.geometry.stride
               << " mode=" << (p.geometry.mode == PoolMode::max ? "max" : "average");
          } else if constexpr (std::is_same_v<S, DenseSpec>) {
            os << " units=" << p.units << " activation=" << activation_name(p.activation);
          } else if constexpr (std::is_same_v<S, DropoutSpec>) {
            os << " rate=" << detail::format_double(p.rate);
          } else if constexpr (std::is_same_v<S, BatchNormSpec>) {
            os << " eps=" << detail::format_double(p.eps)
               << " momentum=" << detail::format_double(p.momentum);
          }
        },
        layer.params);
    if (with_trainable && !layer.trainable) os << " trainable=0";
    os << '\n';
  }
  return os.str();
}

}  // namespace

std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv:
      return "conv";
    case LayerKind::pool:
      return "pool";
    case LayerKind::flatten:
      return "flatten";
    case LayerKind::dense:
      return "dense";
    case LayerKind::dropout:
      return "dropout";
    case LayerKind::batchnorm:
      return "batchnorm";
  }
  return "?";
}

const LayerSpec* ModelSpec::find(std::string_view name) const {
  auto it = std::find_if(layers.begin(), layers.end(),
                         [&](const LayerSpec& l) { return l.name == name; });
  return it == layers.end() ? nullptr : &*it;
}

std::size_t ModelSpec::index_of(std::string_view name) const {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (layers[k].name == name) return k;
  }
  throw Error(ErrorKind::config, "unknown layer '" + std::string(name) + "'");
}

ConvGeometry conv_geometry(const ConvSpec& spec) {
  return {spec.kernel, spec.stride,
          spec.padding ? *spec.padding : same_padding_amount(spec.kernel)};
}

std::vector<Shape4> infer_shapes(const ModelSpec& spec) {
  if (!spec.input.valid()) {
    throw Error(ErrorKind::config, "invalid model input shape " + spec.input.str());
  }
  std::vector<Shape4> shapes;
  Shape4 cur = spec.input;
  cur.i = 1;
  for (const auto& layer : spec.layers) {
    try {
      switch (layer.kind()) {
        case LayerKind::conv: {
          const auto& c = layer.as<ConvSpec>();
          const ConvGeometry g = conv_geometry(c);
          cur = {1, conv_output_size(cur.h, g), conv_output_size(cur.w, g), c.filters};
          break;
        }
        case LayerKind::pool: {
          const auto& p = layer.as<PoolSpec>().geometry;
          cur = {1, pool_output_size(cur.h, p), pool_output_size(cur.w, p), cur.c};
          break;
        }
        case LayerKind::flatten:
          cur = {1, 1, 1, cur.h * cur.w * cur.c};
          break;
        case LayerKind::dense:
          cur = {1, 1, 1, layer.as<DenseSpec>().units};
          break;
        case LayerKind::dropout:
        case LayerKind::batchnorm:
          break;
      }
    } catch (const Error& e) {
      throw Error(e.kind(), "layer '" + layer.name + "': " + e.what());
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void validate(const ModelSpec& spec) {
  std::set<std::string> names;
  for (const auto& layer : spec.layers) {
    const std::string where = "layer '" + layer.name + "'";
    if (layer.name.empty() ||
        layer.name.find_first_of(" \t\r\n") != std::string::npos) {
      throw Error(ErrorKind::config, "invalid layer name '" + layer.name + "'");
    }
    if (!names.insert(layer.name).second) {
      throw Error(ErrorKind::config, "duplicate layer name '" + layer.name + "'");
    }
    std::visit(
        [&](const auto& p) {
          using S = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<S, ConvSpec>) {
            if (p.filters < 1 || p.kernel < 1 || p.stride < 1) {
              throw Error(ErrorKind::config, where + ": filters, kernel, stride must be >= 1");
            }
            if (p.activation == Activation::softmax) {
              throw Error(ErrorKind::config, where + ": conv activation must be relu or none");
            }
          } else if constexpr (std::is_same_v<S, PoolSpec>) {
            if (p.geometry.window < 1 || p.geometry.stride < 1) {
              throw Error(ErrorKind::config, where + ": window and stride must be >= 1");
            }
          } else if constexpr (std::is_same_v<S, DenseSpec>) {
            if (p.units < 1) throw Error(ErrorKind::config, where + ": units must be >= 1");
          } else if constexpr (std::is_same_v<S, DropoutSpec>) {
            if (!(p.rate >= 0.0 && p.rate < 1.0)) {
              throw Error(ErrorKind::config, where + ": dropout rate must be in [0, 1)");
            }
          } else if constexpr (std::is_same_v<S, BatchNormSpec>) {
            if (!(p.eps > 0.0) || !(p.momentum > 0.0 && p.momentum <= 1.0)) {
              throw Error(ErrorKind::config, where + ": need eps > 0 and momentum in (0, 1]");
            }
          }
        },
        layer.params);
  }
  if (spec.layers.empty()) throw Error(ErrorKind::config, "model has no layers");
  if (spec.top_boundary > spec.layers.size()) {
    throw Error(ErrorKind::config, "top boundary beyond last layer");
  }
  infer_shapes(spec);
}

std::string serialize_spec(const ModelSpec& spec) { return serialize(spec, true); }

ModelSpec parse_spec(std::string_view text) {
  ModelSpec spec;
  std::optional<std::string> top_name;
  bool have_input = false;
  std::size_t line_no = 0;
  for (const std::string& raw : detail::split_lines(text)) {
    ++line_no;
    const auto tokens = detail::split_ws(raw);
    if (tokens.empty() || tokens[0][0] == '#') continue;
    const std::string where = "spec line " + std::to_string(line_no);
    if (tokens[0] == "@input") {
      const auto kv = detail::parse_kv(tokens, 1, where);
      spec.input = {1, detail::kv_size(kv, "h", where), detail::kv_size(kv, "w", where),
                    detail::kv_size(kv, "c", where)};
      have_input = true;
      continue;
    }
    if (tokens[0] == "@top") {
      if (tokens.size() != 2) throw Error(ErrorKind::config, where + ": expected '@top <layer>'");
      top_name = tokens[1];
      continue;
    }
    if (tokens.size() < 2) throw Error(ErrorKind::config, where + ": expected 'name kind ...'");
    LayerSpec layer;
    layer.name = tokens[0];
    auto kv = detail::parse_kv(tokens, 2, where);
    if (auto it = kv.find("trainable"); it != kv.end()) {
      layer.trainable = it->second != "0" && it->second != "false";
      kv.erase(it);
    }
    const std::string& kind = tokens[1];
    auto take = [&](const char* key) -> std::optional<std::string> {
      auto it = kv.find(key);
      if (it == kv.end()) return std::nullopt;
      std::string v = it->second;
      kv.erase(it);
      return v;
    };
    auto take_size = [&](const char* key, std::size_t fallback) {
      auto v = take(key);
      return v ? detail::parse_size(*v, where + " " + key) : fallback;
    };
    auto take_double = [&](const char* key, double fallback) {
      auto v = take(key);
      return v ? detail::parse_double(*v, where + " " + key) : fallback;
    };
    if (kind == "conv") {
      ConvSpec c;
      c.filters = take_size("filters", 0);
      c.kernel = take_size("kernel", 3);
      c.stride = take_size("stride", 1);
      if (auto p = take("padding"); p && *p != "same") {
        c.padding = detail::parse_size(*p, where + " padding");
      }
      if (auto a = take("activation")) c.activation = parse_activation(*a, where);
      layer.params = c;
    } else if (kind == "pool") {
      PoolSpec p;
      p.geometry.window = take_size("window", 2);
      p.geometry.stride = take_size("stride", p.geometry.window);
      if (auto m = take("mode")) {
        if (*m == "max") {
          p.geometry.mode = PoolMode::max;
        } else if (*m == "average" || *m == "avg") {
          p.geometry.mode = PoolMode::average;
        } else {
          throw Error(ErrorKind::config, where + ": unknown pool mode '" + *m + "'");
        }
      }
      layer.params = p;
    } else if (kind == "flatten") {
      layer.params = FlattenSpec{};
    } else if (kind == "dense") {
      DenseSpec d;
      d.units = take_size("units", 0);
      if (auto a = take("activation")) d.activation = parse_activation(*a, where);
      layer.params = d;
    } else if (kind == "dropout") {
      layer.params = DropoutSpec{take_double("rate", 0.5)};
    } else if (kind == "batchnorm") {
      BatchNormSpec b;
      b.eps = take_double("eps", b.eps);
      b.momentum = take_double("momentum", b.momentum);
      layer.params = b;
    } else {
      throw Error(ErrorKind::config, where + ": unknown layer kind '" + kind + "'");
    }
    if (!kv.empty()) {
      throw Error(ErrorKind::config,
                  where + ": unknown key '" + kv.begin()->first + "' for " + kind);
    }
    spec.layers.push_back(std::move(layer));
  }
  if (!have_input) throw Error(ErrorKind::config, "model spec lacks an @input line");
  spec.top_boundary = top_name ? spec.index_of(*top_name) : spec.layers.size();
  validate(spec);
  return spec;
}

ModelSpec load_spec(const std::string& path) {
  return parse_spec(detail::read_file(path));
}

void save_spec(const std::string& path, const ModelSpec& spec) {
  detail::write_file_atomic(path, serialize_spec(spec));
}

std::uint64_t spec_digest(const ModelSpec& spec) {
  return fnv1a(serialize(spec, false));
}

ModelSpec build_purefoodnet(std::size_t num_classes, double width_scale,
                            std::size_t input_side, double dropout_rate) {
  if (num_classes < 2) {
    throw Error(ErrorKind::config, "PureFoodNet needs >= 2 classes, got " +
                                       std::to_string(num_classes));
  }
  if (!(width_scale > 0.0)) throw Error(ErrorKind::config, "width_scale must be > 0");
  auto width = [&](double base) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(base * width_scale)));
  };
  ModelSpec spec;
  spec.input = {1, input_side, input_side, 3};
  const std::size_t convs_per_block[3] = {2, 3, 3};
  const double filters_per_block[3] = {128, 256, 512};
  for (int b = 0; b < 3; ++b) {
    const std::string block = "block" + std::to_string(b + 1);
    for (std::size_t c = 1; c <= convs_per_block[b]; ++c) {
      spec.layers.push_back({block + "_conv" + std::to_string(c),
                             ConvSpec{width(filters_per_block[b]), 3, 1, std::nullopt,
                                      Activation::relu}});
      spec.layers.push_back({block + "_bn" + std::to_string(c), BatchNormSpec{}});
    }
    spec.layers.push_back({block + "_pool", PoolSpec{{2, 2, PoolMode::max}}});
  }
  spec.top_boundary = spec.layers.size();
  spec.layers.push_back({"flatten", FlattenSpec{}});
  spec.layers.push_back({"fc1", DenseSpec{width(512), Activation::relu}});
  spec.layers.push_back({"dropout", DropoutSpec{dropout_rate}});
  spec.layers.push_back({"predictions", DenseSpec{num_classes, Activation::softmax}});
  validate(spec);
  return spec;
}

ModelSpec strip_top_layers(const ModelSpec& spec) {
  ModelSpec backbone;
  backbone.input = spec.input;
  backbone.layers.assign(spec.layers.begin(),
                         spec.layers.begin() + static_cast<std::ptrdiff_t>(spec.top_boundary));
  backbone.top_boundary = backbone.layers.size();
  if (backbone.layers.empty()) {
    throw Error(ErrorKind::config, "model has no layers below its top boundary");
  }
  return backbone;
}

ModelSpec attach_head(const ModelSpec& backbone, std::size_t num_classes,
                      const HeadOptions& options) {
  if (num_classes < 2) {
    throw Error(ErrorKind::config, "head needs >= 2 classes, got " + std::to_string(num_classes));
  }
  ModelSpec spec = backbone;
  spec.layers.resize(backbone.top_boundary);
  spec.top_boundary = spec.layers.size();
  spec.layers.push_back({"flatten", FlattenSpec{}});
  spec.layers.push_back({"fc1", DenseSpec{options.units, Activation::relu}});
  spec.layers.push_back({"dropout", DropoutSpec{options.dropout_rate}});
  spec.layers.push_back({"predictions", DenseSpec{num_classes, Activation::softmax}});
  validate(spec);
  return spec;
}

ModelSpec set_trainable(const ModelSpec& spec,
                        const std::vector<std::string>& layer_names, bool flag) {
  ModelSpec out = spec;
  for (const auto& name : layer_names) {
    out.layers[out.index_of(name)].trainable = flag;
  }
  return out;
}

std::vector<std::string> backbone_layer_names(const ModelSpec& spec) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < spec.top_boundary; ++k) names.push_back(spec.layers[k].name);
  return names;
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <typename T>
Tensor<T> glorot_init(const Shape4& shape, WeightLayout layout, Rng& rng) {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  if (layout == WeightLayout::conv) {
    fan_in = shape.h * shape.w * shape.c;
    fan_out = shape.h * shape.w * shape.i;
  } else {
    fan_in = shape.i * shape.h * shape.w;
    fan_out = shape.c;
  }
  const double limit = glorot_limit(fan_in, fan_out);
  // Largest T not above the bound.
  T bound = static_cast<T>(limit);
  if (static_cast<double>(bound) > limit) bound = std::nextafter(bound, T(0));
  std::uniform_real_distribution<double> uniform(-limit, limit);
  Tensor<T> t(shape);
  for (T& v : t.data()) v = std::clamp(static_cast<T>(uniform(rng)), -bound, bound);
  return t;
}

template <typename T>
ParamStore<T> complete_params(const ModelSpec& spec, ParamStore<T> existing,
                              std::uint64_t seed) {
  const auto shapes = infer_shapes(spec);
  ParamStore<T> out;
  for (const auto& slot : param_layout(spec, shapes)) {
    if (Param<T>* have = existing.find(slot.name)) {
      if (have->value.shape() != slot.shape) {
        throw Error(ErrorKind::mismatch, "parameter " + slot.name + " has shape " +
                                             have->value.shape().str() + ", expected " +
                                             slot.shape.str());
      }
      out.add(slot.name, slot.role, std::move(have->value));
      continue;
    }
    Tensor<T> value;
    switch (slot.role) {
      case ParamRole::weight: {
        Rng rng(derive_seed(seed, layer_of(slot.name)));
        value = glorot_init<T>(slot.shape, slot.layout, rng);
        break;
      }
      case ParamRole::scale:
        value = Tensor<T>(slot.shape, T(1));
        break;
      case ParamRole::statistic:
        value = Tensor<T>(slot.shape, slot.name.ends_with(".running_var") ? T(1) : T(0));
        break;
      default:
        value = Tensor<T>(slot.shape);
    }
    out.add(slot.name, slot.role, std::move(value));
  }
  return out;
}

template <typename T>
ParamStore<T> select_params(const ModelSpec& spec, const ParamStore<T>& params) {
  ParamStore<T> out;
  for (const auto& p : params) {
    if (spec.find(layer_of(p.name)) != nullptr) out.add(p.name, p.role, p.value);
  }
  return out;
}

template <typename T>
Model<T>::Model(ModelSpec spec, ParamStore<T> params)
    : spec_(std::move(spec)) {
  validate(spec_);
  shapes_ = infer_shapes(spec_);
  set_params(std::move(params));
}

template <typename T>
void Model<T>::set_params(ParamStore<T> params) {
  const auto slots = param_layout(spec_, shapes_);
  if (params.size() != slots.size()) {
    throw Error(ErrorKind::mismatch, "model expects " + std::to_string(slots.size()) +
                                         " parameter tensors, got " +
                                         std::to_string(params.size()));
  }
  ParamStore<T> ordered;
  for (const auto& slot : slots) {
    Param<T>* p = params.find(slot.name);
    if (p == nullptr) throw Error(ErrorKind::mismatch, "missing parameter " + slot.name);
    if (p->value.shape() != slot.shape) {
      throw Error(ErrorKind::mismatch, "parameter " + slot.name + " has shape " +
                                           p->value.shape().str() + ", expected " +
                                           slot.shape.str());
    }
    ordered.add(slot.name, slot.role, std::move(p->value));
  }
  params_ = std::move(ordered);
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& x, Mode mode, Rng* rng,
                            ForwardTrace<T>* trace) {
  return run(x, mode, rng, trace, 0, true);
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& x, ForwardTrace<T>* trace) const {
  return run(x, Mode::inference, nullptr, trace, 0, false);
}

template <typename T>
Tensor<T> Model<T>::predict_from(std::size_t first, const Tensor<T>& x) const {
  if (first > spec_.layers.size()) {
    throw Error(ErrorKind::out_of_range, "layer index beyond model");
  }
  return run(x, Mode::inference, nullptr, nullptr, first, false);
}

template <typename T>
Tensor<T> Model<T>::run(const Tensor<T>& x, Mode mode, Rng* rng,
                        ForwardTrace<T>* trace, std::size_t first,
                        bool update_stats) const {
  const Shape4 expected = first == 0 ? spec_.input : shapes_[first - 1];
  const Shape4& s = x.shape();
  if (s.h != expected.h || s.w != expected.w || s.c != expected.c) {
    throw Error(ErrorKind::shape, "model input " + s.str() + " does not match " +
                                      expected.str());
  }
  if (trace != nullptr) {
    trace->input = x;
    trace->outputs.assign(spec_.layers.size(), Tensor<T>());
    trace->dropout_masks.assign(spec_.layers.size(), Tensor<T>());
    trace->bn_caches.assign(spec_.layers.size(), BatchNormCache<T>());
  }
  Tensor<T> cur = x;
  for (std::size_t k = first; k < spec_.layers.size(); ++k) {
    const LayerSpec& layer = spec_.layers[k];
    const std::string& n = layer.name;
    Tensor<T> next;
    switch (layer.kind()) {
      case LayerKind::conv: {
        const auto& c = layer.as<ConvSpec>();
        next = conv2d_forward(cur, params_.at(n + ".weight"), params_.at(n + ".bias"),
                              conv_geometry(c), c.activation);
        break;
      }
      case LayerKind::pool:
        next = pool_forward(cur, layer.as<PoolSpec>().geometry);
        break;
      case LayerKind::flatten:
        next = flatten(cur);
        break;
      case LayerKind::dense: {
        const auto& d = layer.as<DenseSpec>();
        next = dense_forward(cur, params_.at(n + ".weight"), params_.at(n + ".bias"),
                             d.activation);
        break;
      }
      case LayerKind::dropout: {
        const bool training = mode == Mode::training;
        if (training && rng == nullptr) {
          throw Error(ErrorKind::config, "training-mode dropout needs a generator");
        }
        Rng unused;
        auto r = dropout_forward(cur, layer.as<DropoutSpec>().rate, training,
                                 training ? *rng : unused);
        next = std::move(r.y);
        if (trace != nullptr) trace->dropout_masks[k] = std::move(r.mask);
        break;
      }
      case LayerKind::batchnorm: {
        const auto& b = layer.as<BatchNormSpec>();
        const bool training = mode == Mode::training && layer.trainable;
        // Running stats are only written when training with update_stats,
        // which is reachable solely through the non-const forward().
        auto& rm = const_cast<Tensor<T>&>(params_.at(n + ".running_mean"));
        auto& rv = const_cast<Tensor<T>&>(params_.at(n + ".running_var"));
        next = batchnorm_forward(cur, params_.at(n + ".gamma"), params_.at(n + ".beta"),
                                 rm, rv, b.eps, b.momentum, training,
                                 training && update_stats,
                                 trace != nullptr ? &trace->bn_caches[k] : nullptr);
        break;
      }
    }
    cur = std::move(next);
    if (trace != nullptr) trace->outputs[k] = cur;
  }
  return cur;
}

template <typename T>
GradStore<T> Model<T>::backward(const ForwardTrace<T>& trace, const Tensor<T>& dout,
                                bool dout_is_logits, Tensor<T>* dx) const {
  const std::size_t count = spec_.layers.size();
  if (trace.outputs.size() != count || trace.outputs.back().empty()) {
    throw Error(ErrorKind::config, "backward needs a full forward trace");
  }
  if (dout.shape() != trace.outputs.back().shape()) {
    throw Error(ErrorKind::shape, "output gradient " + dout.shape().str() +
                                      " does not match output " +
                                      trace.outputs.back().shape().str());
  }
  // Lowest layer that still needs a gradient.
  std::size_t lowest = count;
  for (std::size_t k = 0; k < count; ++k) {
    if (spec_.layers[k].trainable && has_params(spec_.layers[k].kind())) {
      lowest = k;
      break;
    }
  }
  if (dx != nullptr) lowest = 0;

  // Collected top-down, emitted in parameter order below.
  std::map<std::string, Tensor<T>> found;
  Tensor<T> d = dout;
  for (std::size_t k = count; k-- > lowest;) {
    const LayerSpec& layer = spec_.layers[k];
    const std::string& n = layer.name;
    const Tensor<T>& in = k == 0 ? trace.input : trace.outputs[k - 1];
    const Tensor<T>& out = trace.outputs[k];
    const bool need_dx = k > lowest || dx != nullptr;
    switch (layer.kind()) {
      case LayerKind::conv: {
        const auto& c = layer.as<ConvSpec>();
        if (c.activation == Activation::relu) d = relu_backward(out, d);
        auto g = conv2d_backward(in, params_.at(n + ".weight"), conv_geometry(c), d, need_dx);
        if (layer.trainable) {
          found[n + ".weight"] = std::move(g.dfilters);
          found[n + ".bias"] = std::move(g.dbias);
        }
        d = std::move(g.dx);
        break;
      }
      case LayerKind::pool:
        d = pool_backward(in, layer.as<PoolSpec>().geometry, d);
        break;
      case LayerKind::flatten:
        d = d.reshaped(in.shape());
        break;
      case LayerKind::dense: {
        const auto& dl = layer.as<DenseSpec>();
        if (dl.activation == Activation::relu) {
          d = relu_backward(out, d);
        } else if (dl.activation == Activation::softmax &&
                   !(dout_is_logits && k + 1 == count)) {
          d = softmax_backward(out, d);
        }
        auto g = dense_backward(in, params_.at(n + ".weight"), d);
        if (layer.trainable) {
          found[n + ".weight"] = std::move(g.dweights);
          found[n + ".bias"] = std::move(g.dbias);
        }
        d = std::move(g.dx);
        break;
      }
      case LayerKind::dropout:
        d = dropout_backward(trace.dropout_masks[k], d);
        break;
      case LayerKind::batchnorm: {
        auto g = batchnorm_backward(trace.bn_caches[k], params_.at(n + ".gamma"), d);
        if (layer.trainable) {
          found[n + ".gamma"] = std::move(g.dgamma);
          found[n + ".beta"] = std::move(g.dbeta);
        }
        d = std::move(g.dx);
        break;
      }
    }
  }
  GradStore<T> grads;
  for (const auto& p : params_) {
    auto it = found.find(p.name);
    if (it != found.end()) grads.add(p.name, p.role, std::move(it->second));
  }
  if (dx != nullptr) *dx = std::move(d);
  return grads;
}

template class Model<float>;
template class Model<double>;

template <typename T>
std::map<std::string, Tensor<T>> capture_activations(
    const Model<T>& model, const Tensor<T>& x,
    const std::vector<std::string>& layer_names) {
  std::vector<std::size_t> indices;
  for (const auto& name : layer_names) indices.push_back(model.spec().index_of(name));
  ForwardTrace<T> trace;
  model.predict(x, &trace);
  std::map<std::string, Tensor<T>> out;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    out[layer_names[k]] = trace.outputs[indices[k]];
  }
  return out;
}

std::size_t LayerLiveness::dead_count() const {
  return static_cast<std::size_t>(std::count(dead.begin(), dead.end(), true));
}

double LayerLiveness::dead_fraction() const {
  return dead.empty() ? 0.0
                      : static_cast<double>(dead_count()) / static_cast<double>(dead.size());
}

template <typename T>
std::vector<LayerLiveness> dead_filter_report(const Model<T>& model,
                                              const Tensor<T>& probe,
                                              double threshold) {
  if (probe.empty()) throw Error(ErrorKind::config, "probe batch is empty");
  ForwardTrace<T> trace;
  model.predict(probe, &trace);
  std::vector<LayerLiveness> report;
  const auto& layers = model.spec().layers;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (layers[k].kind() != LayerKind::conv) continue;
    const Tensor<T>& act = trace.outputs[k];
    const std::size_t f = act.shape().c;
    LayerLiveness live{layers[k].name, std::vector<bool>(f, true)};
    for (std::size_t j = 0; j < act.size(); ++j) {
      if (static_cast<double>(act[j]) > threshold) live.dead[j % f] = false;
    }
    report.push_back(std::move(live));
  }
  return report;
}

namespace {
constexpr char kWeightsMagic[4] = {'P', 'F', 'W', '1'};

WeightFile parse_weight_file(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kWeightsMagic)) {
    throw Error(ErrorKind::format, "missing PFW1 magic");
  }
  WeightFile file;
  file.digest = detail::get_le<std::uint64_t>(in, "weights digest");
  const auto count = detail::get_le<std::uint64_t>(in, "weights count");
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto len = detail::get_le<std::uint32_t>(in, "weights name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw Error(ErrorKind::format, "truncated PFW1 tensor name");
    const auto start = in.tellg();
    read_tensor(in);  // validates and skips the payload
    const auto stop = in.tellg();
    std::string bytes(static_cast<std::size_t>(stop - start), '\0');
    in.seekg(start);
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    file.tensors.push_back({std::move(name), std::move(bytes)});
  }
  return file;
}
}  // namespace

const WeightBlob* WeightFile::find(std::string_view name) const {
  auto it = std::find_if(tensors.begin(), tensors.end(),
                         [&](const WeightBlob& b) { return b.name == name; });
  return it == tensors.end() ? nullptr : &*it;
}

WeightFile read_weight_file(const std::string& path) {
  std::istringstream is(detail::read_file(path));
  return parse_weight_file(is);
}

template <typename T>
void write_weights(std::ostream& out, const ModelSpec& spec,
                   const ParamStore<T>& params) {
  out.write(kWeightsMagic, 4);
  detail::put_le<std::uint64_t>(out, spec_digest(spec));
  detail::put_le<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_tensor(out, p.value);
  }
}

template <typename T>
void save_weights(const std::string& path, const ModelSpec& spec,
                  const ParamStore<T>& params) {
  std::ostringstream os;
  write_weights(os, spec, params);
  detail::write_file_atomic(path, os.str());
}

template <typename T>
ParamStore<T> read_weights(std::istream& in, const ModelSpec& spec) {
  const WeightFile file = parse_weight_file(in);
  if (file.digest != spec_digest(spec)) {
    throw Error(ErrorKind::mismatch, "weights were saved for a different model spec");
  }
  ParamStore<T> stored;
  for (const auto& blob : file.tensors) {
    std::istringstream is(blob.pft1);
    stored.add(blob.name, ParamRole::weight, read_tensor_as<T>(is));
  }
  const auto slots = param_layout(spec, infer_shapes(spec));
  if (slots.size() != stored.size()) {
    throw Error(ErrorKind::mismatch, "weights file holds " + std::to_string(stored.size()) +
                                         " tensors, spec needs " +
                                         std::to_string(slots.size()));
  }
  ParamStore<T> out;
  for (const auto& slot : slots) {
    Param<T>* p = stored.find(slot.name);
    if (p == nullptr) throw Error(ErrorKind::mismatch, "weights lack " + slot.name);
    if (p->value.shape() != slot.shape) {
      throw Error(ErrorKind::mismatch, "weights tensor " + slot.name + " has shape " +
                                           p->value.shape().str());
    }
    out.add(slot.name, slot.role, std::move(p->value));
  }
  return out;
}

template <typename T>
ParamStore<T> load_weights(const std::string& path, const ModelSpec& spec) {
  std::istringstream is(detail::read_file(path));
  return read_weights<T>(is, spec);
}

#define PF_INSTANTIATE(T)                                                          \
  template Tensor<T> glorot_init(const Shape4&, WeightLayout, Rng&);               \
  template ParamStore<T> complete_params(const ModelSpec&, ParamStore<T>,          \
                                         std::uint64_t);                           \
  template ParamStore<T> select_params(const ModelSpec&, const ParamStore<T>&);    \
  template std::map<std::string, Tensor<T>> capture_activations(                   \
      const Model<T>&, const Tensor<T>&, const std::vector<std::string>&);         \
  template std::vector<LayerLiveness> dead_filter_report(                          \
      const Model<T>&, const Tensor<T>&, double);                                  \
  template void write_weights(std::ostream&, const ModelSpec&,                     \
                              const ParamStore<T>&);                               \
  template void save_weights(const std::string&, const ModelSpec&,                 \
                             const ParamStore<T>&);                                \
  template ParamStore<T> read_weights(std::istream&, const ModelSpec&);            \
  template ParamStore<T> load_weights(const std::string&, const ModelSpec&);
PF_INSTANTIATE(float)
PF_INSTANTIATE(double)
#undef PF_INSTANTIATE

}  // namespace pf
