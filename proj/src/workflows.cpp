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

#include "purefood/workflows.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "io_util.hpp"
#include "purefood/dataio.hpp"
#include "purefood/evaluation.hpp"
#include "purefood/model.hpp"
#include "purefood/training.hpp"
#include "text_util.hpp"

namespace fs = std::filesystem;

namespace pf {

namespace {

using Cmds = std::vector<std::string>;
const Cmds kTrain{"train", "finetune"};
const Cmds kData{"train", "finetune", "dump-batch"};
const Cmds kAug{"train", "finetune", "dump-batch", "augment-preview"};
const Cmds kLoad{"finetune", "eval", "predict", "inspect"};

std::vector<ConfigKey> make_keys() {
  const AugmentPolicy p;
  const auto num = [](double v) { return detail::format_double(v); };
  return {
      {"model", "purefoodnet", "builtin model name or a model spec file", {"train"}},
      {"width_scale", "1", "filter-count multiplier for the builtin model", {"train"}},
      {"input_side", "224", "square input side in pixels", {"train", "dump-batch"}},
      {"dropout", "0.5", "dropout rate of the builtin head", {"train"}},
      {"data", "", "dataset root with one directory per class", kData},
      {"manifest", "", "existing manifest file (instead of scanning data)",
       {"train", "finetune", "eval", "predict", "dump-batch"}},
      {"split_mode", "ratio", "ratio or food101 (750 train / 250 test per class)", kData},
      {"val_ratio", "0.1", "ratio mode: validation share per class", kData},
      {"test_ratio", "0.2", "ratio mode: test share per class", kData},
      {"val_fraction", "0.1", "food101 mode: share of train held out for validation", kData},
      {"max_side", "512", "images are first downscaled to this longest side",
       {"train", "finetune", "eval", "predict", "inspect", "dump-batch"}},
      {"epochs", "50", "epoch cap", kTrain},
      {"batch_size", "32", "mini-batch size", {"train", "finetune", "dump-batch"}},
      {"eval_batch_size", "64", "batch size for scoring", {"train", "finetune", "eval"}},
      {"lr", "0.01", "initial learning rate", kTrain},
      {"momentum", "0.9", "Nesterov momentum", kTrain},
      {"lr_decay", "0.5", "step-decay factor", kTrain},
      {"lr_decay_every", "20", "epochs between decay steps (0 disables)", kTrain},
      {"l1", "0", "L1 penalty coefficient on weights", kTrain},
      {"l2", "0", "L2 penalty coefficient on weights", kTrain},
      {"early_stopping", "true", "stop when validation top-1 stops improving", kTrain},
      {"patience", "5", "epochs without improvement before stopping", kTrain},
      {"augment", "true", "augment training images", kAug},
      {"aug_flip", num(p.flip_probability), "horizontal flip probability", kAug},
      {"aug_vflip", num(p.vertical_flip_probability), "vertical flip probability", kAug},
      {"aug_crop", num(p.crop_probability), "random crop probability", kAug},
      {"aug_tilt", num(p.tilt_probability), "tilt probability", kAug},
      {"aug_color", num(p.color_shift_probability), "color shift probability", kAug},
      {"aug_rotation", num(p.rotation_probability), "rotation probability", kAug},
      {"aug_noise", num(p.noise_probability), "noise probability", kAug},
      {"aug_contrast", num(p.contrast_probability), "contrast probability", kAug},
      {"seed", "0", "top-level random seed", kAug},
      {"out", "out", "output directory",
       {"train", "finetune", "eval", "inspect", "dump-batch", "augment-preview"}},
      {"weights", "", "PFW1 weights file", kLoad},
      {"spec", "", "model spec of the weights (default: model.spec beside them)", kLoad},
      {"freeze_backbone", "false", "keep backbone layers fixed", {"finetune"}},
      {"split", "test", "manifest split to read", {"eval", "dump-batch"}},
      {"ks", "1,5", "comma-separated k values", {"eval"}},
      {"image", "", "PPM image", {"predict", "inspect", "augment-preview"}},
      {"top_k", "5", "number of classes to print", {"predict"}},
      {"layers", "", "comma-separated layer names (default: every conv layer)", {"inspect"}},
      {"history", "", "history CSV", {"diagnose"}},
      {"t_low", "0.1", "error rate at or below which a fit is good", {"diagnose"}},
      {"t_high", "0.3", "train error rate above which the model underfits", {"diagnose"}},
      {"gap", "0.15", "largest val minus train error of a good fit", {"diagnose"}},
      {"variants", "8", "number of augmented variants", {"augment-preview"}},
  };
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = make_keys();
  return keys;
}

const ConfigKey* find_config_key(std::string_view name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (find_config_key(key) == nullptr) throw Error(ErrorKind::config, "unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  const ConfigKey* k = find_config_key(key);
  if (k == nullptr) throw Error(ErrorKind::config, "unknown config key '" + key + "'");
  return k->default_value;
}

void RunConfig::load_text(std::string_view text, const std::string& origin) {
  std::size_t line_no = 0;
  for (const std::string& raw : detail::split_lines(text)) {
    ++line_no;
    const std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::config, origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    try {
      set(key, detail::trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(ErrorKind::config, origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::string& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::config, std::string("cannot read config: ") + e.what());
  }
  load_text(text, path);
}

std::size_t RunConfig::size_value(const std::string& key) const {
  return detail::parse_size(get(key), key);
}

double RunConfig::real(const std::string& key) const {
  const double v = detail::parse_double(get(key), key);
  if (!std::isfinite(v)) throw Error(ErrorKind::config, key + ": value must be finite");
  return v;
}

bool RunConfig::flag(const std::string& key) const { return detail::parse_bool(get(key), key); }

std::uint64_t RunConfig::seed() const { return detail::parse_size(get("seed"), "seed"); }

Image render_activation_grid(const Tensor<float>& a) {
  const Shape4& s = a.shape();
  if (s.i != 1) throw Error(ErrorKind::shape, "activation grid needs one image, got " + s.str());
  if (s.h == 1 && s.w == 1) {
    Image strip({1, 1, s.c, 1}, 0.0f);
    const auto [lo, hi] = std::minmax_element(a.data().begin(), a.data().end());
    if (*hi > *lo) {
      for (std::size_t k = 0; k < s.c; ++k) strip[k] = (a[k] - *lo) / (*hi - *lo);
    }
    return strip;
  }
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(s.c))));
  const std::size_t rows = (s.c + cols - 1) / cols;
  Image grid({1, rows * s.h, cols * s.w, 1}, 0.0f);
  for (std::size_t ch = 0; ch < s.c; ++ch) {
    float lo = a(0, 0, 0, ch), hi = lo;
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x) {
        lo = std::min(lo, a(0, y, x, ch));
        hi = std::max(hi, a(0, y, x, ch));
      }
    if (!(hi > lo)) continue;
    const std::size_t oy = (ch / cols) * s.h;
    const std::size_t ox = (ch % cols) * s.w;
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x) grid(0, oy + y, ox + x, 0) = (a(0, y, x, ch) - lo) / (hi - lo);
  }
  return grid;
}

namespace {

fs::path output_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.get("out");
  if (dir.empty()) throw Error(ErrorKind::config, "out: output directory is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

const std::string& required(const RunConfig& cfg, const std::string& key) {
  const std::string& v = cfg.get(key);
  if (v.empty()) throw Error(ErrorKind::config, key + " is required");
  return v;
}

SplitScheme split_scheme(const RunConfig& cfg) {
  const std::string& mode = cfg.get("split_mode");
  if (mode == "food101") return SplitScheme::food101(cfg.real("val_fraction"));
  if (mode != "ratio") throw Error(ErrorKind::config, "split_mode must be ratio or food101");
  const double val = cfg.real("val_ratio");
  const double test = cfg.real("test_ratio");
  return SplitScheme::ratios(1.0 - val - test, val, test);
}

DatasetManifest dataset(const RunConfig& cfg) {
  if (!cfg.get("manifest").empty()) return load_manifest(cfg.get("manifest"));
  if (cfg.get("data").empty()) throw Error(ErrorKind::config, "either data or manifest is required");
  return build_manifest(cfg.get("data"), split_scheme(cfg), derive_seed(cfg.seed(), "split"));
}

std::optional<AugmentPolicy> augment_policy(const RunConfig& cfg) {
  if (!cfg.flag("augment")) return std::nullopt;
  AugmentPolicy p;
  p.flip_probability = cfg.real("aug_flip");
  p.vertical_flip_probability = cfg.real("aug_vflip");
  p.crop_probability = cfg.real("aug_crop");
  p.tilt_probability = cfg.real("aug_tilt");
  p.color_shift_probability = cfg.real("aug_color");
  p.rotation_probability = cfg.real("aug_rotation");
  p.noise_probability = cfg.real("aug_noise");
  p.contrast_probability = cfg.real("aug_contrast");
  p.seed = derive_seed(cfg.seed(), "augment");
  p.validate();
  return p;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.size_value("epochs");
  tc.batch_size = cfg.size_value("batch_size");
  tc.eval_batch_size = cfg.size_value("eval_batch_size");
  tc.optimizer.learning_rate = cfg.real("lr");
  tc.optimizer.momentum = cfg.real("momentum");
  tc.optimizer.schedule.factor = cfg.real("lr_decay");
  tc.optimizer.schedule.interval = cfg.size_value("lr_decay_every");
  tc.regularization.l1 = cfg.real("l1");
  tc.regularization.l2 = cfg.real("l2");
  tc.early_stopping = cfg.flag("early_stopping");
  tc.patience = cfg.size_value("patience");
  tc.seed = cfg.seed();
  tc.augment = augment_policy(cfg);
  tc.validate();
  return tc;
}

std::string spec_path_for(const RunConfig& cfg) {
  if (!cfg.get("spec").empty()) return cfg.get("spec");
  return (fs::path(required(cfg, "weights")).parent_path() / "model.spec").string();
}

Model<float> load_model(const RunConfig& cfg) {
  const ModelSpec spec = load_spec(spec_path_for(cfg));
  return Model<float>(spec, load_weights<float>(required(cfg, "weights"), spec));
}

std::string describe(const EpochRecord& r) {
  std::string s = "epoch " + std::to_string(r.epoch) + " train_loss=" + detail::format_double(r.train_loss) +
                  " train_top1=" + detail::format_double(r.train_top1);
  if (r.val_top1) {
    s += " val_loss=" + detail::format_double(*r.val_loss) + " val_top1=" + detail::format_double(*r.val_top1);
  }
  return s + " lr=" + detail::format_double(r.lr);
}

void fit_and_save(const RunConfig& cfg, const ModelSpec& spec, ParamStore<float> params,
                  const DatasetManifest& manifest, std::ostream& out) {
  const fs::path dir = output_dir(cfg);
  TrainConfig tc = train_config(cfg);
  const std::size_t side = spec.input.h;
  const std::size_t max_side = cfg.size_value("max_side");
  auto train_src = std::make_shared<ManifestSource>(manifest, Split::train, side, max_side);
  auto val_src = std::make_shared<ManifestSource>(manifest, Split::val, side, max_side);
  if (tc.epochs > 0 && train_src->size() == 0) throw Error(ErrorKind::config, "training split is empty");
  if (val_src->size() == 0) tc.early_stopping = false;
  tc.on_epoch = [&](const EpochRecord& r) { out << describe(r) << '\n' << std::flush; };

  Model<float> model(spec, std::move(params));
  std::vector<EpochRecord> history;
  if (tc.epochs > 0) {
    auto result = train(model, train_src, val_src->size() ? val_src : nullptr, tc);
    history = std::move(result.history);
    if (result.best_epoch > 0) out << "best epoch " << result.best_epoch << '\n';
  }
  save_weights((dir / "weights.pfw").string(), spec, model.params());
  detail::write_file_atomic((dir / "history.csv").string(), history_csv(history));
  save_manifest((dir / "manifest.txt").string(), manifest);
  save_spec((dir / "model.spec").string(), spec);
  out << "wrote " << (dir / "weights.pfw").string() << '\n';
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  train_config(cfg);
  const DatasetManifest manifest = dataset(cfg);
  if (manifest.classes.empty()) throw Error(ErrorKind::config, "class list is empty");
  ModelSpec spec;
  if (cfg.get("model") == "purefoodnet") {
    spec = build_purefoodnet(manifest.classes.size(), cfg.real("width_scale"), cfg.size_value("input_side"),
                             cfg.real("dropout"));
  } else {
    spec = load_spec(cfg.get("model"));
    if (infer_shapes(spec).back().size() != manifest.classes.size()) {
      throw Error(ErrorKind::config, "model outputs do not match the " +
                                         std::to_string(manifest.classes.size()) + " dataset classes");
    }
  }
  auto params = init_params<float>(spec, derive_seed(cfg.seed(), "init"));
  fit_and_save(cfg, spec, std::move(params), manifest, out);
  return 0;
}

int cmd_finetune(const RunConfig& cfg, std::ostream& out) {
  train_config(cfg);
  const ModelSpec base = load_spec(spec_path_for(cfg));
  const ParamStore<float> base_params = load_weights<float>(required(cfg, "weights"), base);
  const DatasetManifest manifest = dataset(cfg);
  if (manifest.classes.empty()) throw Error(ErrorKind::config, "class list is empty");

  HeadOptions head;
  bool found_dense = false;
  for (std::size_t k = base.top_boundary; k < base.layers.size(); ++k) {
    const LayerSpec& l = base.layers[k];
    if (l.kind() == LayerKind::dense && !found_dense) {
      head.units = l.as<DenseSpec>().units;
      found_dense = true;
    } else if (l.kind() == LayerKind::dropout) {
      head.dropout_rate = l.as<DropoutSpec>().rate;
      break;
    }
  }
  const ModelSpec backbone = strip_top_layers(base);
  ModelSpec spec = attach_head(backbone, manifest.classes.size(), head);
  if (cfg.flag("freeze_backbone")) spec = set_trainable(spec, backbone_layer_names(spec), false);
  auto params = complete_params<float>(spec, select_params(backbone, base_params),
                                       derive_seed(cfg.seed(), "init"));
  fit_and_save(cfg, spec, std::move(params), manifest, out);
  return 0;
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  for (const std::string& part : detail::split(text, ',')) {
    ks.push_back(detail::parse_size(detail::trim(part), "ks"));
  }
  return ks;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const Model<float> model = load_model(cfg);
  const DatasetManifest manifest = load_manifest(required(cfg, "manifest"));
  const ManifestSource source(manifest, parse_split(cfg.get("split")), model.spec().input.h,
                              cfg.size_value("max_side"));
  if (source.num_classes() != model.num_outputs()) {
    throw Error(ErrorKind::mismatch, "manifest has " + std::to_string(source.num_classes()) +
                                         " classes, model predicts " + std::to_string(model.num_outputs()));
  }
  if (source.size() == 0) throw Error(ErrorKind::config, "split " + cfg.get("split") + " is empty");
  const EvalReport report = evaluate(model, source, parse_ks(cfg.get("ks")), cfg.size_value("eval_batch_size"));
  std::ostringstream csv;
  write_report_csv(csv, report, manifest.classes);
  const fs::path dir = output_dir(cfg);
  detail::write_file_atomic((dir / "report.csv").string(), csv.str());
  out << report_summary(report) << '\n';
  return 0;
}

std::vector<std::string> class_names(const RunConfig& cfg, std::size_t n) {
  std::string path = cfg.get("manifest");
  if (path.empty()) {
    const fs::path beside = fs::path(required(cfg, "weights")).parent_path() / "manifest.txt";
    if (fs::exists(beside)) path = beside.string();
  }
  std::vector<std::string> names;
  if (!path.empty()) names = load_manifest(path).classes;
  if (names.empty()) {
    for (std::size_t k = 0; k < n; ++k) names.push_back(std::to_string(k));
  }
  if (names.size() != n) throw Error(ErrorKind::mismatch, "class list does not match the model outputs");
  return names;
}

Tensor<float> model_input(const RunConfig& cfg, const ModelSpec& spec) {
  const Image img = load_ppm(required(cfg, "image"));
  if (img.shape().c != spec.input.c) {
    throw Error(ErrorKind::shape, "image has " + std::to_string(img.shape().c) + " channels, model expects " +
                                      std::to_string(spec.input.c));
  }
  return prepare_image(img, spec.input.h, cfg.size_value("max_side"));
}

int cmd_predict(const RunConfig& cfg, std::ostream& out) {
  const Model<float> model = load_model(cfg);
  const auto names = class_names(cfg, model.num_outputs());
  const Tensor<float> probs = model.predict(model_input(cfg, model.spec()));
  const auto top = top_k_candidates(std::span<const float>(probs.raw(), probs.size()), cfg.size_value("top_k"));
  for (std::size_t idx : top) out << names[idx] << ' ' << detail::format_double(probs[idx]) << '\n';
  return 0;
}

int cmd_inspect(const RunConfig& cfg, std::ostream& out) {
  const Model<float> model = load_model(cfg);
  std::vector<std::string> layers;
  for (const std::string& part : detail::split(cfg.get("layers"), ',')) {
    if (!detail::trim(part).empty()) layers.push_back(detail::trim(part));
  }
  if (layers.empty()) {
    for (const auto& l : model.spec().layers) {
      if (l.kind() == LayerKind::conv) layers.push_back(l.name);
    }
  }
  for (const auto& name : layers) model.spec().index_of(name);
  const Tensor<float> x = model_input(cfg, model.spec());
  const fs::path dir = output_dir(cfg);
  for (const auto& [name, act] : capture_activations(model, x, layers)) {
    save_pgm((dir / (name + ".pgm")).string(), render_activation_grid(act));
    out << "wrote " << (dir / (name + ".pgm")).string() << '\n';
  }
  std::string report = "layer dead total indices\n";
  for (const auto& live : dead_filter_report(model, x)) {
    report += live.layer + ' ' + std::to_string(live.dead_count()) + ' ' + std::to_string(live.dead.size());
    for (std::size_t k = 0; k < live.dead.size(); ++k) {
      if (live.dead[k]) report += ' ' + std::to_string(k);
    }
    report += '\n';
  }
  detail::write_file_atomic((dir / "dead_filters.txt").string(), report);
  out << report;
  return 0;
}

int cmd_diagnose(const RunConfig& cfg, std::ostream& out) {
  const auto history = load_history_csv(required(cfg, "history"));
  FitThresholds th;
  th.low = cfg.real("t_low");
  th.high = cfg.real("t_high");
  th.gap = cfg.real("gap");
  const FitVerdict v = diagnose_fit(history, th);
  out << fit_label_name(v.label) << " train_error=" << detail::format_double(v.train_error);
  if (v.val_error) {
    out << " val_error=" << detail::format_double(*v.val_error) << " gap=" << detail::format_double(*v.gap);
  }
  out << '\n';
  return 0;
}

int cmd_dump_batch(const RunConfig& cfg, std::ostream& out) {
  const DatasetManifest manifest = dataset(cfg);
  auto it = batch_iterator<float>(manifest, parse_split(cfg.get("split")), cfg.size_value("batch_size"),
                                  cfg.size_value("input_side"),
                                  derive_seed(derive_seed(cfg.seed(), "shuffle"), std::uint64_t{0}),
                                  augment_policy(cfg), cfg.size_value("max_side"));
  auto batch = it.next();
  if (!batch) throw Error(ErrorKind::config, "split is empty");
  const fs::path dir = output_dir(cfg);
  const Shape4& s = batch->images.shape();
  const std::size_t stride = s.h * s.w * s.c;
  for (std::size_t k = 0; k < s.i; ++k) {
    Image img({1, s.h, s.w, s.c});
    std::copy(batch->images.raw() + k * stride, batch->images.raw() + (k + 1) * stride, img.raw());
    char name[32];
    std::snprintf(name, sizeof(name), "batch_%03zu.ppm", k);
    save_ppm((dir / name).string(), img);
    out << name << ' ' << batch->indices[k] << ' ' << manifest.classes[batch->labels[k]] << '\n';
  }
  save_tensor((dir / "batch_images.pft").string(), batch->images);
  save_tensor((dir / "batch_labels.pft").string(), batch->one_hot);
  return 0;
}

int cmd_augment_preview(const RunConfig& cfg, std::ostream& out) {
  const Image img = load_ppm(required(cfg, "image"));
  AugmentPolicy policy = augment_policy(cfg).value_or(AugmentPolicy::none());
  const fs::path dir = output_dir(cfg);
  save_ppm((dir / "preview_original.ppm").string(), img);
  for (std::size_t k = 0; k < cfg.size_value("variants"); ++k) {
    Rng rng(derive_seed(policy.seed ^ k, std::uint64_t{0}));
    char name[32];
    std::snprintf(name, sizeof(name), "preview_%03zu.ppm", k);
    save_ppm((dir / name).string(), apply_policy(img, policy, rng));
    out << "wrote " << (dir / name).string() << '\n';
  }
  return 0;
}

}  // namespace

int run_command(const std::string& command, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    if (command == "train") return cmd_train(cfg, out);
    if (command == "finetune") return cmd_finetune(cfg, out);
    if (command == "eval") return cmd_eval(cfg, out);
    if (command == "predict") return cmd_predict(cfg, out);
    if (command == "inspect") return cmd_inspect(cfg, out);
    if (command == "diagnose") return cmd_diagnose(cfg, out);
    if (command == "dump-batch") return cmd_dump_batch(cfg, out);
    if (command == "augment-preview") return cmd_augment_preview(cfg, out);
    throw Error(ErrorKind::config, "unknown command '" + command + "'");
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_status(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return exit_status(ErrorKind::io);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_status(ErrorKind::internal);
  }
}

}  // namespace pf
