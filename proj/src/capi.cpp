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

#include "purefood/purefood.h"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <variant>

#include "purefood/model.hpp"
#include "purefood/workflows.hpp"

struct pf_config {
  pf::RunConfig config;
};

struct pf_tensor {
  pf::Tensor<float> value;
};

struct pf_model {
  pf::Model<float> model;
};

namespace {

thread_local std::string last_error;

pf_status fail(pf_status status, const std::string& message) {
  last_error = message;
  return status;
}

template <typename F>
pf_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return PF_OK;
  } catch (const pf::Error& e) {
    return fail(static_cast<pf_status>(pf::exit_status(e.kind())), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(PF_ERR_DATA, e.what());
  } catch (const std::exception& e) {
    return fail(PF_ERR_INTERNAL, e.what());
  }
}

bool bad_args(std::initializer_list<const void*> args) {
  return std::any_of(args.begin(), args.end(), [](const void* p) { return p == nullptr; });
}

const pf::ConfigKey* key_at(size_t index) {
  const auto& keys = pf::config_keys();
  return index < keys.size() ? &keys[index] : nullptr;
}

pf_status run(const char* command, const pf_config* config) {
  if (bad_args({command, config})) return fail(PF_ERR_CONFIG, "null argument");
  std::ostringstream err;
  const int code = pf::run_command(command, config->config, std::cout, err);
  std::cout.flush();
  if (code != 0) {
    std::string msg = err.str();
    if (!msg.empty() && msg.back() == '\n') msg.pop_back();
    std::cerr << msg << '\n';
    return fail(static_cast<pf_status>(code), msg);
  }
  last_error.clear();
  return PF_OK;
}

}  // namespace

extern "C" {

const char* pf_version(void) { return "0.1.0"; }

const char* pf_last_error(void) { return last_error.c_str(); }

pf_status pf_config_create(pf_config** out) {
  if (out == nullptr) return fail(PF_ERR_CONFIG, "null argument");
  return guarded([&] { *out = new pf_config{}; });
}

void pf_config_destroy(pf_config* config) { delete config; }

pf_status pf_config_set(pf_config* config, const char* key, const char* value) {
  if (bad_args({config, key, value})) return fail(PF_ERR_CONFIG, "null argument");
  return guarded([&] { config->config.set(key, value); });
}

pf_status pf_config_get(const pf_config* config, const char* key, const char** value) {
  if (bad_args({config, key, value})) return fail(PF_ERR_CONFIG, "null argument");
  return guarded([&] { *value = config->config.get(key).c_str(); });
}

pf_status pf_config_load_file(pf_config* config, const char* path) {
  if (bad_args({config, path})) return fail(PF_ERR_CONFIG, "null argument");
  return guarded([&] { config->config.load_file(path); });
}

size_t pf_config_key_count(void) { return pf::config_keys().size(); }

const char* pf_config_key_name(size_t index) {
  const auto* k = key_at(index);
  return k ? k->name.c_str() : nullptr;
}

const char* pf_config_key_default(size_t index) {
  const auto* k = key_at(index);
  return k ? k->default_value.c_str() : nullptr;
}

const char* pf_config_key_help(size_t index) {
  const auto* k = key_at(index);
  return k ? k->help.c_str() : nullptr;
}

int pf_config_key_used_by(size_t index, const char* command) {
  const auto* k = key_at(index);
  if (k == nullptr || command == nullptr) return 0;
  return std::find(k->commands.begin(), k->commands.end(), command) != k->commands.end();
}

pf_status pf_run(const char* command, const pf_config* config) { return run(command, config); }
pf_status pf_cmd_train(const pf_config* config) { return run("train", config); }
pf_status pf_cmd_finetune(const pf_config* config) { return run("finetune", config); }
pf_status pf_cmd_eval(const pf_config* config) { return run("eval", config); }
pf_status pf_cmd_predict(const pf_config* config) { return run("predict", config); }
pf_status pf_cmd_inspect(const pf_config* config) { return run("inspect", config); }
pf_status pf_cmd_diagnose(const pf_config* config) { return run("diagnose", config); }
pf_status pf_cmd_dump_batch(const pf_config* config) { return run("dump-batch", config); }
pf_status pf_cmd_augment_preview(const pf_config* config) { return run("augment-preview", config); }

pf_status pf_tensor_create(const size_t shape[4], const float* data, pf_tensor** out) {
  if (bad_args({shape, out})) return fail(PF_ERR_CONFIG, "null argument");
  return guarded([&] {
    const pf::Shape4 s{shape[0], shape[1], shape[2], shape[3]};
    pf::Tensor<float> t(s, 0.0f);
    if (data != nullptr) std::copy(data, data + s.size(), t.raw());
    *out = new pf_tensor{std::move(t)};
  });
}

pf_status pf_tensor_load(const char* path, pf_tensor** out) {
  if (bad_args({path, out})) return fail(PF_ERR_CONFIG, "null argument");
  return guarded([&] {
    *out = new pf_tensor{std::visit([](auto&& t) { return t.template cast<float>(); }, pf::load_tensor(path))};
  });
}

pf_status pf_tensor_save(const pf_tensor* tensor, const char* path) {
  if (bad_args({tensor, path})) return fail(PF_ERR_CONFIG, "null argument");
  return guarded([&] { pf::save_tensor(path, tensor->value); });
}

void pf_tensor_shape(const pf_tensor* tensor, size_t shape[4]) {
  const pf::Shape4& s = tensor->value.shape();
  shape[0] = s.i;
  shape[1] = s.h;
  shape[2] = s.w;
  shape[3] = s.c;
}

const float* pf_tensor_data(const pf_tensor* tensor) { return tensor->value.raw(); }

void pf_tensor_destroy(pf_tensor* tensor) { delete tensor; }

pf_status pf_model_load(const char* spec_path, const char* weights_path, pf_model** out) {
  if (bad_args({spec_path, weights_path, out})) return fail(PF_ERR_CONFIG, "null argument");
  return guarded([&] {
    pf::ModelSpec spec = pf::load_spec(spec_path);
    auto params = pf::load_weights<float>(weights_path, spec);
    *out = new pf_model{pf::Model<float>(std::move(spec), std::move(params))};
  });
}

pf_status pf_model_save_weights(const pf_model* model, const char* path) {
  if (bad_args({model, path})) return fail(PF_ERR_CONFIG, "null argument");
  return guarded([&] { pf::save_weights(path, model->model.spec(), model->model.params()); });
}

size_t pf_model_num_outputs(const pf_model* model) { return model->model.num_outputs(); }

void pf_model_input_shape(const pf_model* model, size_t shape[4]) {
  const pf::Shape4& s = model->model.spec().input;
  shape[0] = s.i;
  shape[1] = s.h;
  shape[2] = s.w;
  shape[3] = s.c;
}

pf_status pf_model_predict(const pf_model* model, const pf_tensor* images, pf_tensor** out) {
  if (bad_args({model, images, out})) return fail(PF_ERR_CONFIG, "null argument");
  return guarded([&] { *out = new pf_tensor{model->model.predict(images->value)}; });
}

void pf_model_destroy(pf_model* model) { delete model; }

}  // extern "C"
