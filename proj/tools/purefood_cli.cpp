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

#include <CLI11.hpp>

#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "purefood/purefood.h"

namespace {

struct Bound {
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
  bool boolean = false;
};

struct Command {
  std::string name;  // library command name
  CLI::App* app = nullptr;
  std::string config_file;
  std::vector<std::unique_ptr<Bound>> flags;
};

std::string flag_name(std::string key) {
  for (char& ch : key) {
    if (ch == '_') ch = '-';
  }
  return "--" + key;
}

void add_command(CLI::App& parent, const std::string& sub, const std::string& name,
                 const std::string& description, std::vector<Command>& out) {
  Command cmd;
  cmd.name = name;
  cmd.app = parent.add_subcommand(sub, description);
  out.push_back(std::move(cmd));
  Command& c = out.back();
  c.app->add_option("--config", c.config_file, "key = value config file; flags override it");
  for (size_t k = 0; k < pf_config_key_count(); ++k) {
    if (!pf_config_key_used_by(k, name.c_str())) continue;
    auto b = std::make_unique<Bound>();
    b->key = pf_config_key_name(k);
    const std::string def = pf_config_key_default(k);
    b->boolean = def == "true" || def == "false";
    b->option = c.app->add_option(flag_name(b->key), b->value, pf_config_key_help(k));
    b->option->default_str(def.empty() ? "\"\"" : def);
    if (b->boolean) b->option->expected(0, 1);
    c.flags.push_back(std::move(b));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"purefood: food image classification with a VGG-style network"};
  app.get_formatter()->column_width(40);
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pf_version()));

  std::vector<Command> commands;
  commands.reserve(8);
  add_command(app, "train", "train", "train a model from scratch", commands);
  add_command(app, "finetune", "finetune", "replace the head of trained weights and retrain", commands);
  add_command(app, "eval", "eval", "top-k accuracy on a manifest split", commands);
  add_command(app, "predict", "predict", "top-k classes for one image", commands);
  add_command(app, "inspect", "inspect", "activation grids and dead-filter report", commands);
  add_command(app, "diagnose", "diagnose", "fit verdict from a history CSV", commands);
  CLI::App* dataio = app.add_subcommand("dataio", "dataset utilities");
  dataio->require_subcommand(1);
  add_command(*dataio, "dump-batch", "dump-batch", "write the first batch of a split as PPM files", commands);
  CLI::App* augment = app.add_subcommand("augment", "augmentation utilities");
  augment->require_subcommand(1);
  add_command(*augment, "preview", "augment-preview", "write augmented variants of one image", commands);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : PF_ERR_CONFIG;
  }

  for (const Command& c : commands) {
    if (!c.app->parsed()) continue;
    pf_config* config = nullptr;
    if (pf_config_create(&config) != PF_OK) {
      std::fprintf(stderr, "error: %s\n", pf_last_error());
      return PF_ERR_INTERNAL;
    }
    std::unique_ptr<pf_config, void (*)(pf_config*)> guard(config, pf_config_destroy);
    if (!c.config_file.empty() && pf_config_load_file(config, c.config_file.c_str()) != PF_OK) {
      std::fprintf(stderr, "error: %s\n", pf_last_error());
      return PF_ERR_CONFIG;
    }
    for (const auto& b : c.flags) {
      if (b->option->count() == 0) continue;
      const std::string value = b->boolean && b->value.empty() ? "true" : b->value;
      if (pf_config_set(config, b->key.c_str(), value.c_str()) != PF_OK) {
        std::fprintf(stderr, "error: %s\n", pf_last_error());
        return PF_ERR_CONFIG;
      }
    }
    return pf_run(c.name.c_str(), config);
  }
  return PF_ERR_CONFIG;
}
