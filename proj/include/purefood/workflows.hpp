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

// End-to-end commands driven by a flat key/value configuration.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "purefood/augment.hpp"
#include "purefood/tensor.hpp"

namespace pf {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
  std::vector<std::string> commands;  // commands that read this key
};

// Every recognized key, in help order.
const std::vector<ConfigKey>& config_keys();
const ConfigKey* find_config_key(std::string_view name);

// Values for the keys of config_keys(). Unset keys read as their default.
class RunConfig {
 public:
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool is_set(const std::string& key) const { return values_.count(key) != 0; }

  // `key = value` lines; '#' starts a comment. Values override earlier ones.
  void load_text(std::string_view text, const std::string& origin = "<config>");
  void load_file(const std::string& path);

  std::string text(const std::string& key) const { return get(key); }
  std::size_t size_value(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::uint64_t seed() const;

 private:
  std::map<std::string, std::string> values_;
};

// Runs `command` (train, finetune, eval, predict, inspect, diagnose,
// dump-batch, augment-preview). Progress and results go to `out`, error
// messages to `err`; returns the process exit status.
int run_command(const std::string& command, const RunConfig& config, std::ostream& out,
                std::ostream& err);

// Tiles the channels of one activation (1, h, w, c) in a near-square grid,
// each map min-max normalized to [0, 1] (a constant map renders as 0).
// Non-spatial activations (h == w == 1) become a 1-pixel-tall strip
// normalized over the whole vector.
Image render_activation_grid(const Tensor<float>& activation);

}  // namespace pf
