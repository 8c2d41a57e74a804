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

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "purefood/tensor.hpp"

namespace pf {

// What a stored tensor is for. Only `weight` tensors are penalized by L1/L2;
// `statistic` tensors (batch-norm running mean/var) are never optimized.
enum class ParamRole { weight, bias, scale, shift, statistic };

template <typename T>
struct Param {
  std::string name;
  ParamRole role = ParamRole::weight;
  Tensor<T> value;

  bool optimizable() const noexcept { return role != ParamRole::statistic; }
};

// Named tensors in insertion order. Names are `<layer>.<slot>`.
template <typename T>
class ParamStore {
 public:
  void add(std::string name, ParamRole role, Tensor<T> value) {
    if (find(name) != nullptr) {
      throw Error(ErrorKind::config, "duplicate parameter " + name);
    }
    params_.push_back({std::move(name), role, std::move(value)});
  }

  const Param<T>* find(const std::string& name) const {
    auto it = std::find_if(params_.begin(), params_.end(),
                           [&](const Param<T>& p) { return p.name == name; });
    return it == params_.end() ? nullptr : &*it;
  }
  Param<T>* find(const std::string& name) {
    return const_cast<Param<T>*>(std::as_const(*this).find(name));
  }

  const Tensor<T>& at(const std::string& name) const {
    if (const Param<T>* p = find(name)) return p->value;
    throw Error(ErrorKind::config, "unknown parameter " + name);
  }
  Tensor<T>& at(const std::string& name) {
    return const_cast<Tensor<T>&>(std::as_const(*this).at(name));
  }

  std::size_t size() const noexcept { return params_.size(); }
  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

  // Total scalar count over every stored tensor.
  std::size_t scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.params_.size() != b.params_.size()) return false;
    for (std::size_t k = 0; k < a.params_.size(); ++k) {
      const auto& x = a.params_[k];
      const auto& y = b.params_[k];
      if (x.name != y.name || x.role != y.role || !(x.value == y.value)) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<Param<T>> params_;
};

// Gradients keyed like the ParamStore they were computed for.
template <typename T>
using GradStore = ParamStore<T>;

// Layer that owns a parameter name, i.e. the text before the last '.'.
inline std::string layer_of(const std::string& param_name) {
  return param_name.substr(0, param_name.rfind('.'));
}

}  // namespace pf
