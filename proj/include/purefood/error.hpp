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

#include <stdexcept>
#include <string>

namespace pf {

enum class ErrorKind {
  geometry,        // kernel/window cannot be placed on the input
  shape,           // operand shapes disagree
  out_of_range,    // index outside a tensor or class range
  degenerate,      // batch too small for batch statistics
  invalid_label,   // malformed one-hot vector
  non_finite,      // NaN/Inf where finite values are required
  config,          // bad user configuration
  io,              // file system failure
  format,          // malformed file payload
  mismatch,        // weights do not belong to the model spec
  internal,
};

// Single exception type for the engine; `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit status for an error kind: 2 config, 3 data/I-O, 4 mismatch.
inline int exit_status(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::geometry:
    case ErrorKind::shape:
    case ErrorKind::config:
    case ErrorKind::out_of_range:
      return 2;
    case ErrorKind::io:
    case ErrorKind::format:
    case ErrorKind::invalid_label:
    case ErrorKind::degenerate:
      return 3;
    case ErrorKind::mismatch:
      return 4;
    case ErrorKind::non_finite:
    case ErrorKind::internal:
      return 1;
  }
  return 1;
}

}  // namespace pf
