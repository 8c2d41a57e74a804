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

// Little-endian scalar codecs and file helpers shared by the binary formats.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "purefood/error.hpp"

namespace pf::detail {

template <typename U>
U byteswap_if_big(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    for (std::size_t a = 0, z = sizeof(U) - 1; a < z; ++a, --z) {
      std::swap(b[a], b[z]);
    }
    std::memcpy(&v, b, sizeof(U));
  }
  return v;
}

template <typename U>
void put_le(std::ostream& out, U value) {
  value = byteswap_if_big(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(U));
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  U value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(U));
  if (!in) {
    throw Error(ErrorKind::format, std::string("truncated payload reading ") + what);
  }
  return byteswap_if_big(value);
}

// Writes `bytes` to `path` through a sibling temp file and rename.
void write_file_atomic(const std::string& path, const std::string& bytes);

// Whole file as bytes; io error naming the path on failure.
std::string read_file(const std::string& path);

}  // namespace pf::detail
