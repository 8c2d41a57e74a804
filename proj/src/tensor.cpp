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

#include "purefood/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "io_util.hpp"

namespace pf {

std::string Shape4::str() const {
  std::ostringstream os;
  os << '(' << i << ", " << h << ", " << w << ", " << c << ')';
  return os.str();
}

std::size_t conv_output_size(std::size_t input, const ConvGeometry& g) {
  if (g.k < 1 || g.s < 1) {
    throw Error(ErrorKind::geometry, "kernel and stride must be >= 1");
  }
  if (input < 1 || input + 2 * g.z < g.k) {
    throw Error(ErrorKind::geometry,
                "kernel " + std::to_string(g.k) + " cannot be placed on input " +
                    std::to_string(input) + " with padding " +
                    std::to_string(g.z));
  }
  // Unsigned division is floor for the non-negative numerator.
  return (input + 2 * g.z - g.k) / g.s + 1;
}

std::size_t same_padding_amount(std::size_t k) {
  if (k < 1) throw Error(ErrorKind::geometry, "kernel side must be >= 1");
  return k / 2;  // == ceil((k - 1) / 2)
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

template <typename T>
Tensor<T> zero_pad(const Tensor<T>& x, std::size_t z) {
  if (z == 0) return x;
  const Shape4 s = x.shape();
  Tensor<T> out({s.i, s.h + 2 * z, s.w + 2 * z, s.c});
  for (std::size_t n = 0; n < s.i; ++n) {
    for (std::size_t y = 0; y < s.h; ++y) {
      const T* src = &x(n, y, 0, 0);
      std::copy(src, src + s.w * s.c, &out(n, y + z, z, 0));
    }
  }
  return out;
}

template <typename T>
Tensor<T> crop_border(const Tensor<T>& x, std::size_t z) {
  if (z == 0) return x;
  const Shape4 s = x.shape();
  if (s.h <= 2 * z || s.w <= 2 * z) {
    throw Error(ErrorKind::geometry,
                "cannot crop " + std::to_string(z) + " from " + s.str());
  }
  Tensor<T> out({s.i, s.h - 2 * z, s.w - 2 * z, s.c});
  const Shape4 o = out.shape();
  for (std::size_t n = 0; n < o.i; ++n) {
    for (std::size_t y = 0; y < o.h; ++y) {
      const T* src = &x(n, y + z, z, 0);
      std::copy(src, src + o.w * o.c, &out(n, y, 0, 0));
    }
  }
  return out;
}

template <typename T>
Tensor<T> slice_window(const Tensor<T>& x, std::size_t n, std::size_t row,
                       std::size_t col, std::size_t k) {
  const Shape4 s = x.shape();
  if (k < 1 || n >= s.i || row + k > s.h || col + k > s.w) {
    throw Error(ErrorKind::out_of_range,
                "window (n=" + std::to_string(n) + ", row=" +
                    std::to_string(row) + ", col=" + std::to_string(col) +
                    ", k=" + std::to_string(k) + ") outside " + s.str());
  }
  Tensor<T> out({1, k, k, s.c});
  for (std::size_t y = 0; y < k; ++y) {
    const T* src = &x(n, row + y, col, 0);
    std::copy(src, src + k * s.c, &out(0, y, 0, 0));
  }
  return out;
}

namespace {

constexpr char kTensorMagic[4] = {'P', 'F', 'T', '1'};

template <typename T>
Tensor<T> read_values(std::istream& in, const Shape4& shape) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  std::vector<T> values(shape.size());
  for (auto& v : values) {
    const Bits bits = detail::get_le<Bits>(in, "tensor values");
    std::memcpy(&v, &bits, sizeof(T));
  }
  return Tensor<T>(shape, std::move(values));
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& t) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  out.write(kTensorMagic, 4);
  out.put(static_cast<char>(dtype_of<T>()));
  const Shape4& s = t.shape();
  for (std::uint64_t extent : {s.i, s.h, s.w, s.c}) detail::put_le(out, extent);
  for (T v : t.data()) {
    Bits bits;
    std::memcpy(&bits, &v, sizeof(T));
    detail::put_le(out, bits);
  }
}

AnyTensor read_tensor(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kTensorMagic)) {
    throw Error(ErrorKind::format, "missing PFT1 magic");
  }
  const int dtype = in.get();
  if (!in) throw Error(ErrorKind::format, "truncated PFT1 header");
  Shape4 shape;
  shape.i = detail::get_le<std::uint64_t>(in, "tensor shape");
  shape.h = detail::get_le<std::uint64_t>(in, "tensor shape");
  shape.w = detail::get_le<std::uint64_t>(in, "tensor shape");
  shape.c = detail::get_le<std::uint64_t>(in, "tensor shape");
  if (!shape.valid()) {
    throw Error(ErrorKind::format, "invalid PFT1 shape " + shape.str());
  }
  switch (static_cast<DType>(dtype)) {
    case DType::f32:
      return read_values<float>(in, shape);
    case DType::f64:
      return read_values<double>(in, shape);
  }
  throw Error(ErrorKind::format, "unknown PFT1 dtype " + std::to_string(dtype));
}

template <typename T>
Tensor<T> read_tensor_as(std::istream& in) {
  return std::visit(
      [](auto&& t) -> Tensor<T> {
        using Stored = typename std::decay_t<decltype(t)>::value_type;
        if constexpr (std::is_same_v<Stored, T>) {
          return std::move(t);
        } else {
          return t.template cast<T>();
        }
      },
      read_tensor(in));
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
  std::ostringstream os;
  write_tensor(os, t);
  detail::write_file_atomic(path, os.str());
}

AnyTensor load_tensor(const std::string& path) {
  std::istringstream is(detail::read_file(path));
  return read_tensor(is);
}

namespace detail {

void write_file_atomic(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    throw Error(ErrorKind::io, "cannot rename " + tmp.string() + " to " +
                                   target.string() + ": " + ec.message());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace detail

#define PF_INSTANTIATE(T)                                                     \
  template Tensor<T> zero_pad(const Tensor<T>&, std::size_t);                 \
  template Tensor<T> crop_border(const Tensor<T>&, std::size_t);              \
  template Tensor<T> slice_window(const Tensor<T>&, std::size_t, std::size_t, \
                                  std::size_t, std::size_t);                  \
  template void write_tensor(std::ostream&, const Tensor<T>&);                \
  template Tensor<T> read_tensor_as(std::istream&);                           \
  template void save_tensor(const std::string&, const Tensor<T>&);
PF_INSTANTIATE(float)
PF_INSTANTIATE(double)
#undef PF_INSTANTIATE

}  // namespace pf
