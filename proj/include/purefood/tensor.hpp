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

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <new>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "purefood/error.hpp"

namespace pf {

// Extent of a 4-D tensor in (image, height, width, channel) order.
struct Shape4 {
  std::size_t i = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;

  std::size_t size() const noexcept { return i * h * w * c; }
  bool valid() const noexcept { return i >= 1 && h >= 1 && w >= 1 && c >= 1; }

  // Row-major flat offset of (n, y, x, ch).
  std::size_t offset(std::size_t n, std::size_t y, std::size_t x,
                     std::size_t ch) const noexcept {
    return ((n * h + y) * w + x) * c + ch;
  }

  // Inverse of offset().
  std::array<std::size_t, 4> coords(std::size_t flat) const noexcept {
    const std::size_t ch = flat % c;
    flat /= c;
    const std::size_t x = flat % w;
    flat /= w;
    const std::size_t y = flat % h;
    return {flat / h, y, x, ch};
  }

  std::string str() const;

  friend bool operator==(const Shape4&, const Shape4&) = default;
};

// Square kernel placement: side `k`, stride `s`, zero padding `z` per side.
struct ConvGeometry {
  std::size_t k = 1;
  std::size_t s = 1;
  std::size_t z = 0;
};

// Output side length o = floor((i - k + 2z) / s) + 1.
std::size_t conv_output_size(std::size_t input, const ConvGeometry& g);

// Padding that keeps a stride-1 convolution size-preserving: ceil((k-1)/2).
std::size_t same_padding_amount(std::size_t k);

// Allocates on 64-byte boundaries.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), alignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

// Dense row-major (i, h, w, c) array. A default-constructed tensor is empty
// and has shape (0, 0, 0, 0); every other tensor has all extents >= 1.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape4 shape, T fill = T(0)) : shape_(shape) {
    check_shape(shape);
    data_.assign(shape.size(), fill);
  }

  Tensor(Shape4 shape, std::vector<T> values)
      : shape_(shape), data_(values.begin(), values.end()) {
    check_shape(shape);
    if (data_.size() != shape.size()) {
      throw Error(ErrorKind::shape, "tensor data length " +
                                        std::to_string(data_.size()) +
                                        " does not match shape " + shape.str());
    }
  }

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  T& operator[](std::size_t flat) noexcept { return data_[flat]; }
  const T& operator[](std::size_t flat) const noexcept { return data_[flat]; }

  T& operator()(std::size_t n, std::size_t y, std::size_t x,
                std::size_t ch) noexcept {
    return data_[shape_.offset(n, y, x, ch)];
  }
  const T& operator()(std::size_t n, std::size_t y, std::size_t x,
                      std::size_t ch) const noexcept {
    return data_[shape_.offset(n, y, x, ch)];
  }

  // Same data under a new shape with the same element count.
  Tensor reshaped(Shape4 shape) const {
    if (shape.size() != size()) {
      throw Error(ErrorKind::shape,
                  "cannot reshape " + shape_.str() + " to " + shape.str());
    }
    Tensor out = *this;
    out.shape_ = shape;
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static void check_shape(const Shape4& shape) {
    if (!shape.valid()) {
      throw Error(ErrorKind::shape, "invalid tensor shape " + shape.str());
    }
  }

  Shape4 shape_;
  AlignedVector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

// Either runtime dtype, as read back from a PFT1 stream.
using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

// Copy of `x` with `z` zeros added on each spatial side.
template <typename T>
Tensor<T> zero_pad(const Tensor<T>& x, std::size_t z);

// Removes `z` cells from each spatial side (inverse of zero_pad).
template <typename T>
Tensor<T> crop_border(const Tensor<T>& x, std::size_t z);

// The k x k x c block of image `n` whose top-left cell is (row, col).
// Returned with shape (1, k, k, c).
template <typename T>
Tensor<T> slice_window(const Tensor<T>& x, std::size_t n, std::size_t row,
                       std::size_t col, std::size_t k);

// PFT1 binary format: "PFT1", dtype byte, four u64 LE extents, raw LE values.
template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& t);
AnyTensor read_tensor(std::istream& in);

// Reads a PFT1 payload and converts it to T when the stored dtype differs.
template <typename T>
Tensor<T> read_tensor_as(std::istream& in);

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t);
AnyTensor load_tensor(const std::string& path);

}  // namespace pf
