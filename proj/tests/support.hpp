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

// Independent reference implementations and fixtures shared by the tests.
// Nothing here calls the engine's kernels.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "purefood/model.hpp"
#include "purefood/tensor.hpp"

namespace pftest {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("purefood_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

template <typename T>
pf::Tensor<T> random_tensor(const pf::Shape4& s, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  pf::Tensor<T> t(s);
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = static_cast<T>(u(rng));
  return t;
}

// Direct convolution: six nested loops over (n, y, x, f, dy, dx) plus the
// channel sum, reading zero outside the unpadded input.
inline std::vector<double> naive_conv(const std::vector<double>& x, std::size_t n_img,
                                      std::size_t h, std::size_t w, std::size_t c,
                                      const std::vector<double>& kernel, std::size_t f,
                                      std::size_t k, const std::vector<double>& bias,
                                      std::size_t s, std::size_t z, std::size_t& oh,
                                      std::size_t& ow) {
  oh = (h + 2 * z - k) / s + 1;
  ow = (w + 2 * z - k) / s + 1;
  std::vector<double> out(n_img * oh * ow * f, 0.0);
  for (std::size_t n = 0; n < n_img; ++n)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo)
        for (std::size_t fi = 0; fi < f; ++fi) {
          double acc = bias[fi];
          for (std::size_t dy = 0; dy < k; ++dy)
            for (std::size_t dx = 0; dx < k; ++dx) {
              const long iy = static_cast<long>(y * s + dy) - static_cast<long>(z);
              const long ix = static_cast<long>(xo * s + dx) - static_cast<long>(z);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
              for (std::size_t ch = 0; ch < c; ++ch) {
                acc += x[((n * h + iy) * w + ix) * c + ch] * kernel[((fi * k + dy) * k + dx) * c + ch];
              }
            }
          out[((n * oh + y) * ow + xo) * f + fi] = acc;
        }
  return out;
}

// Brute-force pooling over explicit windows.
inline std::vector<double> naive_pool(const std::vector<double>& x, std::size_t n_img,
                                      std::size_t h, std::size_t w, std::size_t c,
                                      std::size_t win, std::size_t stride, bool max_mode) {
  const std::size_t oh = (h - win) / stride + 1;
  const std::size_t ow = (w - win) / stride + 1;
  std::vector<double> out;
  for (std::size_t n = 0; n < n_img; ++n)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo)
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::vector<double> cells;
          for (std::size_t dy = 0; dy < win; ++dy)
            for (std::size_t dx = 0; dx < win; ++dx)
              cells.push_back(x[((n * h + y * stride + dy) * w + xo * stride + dx) * c + ch]);
          double v = 0.0;
          if (max_mode) {
            v = *std::max_element(cells.begin(), cells.end());
          } else {
            for (double cell : cells) v += cell;
            v /= static_cast<double>(cells.size());
          }
          out.push_back(v);
        }
  return out;
}

inline double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

// Closed-form parameter count of the builtin network: conv k*k*c_in*f + f,
// batch norm 4 per channel (scale, shift, running mean, running variance),
// dense n_in*n_out + n_out.
inline std::size_t purefoodnet_param_count(std::size_t classes, double width, std::size_t side) {
  auto r = [&](double v) { return static_cast<std::size_t>(std::lround(v * width)); };
  const std::size_t widths[3] = {r(128), r(256), r(512)};
  const std::size_t convs[3] = {2, 3, 3};
  std::size_t total = 0;
  std::size_t c_in = 3;
  for (int b = 0; b < 3; ++b) {
    for (std::size_t j = 0; j < convs[b]; ++j) {
      total += 9 * c_in * widths[b] + widths[b] + 4 * widths[b];
      c_in = widths[b];
    }
    side /= 2;
  }
  const std::size_t flat = side * side * c_in;
  const std::size_t units = r(512);
  return total + flat * units + units + units * classes + classes;
}

}  // namespace pftest
