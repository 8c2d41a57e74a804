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

#include <doctest.h>

#include <cmath>

#include "purefood/augment.hpp"
#include "support.hpp"

using namespace pf;

namespace {

Image random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return pftest::random_tensor<float>({1, h, w, 3}, rng, 0.0, 1.0);
}

float max_diff(const Image& a, const Image& b) {
  REQUIRE(a.shape() == b.shape());
  float m = 0.0f;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace

TEST_CASE("horizontal flip") {
  const auto img = random_image(5, 7, 1);
  CHECK(flip_horizontal(flip_horizontal(img)) == img);
  const auto f = flip_horizontal(img);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 7; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch) CHECK(f(0, r, c, ch) == img(0, r, 6 - c, ch));
  Image sym({1, 2, 4, 1}, std::vector<float>{1, 2, 2, 1, 3, 4, 4, 3});
  CHECK(flip_horizontal(sym) == sym);
  const auto v = flip_vertical(img);
  for (std::size_t r = 0; r < 5; ++r) CHECK(v(0, r, 3, 1) == img(0, 4 - r, 3, 1));
}

TEST_CASE("random crop") {
  const auto img = random_image(8, 8, 2);
  Rng rng(3);
  CHECK(random_crop(img, 1.0, rng) == img);
  const Image flat({1, 9, 9, 3}, 0.25f);
  const auto c = random_crop(flat, 0.6, rng);
  CHECK(c.shape() == flat.shape());
  CHECK(max_diff(c, flat) < 1e-6f);
  Rng a(10), b(10);
  CHECK(random_crop(img, 0.7, a) == random_crop(img, 0.7, b));
  CHECK_THROWS_AS(random_crop(img, 0.0, a), Error);
}

TEST_CASE("rotation and tilt") {
  const auto img = random_image(6, 6, 4);
  CHECK(rotate(img, 0.0) == img);
  CHECK(tilt(img, 0.0) == img);
  CHECK(max_diff(rotate(rotate(img, 180.0), 180.0), img) < 1e-6f);
  const float a = 0.1f, b = 0.2f, c = 0.3f, d = 0.4f;
  const Image sq({1, 2, 2, 1}, std::vector<float>{a, b, c, d});
  const auto r = rotate(sq, 90.0);
  const std::vector<float> expected{b, d, a, c};
  for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(r[k] - expected[k]) < 1e-6f);
  const auto t = tilt(Image({1, 5, 5, 1}, 1.0f), 0.5);
  CHECK(t(0, 2, 2, 0) == doctest::Approx(1.0f));
  CHECK(t(0, 0, 0, 0) < 1.0f);
}

TEST_CASE("photometric ops") {
  const auto img = random_image(4, 5, 5);
  const float zero[3] = {0, 0, 0};
  CHECK(color_shift(img, zero) == img);
  Rng rng(6);
  CHECK(add_noise(img, 0.0, rng) == img);
  CHECK(adjust_contrast(img, 1.0) == img);

  double mean = 0.0;
  for (float v : img.data()) mean += v;
  mean /= img.size();
  const auto flat = adjust_contrast(img, 0.0);
  for (float v : flat.data()) CHECK(v == doctest::Approx(mean).epsilon(1e-6));

  const float up[3] = {0.5f, -2.0f, 0.0f};
  const auto shifted = color_shift(img, up);
  for (std::size_t k = 0; k < img.size(); ++k) {
    if (k % 3 == 0) CHECK(shifted[k] == std::min(1.0f, img[k] + 0.5f));
    if (k % 3 == 1) CHECK(shifted[k] == 0.0f);
  }

  const Image grey({1, 250, 400, 1}, 0.5f);
  Rng nrng(7);
  const auto noisy = add_noise(grey, 0.1, nrng);
  double m = 0.0, v = 0.0;
  for (float x : noisy.data()) m += x;
  m /= noisy.size();
  for (float x : noisy.data()) v += (x - m) * (x - m);
  const double sd = std::sqrt(v / noisy.size());
  CHECK(std::abs(sd - 0.1) < 0.005);
  for (float x : noisy.data()) CHECK((x >= 0.0f && x <= 1.0f));
}

TEST_CASE("policy application") {
  const auto img = random_image(8, 8, 8);
  Rng rng(9);
  CHECK(apply_policy(img, AugmentPolicy::none(), rng) == img);
  AugmentPolicy off;
  off.enabled = false;
  CHECK(apply_policy(img, off, rng) == img);

  AugmentPolicy flip_only = AugmentPolicy::none();
  flip_only.enabled = true;
  flip_only.flip_probability = 1.0;
  CHECK(apply_policy(img, flip_only, rng) == flip_horizontal(img));

  AugmentPolicy all;
  Rng a(11), b(11);
  const auto x = apply_policy(img, all, a);
  CHECK(x == apply_policy(img, all, b));
  CHECK(x.shape() == img.shape());
  for (float v : x.data()) CHECK((v >= 0.0f && v <= 1.0f));

  AugmentPolicy bad;
  bad.flip_probability = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = AugmentPolicy{};
  bad.crop_min_fraction = 0.9;
  bad.crop_max_fraction = 0.8;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("bilinear resize") {
  const Image flat({1, 3, 5, 2}, 0.4f);
  CHECK(max_diff(resize_bilinear(flat, 7, 2), Image({1, 7, 2, 2}, 0.4f)) < 1e-6f);
  const auto img = random_image(4, 6, 12);
  CHECK(resize_bilinear(img, 4, 6) == img);
}
