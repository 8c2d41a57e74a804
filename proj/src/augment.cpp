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

#include "purefood/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pf {

namespace {

float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

float at_or_zero(const Image& image, std::ptrdiff_t r, std::ptrdiff_t c, std::size_t ch) {
  const Shape4& s = image.shape();
  if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(s.h) ||
      c >= static_cast<std::ptrdiff_t>(s.w)) {
    return 0.0f;
  }
  return image(0, static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch);
}

double lerp(double a, double b, double t) { return a + t * (b - a); }

// Every output cell (r, c) reads the input at source(r, c).
template <typename Source>
Image remap(const Image& image, Source source) {
  const Shape4& s = image.shape();
  Image out(s);
  for (std::size_t n = 0; n < s.i; ++n) {
    for (std::size_t r = 0; r < s.h; ++r) {
      for (std::size_t c = 0; c < s.w; ++c) {
        const auto [sr, sc] = source(static_cast<double>(r), static_cast<double>(c));
        for (std::size_t ch = 0; ch < s.c; ++ch) {
          out(n, r, c, ch) = n == 0 ? sample_bilinear(image, sr, sc, ch) : 0.0f;
        }
      }
    }
  }
  return out;
}

void check_single(const Image& image) {
  if (image.shape().i != 1) {
    throw Error(ErrorKind::shape, "augmentation expects one image, got " + image.shape().str());
  }
}

}  // namespace

Image flip_horizontal(const Image& image) {
  const Shape4& s = image.shape();
  Image out(s);
  for (std::size_t n = 0; n < s.i; ++n)
    for (std::size_t r = 0; r < s.h; ++r)
      for (std::size_t c = 0; c < s.w; ++c)
        for (std::size_t ch = 0; ch < s.c; ++ch)
          out(n, r, c, ch) = image(n, r, s.w - 1 - c, ch);
  return out;
}

Image flip_vertical(const Image& image) {
  const Shape4& s = image.shape();
  Image out(s);
  for (std::size_t n = 0; n < s.i; ++n)
    for (std::size_t r = 0; r < s.h; ++r)
      for (std::size_t c = 0; c < s.w; ++c)
        for (std::size_t ch = 0; ch < s.c; ++ch)
          out(n, r, c, ch) = image(n, s.h - 1 - r, c, ch);
  return out;
}

float sample_bilinear(const Image& image, double row, double col, std::size_t ch) {
  const double r0 = std::floor(row);
  const double c0 = std::floor(col);
  const double fr = row - r0;
  const double fc = col - c0;
  const auto r = static_cast<std::ptrdiff_t>(r0);
  const auto c = static_cast<std::ptrdiff_t>(c0);
  const double top = lerp(at_or_zero(image, r, c, ch), at_or_zero(image, r, c + 1, ch), fc);
  if (fr == 0.0) return static_cast<float>(top);
  const double bottom =
      lerp(at_or_zero(image, r + 1, c, ch), at_or_zero(image, r + 1, c + 1, ch), fc);
  return static_cast<float>(lerp(top, bottom, fr));
}

Image resize_bilinear(const Image& image, std::size_t out_h, std::size_t out_w) {
  const Shape4& s = image.shape();
  if (out_h < 1 || out_w < 1) throw Error(ErrorKind::geometry, "resize target must be >= 1");
  Image out({s.i, out_h, out_w, s.c});
  const double sy = static_cast<double>(s.h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(s.w) / static_cast<double>(out_w);
  for (std::size_t n = 0; n < s.i; ++n) {
    for (std::size_t r = 0; r < out_h; ++r) {
      const double y = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0,
                                  static_cast<double>(s.h - 1));
      const auto y0 = static_cast<std::size_t>(y);
      const std::size_t y1 = std::min(y0 + 1, s.h - 1);
      const double fy = y - static_cast<double>(y0);
      for (std::size_t c = 0; c < out_w; ++c) {
        const double x = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0,
                                    static_cast<double>(s.w - 1));
        const auto x0 = static_cast<std::size_t>(x);
        const std::size_t x1 = std::min(x0 + 1, s.w - 1);
        const double fx = x - static_cast<double>(x0);
        for (std::size_t ch = 0; ch < s.c; ++ch) {
          const double top = lerp(image(n, y0, x0, ch), image(n, y0, x1, ch), fx);
          const double bottom = lerp(image(n, y1, x0, ch), image(n, y1, x1, ch), fx);
          out(n, r, c, ch) = static_cast<float>(fy == 0.0 ? top : lerp(top, bottom, fy));
        }
      }
    }
  }
  return out;
}

Image random_crop(const Image& image, double fraction, Rng& rng) {
  check_single(image);
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorKind::config, "crop fraction must be in (0, 1]");
  }
  const Shape4& s = image.shape();
  auto side = [&](std::size_t n) {
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n))), 1, n);
  };
  const std::size_t ch = side(s.h);
  const std::size_t cw = side(s.w);
  const std::size_t y0 = std::uniform_int_distribution<std::size_t>(0, s.h - ch)(rng);
  const std::size_t x0 = std::uniform_int_distribution<std::size_t>(0, s.w - cw)(rng);
  if (ch == s.h && cw == s.w) return image;
  Image window({1, ch, cw, s.c});
  for (std::size_t r = 0; r < ch; ++r)
    for (std::size_t c = 0; c < cw; ++c)
      for (std::size_t k = 0; k < s.c; ++k) window(0, r, c, k) = image(0, y0 + r, x0 + c, k);
  return resize_bilinear(window, s.h, s.w);
}

Image rotate(const Image& image, double degrees) {
  check_single(image);
  if (degrees == 0.0) return image;
  const double rad = degrees * std::numbers::pi / 180.0;
  double cs = std::cos(rad);
  double sn = std::sin(rad);
  if (std::abs(cs) < 1e-12) cs = 0.0;
  if (std::abs(sn) < 1e-12) sn = 0.0;
  const double cy = (static_cast<double>(image.shape().h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(image.shape().w) - 1.0) / 2.0;
  return remap(image, [&](double r, double c) {
    const double y = r - cy;
    const double x = c - cx;
    return std::pair{cy + x * sn + y * cs, cx + x * cs - y * sn};
  });
}

Image tilt(const Image& image, double shear) {
  check_single(image);
  if (shear == 0.0) return image;
  const double cy = (static_cast<double>(image.shape().h) - 1.0) / 2.0;
  return remap(image, [&](double r, double c) { return std::pair{r, c + shear * (r - cy)}; });
}

Image color_shift(const Image& image, std::span<const float> deltas) {
  const std::size_t channels = image.shape().c;
  if (deltas.size() != channels) {
    throw Error(ErrorKind::shape, "color shift needs one delta per channel");
  }
  if (std::all_of(deltas.begin(), deltas.end(), [](float d) { return d == 0.0f; })) {
    return image;
  }
  Image out = image;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = clamp01(out[k] + deltas[k % channels]);
  return out;
}

Image add_noise(const Image& image, double sigma, Rng& rng) {
  if (sigma < 0.0) throw Error(ErrorKind::config, "noise sigma must be >= 0");
  if (sigma == 0.0) return image;
  std::normal_distribution<double> normal(0.0, sigma);
  Image out = image;
  for (float& v : out.data()) v = clamp01(static_cast<float>(v + normal(rng)));
  return out;
}

Image adjust_contrast(const Image& image, double factor) {
  if (factor == 1.0) return image;
  double mean = 0.0;
  for (float v : image.data()) mean += v;
  mean /= static_cast<double>(image.size());
  Image out = image;
  for (float& v : out.data()) v = clamp01(static_cast<float>(mean + factor * (v - mean)));
  return out;
}

AugmentPolicy AugmentPolicy::none() {
  AugmentPolicy p;
  p.enabled = false;
  p.flip_probability = p.vertical_flip_probability = p.crop_probability = 0.0;
  p.tilt_probability = p.color_shift_probability = p.rotation_probability = 0.0;
  p.noise_probability = p.contrast_probability = 0.0;
  return p;
}

void AugmentPolicy::validate() const {
  for (double p : {flip_probability, vertical_flip_probability, crop_probability,
                   tilt_probability, color_shift_probability, rotation_probability,
                   noise_probability, contrast_probability}) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorKind::config, "augmentation probabilities must be in [0, 1]");
    }
  }
  if (!(crop_min_fraction > 0.0 && crop_max_fraction <= 1.0 &&
        crop_min_fraction <= crop_max_fraction)) {
    throw Error(ErrorKind::config, "crop fractions must satisfy 0 < min <= max <= 1");
  }
  if (contrast_min_factor > contrast_max_factor) {
    throw Error(ErrorKind::config, "contrast range is reversed");
  }
  if (max_shear < 0.0 || max_color_shift < 0.0 || max_rotation_degrees < 0.0 ||
      noise_sigma < 0.0) {
    throw Error(ErrorKind::config, "augmentation magnitudes must be >= 0");
  }
}

Image apply_policy(const Image& image, const AugmentPolicy& policy, Rng& rng) {
  policy.validate();
  if (!policy.enabled) return image;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto fires = [&](double p) { return p > 0.0 && unit(rng) < p; };
  auto in_range = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Image out = image;
  if (fires(policy.flip_probability)) out = flip_horizontal(out);
  if (fires(policy.vertical_flip_probability)) out = flip_vertical(out);
  if (fires(policy.crop_probability)) {
    out = random_crop(out, in_range(policy.crop_min_fraction, policy.crop_max_fraction), rng);
  }
  if (fires(policy.tilt_probability)) out = tilt(out, in_range(-policy.max_shear, policy.max_shear));
  if (fires(policy.color_shift_probability)) {
    std::vector<float> deltas(out.shape().c);
    for (float& d : deltas) {
      d = static_cast<float>(in_range(-policy.max_color_shift, policy.max_color_shift));
    }
    out = color_shift(out, deltas);
  }
  if (fires(policy.rotation_probability)) {
    out = rotate(out, in_range(-policy.max_rotation_degrees, policy.max_rotation_degrees));
  }
  if (fires(policy.noise_probability)) out = add_noise(out, policy.noise_sigma, rng);
  if (fires(policy.contrast_probability)) {
    out = adjust_contrast(out, in_range(policy.contrast_min_factor, policy.contrast_max_factor));
  }
  return out;
}

}  // namespace pf
