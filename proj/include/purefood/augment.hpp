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

// Image augmentation on normalized (1, h, w, c) images with values in [0, 1].
// Resampling ops use bilinear interpolation; identity parameters are exact.

#pragma once

#include <cstdint>
#include <span>

#include "purefood/rng.hpp"
#include "purefood/tensor.hpp"

namespace pf {

using Image = Tensor<float>;

Image flip_horizontal(const Image& image);
Image flip_vertical(const Image& image);

// Bilinear sample of image 0 at fractional (row, col); cells outside the
// image read as zero.
float sample_bilinear(const Image& image, double row, double col, std::size_t ch);

// Bilinear resize with half-pixel centers and edge clamping.
Image resize_bilinear(const Image& image, std::size_t out_h, std::size_t out_w);

// Uniformly placed window of round(fraction * side) cells per side, resized
// back to the input dimensions.
Image random_crop(const Image& image, double fraction, Rng& rng);

// Counter-clockwise rotation about the image center; uncovered cells are 0.
Image rotate(const Image& image, double degrees);

// Horizontal shear about the center row: source col = col + shear * dy.
Image tilt(const Image& image, double shear);

// Adds deltas[ch] to every value of channel ch, then clamps to [0, 1].
Image color_shift(const Image& image, std::span<const float> deltas);

// I.i.d. N(0, sigma^2) noise, then clamps to [0, 1].
Image add_noise(const Image& image, double sigma, Rng& rng);

// v' = mean + factor * (v - mean) with the mean over all values, clamped.
Image adjust_contrast(const Image& image, double factor);

struct AugmentPolicy {
  bool enabled = true;
  double flip_probability = 0.5;
  double vertical_flip_probability = 0.0;
  double crop_probability = 0.5;
  double crop_min_fraction = 0.8;
  double crop_max_fraction = 1.0;
  double tilt_probability = 0.25;
  double max_shear = 0.15;
  double color_shift_probability = 0.25;
  double max_color_shift = 0.05;
  double rotation_probability = 0.25;
  double max_rotation_degrees = 15.0;
  double noise_probability = 0.25;
  double noise_sigma = 0.02;
  double contrast_probability = 0.25;
  double contrast_min_factor = 0.8;
  double contrast_max_factor = 1.2;
  std::uint64_t seed = 0;

  // Policy with every op switched off.
  static AugmentPolicy none();
  // Throws a config error for probabilities outside [0, 1], crop fractions
  // outside (0, 1], or reversed ranges.
  void validate() const;
};

// Applies the enabled ops in the order flip, crop, tilt, color shift,
// rotation, noise, contrast, each with its own probability.
Image apply_policy(const Image& image, const AugmentPolicy& policy, Rng& rng);

}  // namespace pf
