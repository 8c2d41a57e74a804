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

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "purefood/augment.hpp"
#include "purefood/tensor.hpp"

namespace pf {

enum class Split { train, val, test };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct ManifestRecord {
  Split split = Split::train;
  std::size_t label = 0;
  std::string path;  // relative to the manifest root

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

// Directory-per-class corpus with a deterministic split assignment.
struct DatasetManifest {
  std::string root;
  std::uint64_t seed = 0;
  std::vector<std::string> classes;
  std::vector<ManifestRecord> records;

  std::vector<ManifestRecord> split_records(Split split) const;
  std::size_t count(Split split, std::size_t label) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// How each class's files are divided.
struct SplitScheme {
  enum class Mode { ratio, counts };
  Mode mode = Mode::ratio;
  // ratio mode: test and val counts are round(ratio * files); train gets the rest.
  double val_ratio = 0.0;
  double test_ratio = 0.2;
  // counts mode: exact per-class counts; needs train + test files per class.
  std::size_t train_count = 750;
  std::size_t test_count = 250;
  // counts mode: share of the train count carved out (seeded) as validation.
  double val_fraction = 0.0;

  static SplitScheme ratios(double train, double val, double test);
  // 750 train / 250 test per class, with `val_fraction` of train held out.
  static SplitScheme food101(double val_fraction = 0.0);
};

// Scans `root/<class>/*.ppm`. Classes sort lexicographically; each class's
// files are shuffled with a seed derived from (`seed`, class name) and then
// dealt to test, val, and train in that order.
DatasetManifest build_manifest(const std::string& root, const SplitScheme& scheme,
                               std::uint64_t seed);

// Text form: `root <path>`, `seed <n>`, `class <idx> <name>` header lines,
// then `<split>\t<class idx>\t<path>` per record.
std::string serialize_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text);
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& manifest);

// Images

// Binary PPM (P6, maxval 255) decoded to (1, h, w, 3) values byte / 255.
Image load_ppm(const std::string& path);
Image decode_ppm(std::string_view bytes, const std::string& origin = "<memory>");
// Values are clamped to [0, 1] and rounded to the nearest byte.
std::string encode_ppm(const Image& image);
void save_ppm(const std::string& path, const Image& image);

// Binary PGM (P5, maxval 255) from a single-channel image.
std::string encode_pgm(const Image& image);
void save_pgm(const std::string& path, const Image& image);
Image decode_pgm(std::string_view bytes, const std::string& origin = "<memory>");

// Aspect-preserving bilinear downscale so max(h, w) == max_side; identity
// when the image already fits.
Image rescale_max_side(const Image& image, std::size_t max_side);

// Central min(h, w) square.
Image center_crop_square(const Image& image);

// rescale_max_side -> center_crop_square -> bilinear resize to side x side.
Image prepare_image(const Image& image, std::size_t side, std::size_t max_side = 512);

// Sample sources and batching

struct Sample {
  Image image;  // (1, side, side, c)
  std::size_t label = 0;
};

// Random-access labeled images of one fixed shape.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual Sample get(std::size_t index) const = 0;
  virtual std::size_t label(std::size_t index) const { return get(index).label; }
};

class InMemorySource final : public SampleSource {
 public:
  InMemorySource(std::vector<Sample> samples, std::size_t num_classes);

  std::size_t size() const override { return samples_.size(); }
  std::size_t num_classes() const override { return num_classes_; }
  Sample get(std::size_t index) const override;
  std::size_t label(std::size_t index) const override;

 private:
  std::vector<Sample> samples_;
  std::size_t num_classes_;
};

// One split of a manifest, decoded from disk on access.
class ManifestSource final : public SampleSource {
 public:
  ManifestSource(DatasetManifest manifest, Split split, std::size_t side,
                 std::size_t max_side = 512);

  std::size_t size() const override { return records_.size(); }
  std::size_t num_classes() const override { return manifest_.classes.size(); }
  Sample get(std::size_t index) const override;
  std::size_t label(std::size_t index) const override;
  const DatasetManifest& manifest() const noexcept { return manifest_; }

 private:
  DatasetManifest manifest_;
  std::vector<ManifestRecord> records_;
  std::size_t side_;
  std::size_t max_side_;
};

template <typename T>
struct Batch {
  Tensor<T> images;   // (n, side, side, c)
  Tensor<T> one_hot;  // (n, 1, 1, classes)
  std::vector<std::size_t> labels;
  std::vector<std::size_t> indices;  // source indices in batch order
};

// Fixed-size batches over a source (the last one may be partial). With a
// shuffle seed the visiting order is a seeded permutation; with a policy,
// image `idx` is augmented using seed derive_seed(policy.seed ^ idx, epoch).
template <typename T>
class BatchIterator {
 public:
  BatchIterator(std::shared_ptr<const SampleSource> source, std::size_t batch_size,
                std::optional<std::uint64_t> shuffle_seed = std::nullopt,
                std::optional<AugmentPolicy> policy = std::nullopt,
                std::uint64_t epoch = 0);

  std::optional<Batch<T>> next();
  std::size_t batch_count() const;
  const std::vector<std::size_t>& order() const noexcept { return order_; }

 private:
  std::shared_ptr<const SampleSource> source_;
  std::size_t batch_size_;
  std::optional<AugmentPolicy> policy_;
  std::uint64_t epoch_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

extern template class BatchIterator<float>;
extern template class BatchIterator<double>;

// Seeded permutation of 0..n-1 (Fisher-Yates).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

// Batches over one manifest split; augmentation only applies to Split::train.
template <typename T>
BatchIterator<T> batch_iterator(const DatasetManifest& manifest, Split split,
                                std::size_t batch_size, std::size_t side,
                                std::optional<std::uint64_t> shuffle_seed,
                                std::optional<AugmentPolicy> policy,
                                std::size_t max_side = 512);

}  // namespace pf
