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

#include "purefood/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "io_util.hpp"
#include "purefood/evaluation.hpp"
#include "purefood/rng.hpp"
#include "text_util.hpp"

namespace fs = std::filesystem;

namespace pf {

std::string_view split_name(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw Error(ErrorKind::config, "unknown split '" + std::string(name) + "'");
}

std::vector<ManifestRecord> DatasetManifest::split_records(Split split) const {
  std::vector<ManifestRecord> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

std::size_t DatasetManifest::count(Split split, std::size_t label) const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [&](const auto& r) {
    return r.split == split && r.label == label;
  }));
}

SplitScheme SplitScheme::ratios(double train, double val, double test) {
  if (train < 0.0 || val < 0.0 || test < 0.0 || std::abs(train + val + test - 1.0) > 1e-9) {
    throw Error(ErrorKind::config, "split ratios must be non-negative and sum to 1");
  }
  SplitScheme s;
  s.mode = Mode::ratio;
  s.val_ratio = val;
  s.test_ratio = test;
  return s;
}

SplitScheme SplitScheme::food101(double val_fraction) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw Error(ErrorKind::config, "validation fraction must be in [0, 1)");
  }
  SplitScheme s;
  s.mode = Mode::counts;
  s.train_count = 750;
  s.test_count = 250;
  s.val_fraction = val_fraction;
  return s;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t k = 0; k < n; ++k) idx[k] = k;
  Rng rng(seed);
  for (std::size_t k = n; k > 1; --k) {
    const std::size_t j = static_cast<std::size_t>(rng() % k);
    std::swap(idx[k - 1], idx[j]);
  }
  return idx;
}

namespace {

bool is_ppm(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".ppm";
}

std::size_t rounded_share(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
}

}  // namespace

DatasetManifest build_manifest(const std::string& root, const SplitScheme& scheme,
                               std::uint64_t seed) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw Error(ErrorKind::io, "cannot read dataset root " + root);
  }
  DatasetManifest m;
  m.root = root;
  m.seed = seed;
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root, ec)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  if (ec) throw Error(ErrorKind::io, "cannot list dataset root " + root + ": " + ec.message());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw Error(ErrorKind::io, "dataset root " + root + " has no class directories");

  std::set<std::string> seen;
  for (const auto& dir : class_dirs) {
    const std::string name = dir.filename().string();
    if (!seen.insert(name).second) throw Error(ErrorKind::io, "duplicate class name " + name);
    const std::size_t label = m.classes.size();
    m.classes.push_back(name);

    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && is_ppm(entry.path())) {
        files.push_back((fs::path(name) / entry.path().filename()).generic_string());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorKind::io, "class directory " + dir.string() + " has no images");

    const std::size_t n = files.size();
    std::size_t n_test = 0, n_val = 0, n_train = 0;
    if (scheme.mode == SplitScheme::Mode::ratio) {
      n_test = rounded_share(scheme.test_ratio, n);
      n_val = rounded_share(scheme.val_ratio, n);
      if (n_test + n_val > n) {
        throw Error(ErrorKind::config, "split ratios exceed the files of class " + name);
      }
      n_train = n - n_test - n_val;
    } else {
      if (n < scheme.train_count + scheme.test_count) {
        throw Error(ErrorKind::io, "class " + name + " has " + std::to_string(n) + " images, needs " +
                                       std::to_string(scheme.train_count + scheme.test_count));
      }
      n_test = scheme.test_count;
      n_val = rounded_share(scheme.val_fraction, scheme.train_count);
      n_train = scheme.train_count - n_val;
    }

    const auto order = shuffled_indices(n, derive_seed(seed, "split/" + name));
    std::vector<std::pair<std::string, Split>> assigned;
    for (std::size_t k = 0; k < n_test + n_val + n_train; ++k) {
      const Split s = k < n_test ? Split::test : (k < n_test + n_val ? Split::val : Split::train);
      assigned.emplace_back(files[order[k]], s);
    }
    std::sort(assigned.begin(), assigned.end());
    for (auto& [path, split] : assigned) m.records.push_back({split, label, path});
  }
  return m;
}

std::string serialize_manifest(const DatasetManifest& m) {
  std::ostringstream os;
  os << "root " << m.root << '\n';
  os << "seed " << m.seed << '\n';
  for (std::size_t k = 0; k < m.classes.size(); ++k) os << "class " << k << ' ' << m.classes[k] << '\n';
  for (const auto& r : m.records) os << split_name(r.split) << '\t' << r.label << '\t' << r.path << '\n';
  return os.str();
}

DatasetManifest parse_manifest(std::string_view text) {
  DatasetManifest m;
  std::set<std::string> names;
  std::size_t line_no = 0;
  for (const std::string& line : detail::split_lines(text)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    if (line.find('\t') != std::string::npos) {
      const auto f = detail::split(line, '\t');
      if (f.size() != 3) throw Error(ErrorKind::format, where + ": expected split<TAB>class<TAB>path");
      ManifestRecord r{parse_split(f[0]), detail::parse_size(f[1], where), f[2]};
      if (r.label >= m.classes.size()) throw Error(ErrorKind::format, where + ": class index out of range");
      m.records.push_back(std::move(r));
    } else if (line.starts_with("root ")) {
      m.root = line.substr(5);
    } else if (line.starts_with("seed ")) {
      m.seed = detail::parse_size(line.substr(5), where);
    } else if (line.starts_with("class ")) {
      const auto sp = line.find(' ', 6);
      if (sp == std::string::npos) throw Error(ErrorKind::format, where + ": expected 'class <idx> <name>'");
      const std::size_t idx = detail::parse_size(line.substr(6, sp - 6), where);
      const std::string name = line.substr(sp + 1);
      if (idx != m.classes.size()) throw Error(ErrorKind::format, where + ": class indices must be dense");
      if (!names.insert(name).second) throw Error(ErrorKind::format, where + ": duplicate class " + name);
      m.classes.push_back(name);
    } else {
      throw Error(ErrorKind::format, where + ": unrecognized line");
    }
  }
  return m;
}

DatasetManifest load_manifest(const std::string& path) {
  try {
    return parse_manifest(detail::read_file(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
  detail::write_file_atomic(path, serialize_manifest(manifest));
}

namespace {

// Parses "P?" header fields; returns offset of the first payload byte.
std::size_t parse_netpbm_header(std::string_view bytes, std::string_view magic,
                                std::size_t& width, std::size_t& height,
                                const std::string& origin) {
  if (bytes.size() < 2 || bytes.substr(0, 2) != magic) {
    throw Error(ErrorKind::format, origin + ": not a binary " + std::string(magic) + " file");
  }
  std::size_t pos = 2;
  std::size_t fields[3];
  for (std::size_t& field : fields) {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos == start) throw Error(ErrorKind::format, origin + ": malformed header");
    field = detail::parse_size(std::string(bytes.substr(start, pos - start)), origin);
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw Error(ErrorKind::format, origin + ": malformed header");
  }
  width = fields[0];
  height = fields[1];
  if (width == 0 || height == 0) throw Error(ErrorKind::format, origin + ": zero image dimension");
  if (fields[2] != 255) {
    throw Error(ErrorKind::format, origin + ": unsupported maxval " + std::to_string(fields[2]));
  }
  return pos + 1;
}

std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

Image decode_netpbm(std::string_view bytes, std::string_view magic, std::size_t channels,
                    const std::string& origin) {
  std::size_t w = 0, h = 0;
  const std::size_t start = parse_netpbm_header(bytes, magic, w, h, origin);
  const std::size_t need = w * h * channels;
  if (bytes.size() - start < need) throw Error(ErrorKind::format, origin + ": truncated payload");
  Image img({1, h, w, channels});
  for (std::size_t k = 0; k < need; ++k) {
    img[k] = static_cast<float>(static_cast<unsigned char>(bytes[start + k])) / 255.0f;
  }
  return img;
}

std::string encode_netpbm(const Image& image, std::string_view magic) {
  const Shape4& s = image.shape();
  std::string out = std::string(magic) + "\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + s.h * s.w * s.c);
  for (std::size_t k = 0; k < s.h * s.w * s.c; ++k) out[header + k] = static_cast<char>(quantize(image[k]));
  return out;
}

}  // namespace

Image decode_ppm(std::string_view bytes, const std::string& origin) {
  return decode_netpbm(bytes, "P6", 3, origin);
}

Image load_ppm(const std::string& path) { return decode_ppm(detail::read_file(path), path); }

std::string encode_ppm(const Image& image) {
  if (image.shape().i != 1 || image.shape().c != 3) {
    throw Error(ErrorKind::shape, "PPM needs a (1, h, w, 3) image, got " + image.shape().str());
  }
  return encode_netpbm(image, "P6");
}

void save_ppm(const std::string& path, const Image& image) {
  detail::write_file_atomic(path, encode_ppm(image));
}

std::string encode_pgm(const Image& image) {
  if (image.shape().i != 1 || image.shape().c != 1) {
    throw Error(ErrorKind::shape, "PGM needs a (1, h, w, 1) image, got " + image.shape().str());
  }
  return encode_netpbm(image, "P5");
}

void save_pgm(const std::string& path, const Image& image) {
  detail::write_file_atomic(path, encode_pgm(image));
}

Image decode_pgm(std::string_view bytes, const std::string& origin) {
  return decode_netpbm(bytes, "P5", 1, origin);
}

Image rescale_max_side(const Image& image, std::size_t max_side) {
  if (max_side < 1) throw Error(ErrorKind::config, "max side must be >= 1");
  const Shape4& s = image.shape();
  const std::size_t longest = std::max(s.h, s.w);
  if (longest <= max_side) return image;
  const double scale = static_cast<double>(max_side) / static_cast<double>(longest);
  auto fit = [&](std::size_t n) {
    if (n == longest) return max_side;
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(static_cast<double>(n) * scale)), 1, max_side);
  };
  return resize_bilinear(image, fit(s.h), fit(s.w));
}

Image center_crop_square(const Image& image) {
  const Shape4& s = image.shape();
  const std::size_t side = std::min(s.h, s.w);
  if (s.h == s.w) return image;
  const std::size_t y0 = (s.h - side) / 2;
  const std::size_t x0 = (s.w - side) / 2;
  Image out({s.i, side, side, s.c});
  for (std::size_t n = 0; n < s.i; ++n)
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t c = 0; c < side; ++c)
        for (std::size_t ch = 0; ch < s.c; ++ch) out(n, r, c, ch) = image(n, y0 + r, x0 + c, ch);
  return out;
}

Image prepare_image(const Image& image, std::size_t side, std::size_t max_side) {
  Image sq = center_crop_square(rescale_max_side(image, max_side));
  if (sq.shape().h == side) return sq;
  return resize_bilinear(sq, side, side);
}

InMemorySource::InMemorySource(std::vector<Sample> samples, std::size_t num_classes)
    : samples_(std::move(samples)), num_classes_(num_classes) {
  for (const auto& s : samples_) {
    if (s.label >= num_classes_) throw Error(ErrorKind::out_of_range, "sample label out of range");
    if (s.image.shape() != samples_.front().image.shape()) {
      throw Error(ErrorKind::shape, "in-memory samples must share one shape");
    }
  }
}

Sample InMemorySource::get(std::size_t index) const { return samples_.at(index); }
std::size_t InMemorySource::label(std::size_t index) const { return samples_.at(index).label; }

ManifestSource::ManifestSource(DatasetManifest manifest, Split split, std::size_t side,
                               std::size_t max_side)
    : manifest_(std::move(manifest)),
      records_(manifest_.split_records(split)),
      side_(side),
      max_side_(max_side) {
  if (side_ < 1) throw Error(ErrorKind::config, "target side must be >= 1");
}

Sample ManifestSource::get(std::size_t index) const {
  const ManifestRecord& r = records_.at(index);
  const std::string path = (fs::path(manifest_.root) / r.path).string();
  return {prepare_image(load_ppm(path), side_, max_side_), r.label};
}

std::size_t ManifestSource::label(std::size_t index) const { return records_.at(index).label; }

template <typename T>
BatchIterator<T>::BatchIterator(std::shared_ptr<const SampleSource> source, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed,
                                std::optional<AugmentPolicy> policy, std::uint64_t epoch)
    : source_(std::move(source)), batch_size_(batch_size), policy_(std::move(policy)), epoch_(epoch) {
  if (batch_size_ == 0) throw Error(ErrorKind::config, "batch size must be >= 1");
  if (source_->size() == 0) throw Error(ErrorKind::config, "cannot batch an empty split");
  if (policy_) policy_->validate();
  if (shuffle_seed) {
    order_ = shuffled_indices(source_->size(), *shuffle_seed);
  } else {
    order_.resize(source_->size());
    for (std::size_t k = 0; k < order_.size(); ++k) order_[k] = k;
  }
}

template <typename T>
std::size_t BatchIterator<T>::batch_count() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

template <typename T>
std::optional<Batch<T>> BatchIterator<T>::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t n = std::min(batch_size_, order_.size() - cursor_);
  Batch<T> batch;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t idx = order_[cursor_ + k];
    Sample s = source_->get(idx);
    if (policy_ && policy_->enabled) {
      Rng rng(derive_seed(policy_->seed ^ idx, epoch_));
      s.image = apply_policy(s.image, *policy_, rng);
    }
    if (k == 0) {
      const Shape4& is = s.image.shape();
      batch.images = Tensor<T>({n, is.h, is.w, is.c});
    } else if (s.image.shape().h != batch.images.shape().h ||
               s.image.shape().w != batch.images.shape().w ||
               s.image.shape().c != batch.images.shape().c) {
      throw Error(ErrorKind::shape, "sample shapes differ within a batch");
    }
    const std::size_t stride = s.image.size();
    std::copy(s.image.data().begin(), s.image.data().end(), batch.images.raw() + k * stride);
    batch.labels.push_back(s.label);
    batch.indices.push_back(idx);
  }
  batch.one_hot = one_hot_batch<T>(batch.labels, source_->num_classes());
  cursor_ += n;
  return batch;
}

template class BatchIterator<float>;
template class BatchIterator<double>;

template <typename T>
BatchIterator<T> batch_iterator(const DatasetManifest& manifest, Split split, std::size_t batch_size,
                                std::size_t side, std::optional<std::uint64_t> shuffle_seed,
                                std::optional<AugmentPolicy> policy, std::size_t max_side) {
  auto source = std::make_shared<ManifestSource>(manifest, split, side, max_side);
  if (split != Split::train) policy.reset();
  return BatchIterator<T>(std::move(source), batch_size, shuffle_seed, std::move(policy));
}

template BatchIterator<float> batch_iterator(const DatasetManifest&, Split, std::size_t, std::size_t,
                                             std::optional<std::uint64_t>, std::optional<AugmentPolicy>,
                                             std::size_t);
template BatchIterator<double> batch_iterator(const DatasetManifest&, Split, std::size_t, std::size_t,
                                              std::optional<std::uint64_t>, std::optional<AugmentPolicy>,
                                              std::size_t);

}  // namespace pf
