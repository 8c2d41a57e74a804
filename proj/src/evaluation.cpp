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

#include "purefood/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "purefood/dataio.hpp"
#include "purefood/model.hpp"
#include "purefood/training.hpp"
#include "text_util.hpp"

namespace pf {

std::vector<std::uint8_t> one_hot_encode(std::size_t index, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::config, "one-hot width must be >= 1");
  if (index >= n) {
    throw Error(ErrorKind::out_of_range, "class index " + std::to_string(index) +
                                             " outside [0, " + std::to_string(n) + ")");
  }
  std::vector<std::uint8_t> v(n, 0);
  v[index] = 1;
  return v;
}

template <typename T>
Tensor<T> one_hot_batch(std::span<const std::size_t> labels, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::config, "one-hot width must be >= 1");
  Tensor<T> out({labels.size(), 1, 1, n}, T(0));
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= n) {
      throw Error(ErrorKind::out_of_range, "class index " + std::to_string(labels[r]) +
                                               " outside [0, " + std::to_string(n) + ")");
    }
    out[r * n + labels[r]] = T(1);
  }
  return out;
}

template <typename T>
std::vector<std::size_t> top_k_candidates(std::span<const T> scores, std::size_t k) {
  if (k == 0 || k > scores.size()) {
    throw Error(ErrorKind::out_of_range, "k = " + std::to_string(k) + " outside [1, " +
                                             std::to_string(scores.size()) + "]");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                    });
  idx.resize(k);
  return idx;
}

template <typename T>
void PredictionBatch<T>::validate() const {
  if (scores.shape().i != truth.size()) {
    throw Error(ErrorKind::shape, "score rows (" + std::to_string(scores.shape().i) +
                                      ") and labels (" + std::to_string(truth.size()) + ") differ");
  }
  const std::size_t n = num_classes();
  for (std::size_t t : truth) {
    if (t >= n) throw Error(ErrorKind::out_of_range, "label " + std::to_string(t) + " out of range");
  }
}

template <typename T>
std::size_t top_k_hits(const PredictionBatch<T>& batch, std::size_t k) {
  batch.validate();
  const std::size_t n = batch.num_classes();
  std::size_t hits = 0;
  for (std::size_t r = 0; r < batch.truth.size(); ++r) {
    const auto top = top_k_candidates(std::span<const T>(batch.scores.raw() + r * n, n), k);
    if (std::find(top.begin(), top.end(), batch.truth[r]) != top.end()) ++hits;
  }
  return hits;
}

template <typename T>
double top_k_accuracy(const PredictionBatch<T>& batch, std::size_t k) {
  if (batch.truth.empty()) throw Error(ErrorKind::shape, "accuracy of an empty batch");
  return static_cast<double>(top_k_hits(batch, k)) / static_cast<double>(batch.truth.size());
}

double EvalReport::accuracy(std::size_t k) const {
  auto it = hits.find(k);
  if (it == hits.end()) throw Error(ErrorKind::config, "report has no top-" + std::to_string(k));
  return n == 0 ? 0.0 : static_cast<double>(it->second) / static_cast<double>(n);
}

void EvalReport::merge(const EvalReport& other) {
  if (n == 0 && ks.empty()) {
    *this = other;
    return;
  }
  if (ks != other.ks || per_class.size() != other.per_class.size()) {
    throw Error(ErrorKind::shape, "cannot merge reports with different ks or classes");
  }
  const double total = static_cast<double>(n + other.n);
  if (total > 0) {
    mean_loss = (mean_loss * static_cast<double>(n) + other.mean_loss * static_cast<double>(other.n)) / total;
  }
  n += other.n;
  for (std::size_t k : ks) hits[k] += other.hits.at(k);
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    per_class[c].total += other.per_class[c].total;
    for (std::size_t k : ks) per_class[c].correct[k] += other.per_class[c].correct.at(k);
  }
}

template <typename T>
EvalReport make_report(const PredictionBatch<T>& batch, const std::vector<std::size_t>& ks) {
  batch.validate();
  const std::size_t n = batch.num_classes();
  if (ks.empty()) throw Error(ErrorKind::config, "at least one k is required");
  EvalReport rep;
  rep.n = batch.truth.size();
  rep.ks = ks;
  rep.per_class.resize(n);
  for (std::size_t k : ks) {
    if (k == 0 || k > n) {
      throw Error(ErrorKind::out_of_range, "k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
    }
    rep.hits[k] = 0;
    for (auto& pc : rep.per_class) pc.correct[k] = 0;
  }
  const std::size_t kmax = *std::max_element(ks.begin(), ks.end());
  double loss = 0.0;
  for (std::size_t r = 0; r < rep.n; ++r) {
    const std::span<const T> row(batch.scores.raw() + r * n, n);
    const std::size_t t = batch.truth[r];
    const auto top = top_k_candidates(row, kmax);
    const auto rank = static_cast<std::size_t>(std::find(top.begin(), top.end(), t) - top.begin());
    ClassCounts& pc = rep.per_class[t];
    ++pc.total;
    for (std::size_t k : ks) {
      if (rank < k) {
        ++rep.hits[k];
        ++pc.correct[k];
      }
    }
    loss -= std::log(std::max(static_cast<double>(row[t]), 1e-12));
  }
  rep.mean_loss = rep.n == 0 ? 0.0 : loss / static_cast<double>(rep.n);
  return rep;
}

template <typename T>
EvalReport evaluate(const Model<T>& model, const SampleSource& source,
                    const std::vector<std::size_t>& ks, std::size_t batch_size) {
  if (batch_size == 0) throw Error(ErrorKind::config, "batch size must be >= 1");
  EvalReport total;
  total.ks = ks;
  const std::size_t n_classes = model.num_outputs();
  total.per_class.resize(n_classes);
  for (std::size_t k : ks) {
    total.hits[k] = 0;
    for (auto& pc : total.per_class) pc.correct[k] = 0;
  }
  for (std::size_t start = 0; start < source.size(); start += batch_size) {
    const std::size_t m = std::min(batch_size, source.size() - start);
    PredictionBatch<T> pb;
    Tensor<T> x;
    for (std::size_t j = 0; j < m; ++j) {
      const Sample s = source.get(start + j);
      if (j == 0) x = Tensor<T>({m, s.image.shape().h, s.image.shape().w, s.image.shape().c});
      if (s.image.size() * m != x.size()) throw Error(ErrorKind::shape, "sample shapes differ");
      for (std::size_t q = 0; q < s.image.size(); ++q) x[j * s.image.size() + q] = static_cast<T>(s.image[q]);
      pb.truth.push_back(s.label);
    }
    pb.scores = model.predict(x);
    total.merge(make_report(pb, ks));
  }
  return total;
}

void write_report_csv(std::ostream& out, const EvalReport& report,
                      const std::vector<std::string>& class_names) {
  out << "class,name,total";
  for (std::size_t k : report.ks) out << ",top" << k;
  out << '\n';
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const ClassCounts& pc = report.per_class[c];
    out << c << ',' << (c < class_names.size() ? class_names[c] : std::to_string(c)) << ',' << pc.total;
    for (std::size_t k : report.ks) out << ',' << pc.correct.at(k);
    out << '\n';
  }
}

std::string report_summary(const EvalReport& report) {
  std::string s = "N=" + std::to_string(report.n);
  for (std::size_t k : report.ks) s += ", top" + std::to_string(k) + "=" + detail::format_double(report.accuracy(k));
  s += ", loss=" + detail::format_double(report.mean_loss);
  return s;
}

#define PF_INSTANTIATE(T)                                                                   \
  template Tensor<T> one_hot_batch(std::span<const std::size_t>, std::size_t);             \
  template std::vector<std::size_t> top_k_candidates(std::span<const T>, std::size_t);     \
  template struct PredictionBatch<T>;                                                      \
  template std::size_t top_k_hits(const PredictionBatch<T>&, std::size_t);                 \
  template double top_k_accuracy(const PredictionBatch<T>&, std::size_t);                  \
  template EvalReport make_report(const PredictionBatch<T>&, const std::vector<std::size_t>&); \
  template EvalReport evaluate(const Model<T>&, const SampleSource&,                       \
                               const std::vector<std::size_t>&, std::size_t);
PF_INSTANTIATE(float)
PF_INSTANTIATE(double)
#undef PF_INSTANTIATE

}  // namespace pf
