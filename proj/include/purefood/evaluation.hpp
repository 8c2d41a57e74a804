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
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "purefood/tensor.hpp"

namespace pf {

template <typename T>
class Model;
class SampleSource;

std::vector<std::uint8_t> one_hot_encode(std::size_t index, std::size_t n);

// Index of the single 1; invalid_label error for anything else.
template <typename V>
std::size_t one_hot_decode(std::span<const V> vec) {
  std::size_t hot = vec.size();
  for (std::size_t k = 0; k < vec.size(); ++k) {
    if (vec[k] == V(0)) continue;
    if (vec[k] != V(1) || hot != vec.size()) {
      throw Error(ErrorKind::invalid_label, "malformed one-hot vector");
    }
    hot = k;
  }
  if (hot == vec.size()) throw Error(ErrorKind::invalid_label, "one-hot vector has no 1");
  return hot;
}

// (labels.size(), 1, 1, n) tensor of one-hot rows.
template <typename T>
Tensor<T> one_hot_batch(std::span<const std::size_t> labels, std::size_t n);

// Indices of the k highest scores, best first; equal scores rank the lower
// index first.
template <typename T>
std::vector<std::size_t> top_k_candidates(std::span<const T> scores, std::size_t k);

// Scores for N samples plus their true classes.
template <typename T>
struct PredictionBatch {
  Tensor<T> scores;  // (N, 1, 1, n_classes)
  std::vector<std::size_t> truth;

  void validate() const;
  std::size_t num_classes() const { return scores.shape().h * scores.shape().w * scores.shape().c; }
};

// Number of rows whose true class lies among the top-k candidates.
template <typename T>
std::size_t top_k_hits(const PredictionBatch<T>& batch, std::size_t k);

// (1/N) * sum_i 1[truth_i in top-k candidates of row i].
template <typename T>
double top_k_accuracy(const PredictionBatch<T>& batch, std::size_t k);

struct ClassCounts {
  std::size_t total = 0;
  std::map<std::size_t, std::size_t> correct;  // k -> hits
};

// Exact counts with ratios derived on demand.
struct EvalReport {
  std::size_t n = 0;
  std::vector<std::size_t> ks;
  std::map<std::size_t, std::size_t> hits;  // k -> hits over all samples
  std::vector<ClassCounts> per_class;
  double mean_loss = 0.0;  // categorical cross-entropy of the scores

  double accuracy(std::size_t k) const;
  void merge(const EvalReport& other);
};

template <typename T>
EvalReport make_report(const PredictionBatch<T>& batch, const std::vector<std::size_t>& ks);

// Batched inference over `source`, aggregated per requested k.
template <typename T>
EvalReport evaluate(const Model<T>& model, const SampleSource& source,
                    const std::vector<std::size_t>& ks, std::size_t batch_size = 64);

// `class,name,total,top<k>...` rows per class.
void write_report_csv(std::ostream& out, const EvalReport& report,
                      const std::vector<std::string>& class_names);

// `N, top1, top5` style summary for the report's ks.
std::string report_summary(const EvalReport& report);

}  // namespace pf
