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
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "purefood/augment.hpp"
#include "purefood/model.hpp"

namespace pf {

class SampleSource;

// Mean over rows of -log(max(p_true, 1e-12)). `probs` and `one_hot` are
// (N, 1, 1, n); every label row must be one-hot.
template <typename T>
double cross_entropy_loss(const Tensor<T>& probs, const Tensor<T>& one_hot);

struct Regularization {
  double l1 = 0.0;
  double l2 = 0.0;
};

template <typename T>
struct GradientResult {
  double loss = 0.0;       // cross-entropy plus penalties
  double data_loss = 0.0;  // cross-entropy alone
  GradStore<T> grads;
  Tensor<T> probs;
};

// Forward, loss, and backward for one batch. Penalty gradients (2*l2*w and
// l1*sign(w)) are added to weight-role entries only.
template <typename T>
GradientResult<T> compute_gradients(Model<T>& model, const Tensor<T>& x,
                                    const Tensor<T>& one_hot, const Regularization& reg,
                                    Mode mode = Mode::training, Rng* rng = nullptr);

// lr0 * factor^floor(epoch / interval) for zero-based `epoch`.
struct LrSchedule {
  double factor = 0.5;
  std::size_t interval = 20;

  double rate(double base, std::size_t epoch) const;
};

struct OptimizerConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  LrSchedule schedule;

  void validate() const;
};

// SGD with Nesterov momentum in lookahead form:
//   v <- mu*v - lr*grad(theta + mu*v);  theta <- theta + v
template <typename T>
class NesterovOptimizer {
 public:
  using GradFn = std::function<GradStore<T>()>;

  explicit NesterovOptimizer(double momentum);

  // Moves `params` to the lookahead point, calls `grad_fn` (which must read
  // the same `params`), restores them, and applies the update to every
  // parameter that has a gradient. Non-finite gradients raise before any
  // parameter changes.
  void step(ParamStore<T>& params, const GradFn& grad_fn, double lr);

  const ParamStore<T>& velocity() const noexcept { return velocity_; }

 private:
  double momentum_;
  ParamStore<T> velocity_;
};

extern template class NesterovOptimizer<float>;
extern template class NesterovOptimizer<double>;

// Tracks the best validation metric. An epoch counts as an improvement only
// when it beats the best strictly; training should stop once
// max(patience, 1) epochs in a row fail to improve.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  // Returns true when `metric` is a new best.
  bool update(std::size_t epoch, double metric);
  bool should_stop() const noexcept;

  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_metric() const noexcept { return best_; }
  std::size_t stale_epochs() const noexcept { return stale_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  double best_;
  std::size_t stale_ = 0;
  bool seen_ = false;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_top1 = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_top1;
  double lr = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer;
  Regularization regularization;
  bool early_stopping = true;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  std::optional<AugmentPolicy> augment;
  // Stop once the epoch's train top-1 reaches this value.
  std::optional<double> target_train_top1;
  std::size_t eval_batch_size = 64;
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const;
};

template <typename T>
struct TrainResult {
  std::vector<EpochRecord> history;
  ParamStore<T> params;        // best-validation snapshot, or final params without a val set
  std::size_t best_epoch = 0;  // 0 when no epoch was run or no val set exists
  bool stopped_early = false;
};

// Shuffled mini-batch training. After each epoch both splits are scored in
// inference mode on unaugmented images. The model ends holding
// `result.params`.
template <typename T>
TrainResult<T> train(Model<T>& model, std::shared_ptr<const SampleSource> train_set,
                     std::shared_ptr<const SampleSource> val_set, const TrainConfig& config);

// CSV with header `epoch,train_loss,train_top1,val_loss,val_top1,lr`; missing
// validation values are empty fields.
void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);
std::string history_csv(const std::vector<EpochRecord>& history);
std::vector<EpochRecord> parse_history_csv(std::string_view text);
std::vector<EpochRecord> load_history_csv(const std::string& path);

struct FitThresholds {
  double low = 0.10;   // T_low on error rate
  double high = 0.30;  // T_high on error rate
  double gap = 0.15;   // G on val error minus train error

  void validate() const;
};

enum class FitLabel { underfitting, overfitting, good_fit, inconclusive };

std::string_view fit_label_name(FitLabel label);

struct FitVerdict {
  FitLabel label = FitLabel::inconclusive;
  double train_error = 0.0;
  std::optional<double> val_error;
  std::optional<double> gap;
};

// Verdict from the final epoch's error rates (1 - top-1).
FitVerdict diagnose_fit(const std::vector<EpochRecord>& history,
                        const FitThresholds& thresholds = {});

}  // namespace pf
