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

#include "purefood/training.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "io_util.hpp"
#include "purefood/dataio.hpp"
#include "purefood/evaluation.hpp"
#include "text_util.hpp"

namespace pf {

template <typename T>
double cross_entropy_loss(const Tensor<T>& probs, const Tensor<T>& one_hot) {
  if (probs.shape() != one_hot.shape()) {
    throw Error(ErrorKind::shape, "probabilities " + probs.shape().str() +
                                      " and labels " + one_hot.shape().str() + " differ");
  }
  const std::size_t rows = probs.shape().i;
  if (rows == 0) throw Error(ErrorKind::shape, "cross-entropy of an empty batch");
  const std::size_t n = probs.size() / rows;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t t = one_hot_decode(std::span<const T>(one_hot.raw() + r * n, n));
    total -= std::log(std::max(static_cast<double>(probs[r * n + t]), 1e-12));
  }
  return total / static_cast<double>(rows);
}

template <typename T>
GradientResult<T> compute_gradients(Model<T>& model, const Tensor<T>& x,
                                    const Tensor<T>& one_hot, const Regularization& reg,
                                    Mode mode, Rng* rng) {
  ForwardTrace<T> trace;
  GradientResult<T> out;
  out.probs = model.forward(x, mode, rng, &trace);
  out.data_loss = cross_entropy_loss(out.probs, one_hot);
  out.loss = out.data_loss + l1_penalty(model.params(), reg.l1) +
             l2_penalty(model.params(), reg.l2);

  // d(mean CE)/d(logits) = (p - y) / N for a softmax output.
  const T scale = T(1) / static_cast<T>(x.shape().i);
  Tensor<T> dlogits(out.probs.shape());
  for (std::size_t k = 0; k < dlogits.size(); ++k) {
    dlogits[k] = (out.probs[k] - one_hot[k]) * scale;
  }
  out.grads = model.backward(trace, dlogits, true);

  if (reg.l1 != 0.0 || reg.l2 != 0.0) {
    for (auto& g : out.grads) {
      if (g.role != ParamRole::weight) continue;
      const Tensor<T>& w = model.params().at(g.name);
      for (std::size_t k = 0; k < w.size(); ++k) {
        const T v = w[k];
        const T sign = v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
        g.value[k] += static_cast<T>(2.0 * reg.l2) * v + static_cast<T>(reg.l1) * sign;
      }
    }
  }
  return out;
}

double LrSchedule::rate(double base, std::size_t epoch) const {
  if (interval == 0) return base;
  return base * std::pow(factor, static_cast<double>(epoch / interval));
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorKind::config, "learning rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error(ErrorKind::config, "momentum must be in [0, 1)");
  }
  if (!(schedule.factor > 0.0 && schedule.factor <= 1.0)) {
    throw Error(ErrorKind::config, "lr decay factor must be in (0, 1]");
  }
}

template <typename T>
NesterovOptimizer<T>::NesterovOptimizer(double momentum) : momentum_(momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error(ErrorKind::config, "momentum must be in [0, 1)");
  }
}

template <typename T>
void NesterovOptimizer<T>::step(ParamStore<T>& params, const GradFn& grad_fn, double lr) {
  const T mu = static_cast<T>(momentum_);
  std::vector<std::pair<Tensor<T>*, Tensor<T>>> saved;
  for (const auto& v : velocity_) {
    Tensor<T>& theta = params.at(v.name);
    saved.emplace_back(&theta, theta);
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] += mu * v.value[k];
  }
  GradStore<T> grads;
  try {
    grads = grad_fn();
  } catch (...) {
    for (auto& [ptr, value] : saved) *ptr = std::move(value);
    throw;
  }
  for (auto& [ptr, value] : saved) *ptr = std::move(value);

  for (const auto& g : grads) {
    const Tensor<T>& theta = params.at(g.name);
    if (g.value.shape() != theta.shape()) {
      throw Error(ErrorKind::shape, "gradient shape mismatch for " + g.name);
    }
    if (!g.value.all_finite()) throw Error(ErrorKind::non_finite, "non-finite gradient in " + g.name);
  }
  const T rate = static_cast<T>(lr);
  for (const auto& g : grads) {
    Tensor<T>& theta = params.at(g.name);
    Param<T>* v = velocity_.find(g.name);
    if (v == nullptr) {
      velocity_.add(g.name, g.role, Tensor<T>(theta.shape(), T(0)));
      v = velocity_.find(g.name);
    }
    for (std::size_t k = 0; k < theta.size(); ++k) {
      v->value[k] = mu * v->value[k] - rate * g.value[k];
      theta[k] += v->value[k];
    }
  }
}

template class NesterovOptimizer<float>;
template class NesterovOptimizer<double>;

EarlyStopping::EarlyStopping(std::size_t patience)
    : patience_(patience), best_(-std::numeric_limits<double>::infinity()) {}

bool EarlyStopping::update(std::size_t epoch, double metric) {
  if (!seen_ || metric > best_) {
    seen_ = true;
    best_ = metric;
    best_epoch_ = epoch;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

bool EarlyStopping::should_stop() const noexcept {
  return stale_ >= std::max<std::size_t>(patience_, 1);
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw Error(ErrorKind::config, "batch size must be >= 1");
  if (eval_batch_size == 0) throw Error(ErrorKind::config, "eval batch size must be >= 1");
  optimizer.validate();
  if (regularization.l1 < 0.0 || regularization.l2 < 0.0) {
    throw Error(ErrorKind::config, "penalty coefficients must be >= 0");
  }
  if (augment) augment->validate();
}

template <typename T>
TrainResult<T> train(Model<T>& model, std::shared_ptr<const SampleSource> train_set,
                     std::shared_ptr<const SampleSource> val_set, const TrainConfig& config) {
  config.validate();
  if (!train_set || train_set->size() == 0) throw Error(ErrorKind::config, "training set is empty");
  if (train_set->num_classes() == 0) throw Error(ErrorKind::config, "class list is empty");
  if (train_set->num_classes() != model.num_outputs()) {
    throw Error(ErrorKind::config, "model has " + std::to_string(model.num_outputs()) +
                                       " outputs for " + std::to_string(train_set->num_classes()) +
                                       " classes");
  }
  const bool has_val = val_set && val_set->size() > 0;
  if (config.early_stopping && config.epochs > 0 && !has_val) {
    throw Error(ErrorKind::config, "early stopping needs at least one validation sample");
  }

  TrainResult<T> result;
  result.params = model.params();
  NesterovOptimizer<T> optimizer(config.optimizer.momentum);
  EarlyStopping stopper(config.patience);
  const std::uint64_t shuffle_root = derive_seed(config.seed, "shuffle");
  const std::uint64_t dropout_root = derive_seed(config.seed, "dropout");

  for (std::size_t e = 0; e < config.epochs; ++e) {
    const double lr = config.optimizer.schedule.rate(config.optimizer.learning_rate, e);
    BatchIterator<T> batches(train_set, config.batch_size, derive_seed(shuffle_root, e),
                             config.augment, e);
    Rng rng(derive_seed(dropout_root, e));
    while (auto batch = batches.next()) {
      optimizer.step(model.params(), [&] {
        return compute_gradients(model, batch->images, batch->one_hot, config.regularization,
                                 Mode::training, &rng)
            .grads;
      }, lr);
    }

    EpochRecord rec;
    rec.epoch = e + 1;
    rec.lr = lr;
    const EvalReport tr = evaluate(model, *train_set, {1}, config.eval_batch_size);
    rec.train_loss = tr.mean_loss;
    rec.train_top1 = tr.accuracy(1);
    if (has_val) {
      const EvalReport vr = evaluate(model, *val_set, {1}, config.eval_batch_size);
      rec.val_loss = vr.mean_loss;
      rec.val_top1 = vr.accuracy(1);
    }
    result.history.push_back(rec);
    if (config.on_epoch) config.on_epoch(rec);

    if (has_val && stopper.update(rec.epoch, *rec.val_top1)) {
      result.params = model.params();
      result.best_epoch = rec.epoch;
    }
    if (config.early_stopping && stopper.should_stop()) {
      result.stopped_early = true;
      break;
    }
    if (config.target_train_top1 && rec.train_top1 >= *config.target_train_top1) break;
  }
  if (!has_val) result.params = model.params();
  model.set_params(result.params);
  return result;
}

template double cross_entropy_loss(const Tensor<float>&, const Tensor<float>&);
template double cross_entropy_loss(const Tensor<double>&, const Tensor<double>&);
template GradientResult<float> compute_gradients(Model<float>&, const Tensor<float>&,
                                                 const Tensor<float>&, const Regularization&,
                                                 Mode, Rng*);
template GradientResult<double> compute_gradients(Model<double>&, const Tensor<double>&,
                                                  const Tensor<double>&, const Regularization&,
                                                  Mode, Rng*);
template TrainResult<float> train(Model<float>&, std::shared_ptr<const SampleSource>,
                                  std::shared_ptr<const SampleSource>, const TrainConfig&);
template TrainResult<double> train(Model<double>&, std::shared_ptr<const SampleSource>,
                                   std::shared_ptr<const SampleSource>, const TrainConfig&);

namespace {

constexpr std::string_view kHistoryHeader = "epoch,train_loss,train_top1,val_loss,val_top1,lr";

std::string optional_field(const std::optional<double>& v) {
  return v ? detail::format_double(*v) : std::string();
}

}  // namespace

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << history_csv(history);
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string s(kHistoryHeader);
  s += '\n';
  for (const auto& r : history) {
    s += std::to_string(r.epoch) + ',' + detail::format_double(r.train_loss) + ',' +
         detail::format_double(r.train_top1) + ',' + optional_field(r.val_loss) + ',' +
         optional_field(r.val_top1) + ',' + detail::format_double(r.lr) + '\n';
  }
  return s;
}

std::vector<EpochRecord> parse_history_csv(std::string_view text) {
  const auto lines = detail::split_lines(text);
  if (lines.empty() || detail::trim(lines[0]) != kHistoryHeader) {
    throw Error(ErrorKind::config, "history CSV must start with '" + std::string(kHistoryHeader) + "'");
  }
  std::vector<EpochRecord> out;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    if (detail::trim(lines[k]).empty()) continue;
    const std::string where = "history line " + std::to_string(k + 1);
    const auto f = detail::split(detail::trim(lines[k]), ',');
    if (f.size() != 6) throw Error(ErrorKind::config, where + ": expected 6 fields");
    auto opt = [&](const std::string& v) -> std::optional<double> {
      if (v.empty()) return std::nullopt;
      return detail::parse_double(v, where);
    };
    EpochRecord r;
    r.epoch = detail::parse_size(f[0], where);
    r.train_loss = detail::parse_double(f[1], where);
    r.train_top1 = detail::parse_double(f[2], where);
    r.val_loss = opt(f[3]);
    r.val_top1 = opt(f[4]);
    r.lr = detail::parse_double(f[5], where);
    out.push_back(r);
  }
  return out;
}

std::vector<EpochRecord> load_history_csv(const std::string& path) {
  const std::string text = detail::read_file(path);
  try {
    return parse_history_csv(text);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

void FitThresholds::validate() const {
  if (!(low >= 0.0 && low <= high && high <= 1.0 && gap >= 0.0)) {
    throw Error(ErrorKind::config, "fit thresholds must satisfy 0 <= low <= high <= 1 and gap >= 0");
  }
}

std::string_view fit_label_name(FitLabel label) {
  switch (label) {
    case FitLabel::underfitting:
      return "underfitting";
    case FitLabel::overfitting:
      return "overfitting";
    case FitLabel::good_fit:
      return "good_fit";
    case FitLabel::inconclusive:
      return "inconclusive";
  }
  return "inconclusive";
}

FitVerdict diagnose_fit(const std::vector<EpochRecord>& history, const FitThresholds& th) {
  th.validate();
  if (history.empty()) throw Error(ErrorKind::config, "fit diagnosis needs at least one epoch");
  const EpochRecord& last = history.back();
  FitVerdict v;
  v.train_error = 1.0 - last.train_top1;
  if (last.val_top1) {
    v.val_error = 1.0 - *last.val_top1;
    v.gap = *v.val_error - v.train_error;
  }
  if (v.train_error > th.high) {
    v.label = FitLabel::underfitting;
  } else if (v.gap && v.train_error <= th.low && *v.gap > th.gap) {
    v.label = FitLabel::overfitting;
  } else if (v.gap && v.train_error <= th.low && *v.val_error <= th.low && *v.gap <= th.gap) {
    v.label = FitLabel::good_fit;
  } else {
    v.label = FitLabel::inconclusive;
  }
  return v;
}

}  // namespace pf
