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

#include "purefood/dataio.hpp"
#include "purefood/evaluation.hpp"
#include "purefood/training.hpp"
#include "support.hpp"

using namespace pf;
using pftest::random_tensor;

namespace {

// Two-class points in [-1, 1]^4 labeled by a fixed hyperplane, with a margin.
std::shared_ptr<InMemorySource> separable_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  const float w[4] = {0.8f, -0.5f, 0.3f, 0.6f};
  std::vector<Sample> samples;
  while (samples.size() < n) {
    Image img({1, 2, 2, 1});
    float dot = 0.1f;
    for (std::size_t k = 0; k < 4; ++k) {
      img[k] = u(rng);
      dot += w[k] * img[k];
    }
    if (std::abs(dot) < 0.2f) continue;
    samples.push_back({img, dot > 0 ? 1u : 0u});
  }
  return std::make_shared<InMemorySource>(std::move(samples), 2);
}

bool perceptron_separates(const SampleSource& src) {
  double w[5] = {0, 0, 0, 0, 0};
  for (int epoch = 0; epoch < 1000; ++epoch) {
    std::size_t mistakes = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const Sample s = src.get(i);
      const double y = s.label == 1 ? 1.0 : -1.0;
      double a = w[4];
      for (std::size_t k = 0; k < 4; ++k) a += w[k] * s.image[k];
      if (y * a <= 0) {
        ++mistakes;
        for (std::size_t k = 0; k < 4; ++k) w[k] += y * s.image[k];
        w[4] += y;
      }
    }
    if (mistakes == 0) return true;
  }
  return false;
}

ModelSpec linear_spec(Shape4 input, std::size_t classes) {
  ModelSpec spec;
  spec.input = input;
  spec.layers.push_back({"flatten", FlattenSpec{}});
  spec.layers.push_back({"out", DenseSpec{classes, Activation::softmax}});
  spec.top_boundary = 0;
  return spec;
}

EpochRecord rec(std::size_t epoch, double train_err, std::optional<double> val_err) {
  EpochRecord r;
  r.epoch = epoch;
  r.train_loss = train_err * 2;
  r.train_top1 = 1.0 - train_err;
  if (val_err) {
    r.val_loss = *val_err * 2;
    r.val_top1 = 1.0 - *val_err;
  }
  r.lr = 0.01;
  return r;
}

}  // namespace

TEST_CASE("cross entropy") {
  const Tensor<double> y({2, 1, 1, 3}, std::vector<double>{0, 1, 0, 1, 0, 0});
  CHECK(cross_entropy_loss(y, y) == 0.0);
  const Tensor<double> uniform({2, 1, 1, 3}, 1.0 / 3.0);
  CHECK(std::abs(cross_entropy_loss(uniform, y) - std::log(3.0)) < 1e-15);

  std::mt19937_64 rng(1);
  auto p = random_tensor<double>({5, 1, 1, 4}, rng, 0.01, 1.0);
  Tensor<double> labels({5, 1, 1, 4}, 0.0);
  double ref = 0.0;
  for (std::size_t n = 0; n < 5; ++n) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += p[n * 4 + j];
    for (std::size_t j = 0; j < 4; ++j) p[n * 4 + j] /= s;
    labels[n * 4 + n % 4] = 1.0;
    ref -= std::log(p[n * 4 + n % 4]);
  }
  CHECK(std::abs(cross_entropy_loss(p, labels) - ref / 5.0) < 1e-14);

  const Tensor<double> bad({1, 1, 1, 3}, std::vector<double>{1, 1, 0});
  try {
    cross_entropy_loss(uniform, Tensor<double>({2, 1, 1, 3}, 0.0));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_label);
  }
  CHECK_THROWS_AS(cross_entropy_loss(Tensor<double>({1, 1, 1, 3}, 0.3), bad), Error);
}

TEST_CASE("gradient of a saturated prediction vanishes") {
  const auto spec = linear_spec({1, 1, 1, 2}, 2);
  ParamStore<double> p;
  p.add("out.weight", ParamRole::weight, Tensor<double>({1, 1, 2, 2}, 0.0));
  p.add("out.bias", ParamRole::bias, Tensor<double>({1, 1, 1, 2}, std::vector<double>{1000.0, 0.0}));
  Model<double> m(spec, p);
  const Tensor<double> x({3, 1, 1, 2}, 0.5);
  const auto labels = one_hot_batch<double>(std::vector<std::size_t>{0, 0, 0}, 2);
  const auto g = compute_gradients(m, x, labels, {}, Mode::training);
  for (double v : g.grads.at("out.bias").data()) CHECK(std::abs(v) < 1e-10);
}

TEST_CASE("single dense layer gradient matches hand differentiation") {
  // z_j = w_j * x + b_j, L = -log softmax(z)_0, so dL/dw_j = x (p_j - y_j).
  const auto spec = linear_spec({1, 1, 1, 1}, 2);
  ParamStore<double> p;
  p.add("out.weight", ParamRole::weight, Tensor<double>({1, 1, 1, 2}, std::vector<double>{0.3, -0.7}));
  p.add("out.bias", ParamRole::bias, Tensor<double>({1, 1, 1, 2}, std::vector<double>{0.1, 0.2}));
  Model<double> m(spec, p);
  const double x = 1.5;
  const auto g = compute_gradients(m, Tensor<double>({1, 1, 1, 1}, x),
                                   one_hot_batch<double>(std::vector<std::size_t>{0}, 2), {});
  const double z0 = 0.3 * x + 0.1, z1 = -0.7 * x + 0.2;
  const double p0 = std::exp(z0) / (std::exp(z0) + std::exp(z1));
  CHECK(std::abs(g.grads.at("out.weight")[0] - x * (p0 - 1.0)) < 1e-14);
  CHECK(std::abs(g.grads.at("out.weight")[1] - x * (1.0 - p0)) < 1e-14);
  CHECK(std::abs(g.grads.at("out.bias")[0] - (p0 - 1.0)) < 1e-14);
  CHECK(std::abs(g.loss + std::log(p0)) < 1e-14);
}

TEST_CASE("nesterov optimizer") {
  auto store = [](double a, double b) {
    ParamStore<double> s;
    s.add("q.weight", ParamRole::weight, Tensor<double>({1, 1, 1, 2}, std::vector<double>{a, b}));
    return s;
  };
  SUBCASE("zero momentum is plain SGD") {
    auto p = store(1.0, -2.0);
    NesterovOptimizer<double> opt(0.0);
    opt.step(p, [] {
      GradStore<double> g;
      g.add("q.weight", ParamRole::weight, Tensor<double>({1, 1, 1, 2}, std::vector<double>{0.5, 4.0}));
      return g;
    }, 0.1);
    CHECK(p.at("q.weight")[0] == 1.0 - 0.1 * 0.5);
    CHECK(p.at("q.weight")[1] == -2.0 - 0.1 * 4.0);
  }
  SUBCASE("zero gradient and zero lr leave params unchanged") {
    auto p = store(1.0, -2.0);
    const auto before = p;
    NesterovOptimizer<double> opt(0.9);
    for (int i = 0; i < 3; ++i) {
      opt.step(p, [] {
        GradStore<double> g;
        g.add("q.weight", ParamRole::weight, Tensor<double>({1, 1, 1, 2}, 0.0));
        return g;
      }, 0.1);
    }
    CHECK(p == before);
    NesterovOptimizer<double> opt2(0.9);
    opt2.step(p, [] {
      GradStore<double> g;
      g.add("q.weight", ParamRole::weight, Tensor<double>({1, 1, 1, 2}, 3.0));
      return g;
    }, 0.0);
    CHECK(p == before);
  }
  SUBCASE("non-finite gradients are rejected before any change") {
    auto p = store(1.0, -2.0);
    const auto before = p;
    NesterovOptimizer<double> opt(0.9);
    try {
      opt.step(p, [] {
        GradStore<double> g;
        g.add("q.weight", ParamRole::weight, Tensor<double>({1, 1, 1, 2}, std::vector<double>{1.0, NAN}));
        return g;
      }, 0.1);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::non_finite);
    }
    CHECK(p == before);
  }
  SUBCASE("quadratic bowl") {
    const double a[2] = {1.0, 10.0};
    auto steps_to = [&](double mu, std::size_t steps, double tol, double* final_dist) {
      auto p = store(1.0, 1.0);
      NesterovOptimizer<double> opt(mu);
      double th[2] = {1.0, 1.0}, v[2] = {0.0, 0.0};
      std::size_t first = 0;
      for (std::size_t s = 1; s <= steps; ++s) {
        opt.step(p, [&] {
          GradStore<double> g;
          const auto& w = p.at("q.weight");
          g.add("q.weight", ParamRole::weight,
                Tensor<double>({1, 1, 1, 2}, std::vector<double>{a[0] * w[0], a[1] * w[1]}));
          return g;
        }, 0.1);
        // scalar simulation of the same recurrence
        for (int i = 0; i < 2; ++i) {
          v[i] = mu * v[i] - 0.1 * a[i] * (th[i] + mu * v[i]);
          th[i] += v[i];
        }
        const auto& w = p.at("q.weight");
        CHECK(std::abs(w[0] - th[0]) < 1e-15);
        CHECK(std::abs(w[1] - th[1]) < 1e-15);
        const double d = std::max(std::abs(w[0]), std::abs(w[1]));
        if (first == 0 && d < tol) first = s;
        if (final_dist) *final_dist = d;
      }
      return first;
    };
    double dist = 1.0;
    const std::size_t nesterov = steps_to(0.8, 100, 1e-3, &dist);
    CHECK(dist < 1e-6);
    const std::size_t plain = steps_to(0.0, 100, 1e-3, nullptr);
    CHECK(nesterov > 0);
    CHECK(nesterov < plain);
  }
}

TEST_CASE("step decay schedule") {
  LrSchedule s;
  CHECK(s.rate(0.01, 0) == 0.01);
  CHECK(s.rate(0.01, 19) == 0.01);
  CHECK(s.rate(0.01, 20) == 0.005);
  CHECK(s.rate(0.01, 45) == 0.0025);
  CHECK(LrSchedule{1.0, 20}.rate(0.3, 100) == 0.3);
  OptimizerConfig bad;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("early stopping bookkeeping") {
  SUBCASE("patience zero stops after the first decline") {
    EarlyStopping es(0);
    CHECK(es.update(1, 0.9));
    CHECK_FALSE(es.should_stop());
    CHECK_FALSE(es.update(2, 0.8));
    CHECK(es.should_stop());
    CHECK(es.best_epoch() == 1);
  }
  SUBCASE("ties do not count as improvement") {
    EarlyStopping es(2);
    es.update(1, 0.5);
    es.update(2, 0.6);
    CHECK_FALSE(es.update(3, 0.6));
    CHECK_FALSE(es.should_stop());
    CHECK_FALSE(es.update(4, 0.55));
    CHECK(es.should_stop());
    CHECK(es.best_epoch() == 2);
    CHECK(es.best_metric() == 0.6);
  }
}

TEST_CASE("separable toy reaches full train accuracy") {
  const auto data = separable_points(40, 2);
  REQUIRE(perceptron_separates(*data));
  const auto spec = linear_spec({1, 2, 2, 1}, 2);
  Model<double> m(spec, init_params<double>(spec, 3));
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.batch_size = 8;
  cfg.optimizer.learning_rate = 0.5;
  cfg.early_stopping = false;
  cfg.target_train_top1 = 1.0;
  const auto r = train<double>(m, data, nullptr, cfg);
  REQUIRE_FALSE(r.history.empty());
  CHECK(r.history.back().train_top1 == 1.0);
  CHECK(r.history.size() < 300);
  CHECK_FALSE(r.history.back().val_top1.has_value());
}

TEST_CASE("fully frozen model is untouched by training") {
  ModelSpec spec;
  spec.input = {1, 4, 4, 2};
  spec.layers.push_back({"c", ConvSpec{3, 3, 1, std::nullopt, Activation::relu}});
  spec.layers.push_back({"bn", BatchNormSpec{}});
  spec.layers.push_back({"p", PoolSpec{}});
  spec.layers.push_back({"flatten", FlattenSpec{}});
  spec.layers.push_back({"drop", DropoutSpec{0.3}});
  spec.layers.push_back({"out", DenseSpec{2, Activation::softmax}});
  std::vector<std::string> all;
  for (const auto& l : spec.layers) all.push_back(l.name);
  spec = set_trainable(spec, all, false);
  const auto params = init_params<double>(spec, 4);
  Model<double> m(spec, params);

  std::mt19937_64 rng(5);
  std::vector<Sample> s;
  for (std::size_t i = 0; i < 10; ++i) s.push_back({random_tensor<float>({1, 4, 4, 2}, rng, 0, 1), i % 2});
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.early_stopping = false;
  train<double>(m, std::make_shared<InMemorySource>(s, 2), nullptr, cfg);
  CHECK(m.params() == params);

  auto thawed = set_trainable(spec, {"out"}, true);
  Model<double> m2(thawed, params);
  train<double>(m2, std::make_shared<InMemorySource>(s, 2), nullptr, cfg);
  CHECK(m2.params().at("c.weight") == params.at("c.weight"));
  CHECK(m2.params().at("bn.running_mean") == params.at("bn.running_mean"));
  CHECK_FALSE(m2.params().at("out.weight") == params.at("out.weight"));
}

TEST_CASE("training is deterministic and validates its inputs") {
  const auto data = separable_points(24, 6);
  const auto val = separable_points(8, 7);
  const auto spec = linear_spec({1, 2, 2, 1}, 2);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 5;
  cfg.patience = 10;
  cfg.seed = 42;
  std::size_t calls = 0;
  cfg.on_epoch = [&](const EpochRecord&) { ++calls; };
  Model<double> a(spec, init_params<double>(spec, 1));
  Model<double> b(spec, init_params<double>(spec, 1));
  const auto ra = train<double>(a, data, val, cfg);
  const auto rb = train<double>(b, data, val, cfg);
  CHECK(history_csv(ra.history) == history_csv(rb.history));
  CHECK(ra.params == rb.params);
  CHECK(calls == 8);
  CHECK(ra.history[3].lr == 0.01);
  CHECK(a.params() == ra.params);

  TrainConfig no_val = cfg;
  CHECK_THROWS_AS(train<double>(a, data, nullptr, no_val), Error);
  TrainConfig zero = cfg;
  zero.epochs = 0;
  const auto before = a.params();
  const auto rz = train<double>(a, data, nullptr, zero);
  CHECK(rz.history.empty());
  CHECK(a.params() == before);
  Model<double> wrong(linear_spec({1, 2, 2, 1}, 3), init_params<double>(linear_spec({1, 2, 2, 1}, 3), 1));
  CHECK_THROWS_AS(train<double>(wrong, data, val, cfg), Error);
}

TEST_CASE("fit diagnosis") {
  CHECK(diagnose_fit({rec(1, 0.45, 0.47)}).label == FitLabel::underfitting);
  CHECK(diagnose_fit({rec(1, 0.02, 0.40)}).label == FitLabel::overfitting);
  CHECK(diagnose_fit({rec(1, 0.03, 0.08)}).label == FitLabel::good_fit);
  CHECK(diagnose_fit({rec(1, 0.2, 0.25)}).label == FitLabel::inconclusive);
  CHECK(diagnose_fit({rec(1, 0.05, std::nullopt)}).label == FitLabel::inconclusive);
  CHECK(diagnose_fit({rec(1, 0.5, std::nullopt)}).label == FitLabel::underfitting);
  const auto v = diagnose_fit({rec(1, 0.9, 0.9), rec(2, 0.02, 0.40)});
  CHECK(v.label == FitLabel::overfitting);
  CHECK(v.train_error == doctest::Approx(0.02));
  CHECK(*v.gap == doctest::Approx(0.38));
  CHECK(fit_label_name(FitLabel::good_fit) == "good_fit");
  FitThresholds strict{0.01, 0.3, 0.15};
  CHECK(diagnose_fit({rec(1, 0.03, 0.08)}, strict).label == FitLabel::inconclusive);
  CHECK_THROWS_AS(diagnose_fit({}), Error);
}

TEST_CASE("history CSV") {
  std::vector<EpochRecord> h = {rec(1, 0.5, 0.6), rec(2, 0.1234567890123, std::nullopt)};
  h[1].lr = 1.0 / 3.0;
  const auto text = history_csv(h);
  CHECK(text.rfind("epoch,train_loss,train_top1,val_loss,val_top1,lr\n", 0) == 0);
  CHECK(parse_history_csv(text) == h);
  CHECK(text.find(",,") != std::string::npos);
  try {
    parse_history_csv("epoch,loss\n1,2\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
  CHECK_THROWS_AS(parse_history_csv("epoch,train_loss,train_top1,val_loss,val_top1,lr\n1,x,0,,,0.1\n"), Error);
}
