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

#include <sstream>

#include "purefood/model.hpp"
#include "support.hpp"

using namespace pf;
using pftest::random_tensor;

namespace {

std::vector<std::size_t> conv_widths(const ModelSpec& spec) {
  std::vector<std::size_t> out;
  for (const auto& l : spec.layers)
    if (l.kind() == LayerKind::conv) out.push_back(l.as<ConvSpec>().filters);
  return out;
}

Tensor<float> normal_probe(std::size_t n, std::size_t side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  Tensor<float> t({n, side, side, 3});
  for (auto& v : t.data()) v = nd(rng);
  return t;
}

}  // namespace

TEST_CASE("purefoodnet at full width") {
  const auto spec = build_purefoodnet(101, 1.0, 224);
  CHECK(conv_widths(spec) ==
        std::vector<std::size_t>{128, 128, 256, 256, 256, 512, 512, 512});
  CHECK(spec.layers[spec.top_boundary].kind() == LayerKind::flatten);
  CHECK(spec.find("fc1")->as<DenseSpec>().units == 512);
  CHECK(spec.layers.back().as<DenseSpec>().units == 101);
  CHECK(spec.layers.back().as<DenseSpec>().activation == Activation::softmax);
  const auto shapes = infer_shapes(spec);
  CHECK(shapes.back() == Shape4{1, 1, 1, 101});
  for (const auto& l : spec.layers) {
    if (l.kind() != LayerKind::conv) continue;
    const auto& c = l.as<ConvSpec>();
    CHECK(c.kernel == 3);
    CHECK(c.stride == 1);
    CHECK(conv_geometry(c).z == 1);
    CHECK(c.activation == Activation::relu);
  }
}

TEST_CASE("purefoodnet parameter count matches the closed form") {
  const auto spec = build_purefoodnet(8, 0.125, 32);
  const auto params = init_params<float>(spec, 1);
  CHECK(params.scalar_count() == pftest::purefoodnet_param_count(8, 0.125, 32));
  const auto spec2 = build_purefoodnet(5, 1.0 / 16, 48);
  CHECK(init_params<float>(spec2, 1).scalar_count() == pftest::purefoodnet_param_count(5, 1.0 / 16, 48));
}

TEST_CASE("shape inference") {
  ModelSpec flat;
  flat.input = {1, 3, 4, 5};
  flat.layers.push_back({"flatten", FlattenSpec{}});
  CHECK(infer_shapes(flat).back() == Shape4{1, 1, 1, 60});

  const auto spec = build_purefoodnet(8, 0.125, 32);
  const auto shapes = infer_shapes(spec);
  CHECK(shapes[spec.index_of("block1_pool")].h == 16);
  CHECK(shapes[spec.index_of("block2_pool")].h == 8);
  CHECK(shapes[spec.index_of("block3_pool")].h == 4);
  CHECK(shapes[spec.index_of("block3_pool")].w == 4);

  ModelSpec bad;
  bad.input = {1, 2, 2, 1};
  bad.layers.push_back({"pool", PoolSpec{{4, 4, PoolMode::max}}});
  CHECK_THROWS_AS(infer_shapes(bad), Error);
  CHECK_THROWS_AS(build_purefoodnet(8, 0.125, 4), Error);
}

TEST_CASE("spec text round trip and digest") {
  const auto spec = build_purefoodnet(7, 0.25, 32, 0.3);
  const auto text = serialize_spec(spec);
  const auto back = parse_spec(text);
  CHECK(serialize_spec(back) == text);
  CHECK(spec_digest(back) == spec_digest(spec));
  CHECK(spec_digest(build_purefoodnet(8, 0.25, 32, 0.3)) != spec_digest(spec));
  CHECK(spec_digest(set_trainable(spec, {"block1_conv1"}, false)) == spec_digest(spec));
  CHECK_THROWS_AS(parse_spec("@input h=4 w=4 c=1\nx bogus\n"), Error);
}

TEST_CASE("glorot init") {
  Rng a(77), b(77);
  const Shape4 s{1, 1, 100, 100};
  const auto t1 = glorot_init<double>(s, WeightLayout::dense, a);
  const auto t2 = glorot_init<double>(s, WeightLayout::dense, b);
  CHECK(t1 == t2);
  const double limit = glorot_limit(100, 100);
  double mean = 0.0, var = 0.0;
  for (double v : t1.data()) {
    CHECK(std::abs(v) <= limit);
    mean += v;
  }
  mean /= t1.size();
  for (double v : t1.data()) var += (v - mean) * (v - mean);
  var /= t1.size();
  CHECK(std::abs(var - 2.0 / 200.0) < 0.1 * (2.0 / 200.0));
  CHECK(glorot_limit(3, 5) == doctest::Approx(std::sqrt(6.0 / 8.0)));
}

TEST_CASE("strip, attach and freeze") {
  const auto spec = build_purefoodnet(5, 1.0 / 16, 32);
  const auto params = init_params<double>(spec, 3);
  const auto backbone = strip_top_layers(spec);
  CHECK(backbone.layers.size() == spec.layers.size() - 4);
  const auto bparams = select_params(backbone, params);
  for (const auto& p : bparams) CHECK(p.value == params.at(p.name));

  std::mt19937_64 rng(4);
  const auto x = random_tensor<double>({2, 32, 32, 3}, rng);
  Model<double> full(spec, params);
  Model<double> bb(backbone, bparams);
  const auto cap = capture_activations(full, x, {"block3_pool"});
  CHECK(bb.predict(x) == cap.at("block3_pool"));

  const auto seven = attach_head(backbone, 7);
  CHECK(infer_shapes(seven).back() == Shape4{1, 1, 1, 7});
  const auto p7 = complete_params(seven, bparams, 99);
  for (const auto& p : bparams) CHECK(p7.at(p.name) == p.value);
  Model<double> m7(seven, p7);
  const auto probs = m7.predict(x);
  CHECK(probs.shape() == Shape4{2, 1, 1, 7});
  for (std::size_t n = 0; n < 2; ++n) {
    double s = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
      CHECK(probs[n * 7 + j] >= 0.0);
      s += probs[n * 7 + j];
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }

  const auto names = backbone_layer_names(spec);
  CHECK(names.size() == backbone.layers.size());
  const auto frozen = set_trainable(spec, names, false);
  for (const auto& l : frozen.layers) CHECK(l.trainable == (l.name == "fc1" || l.name == "predictions" || l.name == "flatten" || l.name == "dropout"));
  const auto thawed = set_trainable(frozen, names, true);
  for (const auto& l : thawed.layers) CHECK(l.trainable);
  CHECK_THROWS_AS(set_trainable(spec, {"nope"}, false), Error);
}

TEST_CASE("capture activations") {
  const auto spec = build_purefoodnet(4, 1.0 / 16, 16);
  Model<double> m(spec, init_params<double>(spec, 5));
  std::mt19937_64 rng(6);
  const auto x = random_tensor<double>({3, 16, 16, 3}, rng);
  const auto full = m.predict(x);
  CHECK(capture_activations(m, x, {"predictions"}).at("predictions") == full);
  for (const char* name : {"block1_bn1", "block2_pool", "fc1"}) {
    const std::size_t k = spec.index_of(name);
    const auto mid = capture_activations(m, x, {name}).at(name);
    CHECK(m.predict_from(k + 1, mid) == full);
  }
  CHECK_THROWS_AS(capture_activations(m, x, {"missing"}), Error);

  ModelSpec id;
  id.input = {1, 3, 3, 1};
  id.layers.push_back({"c", ConvSpec{1, 1, 1, 0, Activation::none}});
  ParamStore<double> p;
  p.add("c.weight", ParamRole::weight, Tensor<double>({1, 1, 1, 1}, 1.0));
  p.add("c.bias", ParamRole::bias, Tensor<double>({1, 1, 1, 1}, 0.0));
  Model<double> idm(id, p);
  const auto xi = random_tensor<double>({2, 3, 3, 1}, rng);
  CHECK(capture_activations(idm, xi, {"c"}).at("c") == xi);
}

TEST_CASE("dead filters") {
  const auto spec = build_purefoodnet(4, 0.125, 16);
  auto params = init_params<float>(spec, 8);
  auto& w = params.at("block1_conv1.weight");
  const std::size_t per = w.size() / w.shape().i;
  for (std::size_t j = 0; j < per; ++j) w[2 * per + j] = 0.0f;
  params.at("block1_conv1.bias")[2] = 0.0f;
  params.at("block1_conv1.bias")[5] = 50.0f;
  Model<float> m(spec, params);
  const auto probe = normal_probe(8, 16, 9);
  const auto report = dead_filter_report(m, probe);
  REQUIRE(report.front().layer == "block1_conv1");
  CHECK(report.front().dead[2]);
  CHECK_FALSE(report.front().dead[5]);

  // Independent scan of the captured maps.
  std::vector<std::string> convs;
  for (const auto& l : spec.layers)
    if (l.kind() == LayerKind::conv) convs.push_back(l.name);
  const auto caps = capture_activations(m, probe, convs);
  for (const auto& live : report) {
    const auto& act = caps.at(live.layer);
    const std::size_t f = act.shape().c;
    std::size_t dead = 0;
    for (std::size_t ch = 0; ch < f; ++ch) {
      bool all_zero = true;
      for (std::size_t j = ch; j < act.size(); j += f) all_zero = all_zero && act[j] <= 0.0f;
      CHECK(all_zero == live.dead[ch]);
      dead += all_zero;
    }
    CHECK(live.dead_count() == dead);
    CHECK(live.dead_fraction() == doctest::Approx(static_cast<double>(dead) / f));
  }
}

TEST_CASE("frozen batch norm ignores batch statistics") {
  const auto spec = set_trainable(build_purefoodnet(3, 1.0 / 16, 8), {"block1_bn1"}, false);
  auto params = init_params<double>(spec, 10);
  Model<double> m(spec, params);
  std::mt19937_64 rng(11);
  const auto x = random_tensor<double>({4, 8, 8, 3}, rng);
  Rng drop(1);
  m.forward(x, Mode::training, &drop);
  CHECK(m.params().at("block1_bn1.running_mean") == params.at("block1_bn1.running_mean"));
  CHECK_FALSE(m.params().at("block1_bn2.running_mean") == params.at("block1_bn2.running_mean"));
}

TEST_CASE("PFW1 round trip and mismatch") {
  const auto spec = build_purefoodnet(3, 1.0 / 16, 16);
  const auto params = init_params<float>(spec, 12);
  std::stringstream ss;
  write_weights(ss, spec, params);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "PFW1");
  const auto back = read_weights<float>(ss, spec);
  CHECK(back == params);
  std::stringstream again;
  write_weights(again, spec, back);
  CHECK(again.str() == bytes);

  pftest::TempDir dir;
  save_weights(dir / "w.pfw", spec, params);
  const auto file = read_weight_file(dir / "w.pfw");
  CHECK(file.digest == spec_digest(spec));
  CHECK(file.tensors.size() == params.size());
  REQUIRE(file.find("block1_conv1.weight") != nullptr);

  try {
    load_weights<float>(dir / "w.pfw", build_purefoodnet(4, 1.0 / 16, 16));
    FAIL("expected a mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::mismatch);
  }
}
