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

#include "purefood/dataio.hpp"
#include "purefood/evaluation.hpp"
#include "purefood/training.hpp"
#include "purefood/workflows.hpp"
#include "support.hpp"

using namespace pf;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::string& command, const RunConfig& cfg) {
  std::ostringstream out, err;
  Run r;
  r.code = run_command(command, cfg, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Three colour-coded classes of 12x12 images with per-pixel jitter.
void make_dataset(const fs::path& root, std::size_t per_class = 10) {
  const char* names[3] = {"red", "green", "blue"};
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<float> jitter(-0.1f, 0.1f);
  for (std::size_t c = 0; c < 3; ++c) {
    fs::create_directories(root / names[c]);
    for (std::size_t i = 0; i < per_class; ++i) {
      Image img({1, 12, 12, 3});
      for (std::size_t k = 0; k < img.size(); ++k) {
        img[k] = std::clamp((k % 3 == c ? 0.8f : 0.2f) + jitter(rng), 0.0f, 1.0f);
      }
      save_ppm((root / names[c] / ("img" + std::to_string(i) + ".ppm")).string(), img);
    }
  }
}

RunConfig base_config(const pftest::TempDir& dir) {
  RunConfig cfg;
  cfg.set("data", (dir.path() / "data").string());
  cfg.set("width_scale", "0.0625");
  cfg.set("input_side", "16");
  cfg.set("epochs", "3");
  cfg.set("batch_size", "8");
  cfg.set("val_ratio", "0.2");
  cfg.set("test_ratio", "0.2");
  cfg.set("seed", "5");
  cfg.set("out", (dir.path() / "run").string());
  return cfg;
}

std::string history_text(const std::vector<double>& train_err, const std::vector<double>& val_err) {
  std::vector<EpochRecord> h;
  for (std::size_t k = 0; k < train_err.size(); ++k) {
    EpochRecord r;
    r.epoch = k + 1;
    r.train_loss = train_err[k];
    r.train_top1 = 1.0 - train_err[k];
    r.val_loss = val_err[k];
    r.val_top1 = 1.0 - val_err[k];
    r.lr = 0.01;
    h.push_back(r);
  }
  return history_csv(h);
}

}  // namespace

TEST_CASE("config keys and files") {
  RunConfig cfg;
  CHECK(cfg.get("epochs") == "50");
  CHECK_FALSE(cfg.is_set("epochs"));
  CHECK_THROWS_AS(cfg.set("no_such_key", "1"), Error);
  cfg.load_text("# comment\nepochs = 7\n lr=0.5 \n");
  CHECK(cfg.size_value("epochs") == 7);
  CHECK(cfg.real("lr") == 0.5);
  cfg.set("epochs", "8");
  CHECK(cfg.size_value("epochs") == 8);
  CHECK_THROWS_AS(cfg.load_text("epochs 7\n"), Error);
  cfg.set("epochs", "seven");
  CHECK_THROWS_AS(cfg.size_value("epochs"), Error);
  cfg.set("augment", "maybe");
  CHECK_THROWS_AS(cfg.flag("augment"), Error);
  for (const auto& key : config_keys()) {
    CHECK_FALSE(key.help.empty());
    CHECK_FALSE(key.commands.empty());
    CHECK(find_config_key(key.name) == &key);
  }
}

TEST_CASE("train with zero epochs writes initial weights") {
  pftest::TempDir dir;
  make_dataset(dir.path() / "data");
  RunConfig cfg = base_config(dir);
  cfg.set("epochs", "0");
  const auto r = run("train", cfg);
  REQUIRE(r.code == 0);
  const fs::path out = dir.path() / "run";
  CHECK(fs::exists(out / "weights.pfw"));
  CHECK(pftest::read_bytes((out / "history.csv").string()) ==
        "epoch,train_loss,train_top1,val_loss,val_top1,lr\n");
  const auto spec = load_spec((out / "model.spec").string());
  const auto params = load_weights<float>((out / "weights.pfw").string(), spec);
  CHECK(params == init_params<float>(spec, derive_seed(5, "init")));
}

TEST_CASE("train, eval, predict, inspect") {
  pftest::TempDir dir;
  make_dataset(dir.path() / "data");
  RunConfig cfg = base_config(dir);
  const auto t = run("train", cfg);
  REQUIRE_MESSAGE(t.code == 0, t.err);
  const fs::path out = dir.path() / "run";
  const std::string first_history = pftest::read_bytes((out / "history.csv").string());
  CHECK(load_history_csv((out / "history.csv").string()).size() >= 1);

  RunConfig again = cfg;
  again.set("out", (dir.path() / "run2").string());
  REQUIRE(run("train", again).code == 0);
  CHECK(pftest::read_bytes((dir.path() / "run2" / "history.csv").string()) == first_history);
  CHECK(pftest::read_bytes((dir.path() / "run2" / "weights.pfw").string()) ==
        pftest::read_bytes((out / "weights.pfw").string()));

  SUBCASE("eval agrees with the library") {
    RunConfig e;
    e.set("weights", (out / "weights.pfw").string());
    e.set("manifest", (out / "manifest.txt").string());
    e.set("split", "test");
    e.set("ks", "1,2");
    e.set("out", (dir.path() / "eval").string());
    const auto r = run("eval", e);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("top1=") != std::string::npos);
    CHECK(r.out.find("top2=") != std::string::npos);

    const auto spec = load_spec((out / "model.spec").string());
    const Model<float> model(spec, load_weights<float>((out / "weights.pfw").string(), spec));
    const auto manifest = load_manifest((out / "manifest.txt").string());
    const ManifestSource src(manifest, Split::test, 16);
    const auto report = evaluate(model, src, {1, 2}, 64);
    std::ostringstream csv;
    write_report_csv(csv, report, manifest.classes);
    CHECK(pftest::read_bytes((dir.path() / "eval" / "report.csv").string()) == csv.str());
    CHECK(report.accuracy(1) <= report.accuracy(2));
    CHECK(run("eval", e).out == r.out);
  }

  SUBCASE("predict") {
    RunConfig p;
    p.set("weights", (out / "weights.pfw").string());
    p.set("image", (dir.path() / "data" / "red" / "img0.ppm").string());
    p.set("top_k", "3");
    const auto r = run("predict", p);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    std::istringstream lines(r.out);
    std::string name;
    double prob = 0.0, sum = 0.0, prev = 2.0;
    std::size_t count = 0;
    while (lines >> name >> prob) {
      CHECK(prob <= prev);
      prev = prob;
      sum += prob;
      ++count;
    }
    CHECK(count == 3);
    CHECK(std::abs(sum - 1.0) < 1e-6);
    p.set("top_k", "1");
    const auto one = run("predict", p);
    CHECK(std::count(one.out.begin(), one.out.end(), '\n') == 1);
    p.set("image", (dir.path() / "nope.ppm").string());
    CHECK(run("predict", p).code == 3);
  }

  SUBCASE("inspect") {
    RunConfig i;
    i.set("weights", (out / "weights.pfw").string());
    i.set("image", (dir.path() / "data" / "green" / "img1.ppm").string());
    i.set("layers", "block1_conv1,fc1");
    i.set("out", (dir.path() / "inspect").string());
    const auto r = run("inspect", i);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto strip = decode_pgm(pftest::read_bytes((dir.path() / "inspect" / "fc1.pgm").string()));
    CHECK(strip.shape().h == 1);
    CHECK(strip.shape().w == 32);
    const auto grid = decode_pgm(pftest::read_bytes((dir.path() / "inspect" / "block1_conv1.pgm").string()));
    CHECK(grid.shape() == Shape4{1, 48, 48, 1});
    CHECK(pftest::read_bytes((dir.path() / "inspect" / "dead_filters.txt").string()).rfind("layer dead total", 0) == 0);
    i.set("layers", "no_such_layer");
    CHECK(run("inspect", i).code == 2);
  }

  SUBCASE("finetune") {
    RunConfig f = base_config(dir);
    f.set("weights", (out / "weights.pfw").string());
    f.set("freeze_backbone", "true");
    f.set("epochs", "2");
    f.set("out", (dir.path() / "ft").string());
    const auto r = run("finetune", f);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto base = read_weight_file((out / "weights.pfw").string());
    const auto tuned = read_weight_file((dir.path() / "ft" / "weights.pfw").string());
    CHECK(base.find("block1_conv1.weight")->pft1 == tuned.find("block1_conv1.weight")->pft1);
    CHECK(base.find("block3_bn3.running_mean")->pft1 == tuned.find("block3_bn3.running_mean")->pft1);
    CHECK(base.find("predictions.weight")->pft1 != tuned.find("predictions.weight")->pft1);

    RunConfig wrong = f;
    wrong.set("spec", (dir.path() / "other.spec").string());
    save_spec((dir.path() / "other.spec").string(), build_purefoodnet(4, 0.0625, 16));
    CHECK(run("finetune", wrong).code == 4);
  }
}

TEST_CASE("missing data root") {
  pftest::TempDir dir;
  RunConfig cfg = base_config(dir);
  const auto r = run("train", cfg);
  CHECK(r.code == 3);
  CHECK(r.err.find((dir.path() / "data").string()) != std::string::npos);
}

TEST_CASE("diagnose") {
  pftest::TempDir dir;
  auto diagnose = [&](const std::string& text) {
    std::ofstream(dir / "h.csv") << text;
    RunConfig cfg;
    cfg.set("history", dir / "h.csv");
    return run("diagnose", cfg);
  };
  const std::string under = history_text({0.9, 0.7, 0.5, 0.45}, {0.9, 0.7, 0.52, 0.47});
  const std::string over = history_text({0.6, 0.3, 0.1, 0.02}, {0.6, 0.4, 0.38, 0.40});
  const std::string good = history_text({0.6, 0.3, 0.1, 0.03}, {0.6, 0.3, 0.12, 0.08});
  CHECK(diagnose(under).out.rfind("underfitting", 0) == 0);
  CHECK(diagnose(over).out.rfind("overfitting", 0) == 0);
  CHECK(diagnose(good).out.rfind("good_fit", 0) == 0);
  const auto lib = diagnose_fit(parse_history_csv(good));
  CHECK(diagnose(good).out.find(std::string(fit_label_name(lib.label))) == 0);

  const auto single = diagnose(history_text({0.2}, {0.25}));
  CHECK(single.code == 0);
  CHECK(single.out.rfind("inconclusive", 0) == 0);
  CHECK(diagnose("garbage\n").code == 2);

  std::ofstream(dir / "h.csv") << good;
  RunConfig strict;
  strict.set("history", dir / "h.csv");
  strict.set("t_low", "0.01");
  CHECK(run("diagnose", strict).out.rfind("inconclusive", 0) == 0);
}

TEST_CASE("dataset utilities") {
  pftest::TempDir dir;
  make_dataset(dir.path() / "data", 4);
  RunConfig cfg = base_config(dir);
  cfg.set("batch_size", "3");
  cfg.set("out", (dir.path() / "dump").string());
  const auto d = run("dump-batch", cfg);
  REQUIRE_MESSAGE(d.code == 0, d.err);
  CHECK(fs::exists(dir.path() / "dump" / "batch_000.ppm"));
  CHECK(fs::exists(dir.path() / "dump" / "batch_002.ppm"));
  const auto images = read_tensor_as<float>(*std::make_unique<std::ifstream>(dir / "dump/batch_images.pft", std::ios::binary));
  CHECK(images.shape() == Shape4{3, 16, 16, 3});

  RunConfig p;
  p.set("image", (dir.path() / "data" / "red" / "img0.ppm").string());
  p.set("variants", "3");
  p.set("out", (dir.path() / "preview").string());
  const auto r = run("augment-preview", p);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(dir.path() / "preview" / "preview_original.ppm"));
  CHECK(fs::exists(dir.path() / "preview" / "preview_002.ppm"));
  CHECK_FALSE(fs::exists(dir.path() / "preview" / "preview_003.ppm"));
  CHECK(run("no-such-command", p).code == 2);
}

TEST_CASE("activation grid rendering") {
  Tensor<float> act({1, 2, 2, 5});
  for (std::size_t k = 0; k < act.size(); ++k) act[k] = static_cast<float>(k % 7);
  for (std::size_t k = 4; k < act.size(); k += 5) act[k] = 0.0f;
  const auto g = render_activation_grid(act);
  CHECK(g.shape() == Shape4{1, 4, 6, 1});
  for (std::size_t ch = 0; ch < 5; ++ch) {
    float lo = 1e9f, hi = -1e9f;
    for (std::size_t p = 0; p < 4; ++p) {
      lo = std::min(lo, act[p * 5 + ch]);
      hi = std::max(hi, act[p * 5 + ch]);
    }
    const std::size_t gy = ch / 3, gx = ch % 3;
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < 2; ++x) {
        const float v = act(0, y, x, ch);
        const float want = hi > lo ? (v - lo) / (hi - lo) : 0.0f;
        CHECK(g(0, gy * 2 + y, gx * 2 + x, 0) == doctest::Approx(want));
      }
  }
  const Tensor<float> vec({1, 1, 1, 4}, std::vector<float>{1, 3, 2, 5});
  const auto s = render_activation_grid(vec);
  CHECK(s.shape() == Shape4{1, 1, 4, 1});
  CHECK(s[0] == 0.0f);
  CHECK(s[3] == 1.0f);
  CHECK(s[2] == doctest::Approx(0.25f));
}
