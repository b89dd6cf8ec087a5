// Copyright 2026 The dlip Authors. All Rights Reserved.
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

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "doctest.h"
#include "dlip/errors.hpp"
#include "dlip/synthetic.hpp"
#include "dlip/trainer.hpp"
#include "test_util.hpp"

using namespace dlip;

namespace {

const SyntheticCorpus& small_corpus() {
  static const SyntheticCorpus data = [] {
    SyntheticOptions o;
    o.images = 48;
    o.seed = 21;
    return generate_synthetic(o);
  }();
  return data;
}

TrainConfig small_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.epochs = 3;
  c.k = 4;
  c.embed_dim = 16;
  c.depth = 1;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.max_len = 16;
  c.warmup_iters = 3;
  c.learning_rate = 1e-3;
  c.numeric_mode = NumericMode::kF64;
  c.seed = 5;
  return c;
}

std::vector<std::string> run_metrics(const Corpus& corpus, const TrainConfig& cfg, long steps) {
  auto t = Trainer<double>::create(corpus, cfg);
  std::vector<std::string> out;
  t.run([&](const StepMetrics& m) { out.push_back(format_metrics(m)); }, steps);
  return out;
}

}  // namespace

TEST_CASE("config: text round trip, overrides and errors") {
  TrainConfig c = small_config();
  c.include_sources = {0, 1};
  c.text_source = TextSource::kRaw;
  c.grouping_negatives = GroupingNegatives::kCrossImage;
  c.sigma = 0.3;
  CHECK(parse_config(config_to_text(c)) == c);

  const auto p = parse_config("# comment\nk = 7\nadam_betas=0.8, 0.9\ngrid=2x2\ninclude_sources=all\n");
  CHECK(p.k == 7);
  CHECK(p.adam_beta1 == 0.8);
  CHECK(p.adam_beta2 == 0.9);
  CHECK(p.grid_h == 2);
  CHECK(p.include_sources.empty());

  CHECK_THROWS_AS(parse_config("bogus=1\n"), UsageError);
  CHECK_THROWS_AS(parse_config("k=abc\n"), UsageError);
  CHECK_THROWS_AS(parse_config("k=0\n"), UsageError);
  CHECK_THROWS_AS(parse_config("sigma=1\n"), UsageError);
  CHECK_THROWS_AS(parse_config("numeric_mode=f16\n"), UsageError);
  CHECK_THROWS_AS(parse_config("no equals sign\n"), UsageError);
  CHECK_THROWS_AS(parse_config("embed_dim=30\nheads=4\n"), UsageError);
}

TEST_CASE("lr_at: warmup and cosine endpoints") {
  TrainConfig c;
  c.learning_rate = 5e-4;
  c.warmup_iters = 100;
  const long total = 1000;
  CHECK(lr_at(0, c, total) == 0.0);
  CHECK(lr_at(50, c, total) == doctest::Approx(2.5e-4).epsilon(1e-15));
  CHECK(lr_at(100, c, total) == 5e-4);
  CHECK(std::abs(lr_at(total, c, total)) < 1e-12);
  CHECK(lr_at(550, c, total) == doctest::Approx(2.5e-4).epsilon(1e-12));
  for (long s = 101; s <= total; ++s) CHECK(lr_at(s, c, total) <= lr_at(s - 1, c, total));
}

TEST_CASE("trainer: zero loss weights leave only weight decay") {
  TrainConfig cfg = small_config();
  cfg.lambda_mpcl = 0;
  cfg.lambda_s = 0;
  auto t = Trainer<double>::create(small_corpus().corpus, cfg);
  const ParamVector<double> before = t.state().model.params();
  const StepMetrics m = t.train_step();
  CHECK(m.total == 0.0);
  CHECK(m.grad_norm == 0.0);
  const double shrink = m.lr * cfg.weight_decay;
  const auto& after = t.state().model.params();
  std::size_t decayed = 0;
  for (const auto& slot : t.state().model.layout().slots()) {
    for (std::size_t i = slot.offset; i < slot.offset + slot.size(); ++i) {
      const double expected = slot.decay ? before[i] - shrink * before[i] : before[i];
      if (after[i] != expected) {
        FAIL_CHECK("parameter " << slot.name << "[" << i - slot.offset << "] moved beyond decay");
        return;
      }
      decayed += slot.decay && before[i] != 0.0;
    }
  }
  CHECK(decayed > 0);
}

TEST_CASE("trainer: identical runs give identical metrics (f64)") {
  const auto a = run_metrics(small_corpus().corpus, small_config(), 12);
  const auto b = run_metrics(small_corpus().corpus, small_config(), 12);
  CHECK(a == b);
  TrainConfig other = small_config();
  other.seed = 6;
  CHECK(run_metrics(small_corpus().corpus, other, 12) != a);
}

TEST_CASE("trainer: objective decomposition, tau start and clamp") {
  TrainConfig cfg = small_config();
  cfg.lambda_mpcl = 0.9;
  cfg.lambda_s = 0.4;
  auto t = Trainer<double>::create(small_corpus().corpus, cfg);
  bool first = true;
  t.run([&](const StepMetrics& m) {
    CHECK(std::abs(m.total - (0.9 * m.mpcl + 0.4 * m.sub)) <= 1e-12);
    if (first) CHECK(m.tau == 0.07);
    first = false;
  });

  TrainConfig wild = small_config();
  wild.learning_rate = 2.0;
  wild.warmup_iters = 0;
  auto w = Trainer<double>::create(small_corpus().corpus, wild);
  w.run([&](const StepMetrics& m) {
    CHECK(m.tau >= kMinTau);
    CHECK(m.tau <= kMaxTau);
  });
  CHECK(w.state().model.tau() >= kMinTau);
  CHECK(w.state().model.tau() <= kMaxTau);
}

TEST_CASE("trainer: 200 steps on the aligned corpus lower the 20-step mean loss") {
  SyntheticOptions o;
  o.images = 256;
  o.junk_prob = 0;
  o.seed = 5;
  const auto data = generate_synthetic(o);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.embed_dim = 32;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.k = 4;
  cfg.epochs = 100;  // schedule spans 800 steps; the first 200 are run
  cfg.warmup_iters = 20;
  cfg.learning_rate = 1e-3;
  cfg.numeric_mode = NumericMode::kF64;
  auto t = Trainer<double>::create(data.corpus, cfg);
  std::vector<double> losses;
  t.run([&](const StepMetrics& m) { losses.push_back(m.total); }, 200);
  REQUIRE(losses.size() == 200);
  std::vector<double> windows;
  for (std::size_t w = 0; w < 10; ++w) {
    double s = 0;
    for (std::size_t i = 0; i < 20; ++i) s += losses[w * 20 + i];
    windows.push_back(s / 20);
  }
  for (std::size_t w = 1; w < windows.size(); ++w) {
    CHECK_MESSAGE(windows[w] < windows[w - 1], "window " << w << ": " << windows[w] << " vs " << windows[w - 1]);
  }
}

TEST_CASE("trainer: each epoch visits every image once, samples are redrawn") {
  TrainConfig cfg = small_config();
  auto t = Trainer<double>::create(small_corpus().corpus, cfg);
  const long spe = t.steps_per_epoch();
  CHECK(spe == 6);
  std::multiset<std::size_t> seen;
  for (long s = 0; s < spe; ++s) {
    for (auto i : t.batch_images(s)) seen.insert(i);
  }
  CHECK(seen.size() == 48);
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 48);
  CHECK(t.batch_images(0) != t.batch_images(spe));

  // Draws for one image across 2000 steps: uniform over its candidates and
  // different from step to step.
  const std::size_t img[] = {3};
  const std::size_t n = t.subcaption_sets()[3].candidates.size();
  std::vector<double> counts(n, 0);
  int repeats = 0;
  std::vector<std::size_t> prev;
  const int steps = 2000;
  for (int s = 0; s < steps; ++s) {
    const auto row = t.batch_samples(s, img).front();
    for (auto c : row) counts[c] += 1;
    repeats += row == prev;
    prev = row;
  }
  const double draws = steps * cfg.k;
  double chi2 = 0;
  for (double c : counts) chi2 += (c - draws / n) * (c - draws / n) / (draws / n);
  CHECK(chi2 < 21.0);  // chi-square(n - 1 <= 8) at p = 0.01 is at most 20.1
  const double p_same = std::pow(1.0 / static_cast<double>(n), cfg.k - 2);  // loose bound
  CHECK(repeats <= steps * p_same + 5);
}

TEST_CASE("trainer: non-finite loss names the batch") {
  auto t = Trainer<double>::create(small_corpus().corpus, small_config());
  auto& p = t.state().model.params();
  const auto& proj = t.state().model.layout().find("text.proj");
  for (std::size_t i = proj.offset; i < proj.offset + proj.size(); ++i) {
    p[i] = std::numeric_limits<double>::infinity();
  }
  try {
    t.train_step();
    FAIL("expected a numeric error");
  } catch (const NonFiniteLoss& e) {
    CHECK(std::string(e.what()).find(small_corpus().corpus.records[t.batch_images(0)[0]].image_id) !=
          std::string::npos);
  } catch (const NumericError&) {
    // Rejected earlier by the encoder's parameter check.
  }
}

TEST_CASE("checkpoint: byte-identical round trip and exact resume (f64)") {
  const auto dir = test_util::temp_dir("checkpoint");
  const Corpus& corpus = small_corpus().corpus;
  const TrainConfig cfg = small_config();

  auto unbroken = Trainer<double>::create(corpus, cfg);
  std::vector<std::string> full;
  unbroken.run([&](const StepMetrics& m) { full.push_back(format_metrics(m)); });

  auto first = Trainer<double>::create(corpus, cfg);
  first.run({}, 7);
  save_checkpoint(first.state(), dir / "a.dlip");
  auto loaded = load_checkpoint<double>(dir / "a.dlip");
  CHECK(loaded.step == 7);
  CHECK(loaded.model.params() == first.state().model.params());
  CHECK(loaded.adam_m == first.state().adam_m);
  CHECK(loaded.adam_v == first.state().adam_v);
  CHECK(loaded.history == first.state().history);
  CHECK(loaded.config == cfg);
  save_checkpoint(loaded, dir / "b.dlip");
  CHECK(test_util::read_bytes(dir / "a.dlip") == test_util::read_bytes(dir / "b.dlip"));

  Trainer<double> resumed(corpus, std::move(loaded));
  std::vector<std::string> rest;
  resumed.run([&](const StepMetrics& m) { rest.push_back(format_metrics(m)); });
  REQUIRE(rest.size() == full.size() - 7);
  CHECK(std::equal(rest.begin(), rest.end(), full.begin() + 7));
  CHECK(resumed.state().model.params() == unbroken.state().model.params());
}

TEST_CASE("checkpoint: corruption, version and width errors") {
  const auto dir = test_util::temp_dir("checkpoint_bad");
  auto t = Trainer<double>::create(small_corpus().corpus, small_config());
  save_checkpoint(t.state(), dir / "ok.dlip");
  const std::string bytes = test_util::read_bytes(dir / "ok.dlip");
  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream f(dir / name, std::ios::binary);
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
  };
  write("trunc.dlip", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint<double>(dir / "trunc.dlip"), CorruptCheckpoint);
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  write("flip.dlip", flipped);
  CHECK_THROWS_AS(load_checkpoint<double>(dir / "flip.dlip"), CorruptCheckpoint);
  std::string version = bytes;
  version[4] = 9;
  write("version.dlip", version);
  CHECK_THROWS_AS(load_checkpoint<double>(dir / "version.dlip"), VersionMismatch);
  write("magic.dlip", "XXXX" + bytes.substr(4));
  CHECK_THROWS_AS(load_checkpoint<double>(dir / "magic.dlip"), CorruptCheckpoint);
  CHECK(checkpoint_scalar_bytes(dir / "ok.dlip") == 8);
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "ok.dlip"), VersionMismatch);
}
