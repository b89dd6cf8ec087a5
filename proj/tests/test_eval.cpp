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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "dlip/errors.hpp"
#include "dlip/eval.hpp"
#include "dlip/synthetic.hpp"
#include "dlip/trainer.hpp"
#include "json.hpp"

using namespace dlip;

namespace {

Mat<double> random_unit_rows(std::mt19937_64& eng, Eigen::Index n, Eigen::Index d) {
  std::normal_distribution<double> g;
  Mat<double> m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(eng);
  for (Eigen::Index r = 0; r < n; ++r) m.row(r).normalize();
  return m;
}

// Naive oracle: full sort of every query's scores, ties by lower index.
std::map<int, double> naive_recall(const Mat<double>& queries, const Mat<double>& gallery,
                                   const std::vector<std::vector<int>>& matches) {
  std::map<int, double> out;
  for (int k : kRecallKs) out[k] = 0;
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    std::vector<std::pair<double, int>> scored;
    for (Eigen::Index g = 0; g < gallery.rows(); ++g) {
      double s = 0;
      for (Eigen::Index c = 0; c < queries.cols(); ++c) s += queries(q, c) * gallery(g, c);
      scored.push_back({s, static_cast<int>(g)});
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (int k : kRecallKs) {
      for (int i = 0; i < std::min<int>(k, static_cast<int>(scored.size())); ++i) {
        const auto& m = matches[q];
        if (std::find(m.begin(), m.end(), scored[i].second) != m.end()) {
          out[k] += 1;
          break;
        }
      }
    }
  }
  for (auto& [k, v] : out) v /= static_cast<double>(queries.rows());
  return out;
}

}  // namespace

TEST_CASE("retrieval: perfect alignment gives recall 1") {
  std::mt19937_64 eng(1);
  const Mat<double> e = random_unit_rows(eng, 40, 16);
  MatchPairs gt;
  for (int i = 0; i < 40; ++i) gt.push_back({i, i});
  const auto r = retrieval(e, e, gt);
  for (int k : kRecallKs) {
    CHECK(r.text_to_image.at(k) == 1.0);
    CHECK(r.image_to_text.at(k) == 1.0);
  }
}

TEST_CASE("retrieval: random embeddings sit in the chance band") {
  const int n = 1000, seeds = 20;
  MatchPairs gt;
  for (int i = 0; i < n; ++i) gt.push_back({i, i});
  double r1 = 0, r10 = 0;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 eng(100 + s);
    const auto r = retrieval(random_unit_rows(eng, n, 32), random_unit_rows(eng, n, 32), gt);
    r1 += r.text_to_image.at(1) + r.image_to_text.at(1);
    r10 += r.text_to_image.at(10) + r.image_to_text.at(10);
  }
  const double draws = 2.0 * seeds * n;
  for (auto [sum, p] : {std::pair{r1, 1.0 / n}, std::pair{r10, 10.0 / n}}) {
    const double mean = sum / (2.0 * seeds);
    const double sd = std::sqrt(p * (1 - p) / draws);
    CHECK_MESSAGE(std::abs(mean - p) < 3 * sd, "mean " << mean << " expected " << p);
  }
}

TEST_CASE("retrieval: matches the naive sort oracle, monotone in K") {
  std::mt19937_64 eng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const int ni = 1 + static_cast<int>(eng() % 25);
    const int nt = ni + static_cast<int>(eng() % 25);
    // Entries of +-0.5 in 4-D: unit rows with exactly representable scores,
    // so ties are common and exact.
    Mat<double> img(ni, 4), txt(nt, 4);
    for (auto* m : {&img, &txt}) {
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = eng() % 2 ? 0.5 : -0.5;
    }
    MatchPairs gt;
    std::vector<std::vector<int>> t2i(nt), i2t(ni);
    for (int t = 0; t < nt; ++t) {
      const int i = t < ni ? t : static_cast<int>(eng() % ni);
      gt.push_back({i, t});
      t2i[t].push_back(i);
      i2t[i].push_back(t);
    }
    const auto r = retrieval(img, txt, gt);
    const auto want_t2i = naive_recall(txt, img, t2i);
    const auto want_i2t = naive_recall(img, txt, i2t);
    for (int k : kRecallKs) {
      CHECK(r.text_to_image.at(k) == doctest::Approx(want_t2i.at(k)).epsilon(1e-12));
      CHECK(r.image_to_text.at(k) == doctest::Approx(want_i2t.at(k)).epsilon(1e-12));
    }
    CHECK(r.text_to_image.at(1) <= r.text_to_image.at(5));
    CHECK(r.text_to_image.at(5) <= r.text_to_image.at(10));
    CHECK(r.image_to_text.at(1) <= r.image_to_text.at(5));
    CHECK(r.image_to_text.at(5) <= r.image_to_text.at(10));
  }
}

TEST_CASE("retrieval: invariant to a common orthogonal rotation") {
  std::mt19937_64 eng(11);
  const Eigen::Index n = 200, d = 24;
  const Mat<double> img = random_unit_rows(eng, n, d), txt = random_unit_rows(eng, n, d);
  Mat<double> g = random_unit_rows(eng, d, d);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd q = qr.householderQ();
  MatchPairs gt;
  for (int i = 0; i < n; ++i) gt.push_back({i, i});
  const Mat<double> img_r = img * q, txt_r = txt * q;
  CHECK((img_r * txt_r.transpose() - img * txt.transpose()).cwiseAbs().maxCoeff() < 1e-9);
  const auto a = retrieval(img, txt, gt), b = retrieval(img_r, txt_r, gt);
  for (int k : kRecallKs) {
    CHECK(std::abs(a.text_to_image.at(k) - b.text_to_image.at(k)) <= 1e-9);
    CHECK(std::abs(a.image_to_text.at(k) - b.image_to_text.at(k)) <= 1e-9);
  }
}

TEST_CASE("retrieval: error cases") {
  const Mat<double> none(0, 4), one = Mat<double>::Identity(1, 4), wide = Mat<double>::Identity(1, 5);
  CHECK_THROWS_AS(retrieval(none, one, {}), EmptyGallery);
  CHECK_THROWS_AS(retrieval(one, wide, {{0, 0}}), DimensionMismatch);
  CHECK_THROWS_AS(retrieval(one, one, {}), DataError);
  Mat<double> bad = one;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(retrieval(bad, one, {{0, 0}}), NonFiniteInput);
}

TEST_CASE("zeroshot: exemplars, wrong classes, scaling, errors") {
  std::mt19937_64 eng(3);
  const Mat<double> classes = random_unit_rows(eng, 8, 16);
  std::vector<int> labels(8);
  std::iota(labels.begin(), labels.end(), 0);
  CHECK(zeroshot_classify(classes, classes, labels).accuracy == 1.0);

  const Mat<double> basis = Mat<double>::Identity(4, 4);
  Mat<double> imgs(4, 4);
  std::vector<int> wrong;
  for (int i = 0; i < 4; ++i) {
    imgs.row(i) = basis.row((i + 1) % 4);
    wrong.push_back(i);
  }
  CHECK(zeroshot_classify(imgs, basis, wrong).accuracy == 0.0);

  const Mat<double> many = random_unit_rows(eng, 300, 16);
  std::vector<int> lab(300);
  for (auto& l : lab) l = static_cast<int>(eng() % 8);
  const auto base = zeroshot_classify(many, classes, lab);
  const auto scaled = zeroshot_classify(many, classes, lab, 7.3);
  CHECK(base.predictions == scaled.predictions);
  CHECK(base.accuracy == scaled.accuracy);

  // Ties go to the lowest class index.
  Mat<double> twins(2, 2);
  twins << 1, 0, 1, 0;
  const Mat<double> q = Mat<double>::Identity(1, 2);
  const std::vector<int> zero{0};
  CHECK(zeroshot_classify(q, twins, zero).predictions == std::vector<int>{0});

  CHECK_THROWS_AS(zeroshot_classify(classes, Mat<double>(0, 16), labels), NoClasses);
}

TEST_CASE("eval: untrained model retrieves near chance") {
  SyntheticOptions o;
  o.images = 200;
  o.seed = 77;
  const auto data = generate_synthetic(o);
  TrainConfig cfg;
  cfg.embed_dim = 32;
  cfg.depth = 1;
  cfg.heads = 2;
  const auto t = Trainer<double>::create(data.corpus, cfg);
  std::vector<std::string> queries;
  MatchPairs gt;
  for (int i = 0; i < o.images; ++i) {
    queries.push_back(data.corpus.records[i].raw_caption);
    gt.push_back({i, i});
  }
  const auto r = retrieval(encode_images(t.state().model, data.corpus.images),
                           encode_texts(t.state().model, t.state().tokenizer, queries), gt);
  const double p = 10.0 / o.images;
  CHECK(r.text_to_image.at(10) < p + 3 * std::sqrt(p * (1 - p) / o.images));
}

TEST_CASE("attention: normalized grids, threshold fallback, JSON export") {
  SyntheticOptions o;
  o.images = 4;
  o.seed = 2;
  const auto data = generate_synthetic(o);
  TrainConfig cfg;
  cfg.embed_dim = 16;
  cfg.depth = 1;
  cfg.heads = 2;
  const auto t = Trainer<double>::create(data.corpus, cfg);
  const auto& rec = data.corpus.records[0];
  const auto& sentences = rec.long_captions[0];

  for (double sigma : {0.0, 0.1}) {
    for (const auto& m : attention_maps(t.state().model, t.state().tokenizer, data.corpus.images[0],
                                        rec.image_id, sentences, sigma)) {
      REQUIRE(m.grid.size() == 16);
      CHECK(m.grid_h == 4);
      CHECK(m.grid_w == 4);
      double sum = 0;
      for (double w : m.grid) {
        CHECK(w >= 0);
        sum += w;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
      CHECK(m.grid[m.argmax] == *std::max_element(m.grid.begin(), m.grid.end()));
    }
  }

  const auto maps = attention_maps(t.state().model, t.state().tokenizer, data.corpus.images[0],
                                   rec.image_id, sentences, 0.999);
  REQUIRE(maps.size() == sentences.size());
  for (const auto& m : maps) {
    CHECK(m.fallback);
    CHECK(std::count_if(m.grid.begin(), m.grid.end(), [](double w) { return w != 0; }) == 1);
    CHECK(m.grid[m.argmax] == 1.0);
  }

  std::ostringstream out;
  export_attention(maps, out);
  std::istringstream in(out.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("image_id") == rec.image_id);
    CHECK(j.at("subcaption") == sentences[n]);
    CHECK(j.at("sigma").get<double>() == 0.999);
    CHECK(j.at("grid").size() == 16);
    CHECK(j.at("grid_h") == 4);
    CHECK(j.at("grid_w") == 4);
    ++n;
  }
  CHECK(n == maps.size());
}

TEST_CASE("eval: report rows and CSV") {
  RetrievalResult r;
  for (int k : kRecallKs) {
    r.text_to_image[k] = 0.1 * k;
    r.image_to_text[k] = 0.05 * k;
  }
  const auto rows = report_rows(r);
  CHECK(rows.size() == 6);
  CHECK(rows.front().first == "t2i_r1");
  std::ostringstream out;
  write_report(rows, out);
  CHECK(out.str().rfind("metric,value\nt2i_r1,0.1", 0) == 0);
}
