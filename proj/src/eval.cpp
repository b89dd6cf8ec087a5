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

#include "dlip/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "dlip/errors.hpp"
#include "dlip/losses.hpp"
#include "json.hpp"

namespace dlip {

using nlohmann::json;

namespace {

constexpr std::size_t kEncodeChunk = 256;

void check_embeddings(const Mat<double>& m, const char* what) {
  if (!m.allFinite()) throw NonFiniteInput(std::string(what) + " contain non-finite values");
}

std::vector<double> recall_at(const std::vector<int>& ranks) {
  std::vector<double> out;
  for (const int k : kRecallKs) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](int r) { return r < k; });
    out.push_back(static_cast<double>(hits) / static_cast<double>(ranks.size()));
  }
  return out;
}

}  // namespace

std::vector<int> best_match_ranks(const Mat<double>& scores,
                                  const std::vector<std::vector<int>>& matches) {
  std::vector<int> ranks(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index q = 0; q < scores.rows(); ++q) {
    const auto& m = matches[static_cast<std::size_t>(q)];
    // The best-ranked match: highest score, lowest index on ties.
    int best = m.front();
    for (const int j : m) {
      if (scores(q, j) > scores(q, best) || (scores(q, j) == scores(q, best) && j < best)) best = j;
    }
    const double s = scores(q, best);
    int rank = 0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (scores(q, j) > s || (scores(q, j) == s && j < best)) ++rank;
    }
    ranks[static_cast<std::size_t>(q)] = rank;
  }
  return ranks;
}

RetrievalResult retrieval(const Mat<double>& images, const Mat<double>& texts,
                          const MatchPairs& ground_truth) {
  if (images.rows() == 0 || texts.rows() == 0) throw EmptyGallery("retrieval needs a non-empty gallery");
  if (images.cols() != texts.cols()) {
    throw DimensionMismatch("image and text embeddings differ in width");
  }
  check_embeddings(images, "image embeddings");
  check_embeddings(texts, "text embeddings");
  std::vector<std::vector<int>> t2i(static_cast<std::size_t>(texts.rows()));
  std::vector<std::vector<int>> i2t(static_cast<std::size_t>(images.rows()));
  for (const auto& [i, t] : ground_truth) {
    if (i < 0 || i >= images.rows() || t < 0 || t >= texts.rows()) {
      throw DataError("ground-truth pair (" + std::to_string(i) + ", " + std::to_string(t) +
                      ") out of range");
    }
    t2i[static_cast<std::size_t>(t)].push_back(i);
    i2t[static_cast<std::size_t>(i)].push_back(t);
  }
  for (std::size_t t = 0; t < t2i.size(); ++t) {
    if (t2i[t].empty()) throw DataError("text " + std::to_string(t) + " has no matching image");
  }
  for (std::size_t i = 0; i < i2t.size(); ++i) {
    if (i2t[i].empty()) throw DataError("image " + std::to_string(i) + " has no matching text");
  }
  const Mat<double> s = texts * images.transpose();
  const auto r_t2i = recall_at(best_match_ranks(s, t2i));
  const auto r_i2t = recall_at(best_match_ranks(s.transpose(), i2t));
  RetrievalResult out;
  for (std::size_t n = 0; n < std::size(kRecallKs); ++n) {
    out.text_to_image[kRecallKs[n]] = r_t2i[n];
    out.image_to_text[kRecallKs[n]] = r_i2t[n];
  }
  return out;
}

ZeroShotResult zeroshot_classify(const Mat<double>& images, const Mat<double>& classes,
                                 std::span<const int> labels, double scale) {
  if (classes.rows() == 0) throw NoClasses("zero-shot classification needs at least one class");
  if (images.rows() == 0) throw EmptyGallery("zero-shot classification needs images");
  if (images.cols() != classes.cols()) {
    throw DimensionMismatch("image and class embeddings differ in width");
  }
  if (static_cast<Eigen::Index>(labels.size()) != images.rows()) {
    throw DimensionMismatch("need one label per image");
  }
  check_embeddings(images, "image embeddings");
  check_embeddings(classes, "class embeddings");
  const Mat<double> logits = scale * (images * classes.transpose());
  ZeroShotResult out;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    out.predictions.push_back(static_cast<int>(best));
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(images.rows());
  return out;
}

const std::vector<std::string>& default_prompt_templates() {
  static const std::vector<std::string> templates = {"a photo of a {}", "an image of a {}",
                                                     "a picture of a {}", "{}"};
  return templates;
}

template <class T>
Mat<double> encode_images(const DualEncoder<T>& model, std::span<const Tensor> images) {
  Mat<double> out(static_cast<Eigen::Index>(images.size()), model.config().embed_dim);
  for (std::size_t b = 0; b < images.size(); b += kEncodeChunk) {
    const std::size_t e = std::min(images.size(), b + kEncodeChunk);
    std::vector<const Tensor*> ptrs;
    for (std::size_t i = b; i < e; ++i) ptrs.push_back(&images[i]);
    const auto fwd = model.forward_images(ptrs);
    out.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b)) =
        fwd.globals.template cast<double>();
  }
  return out;
}

template <class T>
Mat<double> encode_texts(const DualEncoder<T>& model, const Tokenizer& tok,
                         std::span<const std::string> texts) {
  Mat<double> out(static_cast<Eigen::Index>(texts.size()), model.config().embed_dim);
  for (std::size_t b = 0; b < texts.size(); b += kEncodeChunk) {
    const std::size_t e = std::min(texts.size(), b + kEncodeChunk);
    std::vector<TokenIds> ids;
    for (std::size_t i = b; i < e; ++i) ids.push_back(tok.encode(texts[i]));
    std::vector<const TokenIds*> ptrs;
    for (const auto& t : ids) ptrs.push_back(&t);
    const auto fwd = model.forward_texts(ptrs);
    out.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b)) =
        fwd.vectors.template cast<double>();
  }
  return out;
}

template <class T>
Mat<double> class_embeddings(const DualEncoder<T>& model, const Tokenizer& tok,
                             std::span<const std::string> class_names,
                             std::span<const std::string> templates) {
  if (class_names.empty()) throw NoClasses("no class names given");
  if (templates.empty()) throw UsageError("no prompt templates given");
  std::vector<std::string> prompts;
  for (const auto& name : class_names) {
    for (const auto& t : templates) {
      std::string p = t;
      const auto pos = p.find("{}");
      if (pos != std::string::npos) p.replace(pos, 2, name);
      prompts.push_back(std::move(p));
    }
  }
  const Mat<double> e = encode_texts(model, tok, prompts);
  const auto nt = static_cast<Eigen::Index>(templates.size());
  Mat<double> out(static_cast<Eigen::Index>(class_names.size()), e.cols());
  for (Eigen::Index c = 0; c < out.rows(); ++c) {
    const RowVec<double> mean = e.middleRows(c * nt, nt).colwise().mean();
    out.row(c) = l2_normalize<double>(mean.transpose()).transpose();
  }
  return out;
}

template <class T>
std::vector<AttentionMap> attention_maps(const DualEncoder<T>& model, const Tokenizer& tok,
                                         const Tensor& image, const std::string& image_id,
                                         std::span<const std::string> subcaptions, double sigma) {
  if (subcaptions.empty()) return {};
  const EncodedImage<T> enc = model.encode_image(image);
  const Mat<double> texts = encode_texts(model, tok, subcaptions);
  const Mat<double> patches = enc.patches.template cast<double>();
  const auto g = attention_grouping<double>(texts, patches, sigma);
  std::vector<AttentionMap> out;
  for (std::size_t j = 0; j < subcaptions.size(); ++j) {
    const auto r = static_cast<Eigen::Index>(j);
    AttentionMap m;
    m.image_id = image_id;
    m.subcaption = subcaptions[j];
    m.sigma = sigma;
    m.grid_h = model.config().grid_h;
    m.grid_w = model.config().grid_w;
    m.grid.assign(g.coefficients.row(r).data(), g.coefficients.row(r).data() + g.coefficients.cols());
    m.argmax = g.argmax[j];
    m.fallback = g.fallback[j];
    out.push_back(std::move(m));
  }
  return out;
}

std::string attention_to_json(const AttentionMap& m) {
  json j;
  j["image_id"] = m.image_id;
  j["subcaption"] = m.subcaption;
  j["sigma"] = m.sigma;
  j["grid"] = m.grid;
  j["grid_h"] = m.grid_h;
  j["grid_w"] = m.grid_w;
  return j.dump();
}

void export_attention(std::span<const AttentionMap> maps, std::ostream& out) {
  for (const auto& m : maps) out << attention_to_json(m) << '\n';
}

void write_report(const std::vector<std::pair<std::string, double>>& rows, std::ostream& out) {
  out << "metric,value\n";
  char buf[64];
  for (const auto& [name, value] : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", value);
    out << name << ',' << buf << '\n';
  }
}

std::vector<std::pair<std::string, double>> report_rows(const RetrievalResult& r) {
  std::vector<std::pair<std::string, double>> rows;
  for (const auto& [k, v] : r.text_to_image) rows.emplace_back("t2i_r" + std::to_string(k), v);
  for (const auto& [k, v] : r.image_to_text) rows.emplace_back("i2t_r" + std::to_string(k), v);
  return rows;
}

#define DLIP_INSTANTIATE(T)                                                                     \
  template Mat<double> encode_images<T>(const DualEncoder<T>&, std::span<const Tensor>);        \
  template Mat<double> encode_texts<T>(const DualEncoder<T>&, const Tokenizer&,                 \
                                       std::span<const std::string>);                           \
  template Mat<double> class_embeddings<T>(const DualEncoder<T>&, const Tokenizer&,             \
                                           std::span<const std::string>,                        \
                                           std::span<const std::string>);                       \
  template std::vector<AttentionMap> attention_maps<T>(const DualEncoder<T>&, const Tokenizer&, \
                                                       const Tensor&, const std::string&,       \
                                                       std::span<const std::string>, double);
DLIP_INSTANTIATE(float)
DLIP_INSTANTIATE(double)
#undef DLIP_INSTANTIATE

}  // namespace dlip
