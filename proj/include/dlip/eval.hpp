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

#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dlip/encoders.hpp"
#include "dlip/linalg.hpp"
#include "dlip/tokenizer.hpp"

namespace dlip {

struct RetrievalResult {
  std::map<int, double> text_to_image;  // K -> recall fraction
  std::map<int, double> image_to_text;
};

inline constexpr int kRecallKs[] = {1, 5, 10};

// (image index, text index) pairs that count as matches.
using MatchPairs = std::vector<std::pair<int, int>>;

// Ranks by cosine descending, ties broken by lower gallery index. A query is
// a hit at K when any of its matches ranks in the top K. Every image and
// every text must appear in at least one pair.
RetrievalResult retrieval(const Mat<double>& image_globals, const Mat<double>& text_vectors,
                          const MatchPairs& ground_truth);

// Rank (0-based) of the best-ranked match for each query row of `scores`.
std::vector<int> best_match_ranks(const Mat<double>& scores,
                                  const std::vector<std::vector<int>>& matches);

struct ZeroShotResult {
  double accuracy = 0;
  std::vector<int> predictions;
};

// Argmax of scale * cosine over classes, lowest class index on ties.
ZeroShotResult zeroshot_classify(const Mat<double>& image_globals,
                                 const Mat<double>& class_embeddings, std::span<const int> labels,
                                 double scale = 1.0);

// "{}" is replaced by the class name.
const std::vector<std::string>& default_prompt_templates();

template <class T>
Mat<double> encode_images(const DualEncoder<T>& model, std::span<const Tensor> images);
template <class T>
Mat<double> encode_texts(const DualEncoder<T>& model, const Tokenizer& tok,
                         std::span<const std::string> texts);

// One unit row per class: mean of the template embeddings, renormalized.
template <class T>
Mat<double> class_embeddings(const DualEncoder<T>& model, const Tokenizer& tok,
                             std::span<const std::string> class_names,
                             std::span<const std::string> templates = default_prompt_templates());

struct AttentionMap {
  std::string image_id;
  std::string subcaption;
  double sigma = 0;
  std::vector<double> grid;  // row-major HW normalized pooling weights
  int grid_h = 0;
  int grid_w = 0;
  int argmax = 0;     // patch with the largest raw weight
  bool fallback = false;  // no weight survived the threshold
};

template <class T>
std::vector<AttentionMap> attention_maps(const DualEncoder<T>& model, const Tokenizer& tok,
                                         const Tensor& image, const std::string& image_id,
                                         std::span<const std::string> subcaptions, double sigma);

std::string attention_to_json(const AttentionMap& map);
// Writes one JSON line per map.
void export_attention(std::span<const AttentionMap> maps, std::ostream& out);

// metric,value rows.
void write_report(const std::vector<std::pair<std::string, double>>& rows, std::ostream& out);
std::vector<std::pair<std::string, double>> report_rows(const RetrievalResult& r);

}  // namespace dlip
