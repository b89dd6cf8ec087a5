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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dlip/corpus.hpp"

namespace dlip {

// Toy corpus: colored blobs on a patch grid with programmatic captions.
struct SyntheticOptions {
  int images = 100;
  int classes = 8;  // 2..12
  int grid_h = 4;
  int grid_w = 4;
  int patch_size = 8;  // pixels per grid cell side
  int min_blobs = 1;
  int max_blobs = 3;
  double junk_prob = 0.25;  // chance that the raw caption is uninformative alt-text
  double noise = 0.2;       // background pixel std
  std::uint64_t seed = 0;
  std::string id_prefix = "img";

  void validate() const;  // UsageError on invalid sizes
};

struct BlobTruth {
  int class_index = 0;
  int row = 0;
  int col = 0;
  int patch_index = 0;     // row * grid_w + col
  int sentence_index = 0;  // sentence of the first long caption describing this blob
};

struct ImageTruth {
  std::string image_id;
  int label = 0;  // class of the first blob
  std::vector<BlobTruth> blobs;
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<ImageTruth> truth;
  std::vector<std::string> class_names;
};

inline constexpr int kMaxSyntheticClasses = 12;
const std::vector<std::string>& synthetic_class_names();

SyntheticCorpus generate_synthetic(const SyntheticOptions& options);

// Writes captions.jsonl, images/, ground_truth.jsonl and classes.txt.
void write_synthetic(const SyntheticCorpus& data, const std::filesystem::path& dir);
std::vector<ImageTruth> load_ground_truth(const std::filesystem::path& path);
std::vector<std::string> load_classes(const std::filesystem::path& path);

}  // namespace dlip
