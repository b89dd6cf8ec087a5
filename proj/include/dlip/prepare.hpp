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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dlip/captions.hpp"

namespace dlip {

// (image_id, caption) pairs in file order. Input lines are JSON objects with
// string fields image_id and caption.
using CaptionFile = std::vector<std::pair<std::string, std::string>>;

CaptionFile load_caption_file(const std::filesystem::path& path);

struct CaptionSource {
  std::string name;
  CaptionFile long_captions;
  CaptionFile short_captions;
};

// One record per raw caption, in raw order. Every source must cover exactly
// the raw ids; otherwise DataError lists the missing ids.
std::vector<CaptionRecord> merge_captions(const CaptionFile& raw,
                                          std::span<const CaptionSource> sources);

struct HistogramRow {
  int n_subcaptions = 0;  // long-caption sentences of a record, all sources
  int n_tokens = 0;       // words in those sentences
  long count = 0;         // records with this pair
};

// Sorted by (n_subcaptions, n_tokens).
std::vector<HistogramRow> caption_histogram(std::span<const CaptionRecord> records);
void write_histogram(std::span<const HistogramRow> rows, std::ostream& out);

}  // namespace dlip
