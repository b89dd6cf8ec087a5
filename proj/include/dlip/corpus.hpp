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
#include <vector>

#include "dlip/captions.hpp"
#include "dlip/tensor_io.hpp"

namespace dlip {

// Images and caption records, aligned by index.
struct Corpus {
  std::vector<CaptionRecord> records;
  std::vector<Tensor> images;
};

// Reads <dir>/captions.jsonl and <dir>/images/<image_id>.f32. All images must
// share one shape.
Corpus load_corpus(const std::filesystem::path& dir);
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

}  // namespace dlip
