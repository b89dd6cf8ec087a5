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

#include "dlip/corpus.hpp"

#include "dlip/errors.hpp"

namespace dlip {

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus c;
  c.records = load_dataset(dir / "captions.jsonl");
  c.images.reserve(c.records.size());
  for (const auto& r : c.records) {
    if (r.image_id == "." || r.image_id == ".." ||
        r.image_id.find_first_of("/\\") != std::string::npos) {
      throw DataError("image id '" + r.image_id + "' cannot name an image file");
    }
    const auto path = dir / "images" / (r.image_id + ".f32");
    if (!std::filesystem::exists(path)) {
      throw DataError("missing image file for '" + r.image_id + "': " + path.string());
    }
    c.images.push_back(read_tensor(path));
    if (c.images.back().shape != c.images.front().shape) {
      throw ShapeMismatch("image '" + r.image_id + "' has a different shape from the first image");
    }
  }
  return c;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  if (corpus.images.size() != corpus.records.size()) {
    throw DimensionMismatch("corpus has mismatched image and record counts");
  }
  std::filesystem::create_directories(dir / "images");
  save_dataset(corpus.records, dir / "captions.jsonl");
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    write_tensor(corpus.images[i], dir / "images" / (corpus.records[i].image_id + ".f32"));
  }
}

}  // namespace dlip
