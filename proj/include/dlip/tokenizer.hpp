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

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dlip {

// Lowercases ASCII letters and splits on ASCII whitespace and punctuation.
// Non-ASCII bytes are kept inside words.
std::vector<std::string> split_words(std::string_view text);

struct TokenIds {
  std::vector<int> ids;  // exactly max_len entries
  int length = 0;        // number of non-pad positions (>= 1)
  bool truncated = false;
};

// Corpus-built word vocabulary. Id 0 is padding, id 1 is unknown; words get
// ids 2.. in lexicographic order so the mapping is independent of corpus order.
class Tokenizer {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kDefaultMaxLen = 77;

  Tokenizer() = default;
  Tokenizer(std::vector<std::string> words, int max_len);

  static Tokenizer build(std::span<const std::string> corpus,
                         int max_len = kDefaultMaxLen);

  // Output has exactly max_len ids. Text with no words encodes as [unk].
  TokenIds encode(std::string_view text) const;

  int vocab_size() const { return static_cast<int>(words_.size()) + 2; }
  int max_len() const { return max_len_; }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  int max_len_ = kDefaultMaxLen;
};

}  // namespace dlip
