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

#include "dlip/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

namespace dlip {

namespace {

bool is_separator(unsigned char c) {
  if (c >= 0x80) return false;
  return std::isspace(c) || std::ispunct(c);
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_separator(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Tokenizer::Tokenizer(std::vector<std::string> words, int max_len)
    : words_(std::move(words)), max_len_(max_len) {
  if (max_len_ < 1) throw std::invalid_argument("tokenizer max_len must be >= 1");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    index_.emplace(words_[i], static_cast<int>(i) + 2);
  }
}

Tokenizer Tokenizer::build(std::span<const std::string> corpus, int max_len) {
  std::set<std::string> vocab;
  for (const auto& text : corpus) {
    for (auto& w : split_words(text)) vocab.insert(std::move(w));
  }
  return Tokenizer(std::vector<std::string>(vocab.begin(), vocab.end()), max_len);
}

TokenIds Tokenizer::encode(std::string_view text) const {
  TokenIds out;
  out.ids.assign(static_cast<std::size_t>(max_len_), kPadId);
  const auto words = split_words(text);
  if (words.empty()) {
    out.ids[0] = kUnkId;
    out.length = 1;
    return out;
  }
  const std::size_t n = std::min(words.size(), static_cast<std::size_t>(max_len_));
  for (std::size_t i = 0; i < n; ++i) {
    auto it = index_.find(words[i]);
    out.ids[i] = it == index_.end() ? kUnkId : it->second;
  }
  out.length = static_cast<int>(n);
  out.truncated = words.size() > n;
  return out;
}

}  // namespace dlip
