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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dlip {

using SentenceList = std::vector<std::string>;

// One image's captions: the raw alt-text, plus a short caption and a
// sentence-split long caption per captioning source.
struct CaptionRecord {
  std::string image_id;
  std::string raw_caption;
  std::vector<std::string> short_captions;
  std::vector<SentenceList> long_captions;
  std::vector<std::string> sources;
  // (long-caption prompt, short-caption prompt); carried as metadata only.
  std::optional<std::pair<std::string, std::string>> prompts;

  bool operator==(const CaptionRecord&) const = default;
};

enum class CandidateKind { kRaw, kShort, kLongSentence };

std::string_view to_string(CandidateKind kind);

struct Candidate {
  std::string text;
  CandidateKind kind = CandidateKind::kRaw;
  int source_index = -1;  // -1 for the raw caption
  bool over_budget = false;  // more words than the tokenizer budget

  bool operator==(const Candidate&) const = default;
};

struct SubCaptionSet {
  std::string image_id;
  std::vector<Candidate> candidates;
};

// K sampled candidate indices for one image.
struct SubCaptionRow {
  std::string image_id;
  std::vector<std::size_t> indices;
};

struct SubCaptionBatch {
  std::vector<SubCaptionRow> rows;
  int k = 0;
  std::uint64_t rng_seed = 0;
};

// Splits on '.', '!' or '?' followed by whitespace or end of text. Runs of
// terminal punctuation stay with their sentence.
std::vector<std::string> split_sentences(std::string_view long_caption);

// Throws MalformedRecord (line 0) when a record violates its invariants.
void validate_record(const CaptionRecord& record);

// [T] ++ concat over include_sources of ([c_s] ++ [c_1..c_M]). An empty
// include_sources selects every source. token_budget > 0 flags candidates
// whose word count exceeds it.
SubCaptionSet build_subcaption_set(const CaptionRecord& record,
                                   std::span<const int> include_sources = {},
                                   int token_budget = 0);

// K uniform draws with replacement, deterministic in rng_seed.
SubCaptionRow sample_subcaptions(const SubCaptionSet& set, int k,
                                 std::uint64_t rng_seed);

// Row r uses derive_seed(rng_seed, {r}).
SubCaptionBatch sample_batch(std::span<const SubCaptionSet* const> sets, int k,
                             std::uint64_t rng_seed);

// JSON-Lines rendering of a batch (one row per line, texts resolved).
std::string serialize_batch(const SubCaptionBatch& batch,
                            std::span<const SubCaptionSet* const> sets);

std::string record_to_json(const CaptionRecord& record);
CaptionRecord record_from_json(std::string_view line, std::size_t line_number);

std::vector<CaptionRecord> load_dataset(const std::filesystem::path& path);
void save_dataset(std::span<const CaptionRecord> records,
                  const std::filesystem::path& path);

}  // namespace dlip
