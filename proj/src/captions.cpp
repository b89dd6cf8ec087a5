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

#include "dlip/captions.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "dlip/errors.hpp"
#include "dlip/rng.hpp"
#include "dlip/tokenizer.hpp"
#include "json.hpp"

namespace dlip {

using nlohmann::json;

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::size_t n_sources(const CaptionRecord& r) { return r.short_captions.size(); }

}  // namespace

std::string_view to_string(CandidateKind kind) {
  switch (kind) {
    case CandidateKind::kRaw:
      return "raw";
    case CandidateKind::kShort:
      return "short";
    case CandidateKind::kLongSentence:
      return "long_sentence";
  }
  return "unknown";
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    auto frag = trim(text.substr(start, end - start));
    if (!frag.empty()) out.emplace_back(frag);
    start = end;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    if (i + 1 == text.size() || is_space(text[i + 1])) emit(i + 1);
  }
  emit(text.size());
  return out;
}

void validate_record(const CaptionRecord& r) {
  if (r.image_id.empty()) throw MalformedRecord(0, "image_id", "empty");
  if (r.long_captions.size() != r.short_captions.size()) {
    throw MalformedRecord(0, "long_captions",
                          "expected one long caption per short caption");
  }
  if (!r.sources.empty() && r.sources.size() != r.short_captions.size()) {
    throw MalformedRecord(0, "sources", "expected one source name per caption");
  }
  for (const auto& sentences : r.long_captions) {
    for (const auto& s : sentences) {
      if (trim(s).empty()) throw MalformedRecord(0, "long_captions", "empty sentence");
    }
  }
}

SubCaptionSet build_subcaption_set(const CaptionRecord& record,
                                   std::span<const int> include_sources,
                                   int token_budget) {
  const std::size_t n = n_sources(record);
  std::vector<int> chosen(include_sources.begin(), include_sources.end());
  if (chosen.empty()) {
    for (std::size_t k = 0; k < n; ++k) chosen.push_back(static_cast<int>(k));
  }
  for (int k : chosen) {
    if (k < 0 || static_cast<std::size_t>(k) >= n) {
      throw UnknownSource("image '" + record.image_id + "': source index " +
                          std::to_string(k) + " out of range (" +
                          std::to_string(n) + " sources)");
    }
  }

  SubCaptionSet set;
  set.image_id = record.image_id;
  set.candidates.push_back({record.raw_caption, CandidateKind::kRaw, -1, false});
  for (int k : chosen) {
    const auto uk = static_cast<std::size_t>(k);
    set.candidates.push_back({record.short_captions[uk], CandidateKind::kShort, k, false});
    for (const auto& s : record.long_captions[uk]) {
      set.candidates.push_back({s, CandidateKind::kLongSentence, k, false});
    }
  }
  if (token_budget > 0) {
    for (auto& c : set.candidates) {
      c.over_budget = split_words(c.text).size() > static_cast<std::size_t>(token_budget);
    }
  }
  return set;
}

SubCaptionRow sample_subcaptions(const SubCaptionSet& set, int k,
                                 std::uint64_t rng_seed) {
  if (set.candidates.empty()) {
    throw EmptySet("image '" + set.image_id + "' has no sub-caption candidates");
  }
  if (k < 1) throw std::invalid_argument("K must be >= 1");
  Engine eng(rng_seed);
  SubCaptionRow row;
  row.image_id = set.image_id;
  row.indices.reserve(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    row.indices.push_back(uniform_index(eng, set.candidates.size()));
  }
  return row;
}

SubCaptionBatch sample_batch(std::span<const SubCaptionSet* const> sets, int k,
                             std::uint64_t rng_seed) {
  SubCaptionBatch batch;
  batch.k = k;
  batch.rng_seed = rng_seed;
  batch.rows.reserve(sets.size());
  for (std::size_t r = 0; r < sets.size(); ++r) {
    batch.rows.push_back(sample_subcaptions(*sets[r], k, derive_seed(rng_seed, {r})));
  }
  return batch;
}

std::string serialize_batch(const SubCaptionBatch& batch,
                            std::span<const SubCaptionSet* const> sets) {
  std::string out;
  for (std::size_t r = 0; r < batch.rows.size(); ++r) {
    const auto& row = batch.rows[r];
    json j;
    j["image_id"] = row.image_id;
    j["k"] = batch.k;
    j["seed"] = batch.rng_seed;
    j["indices"] = row.indices;
    json texts = json::array();
    for (auto idx : row.indices) texts.push_back(sets[r]->candidates.at(idx).text);
    j["texts"] = std::move(texts);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string record_to_json(const CaptionRecord& r) {
  json j;
  j["image_id"] = r.image_id;
  j["raw_caption"] = r.raw_caption;
  j["short_captions"] = r.short_captions;
  j["long_captions"] = r.long_captions;
  j["sources"] = r.sources;
  if (r.prompts) j["prompts"] = json::array({r.prompts->first, r.prompts->second});
  return j.dump();
}

namespace {

const json& require(const json& j, const char* field, std::size_t line) {
  auto it = j.find(field);
  if (it == j.end()) throw MalformedRecord(line, field, "missing");
  return *it;
}

std::string as_string(const json& j, const char* field, std::size_t line) {
  if (!j.is_string()) throw MalformedRecord(line, field, "expected a string");
  return j.get<std::string>();
}

std::vector<std::string> as_string_list(const json& j, const char* field,
                                        std::size_t line) {
  if (!j.is_array()) throw MalformedRecord(line, field, "expected a list");
  std::vector<std::string> out;
  for (const auto& e : j) out.push_back(as_string(e, field, line));
  return out;
}

}  // namespace

CaptionRecord record_from_json(std::string_view line, std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw MalformedRecord(line_number, "<json>", e.what());
  }
  if (!j.is_object()) throw MalformedRecord(line_number, "<json>", "expected an object");

  CaptionRecord r;
  r.image_id = as_string(require(j, "image_id", line_number), "image_id", line_number);
  r.raw_caption =
      as_string(require(j, "raw_caption", line_number), "raw_caption", line_number);
  r.short_captions = as_string_list(require(j, "short_captions", line_number),
                                    "short_captions", line_number);
  const auto& longs = require(j, "long_captions", line_number);
  if (!longs.is_array()) throw MalformedRecord(line_number, "long_captions", "expected a list");
  for (const auto& l : longs) {
    r.long_captions.push_back(as_string_list(l, "long_captions", line_number));
  }
  r.sources = as_string_list(require(j, "sources", line_number), "sources", line_number);
  if (auto it = j.find("prompts"); it != j.end() && !it->is_null()) {
    auto p = as_string_list(*it, "prompts", line_number);
    if (p.size() != 2) throw MalformedRecord(line_number, "prompts", "expected two strings");
    r.prompts = std::make_pair(p[0], p[1]);
  }
  try {
    validate_record(r);
  } catch (const MalformedRecord& e) {
    throw MalformedRecord(line_number, e.field(), "invalid value");
  }
  return r;
}

std::vector<CaptionRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  std::vector<CaptionRecord> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    auto rec = record_from_json(line, line_number);
    if (!seen.insert(rec.image_id).second) {
      throw MalformedRecord(line_number, "image_id", "duplicate id '" + rec.image_id + "'");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void save_dataset(std::span<const CaptionRecord> records,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write dataset " + path.string());
  for (const auto& r : records) {
    validate_record(r);
    out << record_to_json(r) << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace dlip
