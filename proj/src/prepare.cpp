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

#include "dlip/prepare.hpp"

#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

#include "dlip/errors.hpp"
#include "dlip/tokenizer.hpp"
#include "json.hpp"

namespace dlip {

using nlohmann::json;

namespace {

constexpr std::size_t kListedIds = 10;

std::string describe_missing(const std::string& what, const std::vector<std::string>& ids) {
  std::string out = what + " (" + std::to_string(ids.size()) + "): ";
  for (std::size_t i = 0; i < ids.size() && i < kListedIds; ++i) {
    if (i) out += ", ";
    out += ids[i];
  }
  if (ids.size() > kListedIds) out += ", ...";
  return out;
}

std::unordered_map<std::string, std::string> index_file(const CaptionFile& f) {
  return {f.begin(), f.end()};
}

}  // namespace

CaptionFile load_caption_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  CaptionFile out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw MalformedRecord(line_no, "<json>", e.what());
    }
    for (const char* field : {"image_id", "caption"}) {
      if (!j.is_object() || !j.contains(field) || !j[field].is_string()) {
        throw MalformedRecord(line_no, field, "missing or not a string in " + path.string());
      }
    }
    std::string id = j["image_id"].get<std::string>();
    if (id.empty()) throw MalformedRecord(line_no, "image_id", "empty");
    if (!seen.insert(id).second) {
      throw MalformedRecord(line_no, "image_id", "duplicate id '" + id + "' in " + path.string());
    }
    out.emplace_back(std::move(id), j["caption"].get<std::string>());
  }
  return out;
}

std::vector<CaptionRecord> merge_captions(const CaptionFile& raw,
                                          std::span<const CaptionSource> sources) {
  std::set<std::string> raw_ids;
  for (const auto& [id, text] : raw) raw_ids.insert(id);
  std::string problems;
  auto check = [&](const CaptionFile& f, const std::string& label) {
    std::set<std::string> ids;
    for (const auto& [id, text] : f) ids.insert(id);
    std::vector<std::string> missing, extra;
    for (const auto& id : raw_ids) {
      if (!ids.count(id)) missing.push_back(id);
    }
    for (const auto& id : ids) {
      if (!raw_ids.count(id)) extra.push_back(id);
    }
    if (!missing.empty()) problems += "\n  " + describe_missing(label + " is missing ids", missing);
    if (!extra.empty()) problems += "\n  " + describe_missing(label + " has ids not in the raw file", extra);
  };
  for (const auto& s : sources) {
    check(s.long_captions, "long captions of '" + s.name + "'");
    check(s.short_captions, "short captions of '" + s.name + "'");
  }
  if (!problems.empty()) throw DataError("image ids do not match across caption files:" + problems);

  std::vector<std::unordered_map<std::string, std::string>> longs, shorts;
  for (const auto& s : sources) {
    longs.push_back(index_file(s.long_captions));
    shorts.push_back(index_file(s.short_captions));
  }
  std::vector<CaptionRecord> out;
  out.reserve(raw.size());
  for (const auto& [id, text] : raw) {
    CaptionRecord r;
    r.image_id = id;
    r.raw_caption = text;
    for (std::size_t s = 0; s < sources.size(); ++s) {
      r.sources.push_back(sources[s].name);
      r.short_captions.push_back(shorts[s].at(id));
      r.long_captions.push_back(split_sentences(longs[s].at(id)));
    }
    validate_record(r);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<HistogramRow> caption_histogram(std::span<const CaptionRecord> records) {
  std::map<std::pair<int, int>, long> counts;
  for (const auto& r : records) {
    int n_sub = 0, n_tok = 0;
    for (const auto& sentences : r.long_captions) {
      for (const auto& s : sentences) {
        ++n_sub;
        n_tok += static_cast<int>(split_words(s).size());
      }
    }
    ++counts[{n_sub, n_tok}];
  }
  std::vector<HistogramRow> out;
  for (const auto& [key, count] : counts) out.push_back({key.first, key.second, count});
  return out;
}

void write_histogram(std::span<const HistogramRow> rows, std::ostream& out) {
  out << "n_subcaptions,n_tokens,count\n";
  for (const auto& r : rows) out << r.n_subcaptions << ',' << r.n_tokens << ',' << r.count << '\n';
}

}  // namespace dlip
