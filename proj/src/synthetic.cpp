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

#include "dlip/synthetic.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include "dlip/errors.hpp"
#include "dlip/rng.hpp"
#include "json.hpp"

namespace dlip {

using nlohmann::json;

namespace {

struct ClassStyle {
  const char* name;
  const char* color;
  std::array<float, 3> rgb;
};

constexpr std::array<ClassStyle, kMaxSyntheticClasses> kStyles = {{
    {"apple", "red", {1.0f, -1.0f, -1.0f}},
    {"frog", "green", {-1.0f, 1.0f, -1.0f}},
    {"whale", "blue", {-1.0f, -1.0f, 1.0f}},
    {"lemon", "yellow", {1.0f, 1.0f, -1.0f}},
    {"iceberg", "cyan", {-1.0f, 1.0f, 1.0f}},
    {"plum", "magenta", {1.0f, -1.0f, 1.0f}},
    {"cloud", "white", {1.0f, 1.0f, 1.0f}},
    {"crow", "black", {-1.0f, -1.0f, -1.0f}},
    {"pumpkin", "orange", {1.0f, 0.0f, -1.0f}},
    {"grape", "purple", {0.0f, -1.0f, 1.0f}},
    {"turtle", "teal", {-1.0f, 0.0f, 0.0f}},
    {"flamingo", "pink", {1.0f, 0.0f, 0.0f}},
}};

constexpr std::array<const char*, 5> kJunk = {"stock photo", "untitled image", "click to enlarge",
                                              "free download", "my picture"};

std::string number_word(int n) {
  static const std::array<const char*, 16> words = {
      "one",  "two",    "three",  "four",     "five",    "six",     "seven",   "eight",
      "nine", "ten",    "eleven", "twelve",   "thirteen", "fourteen", "fifteen", "sixteen"};
  return n >= 1 && n <= 16 ? words[static_cast<std::size_t>(n - 1)] : std::to_string(n);
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += i + 1 == items.size() ? " and " : ", ";
    out += items[i];
  }
  return out;
}

}  // namespace

void SyntheticOptions::validate() const {
  auto fail = [](const std::string& what) { throw UsageError("invalid synthetic options: " + what); };
  if (images < 1) fail("images must be >= 1");
  if (classes < 2 || classes > kMaxSyntheticClasses) {
    fail("classes must lie in [2, " + std::to_string(kMaxSyntheticClasses) + "]");
  }
  if (grid_h < 1 || grid_w < 1 || grid_h > 16 || grid_w > 16) fail("grid must lie in [1, 16]");
  if (patch_size < 2) fail("patch_size must be >= 2");
  if (min_blobs < 1 || max_blobs < min_blobs) fail("need 1 <= min_blobs <= max_blobs");
  if (max_blobs > classes || max_blobs > grid_h * grid_w) {
    fail("max_blobs exceeds the number of classes or grid cells");
  }
  if (!(junk_prob >= 0 && junk_prob <= 1)) fail("junk_prob must lie in [0, 1]");
  if (!(noise >= 0)) fail("noise must be >= 0");
  if (id_prefix.empty() || id_prefix.find_first_of("/\\.") != std::string::npos) {
    fail("id_prefix must be non-empty without '/', '\\' or '.'");
  }
}

const std::vector<std::string>& synthetic_class_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& s : kStyles) out.emplace_back(s.name);
    return out;
  }();
  return names;
}

SyntheticCorpus generate_synthetic(const SyntheticOptions& o) {
  o.validate();
  SyntheticCorpus out;
  out.class_names.assign(synthetic_class_names().begin(),
                         synthetic_class_names().begin() + o.classes);
  const int ph = o.patch_size;
  const int height = o.grid_h * ph;
  const int width = o.grid_w * ph;
  const int cells = o.grid_h * o.grid_w;
  const int digits = static_cast<int>(std::to_string(o.images - 1).size());

  for (int i = 0; i < o.images; ++i) {
    Engine eng(derive_seed(o.seed, {static_cast<std::uint64_t>(i)}));
    std::string id = std::to_string(i);
    id = o.id_prefix + std::string(static_cast<std::size_t>(digits) - id.size(), '0') + id;

    const int nblobs =
        o.min_blobs + static_cast<int>(uniform_index(eng, static_cast<std::size_t>(o.max_blobs - o.min_blobs + 1)));
    // Partial Fisher-Yates draws distinct classes and distinct cells.
    std::vector<int> cls(static_cast<std::size_t>(o.classes));
    std::vector<int> pos(static_cast<std::size_t>(cells));
    for (int c = 0; c < o.classes; ++c) cls[static_cast<std::size_t>(c)] = c;
    for (int c = 0; c < cells; ++c) pos[static_cast<std::size_t>(c)] = c;
    ImageTruth truth;
    truth.image_id = id;
    for (int b = 0; b < nblobs; ++b) {
      const auto ub = static_cast<std::size_t>(b);
      std::swap(cls[ub], cls[ub + uniform_index(eng, cls.size() - ub)]);
      std::swap(pos[ub], pos[ub + uniform_index(eng, pos.size() - ub)]);
      BlobTruth blob;
      blob.class_index = cls[ub];
      blob.patch_index = pos[ub];
      blob.row = pos[ub] / o.grid_w;
      blob.col = pos[ub] % o.grid_w;
      blob.sentence_index = b;
      truth.blobs.push_back(blob);
    }
    truth.label = truth.blobs.front().class_index;

    Tensor img;
    img.shape = {3, height, width};
    img.data.resize(static_cast<std::size_t>(3 * height * width));
    for (float& x : img.data) x = static_cast<float>(o.noise * normal01(eng));
    const double radius = 0.4 * ph;
    for (const auto& blob : truth.blobs) {
      const auto& rgb = kStyles[static_cast<std::size_t>(blob.class_index)].rgb;
      const double cy = blob.row * ph + 0.5 * (ph - 1) + uniform(eng, -0.5, 0.5);
      const double cx = blob.col * ph + 0.5 * (ph - 1) + uniform(eng, -0.5, 0.5);
      for (int y = blob.row * ph; y < (blob.row + 1) * ph; ++y) {
        for (int x = blob.col * ph; x < (blob.col + 1) * ph; ++x) {
          if (std::hypot(y - cy, x - cx) > radius) continue;
          for (int c = 0; c < 3; ++c) {
            img.data[static_cast<std::size_t>((c * height + y) * width + x)] =
                rgb[static_cast<std::size_t>(c)] + static_cast<float>(0.05 * normal01(eng));
          }
        }
      }
    }

    CaptionRecord rec;
    rec.image_id = id;
    const auto& first = kStyles[static_cast<std::size_t>(truth.label)];
    if (uniform01(eng) < o.junk_prob) {
      rec.raw_caption = kJunk[uniform_index(eng, kJunk.size())];
    } else {
      rec.raw_caption = std::string("a photo of a ") + first.name;
    }
    std::vector<std::string> names;
    std::vector<std::string> colored;
    std::string long_a;
    std::string long_b;
    for (const auto& blob : truth.blobs) {
      const auto& s = kStyles[static_cast<std::size_t>(blob.class_index)];
      names.push_back(std::string("a ") + s.name);
      colored.push_back(std::string(s.color) + " " + s.name);
      const std::string r = number_word(blob.row + 1);
      const std::string c = number_word(blob.col + 1);
      if (!long_a.empty()) long_a += ' ';
      long_a += std::string("There is a ") + s.name + " at row " + r + " column " + c + ".";
      if (!long_b.empty()) long_b += ' ';
      long_b += std::string("The ") + s.color + " " + s.name + " sits in row " + r + " and column " + c + ".";
    }
    rec.sources = {"describer_a", "describer_b"};
    rec.short_captions = {"an image with " + join_list(names), join_list(colored)};
    rec.long_captions = {split_sentences(long_a), split_sentences(long_b)};
    validate_record(rec);

    out.corpus.records.push_back(std::move(rec));
    out.corpus.images.push_back(std::move(img));
    out.truth.push_back(std::move(truth));
  }
  return out;
}

void write_synthetic(const SyntheticCorpus& data, const std::filesystem::path& dir) {
  save_corpus(data.corpus, dir);
  std::ofstream gt(dir / "ground_truth.jsonl", std::ios::binary | std::ios::trunc);
  if (!gt) throw DataError("cannot write " + (dir / "ground_truth.jsonl").string());
  for (const auto& t : data.truth) {
    json j;
    j["image_id"] = t.image_id;
    j["label"] = t.label;
    json blobs = json::array();
    for (const auto& b : t.blobs) {
      blobs.push_back({{"class", b.class_index},
                       {"row", b.row},
                       {"col", b.col},
                       {"patch_index", b.patch_index},
                       {"sentence_index", b.sentence_index}});
    }
    j["blobs"] = std::move(blobs);
    gt << j.dump() << '\n';
  }
  std::ofstream cls(dir / "classes.txt", std::ios::binary | std::ios::trunc);
  if (!cls) throw DataError("cannot write " + (dir / "classes.txt").string());
  for (const auto& name : data.class_names) cls << name << '\n';
}

std::vector<ImageTruth> load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<ImageTruth> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      ImageTruth t;
      t.image_id = j.at("image_id").get<std::string>();
      t.label = j.at("label").get<int>();
      for (const auto& b : j.at("blobs")) {
        BlobTruth blob;
        blob.class_index = b.at("class").get<int>();
        blob.row = b.at("row").get<int>();
        blob.col = b.at("col").get<int>();
        blob.patch_index = b.at("patch_index").get<int>();
        blob.sentence_index = b.at("sentence_index").get<int>();
        t.blobs.push_back(blob);
      }
      out.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw MalformedRecord(line_no, "ground_truth", e.what());
    }
  }
  return out;
}

std::vector<std::string> load_classes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace dlip
