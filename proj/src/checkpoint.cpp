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

#include <zlib.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "dlip/errors.hpp"
#include "dlip/trainer.hpp"

namespace dlip {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic = {'D', 'L', 'I', 'P'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <class U>
  void pod(U x) {
    bytes(&x, sizeof x);
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  template <class U, class A>
  void array(const std::vector<U, A>& v) {
    bytes(v.data(), v.size() * sizeof(U));
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}
  void bytes(void* p, std::size_t n) {
    if (n > end_ - pos_) throw CorruptCheckpoint("checkpoint is truncated");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <class U>
  U pod() {
    U x;
    bytes(&x, sizeof x);
    return x;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > end_ - pos_) throw CorruptCheckpoint("checkpoint is truncated");
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  template <class U, class A = std::allocator<U>>
  std::vector<U, A> array(std::size_t n) {
    if (n > (end_ - pos_) / sizeof(U)) throw CorruptCheckpoint("checkpoint is truncated");
    std::vector<U, A> v(n);
    bytes(v.data(), n * sizeof(U));
    return v;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(const char* p, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, std::numeric_limits<uInt>::max()));
    c = crc32(c, reinterpret_cast<const Bytef*>(p), chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Validates magic, version and CRC; returns the payload length before the CRC.
std::size_t check_envelope(const std::string& buf) {
  if (buf.size() < kMagic.size() + 8 || std::memcmp(buf.data(), kMagic.data(), 4) != 0) {
    throw CorruptCheckpoint("not a checkpoint file (bad magic)");
  }
  std::uint32_t version = 0;
  std::memcpy(&version, buf.data() + 4, 4);
  if (version != kCheckpointVersion) {
    throw VersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const std::size_t end = buf.size() - 4;
  std::uint32_t stored = 0;
  std::memcpy(&stored, buf.data() + end, 4);
  if (crc(buf.data(), end) != stored) throw CorruptCheckpoint("checkpoint CRC mismatch");
  return end;
}

}  // namespace

template <class T>
void save_checkpoint(const RunState<T>& state, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.pod(kCheckpointVersion);
  w.str(config_to_text(state.config));
  const EncoderConfig& e = state.model.config();
  for (const std::int64_t x :
       {std::int64_t{e.embed_dim}, std::int64_t{e.grid_h}, std::int64_t{e.grid_w},
        std::int64_t{e.image_h}, std::int64_t{e.image_w}, std::int64_t{e.channels},
        std::int64_t{e.depth}, std::int64_t{e.heads}, std::int64_t{e.mlp_ratio},
        std::int64_t{e.max_len}, std::int64_t{e.vocab_size},
        static_cast<std::int64_t>(e.param_seed)}) {
    w.pod(x);
  }
  const auto& words = state.tokenizer.words();
  w.pod(static_cast<std::uint32_t>(words.size()));
  for (const auto& word : words) w.str(word);
  w.pod(static_cast<std::uint32_t>(sizeof(T)));
  w.pod(static_cast<std::uint64_t>(state.step));
  w.pod(static_cast<std::uint64_t>(state.model.params().size()));
  w.array(state.model.params());
  w.array(state.adam_m);
  w.array(state.adam_v);
  w.pod(static_cast<std::uint32_t>(state.history.size()));
  for (const double h : state.history) w.pod(h);
  const std::uint32_t sum = crc(w.data().data(), w.data().size());
  w.pod(sum);

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
    if (!out) throw DataError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

int checkpoint_scalar_bytes(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  const std::size_t end = check_envelope(buf);
  Reader r(buf, end);
  r.array<char>(8);
  r.str();
  r.array<std::int64_t>(12);
  const auto nwords = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < nwords; ++i) r.str();
  return static_cast<int>(r.pod<std::uint32_t>());
}

template <class T>
RunState<T> load_checkpoint(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  const std::size_t end = check_envelope(buf);
  Reader r(buf, end);
  r.array<char>(8);
  TrainConfig cfg;
  try {
    cfg = parse_config(r.str());
  } catch (const UsageError& e) {
    throw CorruptCheckpoint(std::string("checkpoint config: ") + e.what());
  }
  const auto shape = r.array<std::int64_t>(12);
  EncoderConfig enc;
  enc.embed_dim = static_cast<int>(shape[0]);
  enc.grid_h = static_cast<int>(shape[1]);
  enc.grid_w = static_cast<int>(shape[2]);
  enc.image_h = static_cast<int>(shape[3]);
  enc.image_w = static_cast<int>(shape[4]);
  enc.channels = static_cast<int>(shape[5]);
  enc.depth = static_cast<int>(shape[6]);
  enc.heads = static_cast<int>(shape[7]);
  enc.mlp_ratio = static_cast<int>(shape[8]);
  enc.max_len = static_cast<int>(shape[9]);
  enc.vocab_size = static_cast<int>(shape[10]);
  enc.param_seed = static_cast<std::uint64_t>(shape[11]);
  const auto nwords = r.pod<std::uint32_t>();
  std::vector<std::string> words;
  words.reserve(nwords);
  for (std::uint32_t i = 0; i < nwords; ++i) words.push_back(r.str());
  const auto width = r.pod<std::uint32_t>();
  if (width != sizeof(T)) {
    throw VersionMismatch("checkpoint stores " + std::to_string(8 * width) + "-bit scalars, expected " +
                          std::to_string(8 * sizeof(T)));
  }
  const auto step = r.pod<std::uint64_t>();
  const auto count = r.pod<std::uint64_t>();

  Tokenizer tok(std::move(words), enc.max_len);
  if (tok.vocab_size() != enc.vocab_size) throw CorruptCheckpoint("vocabulary size mismatch");
  try {
    enc.validate();
  } catch (const std::exception& e) {
    throw CorruptCheckpoint(std::string("checkpoint encoder shape: ") + e.what());
  }
  RunState<T> state(std::move(cfg), std::move(tok), enc);
  if (count != state.model.params().size()) {
    throw CorruptCheckpoint("parameter count " + std::to_string(count) + " does not match layout");
  }
  state.model.params() = r.template array<T, typename ParamVector<T>::allocator_type>(count);
  state.adam_m = r.template array<T, typename ParamVector<T>::allocator_type>(count);
  state.adam_v = r.template array<T, typename ParamVector<T>::allocator_type>(count);
  state.step = static_cast<long>(step);
  const auto nhist = r.pod<std::uint32_t>();
  for (const double h : r.array<double>(nhist)) state.history.push_back(h);
  if (!r.done()) throw CorruptCheckpoint("trailing bytes in checkpoint");
  return state;
}

template void save_checkpoint<float>(const RunState<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const RunState<double>&, const std::filesystem::path&);
template RunState<float> load_checkpoint<float>(const std::filesystem::path&);
template RunState<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace dlip
