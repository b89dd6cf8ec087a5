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

#include "dlip/tensor_io.hpp"

#include <bit>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

#include "dlip/errors.hpp"

namespace dlip {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::size_t Tensor::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
  if (t.numel() != t.data.size()) throw ShapeError("tensor data does not match its shape");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write tensor " + path.string());
  out << "f32 " << t.shape.size();
  for (int d : t.shape) out << ' ' << d;
  out << '\n';
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!out) throw DataError("write failed for " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw DataError("empty tensor file " + path.string());
  std::istringstream hs(header);
  std::string tag;
  int ndim = -1;
  hs >> tag >> ndim;
  if (tag != "f32" || ndim < 0) throw DataError("bad tensor header in " + path.string());
  Tensor t;
  for (int i = 0; i < ndim; ++i) {
    int d = -1;
    if (!(hs >> d) || d < 0) throw DataError("bad tensor dims in " + path.string());
    t.shape.push_back(d);
  }
  t.data.resize(t.numel());
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(float))) {
    throw DataError("truncated tensor payload in " + path.string());
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError("trailing bytes in tensor " + path.string());
  }
  return t;
}

}  // namespace dlip
