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
#include <filesystem>
#include <vector>

namespace dlip {

// Row-major float tensor. Images are (channels, height, width).
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  std::size_t numel() const;
  bool operator==(const Tensor&) const = default;
};

// File format: ASCII header "f32 <ndim> <d0> <d1> ...\n" followed by
// numel little-endian 32-bit floats.
void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace dlip
