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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dlip/linalg.hpp"
#include "dlip/tensor_io.hpp"
#include "dlip/tokenizer.hpp"

namespace dlip {

struct EncoderConfig {
  int embed_dim = 64;
  int grid_h = 4;
  int grid_w = 4;
  int image_h = 32;
  int image_w = 32;
  int channels = 3;
  int depth = 2;
  int heads = 4;
  int mlp_ratio = 4;
  int max_len = Tokenizer::kDefaultMaxLen;
  int vocab_size = 2;
  std::uint64_t param_seed = 0;

  int patch_h() const { return image_h / grid_h; }
  int patch_w() const { return image_w / grid_w; }
  int num_patches() const { return grid_h * grid_w; }
  int patch_dim() const { return channels * patch_h() * patch_w(); }

  // Throws DimensionMismatch / ShapeError on inconsistent sizes.
  void validate() const;

  bool operator==(const EncoderConfig&) const = default;
};

// One named tensor inside the flat parameter vector.
struct ParamSlot {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool decay = false;  // subject to weight decay (matrices and embeddings)
  double init_bound = 0.0;  // uniform(-a, a) bound, 0 for constant init
  double init_value = 0.0;  // used when init_bound == 0

  std::size_t size() const { return rows * cols; }
};

struct BlockOffsets {
  std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
};

struct TowerOffsets {
  std::size_t input_w = 0;  // patch projection or token embedding
  std::size_t input_b = 0;  // patch bias (image tower only)
  std::size_t pos = 0;
  std::vector<BlockOffsets> blocks;
  std::size_t proj = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Flat layout: [image tower | text tower | logit_scale].
//
// Parameter count, with D = embed_dim, r = mlp_ratio, P = patch_dim,
// HW = num_patches, V = vocab_size, L = max_len and per-block cost
// B = (4 + 2r) D^2 + (9 + r) D:
//   image = P*D + D + HW*D + depth*B + D^2
//   text  = V*D + L*D + depth*B + D^2
//   total = image + text + 1
class ParamLayout {
 public:
  explicit ParamLayout(const EncoderConfig& cfg);

  static std::size_t count_formula(const EncoderConfig& cfg);

  std::size_t size() const { return size_; }
  const std::vector<ParamSlot>& slots() const { return slots_; }
  const ParamSlot& find(const std::string& name) const;
  const TowerOffsets& image() const { return image_; }
  const TowerOffsets& text() const { return text_; }
  std::size_t logit_scale() const { return logit_scale_; }

 private:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols, bool decay,
                  double init_bound, double init_value);
  BlockOffsets add_block(const std::string& prefix, std::size_t d, std::size_t hidden);

  std::vector<ParamSlot> slots_;
  TowerOffsets image_;
  TowerOffsets text_;
  std::size_t logit_scale_ = 0;
  std::size_t size_ = 0;
};

inline constexpr double kInitialTau = 0.07;
inline constexpr double kMinTau = 1e-3;
inline constexpr double kMaxTau = 10.0;

template <class T>
struct EncodedImage {
  Vec<T> global;   // unit norm, length D
  Mat<T> patches;  // HW x D, unit-norm rows
};

template <class T>
struct EncodedText {
  Vec<T> vector;  // unit norm, length D
};

template <class T>
struct TowerCache;

template <class T>
struct ImageBatchForward {
  Mat<T> globals;  // B x D
  Mat<T> patches;  // (B*HW) x D, image b occupies rows [b*HW, (b+1)*HW)
  std::shared_ptr<const TowerCache<T>> cache;
};

template <class T>
struct TextBatchForward {
  Mat<T> vectors;  // S x D
  std::shared_ptr<const TowerCache<T>> cache;
};

// Image and text towers sharing one flat parameter vector. The learnable
// temperature is tau = exp(-logit_scale), kept inside [kMinTau, kMaxTau].
//
// Text: token + position embedding -> depth pre-norm transformer blocks over
// the non-pad positions -> mean over those positions -> linear projection ->
// L2 normalize.
// Image: non-overlapping patches -> linear patch embedding + position
// embedding -> depth blocks -> linear projection. Patch rows are the
// normalized projected tokens, so they share the text embedding space; the
// global vector is the normalized projection of the mean token.
template <class T>
class DualEncoder {
 public:
  explicit DualEncoder(EncoderConfig cfg);

  const EncoderConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  ParamVector<T>& params() { return params_; }
  const ParamVector<T>& params() const { return params_; }

  T tau() const;
  T logit_scale() const { return params_[layout_.logit_scale()]; }
  // Projects the logit scale back into the temperature bounds.
  void clamp_logit_scale();

  ImageBatchForward<T> forward_images(std::span<const Tensor* const> images) const;
  // Accumulates into grad (size layout().size()).
  void backward_images(const ImageBatchForward<T>& fwd, const Mat<T>& d_globals,
                       const Mat<T>& d_patches, ParamVector<T>& grad) const;

  TextBatchForward<T> forward_texts(std::span<const TokenIds* const> texts) const;
  void backward_texts(const TextBatchForward<T>& fwd, const Mat<T>& d_vectors,
                      ParamVector<T>& grad) const;

  EncodedImage<T> encode_image(const Tensor& image) const;
  EncodedText<T> encode_text(const TokenIds& tokens) const;

 private:
  void check_params() const;

  EncoderConfig cfg_;
  ParamLayout layout_;
  ParamVector<T> params_;
};

extern template class DualEncoder<float>;
extern template class DualEncoder<double>;

}  // namespace dlip
