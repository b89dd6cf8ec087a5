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

#include "dlip/encoders.hpp"

#include <algorithm>
#include <cmath>

#include "dlip/rng.hpp"
#include "nn.hpp"

namespace dlip {

void EncoderConfig::validate() const {
  if (embed_dim < 2) throw DimensionMismatch("embed_dim must be >= 2");
  if (grid_h < 1 || grid_w < 1) throw DimensionMismatch("patch grid must be at least 1x1");
  if (depth < 0) throw DimensionMismatch("depth must be >= 0");
  if (heads < 1 || embed_dim % heads != 0) {
    throw DimensionMismatch("embed_dim must be divisible by heads");
  }
  if (mlp_ratio < 1) throw DimensionMismatch("mlp_ratio must be >= 1");
  if (max_len < 1) throw DimensionMismatch("max_len must be >= 1");
  if (vocab_size < 2) throw DimensionMismatch("vocab_size must include pad and unk");
  if (channels < 1) throw DimensionMismatch("channels must be >= 1");
  if (image_h < grid_h || image_w < grid_w || image_h % grid_h != 0 || image_w % grid_w != 0) {
    throw ShapeError("image size " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                     " is not divisible into a " + std::to_string(grid_h) + "x" +
                     std::to_string(grid_w) + " patch grid");
  }
}

// ---------------------------------------------------------------- layout

namespace {

double glorot(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

std::size_t ParamLayout::add(std::string name, std::size_t rows, std::size_t cols, bool decay,
                             double init_bound, double init_value) {
  ParamSlot s{std::move(name), size_, rows, cols, decay, init_bound, init_value};
  size_ += s.size();
  slots_.push_back(std::move(s));
  return slots_.back().offset;
}

BlockOffsets ParamLayout::add_block(const std::string& p, std::size_t d, std::size_t hid) {
  BlockOffsets o{};
  o.ln1_g = add(p + ".ln1_g", 1, d, false, 0.0, 1.0);
  o.ln1_b = add(p + ".ln1_b", 1, d, false, 0.0, 0.0);
  o.wq = add(p + ".wq", d, d, true, glorot(d, d), 0.0);
  o.bq = add(p + ".bq", 1, d, false, 0.0, 0.0);
  o.wk = add(p + ".wk", d, d, true, glorot(d, d), 0.0);
  o.bk = add(p + ".bk", 1, d, false, 0.0, 0.0);
  o.wv = add(p + ".wv", d, d, true, glorot(d, d), 0.0);
  o.bv = add(p + ".bv", 1, d, false, 0.0, 0.0);
  o.wo = add(p + ".wo", d, d, true, glorot(d, d), 0.0);
  o.bo = add(p + ".bo", 1, d, false, 0.0, 0.0);
  o.ln2_g = add(p + ".ln2_g", 1, d, false, 0.0, 1.0);
  o.ln2_b = add(p + ".ln2_b", 1, d, false, 0.0, 0.0);
  o.w1 = add(p + ".w1", d, hid, true, glorot(d, hid), 0.0);
  o.b1 = add(p + ".b1", 1, hid, false, 0.0, 0.0);
  o.w2 = add(p + ".w2", hid, d, true, glorot(hid, d), 0.0);
  o.b2 = add(p + ".b2", 1, d, false, 0.0, 0.0);
  return o;
}

ParamLayout::ParamLayout(const EncoderConfig& cfg) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.embed_dim);
  const auto hid = d * static_cast<std::size_t>(cfg.mlp_ratio);
  const auto pd = static_cast<std::size_t>(cfg.patch_dim());
  const auto hw = static_cast<std::size_t>(cfg.num_patches());
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  const auto len = static_cast<std::size_t>(cfg.max_len);

  image_.begin = size_;
  image_.input_w = add("image.patch_w", pd, d, true, glorot(pd, d), 0.0);
  image_.input_b = add("image.patch_b", 1, d, false, 0.0, 0.0);
  image_.pos = add("image.pos", hw, d, true, 0.0, 0.0);
  for (int b = 0; b < cfg.depth; ++b) {
    image_.blocks.push_back(add_block("image.block" + std::to_string(b), d, hid));
  }
  image_.proj = add("image.proj", d, d, true, glorot(d, d), 0.0);
  image_.end = size_;

  text_.begin = size_;
  text_.input_w = add("text.tok", v, d, true, glorot(v, d), 0.0);
  text_.pos = add("text.pos", len, d, true, 0.0, 0.0);
  for (int b = 0; b < cfg.depth; ++b) {
    text_.blocks.push_back(add_block("text.block" + std::to_string(b), d, hid));
  }
  text_.proj = add("text.proj", d, d, true, glorot(d, d), 0.0);
  text_.end = size_;

  logit_scale_ = add("logit_scale", 1, 1, false, 0.0, -std::log(kInitialTau));
}

std::size_t ParamLayout::count_formula(const EncoderConfig& c) {
  const std::size_t d = static_cast<std::size_t>(c.embed_dim);
  const std::size_t r = static_cast<std::size_t>(c.mlp_ratio);
  const std::size_t block = (4 + 2 * r) * d * d + (9 + r) * d;
  const std::size_t depth = static_cast<std::size_t>(c.depth);
  const std::size_t image = static_cast<std::size_t>(c.patch_dim()) * d + d +
                            static_cast<std::size_t>(c.num_patches()) * d + depth * block + d * d;
  const std::size_t text = static_cast<std::size_t>(c.vocab_size) * d +
                           static_cast<std::size_t>(c.max_len) * d + depth * block + d * d;
  return image + text + 1;
}

const ParamSlot& ParamLayout::find(const std::string& name) const {
  for (const auto& s : slots_) {
    if (s.name == name) return s;
  }
  throw std::out_of_range("no parameter named " + name);
}

// ---------------------------------------------------------------- model

template <class T>
struct TowerCache {
  std::vector<int> offsets;
  std::vector<nn::BlockCache<T>> blocks;
  Mat<T> tokens;  // final-layer tokens
  Mat<T> pooled;  // mean token per text or image
  // text
  std::vector<int> token_ids;
  std::vector<int> positions;
  Vec<T> out_norms;
  // image
  Mat<T> pixels;
  Vec<T> patch_norms;
  Vec<T> global_norms;
};

template <class T>
DualEncoder<T>::DualEncoder(EncoderConfig cfg) : cfg_(cfg), layout_(cfg_) {
  params_.assign(layout_.size(), T(0));
  Engine eng(cfg_.param_seed);
  for (const auto& s : layout_.slots()) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double v =
          s.init_bound > 0.0 ? uniform(eng, -s.init_bound, s.init_bound) : s.init_value;
      params_[s.offset + i] = static_cast<T>(v);
    }
  }
}

template <class T>
T DualEncoder<T>::tau() const {
  const T t = std::exp(-params_[layout_.logit_scale()]);
  return std::clamp(t, static_cast<T>(kMinTau), static_cast<T>(kMaxTau));
}

template <class T>
void DualEncoder<T>::clamp_logit_scale() {
  T& s = params_[layout_.logit_scale()];
  s = std::clamp(s, static_cast<T>(-std::log(kMaxTau)), static_cast<T>(-std::log(kMinTau)));
}

template <class T>
void DualEncoder<T>::check_params() const {
  if (params_.size() != layout_.size()) {
    throw DimensionMismatch("parameter vector has " + std::to_string(params_.size()) +
                            " entries, layout expects " + std::to_string(layout_.size()));
  }
}

namespace {

template <class T>
Mat<T> run_blocks(Mat<T> x, const ParamVector<T>& p, const TowerOffsets& tower,
                  const nn::BlockShape& sh, TowerCache<T>& c) {
  c.blocks.resize(tower.blocks.size());
  for (std::size_t b = 0; b < tower.blocks.size(); ++b) {
    x = nn::block_forward<T>(x, p, tower.blocks[b], sh, c.offsets, c.blocks[b]);
  }
  return x;
}

template <class T>
Mat<T> run_blocks_backward(Mat<T> dx, const ParamVector<T>& p, const TowerOffsets& tower,
                           const nn::BlockShape& sh, const TowerCache<T>& c,
                           ParamVector<T>& grad) {
  for (std::size_t b = tower.blocks.size(); b-- > 0;) {
    dx = nn::block_backward<T>(dx, p, tower.blocks[b], sh, c.offsets, c.blocks[b], grad);
  }
  return dx;
}

}  // namespace

template <class T>
ImageBatchForward<T> DualEncoder<T>::forward_images(std::span<const Tensor* const> images) const {
  check_params();
  const Eigen::Index d = cfg_.embed_dim, hw = cfg_.num_patches(), pd = cfg_.patch_dim();
  const int ph = cfg_.patch_h(), pw = cfg_.patch_w();
  const auto n = static_cast<Eigen::Index>(images.size());
  const auto& tw = layout_.image();

  auto cache = std::make_shared<TowerCache<T>>();
  cache->pixels.resize(n * hw, pd);
  for (Eigen::Index b = 0; b < n; ++b) {
    const Tensor& img = *images[static_cast<std::size_t>(b)];
    if (img.shape.size() != 3 || img.shape[0] != cfg_.channels) {
      throw ShapeError("image must have shape (" + std::to_string(cfg_.channels) + ", H, W)");
    }
    const int h = img.shape[1], w = img.shape[2];
    if (h % ph != 0 || w % pw != 0) {
      throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(w) +
                       " is not divisible by patch size " + std::to_string(ph) + "x" +
                       std::to_string(pw));
    }
    if (h / ph != cfg_.grid_h || w / pw != cfg_.grid_w) {
      throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(w) +
                       " does not match the configured patch grid");
    }
    for (int gy = 0; gy < cfg_.grid_h; ++gy) {
      for (int gx = 0; gx < cfg_.grid_w; ++gx) {
        const Eigen::Index row = b * hw + gy * cfg_.grid_w + gx;
        Eigen::Index col = 0;
        for (int ch = 0; ch < cfg_.channels; ++ch) {
          for (int y = 0; y < ph; ++y) {
            const float* src = img.data.data() +
                               (static_cast<std::size_t>(ch) * h + gy * ph + y) * w + gx * pw;
            for (int x = 0; x < pw; ++x) cache->pixels(row, col++) = static_cast<T>(src[x]);
          }
        }
      }
    }
  }
  cache->offsets.resize(static_cast<std::size_t>(n) + 1);
  for (Eigen::Index b = 0; b <= n; ++b) cache->offsets[static_cast<std::size_t>(b)] = int(b * hw);

  Mat<T> x = (cache->pixels * nn::cmat(params_, tw.input_w, pd, d)).rowwise() +
             nn::crow(params_, tw.input_b, d);
  const auto pos = nn::cmat(params_, tw.pos, hw, d);
  for (Eigen::Index b = 0; b < n; ++b) x.middleRows(b * hw, hw) += pos;

  const nn::BlockShape sh{d, d * cfg_.mlp_ratio, cfg_.heads};
  cache->tokens = run_blocks<T>(std::move(x), params_, tw, sh, *cache);

  ImageBatchForward<T> out;
  const Mat<T> z = cache->tokens * nn::cmat(params_, tw.proj, d, d);
  out.globals.resize(n, d);
  for (Eigen::Index b = 0; b < n; ++b) out.globals.row(b) = z.middleRows(b * hw, hw).colwise().mean();
  out.patches = z;
  cache->patch_norms = normalize_rows(out.patches);
  cache->global_norms = normalize_rows(out.globals);
  out.cache = std::move(cache);
  return out;
}

template <class T>
void DualEncoder<T>::backward_images(const ImageBatchForward<T>& fwd, const Mat<T>& d_globals,
                                     const Mat<T>& d_patches, ParamVector<T>& grad) const {
  const Eigen::Index d = cfg_.embed_dim, hw = cfg_.num_patches(), pd = cfg_.patch_dim();
  const auto& c = *fwd.cache;
  const auto& tw = layout_.image();
  const Eigen::Index n = fwd.globals.rows();
  if (d_globals.rows() != n || d_globals.cols() != d || d_patches.rows() != n * hw ||
      d_patches.cols() != d) {
    throw ShapeMismatch("image gradient shapes do not match the forward pass");
  }

  Mat<T> dz = normalize_rows_backward<T>(fwd.patches, c.patch_norms, d_patches);
  const Mat<T> dg = normalize_rows_backward<T>(fwd.globals, c.global_norms, d_globals) /
                    static_cast<T>(hw);
  for (Eigen::Index b = 0; b < n; ++b) dz.middleRows(b * hw, hw).rowwise() += dg.row(b);

  nn::mmat(grad, tw.proj, d, d).noalias() += c.tokens.transpose() * dz;
  Mat<T> dx = dz * nn::cmat(params_, tw.proj, d, d).transpose();
  const nn::BlockShape sh{d, d * cfg_.mlp_ratio, cfg_.heads};
  dx = run_blocks_backward<T>(std::move(dx), params_, tw, sh, c, grad);

  auto dpos = nn::mmat(grad, tw.pos, hw, d);
  for (Eigen::Index b = 0; b < n; ++b) dpos += dx.middleRows(b * hw, hw);
  nn::mrow(grad, tw.input_b, d) += dx.colwise().sum();
  nn::mmat(grad, tw.input_w, pd, d).noalias() += c.pixels.transpose() * dx;
}

template <class T>
TextBatchForward<T> DualEncoder<T>::forward_texts(std::span<const TokenIds* const> texts) const {
  check_params();
  const Eigen::Index d = cfg_.embed_dim;
  const auto& tw = layout_.text();
  auto cache = std::make_shared<TowerCache<T>>();
  cache->offsets.push_back(0);
  for (const TokenIds* t : texts) {
    if (static_cast<int>(t->ids.size()) != cfg_.max_len || t->length < 1 ||
        t->length > cfg_.max_len) {
      throw DimensionMismatch("token sequence must have exactly max_len = " +
                              std::to_string(cfg_.max_len) + " ids and at least one token");
    }
    for (int l = 0; l < t->length; ++l) {
      const int id = t->ids[static_cast<std::size_t>(l)];
      if (id < 0 || id >= cfg_.vocab_size) {
        throw DimensionMismatch("token id " + std::to_string(id) + " outside vocabulary");
      }
      cache->token_ids.push_back(id);
      cache->positions.push_back(l);
    }
    cache->offsets.push_back(static_cast<int>(cache->token_ids.size()));
  }
  const auto rows = static_cast<Eigen::Index>(cache->token_ids.size());
  Mat<T> x(rows, d);
  const auto tok = nn::cmat(params_, tw.input_w, cfg_.vocab_size, d);
  const auto pos = nn::cmat(params_, tw.pos, cfg_.max_len, d);
  for (Eigen::Index r = 0; r < rows; ++r) {
    x.row(r) = tok.row(cache->token_ids[std::size_t(r)]) + pos.row(cache->positions[std::size_t(r)]);
  }
  const nn::BlockShape sh{d, d * cfg_.mlp_ratio, cfg_.heads};
  cache->tokens = run_blocks<T>(std::move(x), params_, tw, sh, *cache);

  const auto n = static_cast<Eigen::Index>(texts.size());
  cache->pooled.resize(n, d);
  for (Eigen::Index s = 0; s < n; ++s) {
    const int r0 = cache->offsets[std::size_t(s)], r1 = cache->offsets[std::size_t(s) + 1];
    cache->pooled.row(s) = cache->tokens.middleRows(r0, r1 - r0).colwise().mean();
  }
  TextBatchForward<T> out;
  out.vectors = cache->pooled * nn::cmat(params_, tw.proj, d, d);
  cache->out_norms = normalize_rows(out.vectors);
  out.cache = std::move(cache);
  return out;
}

template <class T>
void DualEncoder<T>::backward_texts(const TextBatchForward<T>& fwd, const Mat<T>& d_vectors,
                                    ParamVector<T>& grad) const {
  const Eigen::Index d = cfg_.embed_dim;
  const auto& c = *fwd.cache;
  const auto& tw = layout_.text();
  if (d_vectors.rows() != fwd.vectors.rows() || d_vectors.cols() != d) {
    throw ShapeMismatch("text gradient shape does not match the forward pass");
  }
  const Mat<T> dz = normalize_rows_backward<T>(fwd.vectors, c.out_norms, d_vectors);
  nn::mmat(grad, tw.proj, d, d).noalias() += c.pooled.transpose() * dz;
  const Mat<T> dpooled = dz * nn::cmat(params_, tw.proj, d, d).transpose();
  Mat<T> dx(c.tokens.rows(), d);
  for (Eigen::Index s = 0; s < dpooled.rows(); ++s) {
    const int r0 = c.offsets[std::size_t(s)], r1 = c.offsets[std::size_t(s) + 1];
    dx.middleRows(r0, r1 - r0).rowwise() = dpooled.row(s) / static_cast<T>(r1 - r0);
  }
  const nn::BlockShape sh{d, d * cfg_.mlp_ratio, cfg_.heads};
  dx = run_blocks_backward<T>(std::move(dx), params_, tw, sh, c, grad);
  auto dtok = nn::mmat(grad, tw.input_w, cfg_.vocab_size, d);
  auto dpos = nn::mmat(grad, tw.pos, cfg_.max_len, d);
  for (Eigen::Index r = 0; r < dx.rows(); ++r) {
    dtok.row(c.token_ids[std::size_t(r)]) += dx.row(r);
    dpos.row(c.positions[std::size_t(r)]) += dx.row(r);
  }
}

template <class T>
EncodedImage<T> DualEncoder<T>::encode_image(const Tensor& image) const {
  const Tensor* ptr = &image;
  auto fwd = forward_images(std::span<const Tensor* const>(&ptr, 1));
  return {fwd.globals.row(0).transpose(), std::move(fwd.patches)};
}

template <class T>
EncodedText<T> DualEncoder<T>::encode_text(const TokenIds& tokens) const {
  const TokenIds* ptr = &tokens;
  auto fwd = forward_texts(std::span<const TokenIds* const>(&ptr, 1));
  return {fwd.vectors.row(0).transpose()};
}

template class DualEncoder<float>;
template class DualEncoder<double>;

}  // namespace dlip
