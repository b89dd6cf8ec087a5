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

#include <cstdint>
#include <vector>

#include "dlip/linalg.hpp"

namespace dlip {

// Loss value plus gradients with respect to every embedding input and tau.
// Gradients for inputs a loss does not take are empty (0 rows).
//
// Inputs are expected to be unit-norm rows; similarities are plain dot
// products, and gradients are those of the dot-product formulas, so finite
// differences in arbitrary (off-sphere) directions agree with them.
template <class T>
struct LossOutput {
  T value = 0;
  Mat<T> grad_image_globals;
  Mat<T> grad_text_vectors;
  Mat<T> grad_patches;
  T grad_tau = 0;
};

// Symmetric InfoNCE over N image/text pairs, mean over terms in each
// direction: (L_t2v + L_v2t) / 2.
template <class T>
LossOutput<T> clip_infonce(const Mat<T>& image_globals, const Mat<T>& text_vectors, T tau);

// Multi-positive contrastive loss. text_vectors holds N*K rows; row i*K+j is
// sub-caption j of image i. t2v: each text against every image; v2t: each
// (image, own text) pair against all N*K texts. Each direction is a mean over
// N*K terms.
template <class T>
LossOutput<T> mpcl(const Mat<T>& image_globals, const Mat<T>& text_vectors, int k, T tau);

// Text-conditioned sparse pooling of one image's patch tokens.
template <class T>
struct AttentionGrouping {
  Mat<T> cosine;        // K x HW, t_j . v_n
  Mat<T> raw_weights;   // K x HW, max(0, cosine)
  Mat<T> sparse_weights;  // K x HW, raw if raw >= sigma else 0
  Mat<T> coefficients;  // K x HW, sparse row-normalized; one-hot on fallback
  std::vector<bool> fallback;  // row had no surviving weight
  std::vector<int> argmax;     // argmax of raw weights, lowest index on ties
  Mat<T> pooled_unnormalized;  // K x d
  Vec<T> pooled_norms;
  Mat<T> pooled;        // K x d, unit rows
  T sigma = 0;
};

template <class T>
AttentionGrouping<T> attention_grouping(const Mat<T>& text_vectors, const Mat<T>& patches,
                                        T sigma);

enum class GroupingNegatives { kWithinImage, kCrossImage };

// Grouping loss: each sub-caption against the pooled tokens of the K
// sub-captions of its own image (or all N*K pooled tokens with
// kCrossImage). patches holds N*HW rows. The threshold mask is treated as
// constant in the backward pass.
template <class T>
LossOutput<T> grouping_loss(const Mat<T>& text_vectors, const Mat<T>& patches, int k, int hw,
                            T sigma, T tau,
                            GroupingNegatives negatives = GroupingNegatives::kWithinImage);

struct LossWeights {
  double mpcl = 1.0;
  double sub = 0.7;
};

template <class T>
struct TotalLossOutput : LossOutput<T> {
  T mpcl_value = 0;
  T sub_value = 0;
};

// weights.mpcl * mpcl + weights.sub * grouping_loss, gradients likewise.
template <class T>
TotalLossOutput<T> total_loss(const Mat<T>& image_globals, const Mat<T>& text_vectors,
                              const Mat<T>& patches, int k, int hw, T sigma, T tau,
                              const LossWeights& weights,
                              GroupingNegatives negatives = GroupingNegatives::kWithinImage);

// Piecewise region of the grouping loss: one byte per (text, patch) mask bit
// plus the fallback argmax per text. Finite differences are only valid when
// the region does not change between the probe points.
template <class T>
std::vector<std::uint8_t> grouping_region(const Mat<T>& text_vectors, const Mat<T>& patches,
                                          int k, int hw, T sigma);

// Smallest distance of any text/patch cosine to a kink of the grouping loss
// (the threshold sigma, or 0).
template <class T>
T grouping_boundary_margin(const Mat<T>& text_vectors, const Mat<T>& patches, int k, int hw,
                           T sigma);

}  // namespace dlip
