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

#include "dlip/losses.hpp"

#include <cmath>
#include <string>

#include "dlip/errors.hpp"

namespace dlip {

namespace {

template <class T>
void require_finite(const Mat<T>& m, const char* what) {
  if (!m.allFinite()) throw NonFiniteInput(std::string(what) + " contains non-finite values");
}

template <class T>
void require_tau(T tau) {
  if (!std::isfinite(static_cast<double>(tau)) || !(tau > T(0))) {
    throw NonFiniteInput("temperature must be finite and positive");
  }
}

// Row-wise softmax; returns log-sum-exp per row.
template <class T>
Vec<T> softmax_rows(const Mat<T>& logits, Mat<T>& prob) {
  prob.resize(logits.rows(), logits.cols());
  Vec<T> lse(logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T mx = logits.row(r).maxCoeff();
    prob.row(r) = (logits.row(r).array() - mx).exp().matrix();
    const T s = prob.row(r).sum();
    prob.row(r) /= s;
    lse(r) = mx + std::log(s);
  }
  return lse;
}

}  // namespace

template <class T>
LossOutput<T> clip_infonce(const Mat<T>& images, const Mat<T>& texts, T tau) {
  require_finite(images, "image embeddings");
  require_finite(texts, "text embeddings");
  require_tau(tau);
  const Eigen::Index n = images.rows();
  if (n < 1 || texts.rows() != n || texts.cols() != images.cols()) {
    throw ShapeMismatch("clip_infonce needs N >= 1 matching image and text rows");
  }
  // logits(i, j) = t_i . v_j / tau
  const Mat<T> logits = texts * images.transpose() / tau;
  Mat<T> p_t2v, p_v2t;
  const Vec<T> lse_t2v = softmax_rows<T>(logits, p_t2v);
  const Vec<T> lse_v2t = softmax_rows<T>(logits.transpose(), p_v2t);

  T t2v = 0, v2t = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    t2v += lse_t2v(i) - logits(i, i);
    v2t += lse_v2t(i) - logits(i, i);
  }
  const T inv = T(1) / static_cast<T>(n);

  Mat<T> dlogits = (p_t2v + p_v2t.transpose()) * (T(0.5) * inv);
  dlogits.diagonal().array() -= inv;

  LossOutput<T> out;
  out.value = T(0.5) * (t2v + v2t) * inv;
  out.grad_text_vectors = dlogits * images / tau;
  out.grad_image_globals = dlogits.transpose() * texts / tau;
  out.grad_tau = -(dlogits.cwiseProduct(logits)).sum() / tau;
  return out;
}

template <class T>
LossOutput<T> mpcl(const Mat<T>& images, const Mat<T>& texts, int k, T tau) {
  require_finite(images, "image embeddings");
  require_finite(texts, "text embeddings");
  require_tau(tau);
  const Eigen::Index n = images.rows();
  if (k < 1 || n < 1 || texts.rows() != n * k || texts.cols() != images.cols()) {
    throw ShapeMismatch("mpcl needs N*K text rows for N image rows");
  }
  const Eigen::Index nk = n * k;
  // logits(r, i) = t_r . v_i / tau with r = i*K + j.
  const Mat<T> logits = texts * images.transpose() / tau;
  Mat<T> p_t2v, p_v2t;
  const Vec<T> lse_t2v = softmax_rows<T>(logits, p_t2v);
  const Vec<T> lse_v2t = softmax_rows<T>(logits.transpose(), p_v2t);

  T t2v = 0, v2t = 0;
  for (Eigen::Index r = 0; r < nk; ++r) {
    const Eigen::Index i = r / k;
    t2v += lse_t2v(r) - logits(r, i);
    v2t += lse_v2t(i) - logits(r, i);
  }
  const T inv = T(1) / static_cast<T>(nk);

  Mat<T> dlogits = (p_t2v + static_cast<T>(k) * p_v2t.transpose()) * (T(0.5) * inv);
  for (Eigen::Index r = 0; r < nk; ++r) dlogits(r, r / k) -= inv;

  LossOutput<T> out;
  out.value = T(0.5) * (t2v + v2t) * inv;
  out.grad_text_vectors = dlogits * images / tau;
  out.grad_image_globals = dlogits.transpose() * texts / tau;
  out.grad_tau = -(dlogits.cwiseProduct(logits)).sum() / tau;
  return out;
}

template <class T>
AttentionGrouping<T> attention_grouping(const Mat<T>& texts, const Mat<T>& patches, T sigma) {
  const Eigen::Index k = texts.rows(), hw = patches.rows(), d = texts.cols();
  if (hw < 1 || patches.cols() != d) {
    throw ShapeMismatch("attention_grouping needs HW >= 1 patches of the text dimension");
  }
  if (!(sigma >= T(0)) || !(sigma < T(1))) {
    throw std::invalid_argument("sigma must lie in [0, 1)");
  }
  AttentionGrouping<T> g;
  g.sigma = sigma;
  g.cosine = texts * patches.transpose();
  g.raw_weights = g.cosine.cwiseMax(T(0));
  g.sparse_weights = (g.raw_weights.array() >= sigma).select(g.raw_weights, T(0));
  g.coefficients = Mat<T>::Zero(k, hw);
  g.fallback.assign(static_cast<std::size_t>(k), false);
  g.argmax.assign(static_cast<std::size_t>(k), 0);
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index n = 1; n < hw; ++n) {
      if (g.raw_weights(j, n) > g.raw_weights(j, best)) best = n;
    }
    g.argmax[std::size_t(j)] = static_cast<int>(best);
    const T z = g.sparse_weights.row(j).sum();
    if (z > T(0)) {
      g.coefficients.row(j) = g.sparse_weights.row(j) / z;
    } else {
      g.fallback[std::size_t(j)] = true;
      g.coefficients(j, best) = T(1);
    }
  }
  g.pooled_unnormalized = g.coefficients * patches;
  g.pooled = g.pooled_unnormalized;
  g.pooled_norms = normalize_rows(g.pooled);
  return g;
}

namespace {

// Backward of pooling for one image: given d(pooled unit rows), accumulate
// into d_texts (K x d) and d_patches (HW x d).
template <class T>
void grouping_backward(const AttentionGrouping<T>& g, const Mat<T>& texts, const Mat<T>& patches,
                       const Mat<T>& d_pooled, Eigen::Ref<Mat<T>> d_texts,
                       Eigen::Ref<Mat<T>> d_patches) {
  const Mat<T> du = normalize_rows_backward<T>(g.pooled, g.pooled_norms, d_pooled);
  // direct path: u_j = sum_n c_jn v_n
  d_patches.noalias() += g.coefficients.transpose() * du;
  const Mat<T> dc = du * patches.transpose();  // K x HW
  for (Eigen::Index j = 0; j < g.coefficients.rows(); ++j) {
    if (g.fallback[std::size_t(j)]) continue;
    const T z = g.sparse_weights.row(j).sum();
    const T mean = dc.row(j).dot(g.coefficients.row(j));
    for (Eigen::Index n = 0; n < g.coefficients.cols(); ++n) {
      const T w = g.sparse_weights(j, n);
      if (!(w > T(0))) continue;  // masked or clamped at zero
      const T dw = (dc(j, n) - mean) / z;
      d_texts.row(j) += dw * patches.row(n);
      d_patches.row(n) += dw * texts.row(j);
    }
  }
}

}  // namespace

template <class T>
LossOutput<T> grouping_loss(const Mat<T>& texts, const Mat<T>& patches, int k, int hw, T sigma,
                            T tau, GroupingNegatives negatives) {
  require_finite(texts, "text embeddings");
  require_finite(patches, "patch embeddings");
  require_tau(tau);
  if (k < 1 || hw < 1 || texts.rows() % k != 0 || patches.rows() != (texts.rows() / k) * hw ||
      texts.cols() != patches.cols()) {
    throw ShapeMismatch("grouping_loss needs N*K text rows and N*HW patch rows");
  }
  const Eigen::Index n = texts.rows() / k, d = texts.cols(), nk = texts.rows();

  std::vector<AttentionGrouping<T>> groups;
  groups.reserve(static_cast<std::size_t>(n));
  Mat<T> pooled(nk, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    groups.push_back(attention_grouping<T>(texts.middleRows(i * k, k),
                                           patches.middleRows(i * hw, hw), sigma));
    pooled.middleRows(i * k, k) = groups.back().pooled;
  }

  LossOutput<T> out;
  out.grad_text_vectors = Mat<T>::Zero(nk, d);
  out.grad_patches = Mat<T>::Zero(patches.rows(), d);
  out.grad_image_globals.resize(0, d);
  Mat<T> d_pooled = Mat<T>::Zero(nk, d);
  const T inv = T(1) / static_cast<T>(nk);
  T total = 0, dtau = 0;

  auto contrast = [&](Eigen::Index r0, Eigen::Index rows) {
    const auto t = texts.middleRows(r0, rows);
    const auto p = pooled.middleRows(r0, rows);
    const Mat<T> logits = t * p.transpose() / tau;
    Mat<T> prob;
    const Vec<T> lse = softmax_rows<T>(logits, prob);
    for (Eigen::Index j = 0; j < rows; ++j) total += lse(j) - logits(j, j);
    Mat<T> dl = prob * inv;
    dl.diagonal().array() -= inv;
    out.grad_text_vectors.middleRows(r0, rows).noalias() += dl * p / tau;
    d_pooled.middleRows(r0, rows).noalias() += dl.transpose() * t / tau;
    dtau -= dl.cwiseProduct(logits).sum() / tau;
  };
  if (negatives == GroupingNegatives::kWithinImage) {
    for (Eigen::Index i = 0; i < n; ++i) contrast(i * k, k);
  } else {
    contrast(0, nk);
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    grouping_backward<T>(groups[std::size_t(i)], texts.middleRows(i * k, k),
                         patches.middleRows(i * hw, hw), d_pooled.middleRows(i * k, k),
                         out.grad_text_vectors.middleRows(i * k, k),
                         out.grad_patches.middleRows(i * hw, hw));
  }
  out.value = total * inv;
  out.grad_tau = dtau;
  return out;
}

template <class T>
TotalLossOutput<T> total_loss(const Mat<T>& images, const Mat<T>& texts, const Mat<T>& patches,
                              int k, int hw, T sigma, T tau, const LossWeights& w,
                              GroupingNegatives negatives) {
  if (!(w.mpcl >= 0.0) || !(w.sub >= 0.0)) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  const auto m = mpcl<T>(images, texts, k, tau);
  const auto s = grouping_loss<T>(texts, patches, k, hw, sigma, tau, negatives);
  const T lm = static_cast<T>(w.mpcl), ls = static_cast<T>(w.sub);
  TotalLossOutput<T> out;
  out.mpcl_value = m.value;
  out.sub_value = s.value;
  out.value = lm * m.value + ls * s.value;
  out.grad_image_globals = lm * m.grad_image_globals;
  out.grad_text_vectors = lm * m.grad_text_vectors + ls * s.grad_text_vectors;
  out.grad_patches = ls * s.grad_patches;
  out.grad_tau = lm * m.grad_tau + ls * s.grad_tau;
  return out;
}

template <class T>
std::vector<std::uint8_t> grouping_region(const Mat<T>& texts, const Mat<T>& patches, int k,
                                          int hw, T sigma) {
  const Eigen::Index n = texts.rows() / k;
  std::vector<std::uint8_t> sig;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto g = attention_grouping<T>(texts.middleRows(i * k, k),
                                         patches.middleRows(i * hw, hw), sigma);
    for (Eigen::Index j = 0; j < k; ++j) {
      for (Eigen::Index p = 0; p < hw; ++p) sig.push_back(g.sparse_weights(j, p) > T(0));
      sig.push_back(g.fallback[std::size_t(j)] ? std::uint8_t(1 + g.argmax[std::size_t(j)] % 255)
                                               : std::uint8_t(0));
    }
  }
  return sig;
}

template <class T>
T grouping_boundary_margin(const Mat<T>& texts, const Mat<T>& patches, int k, int hw, T sigma) {
  const Eigen::Index n = texts.rows() / k;
  T margin = std::numeric_limits<T>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Mat<T> c = texts.middleRows(i * k, k) * patches.middleRows(i * hw, hw).transpose();
    margin = std::min(margin, (c.array() - sigma).abs().minCoeff());
    margin = std::min(margin, c.array().abs().minCoeff());
  }
  return margin;
}

#define DLIP_INSTANTIATE(T)                                                                   \
  template LossOutput<T> clip_infonce<T>(const Mat<T>&, const Mat<T>&, T);                    \
  template LossOutput<T> mpcl<T>(const Mat<T>&, const Mat<T>&, int, T);                       \
  template AttentionGrouping<T> attention_grouping<T>(const Mat<T>&, const Mat<T>&, T);       \
  template LossOutput<T> grouping_loss<T>(const Mat<T>&, const Mat<T>&, int, int, T, T,       \
                                          GroupingNegatives);                                 \
  template TotalLossOutput<T> total_loss<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, int, \
                                            int, T, T, const LossWeights&, GroupingNegatives); \
  template std::vector<std::uint8_t> grouping_region<T>(const Mat<T>&, const Mat<T>&, int,    \
                                                        int, T);                              \
  template T grouping_boundary_margin<T>(const Mat<T>&, const Mat<T>&, int, int, T);

DLIP_INSTANTIATE(float)
DLIP_INSTANTIATE(double)

#undef DLIP_INSTANTIATE

}  // namespace dlip
