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

// Packed-sequence transformer pieces with hand-written backward passes.
// Rows of every activation matrix are tokens; sequence s owns rows
// [offsets[s], offsets[s+1]).

#include <cmath>
#include <vector>

#include "dlip/encoders.hpp"
#include "dlip/linalg.hpp"
#include "dlip/parallel.hpp"

namespace dlip::nn {

template <class T>
using CMap = Eigen::Map<const Mat<T>>;
template <class T>
using MMap = Eigen::Map<Mat<T>>;
template <class T>
using CRow = Eigen::Map<const RowVec<T>>;
template <class T>
using MRow = Eigen::Map<RowVec<T>>;

template <class T>
CMap<T> cmat(const ParamVector<T>& p, std::size_t off, Eigen::Index r, Eigen::Index c) {
  return CMap<T>(p.data() + off, r, c);
}
template <class T>
MMap<T> mmat(ParamVector<T>& p, std::size_t off, Eigen::Index r, Eigen::Index c) {
  return MMap<T>(p.data() + off, r, c);
}
template <class T>
CRow<T> crow(const ParamVector<T>& p, std::size_t off, Eigen::Index n) {
  return CRow<T>(p.data() + off, n);
}
template <class T>
MRow<T> mrow(ParamVector<T>& p, std::size_t off, Eigen::Index n) {
  return MRow<T>(p.data() + off, n);
}

inline constexpr double kLayerNormEps = 1e-5;

template <class T>
struct LnCache {
  Mat<T> xhat;
  Vec<T> rstd;
};

template <class T>
Mat<T> layer_norm(const Mat<T>& x, const CRow<T>& g, const CRow<T>& b, LnCache<T>& cache) {
  const T inv_d = T(1) / static_cast<T>(x.cols());
  const Vec<T> mean = x.rowwise().sum() * inv_d;
  cache.xhat = x.colwise() - mean;
  cache.rstd = ((cache.xhat.array().square().rowwise().sum() * inv_d) +
                static_cast<T>(kLayerNormEps))
                   .rsqrt()
                   .matrix();
  cache.xhat.array().colwise() *= cache.rstd.array();
  return (cache.xhat.array().rowwise() * g.array()).rowwise() + b.array();
}

template <class T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const CRow<T>& g, const LnCache<T>& cache,
                           MRow<T> dg, MRow<T> db) {
  const T inv_d = T(1) / static_cast<T>(dy.cols());
  dg += dy.cwiseProduct(cache.xhat).colwise().sum();
  db += dy.colwise().sum();
  Mat<T> dxhat = dy.array().rowwise() * g.array();
  const Vec<T> m1 = dxhat.rowwise().sum() * inv_d;
  const Vec<T> m2 = dxhat.cwiseProduct(cache.xhat).rowwise().sum() * inv_d;
  dxhat.colwise() -= m1;
  dxhat.array() -= cache.xhat.array().colwise() * m2.array();
  dxhat.array().colwise() *= cache.rstd.array();
  return dxhat;
}

// tanh-approximated GELU. Returns gelu(u) and stores the tanh term for the
// backward pass.
inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
inline constexpr double kGeluA = 0.044715;

template <class T>
Mat<T> gelu(const Mat<T>& u, Mat<T>& th) {
  const T c = static_cast<T>(kGeluC), a = static_cast<T>(kGeluA);
  th = (c * (u.array() + a * u.array().cube())).tanh().matrix();
  return (T(0.5) * u.array() * (T(1) + th.array())).matrix();
}

template <class T>
Mat<T> gelu_grad(const Mat<T>& u, const Mat<T>& th) {
  const T c = static_cast<T>(kGeluC), a = static_cast<T>(kGeluA);
  const auto t = th.array();
  return (T(0.5) * (T(1) + t) +
          T(0.5) * u.array() * (T(1) - t.square()) * c * (T(1) + T(3) * a * u.array().square()))
      .matrix();
}

template <class T>
struct BlockCache {
  Mat<T> x_in;
  LnCache<T> ln1;
  Mat<T> h1, q, k, v, attn;
  std::vector<Mat<T>> probs;  // [seq * heads + head]
  Mat<T> x1;
  LnCache<T> ln2;
  Mat<T> h2, u;
  Mat<T> g;   // gelu(u)
  Mat<T> th;  // tanh term of gelu
};

struct BlockShape {
  Eigen::Index d;
  Eigen::Index hidden;
  int heads;
};

template <class T>
Mat<T> block_forward(const Mat<T>& x, const ParamVector<T>& p, const BlockOffsets& o,
                     const BlockShape& sh, const std::vector<int>& offsets,
                     BlockCache<T>& c) {
  const auto d = sh.d, hid = sh.hidden;
  const Eigen::Index dh = d / sh.heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const std::size_t n_seq = offsets.size() - 1;

  c.x_in = x;
  c.h1 = layer_norm<T>(x, crow(p, o.ln1_g, d), crow(p, o.ln1_b, d), c.ln1);
  c.q = (c.h1 * cmat(p, o.wq, d, d)).rowwise() + crow(p, o.bq, d);
  c.k = (c.h1 * cmat(p, o.wk, d, d)).rowwise() + crow(p, o.bk, d);
  c.v = (c.h1 * cmat(p, o.wv, d, d)).rowwise() + crow(p, o.bv, d);
  c.attn.resize(x.rows(), d);
  c.probs.assign(n_seq * static_cast<std::size_t>(sh.heads), Mat<T>());
  parallel_for(n_seq, [&](std::size_t s) {
    const Eigen::Index r0 = offsets[s], len = offsets[s + 1] - offsets[s];
    for (int h = 0; h < sh.heads; ++h) {
      const Eigen::Index c0 = h * dh;
      Mat<T> scores =
          c.q.block(r0, c0, len, dh).lazyProduct(c.k.block(r0, c0, len, dh).transpose()) * scale;
      for (Eigen::Index r = 0; r < len; ++r) {
        const T mx = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - mx).exp().matrix();
        scores.row(r) /= scores.row(r).sum();
      }
      c.attn.block(r0, c0, len, dh) = scores.lazyProduct(c.v.block(r0, c0, len, dh));
      c.probs[s * static_cast<std::size_t>(sh.heads) + static_cast<std::size_t>(h)] =
          std::move(scores);
    }
  });
  c.x1 = x + ((c.attn * cmat(p, o.wo, d, d)).rowwise() + crow(p, o.bo, d));
  c.h2 = layer_norm<T>(c.x1, crow(p, o.ln2_g, d), crow(p, o.ln2_b, d), c.ln2);
  c.u = (c.h2 * cmat(p, o.w1, d, hid)).rowwise() + crow(p, o.b1, hid);
  c.g = gelu<T>(c.u, c.th);
  Mat<T> y = c.x1.rowwise() + crow(p, o.b2, d);
  y.noalias() += c.g * cmat(p, o.w2, hid, d);
  return y;
}

template <class T>
Mat<T> block_backward(const Mat<T>& dy, const ParamVector<T>& p, const BlockOffsets& o,
                      const BlockShape& sh, const std::vector<int>& offsets,
                      const BlockCache<T>& c, ParamVector<T>& gr) {
  const auto d = sh.d, hid = sh.hidden;
  const Eigen::Index dh = d / sh.heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const std::size_t n_seq = offsets.size() - 1;

  // MLP branch.
  mmat(gr, o.w2, hid, d).noalias() += c.g.transpose() * dy;
  mrow(gr, o.b2, d) += dy.colwise().sum();
  Mat<T> du(dy.rows(), hid);
  du.noalias() = dy * cmat(p, o.w2, hid, d).transpose();
  du.array() *= gelu_grad<T>(c.u, c.th).array();
  mmat(gr, o.w1, d, hid).noalias() += c.h2.transpose() * du;
  mrow(gr, o.b1, hid) += du.colwise().sum();
  const Mat<T> dh2 = du * cmat(p, o.w1, d, hid).transpose();
  Mat<T> dx1 = dy + layer_norm_backward<T>(dh2, crow(p, o.ln2_g, d), c.ln2,
                                           mrow(gr, o.ln2_g, d), mrow(gr, o.ln2_b, d));

  // Attention branch.
  mmat(gr, o.wo, d, d).noalias() += c.attn.transpose() * dx1;
  mrow(gr, o.bo, d) += dx1.colwise().sum();
  const Mat<T> dattn = dx1 * cmat(p, o.wo, d, d).transpose();
  Mat<T> dq(dy.rows(), d), dk(dy.rows(), d), dv(dy.rows(), d);
  parallel_for(n_seq, [&](std::size_t s) {
    const Eigen::Index r0 = offsets[s], len = offsets[s + 1] - offsets[s];
    for (int h = 0; h < sh.heads; ++h) {
      const Eigen::Index c0 = h * dh;
      const Mat<T>& prob =
          c.probs[s * static_cast<std::size_t>(sh.heads) + static_cast<std::size_t>(h)];
      const auto dout = dattn.block(r0, c0, len, dh);
      dv.block(r0, c0, len, dh) = prob.transpose().lazyProduct(dout);
      Mat<T> dp = dout.lazyProduct(c.v.block(r0, c0, len, dh).transpose());
      for (Eigen::Index r = 0; r < len; ++r) {
        const T dot = dp.row(r).dot(prob.row(r));
        dp.row(r) = prob.row(r).cwiseProduct((dp.row(r).array() - dot).matrix());
      }
      dp *= scale;
      dq.block(r0, c0, len, dh) = dp.lazyProduct(c.k.block(r0, c0, len, dh));
      dk.block(r0, c0, len, dh) = dp.transpose().lazyProduct(c.q.block(r0, c0, len, dh));
    }
  });
  mmat(gr, o.wq, d, d).noalias() += c.h1.transpose() * dq;
  mmat(gr, o.wk, d, d).noalias() += c.h1.transpose() * dk;
  mmat(gr, o.wv, d, d).noalias() += c.h1.transpose() * dv;
  mrow(gr, o.bq, d) += dq.colwise().sum();
  mrow(gr, o.bk, d) += dk.colwise().sum();
  mrow(gr, o.bv, d) += dv.colwise().sum();
  Mat<T> dh1 = dq * cmat(p, o.wq, d, d).transpose();
  dh1.noalias() += dk * cmat(p, o.wk, d, d).transpose();
  dh1.noalias() += dv * cmat(p, o.wv, d, d).transpose();
  return dx1 + layer_norm_backward<T>(dh1, crow(p, o.ln1_g, d), c.ln1, mrow(gr, o.ln1_g, d),
                                      mrow(gr, o.ln1_b, d));
}

}  // namespace dlip::nn
