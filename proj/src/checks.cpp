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

#include "dlip/checks.hpp"

#include <array>
#include <stdexcept>

namespace dlip {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kClip:
      return "clip_infonce";
    case LossKind::kMpcl:
      return "mpcl";
    case LossKind::kGrouping:
      return "grouping_loss";
    case LossKind::kTotal:
      return "total_loss";
  }
  return "unknown";
}

namespace {

bool uses_images(LossKind kind) { return kind != LossKind::kGrouping; }
bool uses_patches(LossKind kind) {
  return kind == LossKind::kGrouping || kind == LossKind::kTotal;
}

int uniform_int(Engine& eng, int lo, int hi) {
  return lo + static_cast<int>(uniform_index(eng, static_cast<std::size_t>(hi - lo + 1)));
}

Mat<double> unit_rows(Eigen::Index rows, Eigen::Index cols, Engine& eng) {
  Mat<double> m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    do {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal01(eng);
    } while (m.row(r).norm() < 1e-3);
    m.row(r).normalize();
  }
  return m;
}

// Packs the differentiable inputs of an instance into one flat vector.
struct Packing {
  LossKind kind;
  LossInstance base;

  std::vector<double> pack(const LossInstance& in) const {
    std::vector<double> x;
    auto append = [&](const Mat<double>& m) { x.insert(x.end(), m.data(), m.data() + m.size()); };
    if (uses_images(kind)) append(in.image_globals);
    append(in.text_vectors);
    if (uses_patches(kind)) append(in.patches);
    x.push_back(in.tau);
    return x;
  }

  LossInstance unpack(std::span<const double> x) const {
    LossInstance in = base;
    std::size_t pos = 0;
    auto take = [&](Mat<double>& m) {
      std::copy(x.begin() + long(pos), x.begin() + long(pos + std::size_t(m.size())), m.data());
      pos += std::size_t(m.size());
    };
    if (uses_images(kind)) take(in.image_globals);
    take(in.text_vectors);
    if (uses_patches(kind)) take(in.patches);
    in.tau = x[pos];
    return in;
  }

  std::vector<double> pack_grad(const LossOutput<double>& out) const {
    std::vector<double> g;
    auto append = [&](const Mat<double>& m) { g.insert(g.end(), m.data(), m.data() + m.size()); };
    if (uses_images(kind)) append(out.grad_image_globals);
    append(out.grad_text_vectors);
    if (uses_patches(kind)) append(out.grad_patches);
    g.push_back(out.grad_tau);
    return g;
  }
};

}  // namespace

LossInstance random_loss_instance(LossKind kind, Engine& eng, const InstanceLimits& lim) {
  static constexpr std::array<double, 5> kSigmas{0.0, 0.1, 0.3, 0.5, 0.7};
  for (;;) {
    LossInstance in;
    const int n = uniform_int(eng, 2, lim.max_n);
    const int d = uniform_int(eng, 2, lim.max_d);
    in.k = kind == LossKind::kClip ? 1 : uniform_int(eng, 1, lim.max_k);
    in.hw = uniform_int(eng, 1, lim.max_hw);
    in.sigma = kSigmas[uniform_index(eng, kSigmas.size())];
    in.tau = uniform(eng, lim.min_tau, lim.max_tau);
    in.weights.mpcl = uniform(eng, 0.2, 1.5);
    in.weights.sub = uniform(eng, 0.2, 1.5);
    in.image_globals = unit_rows(n, d, eng);
    in.text_vectors = unit_rows(Eigen::Index(n) * in.k, d, eng);
    in.patches = unit_rows(Eigen::Index(n) * in.hw, d, eng);
    if (uses_patches(kind) &&
        grouping_boundary_margin<double>(in.text_vectors, in.patches, in.k, in.hw, in.sigma) <
            lim.boundary_margin) {
      continue;
    }
    return in;
  }
}

LossOutput<double> evaluate_loss(LossKind kind, const LossInstance& in) {
  switch (kind) {
    case LossKind::kClip:
      return clip_infonce<double>(in.image_globals, in.text_vectors, in.tau);
    case LossKind::kMpcl:
      return mpcl<double>(in.image_globals, in.text_vectors, in.k, in.tau);
    case LossKind::kGrouping:
      return grouping_loss<double>(in.text_vectors, in.patches, in.k, in.hw, in.sigma, in.tau,
                                   in.negatives);
    case LossKind::kTotal:
      return total_loss<double>(in.image_globals, in.text_vectors, in.patches, in.k, in.hw,
                                in.sigma, in.tau, in.weights, in.negatives);
  }
  throw std::invalid_argument("unknown loss kind");
}

FdReport check_loss_gradient(LossKind kind, const LossInstance& inst, const FdOptions& options) {
  const Packing packing{kind, inst};
  const auto x = packing.pack(inst);
  auto f = [&](std::span<const double> p) { return evaluate_loss(kind, packing.unpack(p)).value; };
  auto g = [&](std::span<const double> p) {
    return packing.pack_grad(evaluate_loss(kind, packing.unpack(p)));
  };
  RegionFn region;
  if (uses_patches(kind)) {
    region = [&](std::span<const double> p) {
      const auto in = packing.unpack(p);
      return grouping_region<double>(in.text_vectors, in.patches, in.k, in.hw, in.sigma);
    };
  }
  return finite_diff_check(f, g, x, options, region);
}

FdReport check_encoder_gradient(const DualEncoder<double>& model,
                                std::span<const Tensor* const> images,
                                std::span<const TokenIds* const> texts,
                                const FdOptions& options) {
  const auto& cfg = model.config();
  const Eigen::Index d = cfg.embed_dim, hw = cfg.num_patches();
  const auto ni = static_cast<Eigen::Index>(images.size());
  const auto nt = static_cast<Eigen::Index>(texts.size());
  Engine eng(derive_seed(options.seed, {0xC0DE}));
  Mat<double> r_glob(ni, d), r_patch(ni * hw, d), r_text(nt, d);
  for (auto* m : {&r_glob, &r_patch, &r_text}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = normal01(eng);
  }

  DualEncoder<double> probe = model;
  auto f = [&](std::span<const double> p) {
    std::copy(p.begin(), p.end(), probe.params().begin());
    double s = 0;
    if (ni > 0) {
      const auto fi = probe.forward_images(images);
      s += fi.globals.cwiseProduct(r_glob).sum() + fi.patches.cwiseProduct(r_patch).sum();
    }
    if (nt > 0) s += probe.forward_texts(texts).vectors.cwiseProduct(r_text).sum();
    return s;
  };
  auto g = [&](std::span<const double> p) {
    std::copy(p.begin(), p.end(), probe.params().begin());
    ParamVector<double> grad(p.size(), 0.0);
    if (ni > 0) probe.backward_images(probe.forward_images(images), r_glob, r_patch, grad);
    if (nt > 0) probe.backward_texts(probe.forward_texts(texts), r_text, grad);
    return std::vector<double>(grad.begin(), grad.end());
  };
  return finite_diff_check(f, g, model.params(), options);
}

}  // namespace dlip
