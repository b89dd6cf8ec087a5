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
#include <string_view>

#include "dlip/encoders.hpp"
#include "dlip/gradcheck.hpp"
#include "dlip/losses.hpp"
#include "dlip/rng.hpp"

namespace dlip {

enum class LossKind { kClip, kMpcl, kGrouping, kTotal };

std::string_view to_string(LossKind kind);

// Inputs for one loss evaluation (64-bit).
struct LossInstance {
  Mat<double> image_globals;  // N x d
  Mat<double> text_vectors;   // N*K x d
  Mat<double> patches;        // N*HW x d
  int k = 1;
  int hw = 1;
  double sigma = 0.0;
  double tau = kInitialTau;
  LossWeights weights;
  GroupingNegatives negatives = GroupingNegatives::kWithinImage;
};

struct InstanceLimits {
  int max_n = 8;
  int max_k = 6;
  int max_hw = 16;
  int max_d = 8;
  double min_tau = 0.05;
  double max_tau = 1.0;
  // Grouping instances whose cosines sit within this distance of a kink
  // (sigma or 0) are redrawn.
  double boundary_margin = 1e-4;
};

// Random unit-norm instance. clip instances use K = 1.
LossInstance random_loss_instance(LossKind kind, Engine& eng, const InstanceLimits& limits = {});

// Evaluates the loss on the instance's inputs.
LossOutput<double> evaluate_loss(LossKind kind, const LossInstance& inst);

// Finite-difference check of the gradients with respect to every embedding
// and tau, with region-aware redraws for the thresholded losses.
FdReport check_loss_gradient(LossKind kind, const LossInstance& inst, const FdOptions& options);

// Finite-difference check of encoder backward passes: the scalar is
// <R, outputs> for fixed random cotangents R over images and texts.
FdReport check_encoder_gradient(const DualEncoder<double>& model,
                                std::span<const Tensor* const> images,
                                std::span<const TokenIds* const> texts,
                                const FdOptions& options);

}  // namespace dlip
