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

// Naive-loop reference implementations used only by tests. They share no code
// with the vectorized library paths.

#include <cstddef>
#include <string>
#include <vector>

#include "dlip/linalg.hpp"
#include "dlip/rng.hpp"

namespace dlip::oracle {

using Rows = std::vector<std::vector<double>>;

Rows to_rows(const Mat<double>& m);
double dot(const std::vector<double>& a, const std::vector<double>& b);

double clip_infonce(const Rows& images, const Rows& texts, double tau);
double mpcl(const Rows& images, const Rows& texts, int k, double tau);
// Within-image negatives unless cross_image.
double grouping_loss(const Rows& texts, const Rows& patches, int k, int hw, double sigma,
                     double tau, bool cross_image = false);
// Pooling coefficients for one image (K x HW), fallback rows one-hot.
Rows pooling_coefficients(const Rows& texts, const Rows& patches, double sigma);

// Sentence splitter by character accumulation.
std::vector<std::string> split_sentences(const std::string& text);

// Random matrix with unit-norm rows.
Mat<double> random_unit_rows(Eigen::Index rows, Eigen::Index cols, Engine& eng);

}  // namespace dlip::oracle
