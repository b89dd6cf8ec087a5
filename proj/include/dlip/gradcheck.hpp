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
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dlip {

struct FdDirection {
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct FdReport {
  std::vector<FdDirection> directions;
  double max_rel_error = 0;
  std::size_t worst_direction = 0;
  std::size_t redraws = 0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
  std::string to_text(const std::string& name, double tolerance) const;
};

struct FdOptions {
  int directions = 32;
  double step = 1e-5;
  std::uint64_t seed = 0;
  // |a - n| / max(|a|, |n|, abs_floor). Central differences at step 1e-5
  // carry roughly 1e-11 of rounding noise, so near-zero derivatives are
  // compared on an absolute scale.
  double abs_floor = 1e-6;
  int max_redraws = 100;
};

using ScalarFn = std::function<double(std::span<const double>)>;
using GradientFn = std::function<std::vector<double>(std::span<const double>)>;
// Identifies the smooth piece containing a point; directions whose probe
// points x +- h u land in a different piece than x are redrawn.
using RegionFn = std::function<std::vector<std::uint8_t>(std::span<const double>)>;

// Compares g(x).u against (f(x + h u) - f(x - h u)) / 2h over random unit
// directions u.
FdReport finite_diff_check(const ScalarFn& f, const GradientFn& grad, std::span<const double> x,
                           const FdOptions& options = {}, const RegionFn& region = {});

}  // namespace dlip
