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

#include "dlip/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "dlip/rng.hpp"

namespace dlip {

std::string FdReport::to_text(const std::string& name, double tolerance) const {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "gradcheck %s: %zu directions, %zu redraws\n", name.c_str(),
                directions.size(), redraws);
  out += buf;
  for (std::size_t i = 0; i < directions.size(); ++i) {
    const auto& d = directions[i];
    std::snprintf(buf, sizeof buf, "  dir %3zu  analytic % .12e  numeric % .12e  rel %.3e\n", i,
                  d.analytic, d.numeric, d.rel_error);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "max_rel_error %.6e (direction %zu) tolerance %.1e %s\n",
                max_rel_error, worst_direction, tolerance, passed(tolerance) ? "PASS" : "FAIL");
  out += buf;
  return out;
}

FdReport finite_diff_check(const ScalarFn& f, const GradientFn& grad, std::span<const double> x,
                           const FdOptions& opt, const RegionFn& region) {
  const std::size_t n = x.size();
  if (n == 0) throw std::invalid_argument("finite_diff_check needs a non-empty point");
  const std::vector<double> g = grad(x);
  if (g.size() != n) throw std::invalid_argument("gradient size does not match the point");
  const auto base_region = region ? region(x) : std::vector<std::uint8_t>{};

  Engine eng(opt.seed);
  FdReport report;
  std::vector<double> u(n), xp(n), xm(n);
  for (int k = 0; k < opt.directions; ++k) {
    int attempts = 0;
    for (;;) {
      for (auto& v : u) v = normal01(eng);
      const double norm = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
      for (auto& v : u) v /= norm;
      for (std::size_t i = 0; i < n; ++i) {
        xp[i] = x[i] + opt.step * u[i];
        xm[i] = x[i] - opt.step * u[i];
      }
      if (!region || (region(xp) == base_region && region(xm) == base_region)) break;
      ++report.redraws;
      if (++attempts >= opt.max_redraws) {
        throw std::runtime_error("finite_diff_check: every direction crosses a region boundary");
      }
    }
    FdDirection d;
    d.analytic = std::inner_product(g.begin(), g.end(), u.begin(), 0.0);
    d.numeric = (f(xp) - f(xm)) / (2.0 * opt.step);
    const double denom = std::max({std::abs(d.analytic), std::abs(d.numeric), opt.abs_floor});
    d.rel_error = std::abs(d.analytic - d.numeric) / denom;
    if (d.rel_error > report.max_rel_error) {
      report.max_rel_error = d.rel_error;
      report.worst_direction = report.directions.size();
    }
    report.directions.push_back(d);
  }
  return report;
}

}  // namespace dlip
