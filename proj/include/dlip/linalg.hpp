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

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "dlip/errors.hpp"

namespace dlip {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
// Flat parameter and gradient storage. The base address is aligned so that
// Eigen's vectorized kernels peel the same way on every allocation, which
// keeps reductions over mapped slices bitwise reproducible.
template <class T>
using ParamVector = std::vector<T, Eigen::aligned_allocator<T>>;

inline constexpr double kNormEpsilon = 1e-12;

// x / ||x||_2. Throws DegenerateVector when ||x|| <= 1e-12.
template <class T>
Vec<T> l2_normalize(const Vec<T>& x) {
  const T n = x.norm();
  if (!(n > static_cast<T>(kNormEpsilon))) {
    throw DegenerateVector("cannot normalize a vector with norm " + std::to_string(double(n)));
  }
  return x / n;
}

// Backward of u = x/||x||: dx = (I - u u^T) du / ||x||.
template <class T>
Vec<T> l2_normalize_backward(const Vec<T>& u, T norm, const Vec<T>& du) {
  return (du - u * u.dot(du)) / norm;
}

// Normalizes each row in place; returns the original row norms.
template <class T>
Vec<T> normalize_rows(Mat<T>& m) {
  Vec<T> norms(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const T n = m.row(r).norm();
    if (!(n > static_cast<T>(kNormEpsilon))) {
      throw DegenerateVector("cannot normalize row " + std::to_string(r) + " with norm " +
                             std::to_string(double(n)));
    }
    norms(r) = n;
    m.row(r) /= n;
  }
  return norms;
}

// Row-wise normalize backward given the normalized rows and original norms.
template <class T>
Mat<T> normalize_rows_backward(const Mat<T>& unit, const Vec<T>& norms, const Mat<T>& d_unit) {
  Mat<T> dx(unit.rows(), unit.cols());
  for (Eigen::Index r = 0; r < unit.rows(); ++r) {
    const T proj = unit.row(r).dot(d_unit.row(r));
    dx.row(r) = (d_unit.row(r) - proj * unit.row(r)) / norms(r);
  }
  return dx;
}

template <class T>
bool all_finite(const Mat<T>& m) {
  return m.allFinite();
}

}  // namespace dlip
