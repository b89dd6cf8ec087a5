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

#include "oracles.hpp"

#include <cmath>

namespace dlip::oracle {

Rows to_rows(const Mat<double>& m) {
  Rows out(static_cast<std::size_t>(m.rows()), std::vector<double>(std::size_t(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[std::size_t(r)][std::size_t(c)] = m(r, c);
  }
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

namespace {

// -log( exp(pos) / sum_j exp(all[j]) ), computed term by term.
double neg_log_softmax(double pos, const std::vector<double>& all) {
  double denom = 0;
  for (double a : all) denom += std::exp(a - pos);
  return std::log(denom);
}

}  // namespace

double clip_infonce(const Rows& v, const Rows& t, double tau) {
  const std::size_t n = v.size();
  double t2v = 0, v2t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row;
    for (std::size_t j = 0; j < n; ++j) row.push_back(dot(v[j], t[i]) / tau);
    t2v += neg_log_softmax(dot(v[i], t[i]) / tau, row);
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row;
    for (std::size_t j = 0; j < n; ++j) row.push_back(dot(t[j], v[i]) / tau);
    v2t += neg_log_softmax(dot(t[i], v[i]) / tau, row);
  }
  return 0.5 * (t2v / double(n) + v2t / double(n));
}

double mpcl(const Rows& v, const Rows& t, int k, double tau) {
  const std::size_t n = v.size(), kk = std::size_t(k);
  double t2v = 0, v2t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < kk; ++j) {
      const auto& tij = t[i * kk + j];
      std::vector<double> imgs;
      for (std::size_t m = 0; m < n; ++m) imgs.push_back(dot(v[m], tij) / tau);
      t2v += neg_log_softmax(dot(v[i], tij) / tau, imgs);
      std::vector<double> txts;
      for (std::size_t m = 0; m < n; ++m) {
        for (std::size_t jj = 0; jj < kk; ++jj) txts.push_back(dot(t[m * kk + jj], v[i]) / tau);
      }
      v2t += neg_log_softmax(dot(tij, v[i]) / tau, txts);
    }
  }
  const double terms = double(n * kk);
  return 0.5 * (t2v / terms + v2t / terms);
}

Rows pooling_coefficients(const Rows& texts, const Rows& patches, double sigma) {
  Rows coef(texts.size(), std::vector<double>(patches.size(), 0.0));
  for (std::size_t j = 0; j < texts.size(); ++j) {
    double z = 0;
    std::vector<double> w(patches.size());
    std::size_t best = 0;
    double best_w = -1;
    for (std::size_t n = 0; n < patches.size(); ++n) {
      const double c = dot(texts[j], patches[n]);
      const double raw = c > 0 ? c : 0.0;
      if (raw > best_w) {
        best_w = raw;
        best = n;
      }
      w[n] = raw >= sigma ? raw : 0.0;
      z += w[n];
    }
    if (z > 0) {
      for (std::size_t n = 0; n < patches.size(); ++n) coef[j][n] = w[n] / z;
    } else {
      coef[j][best] = 1.0;
    }
  }
  return coef;
}

double grouping_loss(const Rows& texts, const Rows& patches, int k, int hw, double sigma,
                     double tau, bool cross_image) {
  const std::size_t kk = std::size_t(k), h = std::size_t(hw), n = texts.size() / kk;
  Rows pooled;
  for (std::size_t i = 0; i < n; ++i) {
    Rows ti(texts.begin() + long(i * kk), texts.begin() + long((i + 1) * kk));
    Rows pi(patches.begin() + long(i * h), patches.begin() + long((i + 1) * h));
    const Rows coef = pooling_coefficients(ti, pi, sigma);
    for (std::size_t j = 0; j < kk; ++j) {
      std::vector<double> u(texts[0].size(), 0.0);
      for (std::size_t m = 0; m < h; ++m) {
        for (std::size_t c = 0; c < u.size(); ++c) u[c] += coef[j][m] * pi[m][c];
      }
      const double norm = std::sqrt(dot(u, u));
      for (auto& x : u) x /= norm;
      pooled.push_back(u);
    }
  }
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < kk; ++j) {
      const auto& t = texts[i * kk + j];
      std::vector<double> all;
      if (cross_image) {
        for (const auto& p : pooled) all.push_back(dot(p, t) / tau);
      } else {
        for (std::size_t m = 0; m < kk; ++m) all.push_back(dot(pooled[i * kk + m], t) / tau);
      }
      total += neg_log_softmax(dot(pooled[i * kk + j], t) / tau, all);
    }
  }
  return total / double(n * kk);
}

Mat<double> random_unit_rows(Eigen::Index rows, Eigen::Index cols, Engine& eng) {
  Mat<double> m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal01(eng);
    m.row(r).normalize();
  }
  return m;
}

std::vector<std::string> split_sentences(const std::string& text) {
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; };
  std::vector<std::string> out;
  std::string buf;
  auto flush = [&] {
    std::size_t b = 0, e = buf.size();
    while (b < e && space(buf[b])) ++b;
    while (e > b && space(buf[e - 1])) --e;
    if (e > b) out.push_back(buf.substr(b, e - b));
    buf.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    buf.push_back(text[i]);
    const bool stop = text[i] == '.' || text[i] == '!' || text[i] == '?';
    if (stop && (i + 1 == text.size() || space(text[i + 1]))) flush();
  }
  flush();
  return out;
}

}  // namespace dlip::oracle
