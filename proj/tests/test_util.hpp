// Copyright 2026 The sqnreg Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SQNREG_TESTS_TEST_UTIL_HPP_
#define SQNREG_TESTS_TEST_UTIL_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "sqnreg.hpp"

namespace sqnreg::testing {

inline Image random_image(Rng& rng, const GridSpec& g, double lo = 0.0, double hi = 1.0) {
  Image img(g);
  for (auto& v : img.data) v = rng.uniform(lo, hi);
  return img;
}

/// Smooth bump image, non-constant everywhere on small grids.
inline Image smooth_image(Rng& rng, const GridSpec& g) {
  Image img(g);
  const double a = rng.uniform(0.5, 1.5), b = rng.uniform(0.5, 1.5), c = rng.uniform(0.0, 6.0);
  for (int j = 0; j < g.dims[1]; ++j)
    for (int i = 0; i < g.dims[0]; ++i) {
      const Point x = g.center(i, j);
      img.at(i, j) = std::sin(a * x[0] + c) * std::cos(b * x[1]) + 0.2 * rng.uniform();
    }
  return img;
}

inline ImageStack random_stack(Rng& rng, const GridSpec& g, int K) {
  std::vector<Image> images;
  for (int k = 0; k < K; ++k) images.push_back(random_image(rng, g));
  return ImageStack(std::move(images));
}

inline DisplacementField random_field(Rng& rng, const GridSpec& g, double amp) {
  DisplacementField f(g);
  for (auto& v : f.u) v = rng.uniform(-amp, amp);
  return f;
}

inline std::vector<DisplacementField> random_fields(Rng& rng, const GridSpec& g, int K, double amp) {
  std::vector<DisplacementField> out;
  for (int k = 0; k < K; ++k) out.push_back(random_field(rng, g, amp));
  return out;
}

/// n x K feature matrix with quadrature weight w.
inline FeatureMatrix feature_matrix(const Eigen::MatrixXd& M, double w = 1.0,
                                    FeatureMapKind kind = FeatureMapKind::intensity()) {
  FeatureMatrix F;
  F.n = static_cast<int>(M.rows());
  F.K = static_cast<int>(M.cols());
  F.kind = kind;
  F.quad_weight = w;
  F.entries.assign(M.data(), M.data() + M.size());
  return F;
}

inline Eigen::MatrixXd random_unit_columns(Rng& rng, int n, int K, double w = 1.0) {
  Eigen::MatrixXd M(n, K);
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < n; ++i) M(i, k) = rng.uniform(-1.0, 1.0);
    M.col(k) /= std::sqrt(w) * M.col(k).norm();
  }
  return M;
}

inline std::vector<double> flat(const std::vector<std::vector<double>>& g) {
  std::vector<double> out;
  for (const auto& v : g) out.insert(out.end(), v.begin(), v.end());
  return out;
}

inline std::vector<double> flat(const Eigen::MatrixXd& M) { return {M.data(), M.data() + M.size()}; }

}  // namespace sqnreg::testing

#endif  // SQNREG_TESTS_TEST_UTIL_HPP_
