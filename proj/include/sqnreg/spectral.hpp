/*
 * Copyright 2026 The sqnreg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SQNREG_SPECTRAL_HPP_
#define SQNREG_SPECTRAL_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "sqnreg/error.hpp"
#include "sqnreg/features.hpp"

namespace sqnreg {

inline Eigen::Map<const Eigen::MatrixXd> as_matrix(const FeatureMatrix& F) {
  return {F.entries.data(), F.n, F.K};
}

/// C = w F^T F, the K x K correlation (Gram) matrix of the feature columns.
struct CorrelationMatrix {
  Eigen::MatrixXd C;

  int size() const { return static_cast<int>(C.rows()); }
  double trace() const { return C.trace(); }
};

inline CorrelationMatrix gram(const FeatureMatrix& F) {
  const auto M = as_matrix(F);
  Eigen::MatrixXd C = F.quad_weight * (M.transpose() * M);
  return {0.5 * (C + C.transpose())};
}

/// Singular values of the quadrature-weighted feature matrix together with its
/// right singular vectors. Left vectors are never stored: u_k = sqrt(w) F v_k / sigma_k.
struct ThinSVD {
  Eigen::VectorXd lambda;  // eigenvalues of C, descending, clamped at 0
  Eigen::VectorXd sigma;   // sqrt(lambda)
  Eigen::MatrixXd V;       // columns are v_k
  double quad_weight = 1.0;

  int size() const { return static_cast<int>(sigma.size()); }
  double sigma_max() const { return sigma.size() ? sigma(0) : 0.0; }

  /// Singular values at or below this are treated as zero for derivatives.
  double eps_sigma() const { return 1e-10 * sigma_max(); }
  double eps_gap() const { return 1e-8 * sigma_max(); }

  /// Distance from sigma_k to its nearest neighbour in the spectrum.
  double gap(int k) const {
    double g = std::numeric_limits<double>::infinity();
    if (k > 0) g = std::min(g, sigma(k - 1) - sigma(k));
    if (k + 1 < size()) g = std::min(g, sigma(k) - sigma(k + 1));
    return g;
  }

  /// Unit left singular vector u_k (Euclidean norm 1).
  Eigen::VectorXd left_vector(const FeatureMatrix& F, int k) const {
    return std::sqrt(quad_weight) * (as_matrix(F) * V.col(k)) / sigma(k);
  }
};

/// Symmetric eigendecomposition, sorted descending, eigenvalues clamped at
/// zero, sign fixed so the largest-magnitude entry of each vector is positive
/// (first such entry on ties).
inline ThinSVD spectrum(const CorrelationMatrix& corr, double quad_weight) {
  const int K = corr.size();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(corr.C);
  if (solver.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "eigensolver did not converge on a " << K << "x" << K
        << " correlation matrix (trace " << corr.trace() << ")";
    throw Error(ErrorCategory::Numerical, msg.str());
  }
  ThinSVD out;
  out.quad_weight = quad_weight;
  out.lambda.resize(K);
  out.sigma.resize(K);
  out.V.resize(K, K);
  for (int k = 0; k < K; ++k) {
    const int src = K - 1 - k;
    out.lambda(k) = std::max(solver.eigenvalues()(src), 0.0);
    out.sigma(k) = std::sqrt(out.lambda(k));
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    int arg = 0;
    for (int j = 1; j < K; ++j)
      if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
    if (v(arg) < 0.0) v = -v;
    out.V.col(k) = v;
  }
  return out;
}

inline ThinSVD thin_svd(const FeatureMatrix& F) {
  detail::require(F.K <= F.n, ErrorCategory::InvalidArgument,
                  "thin SVD needs at least as many feature entries as images");
  return spectrum(gram(F), F.quad_weight);
}

struct SigmaDerivative {
  Eigen::MatrixXd dF;        // n x K
  bool subgradient = false;  // sigma_k is (nearly) repeated
};

/// d sigma_k / dF = sqrt(w) u_k v_k^T = w F v_k v_k^T / sigma_k.
inline SigmaDerivative dsigma(const FeatureMatrix& F, const ThinSVD& svd, int k) {
  detail::require(k >= 0 && k < svd.size(), ErrorCategory::InvalidArgument,
                  "dsigma: singular value index out of range");
  detail::require(svd.sigma(k) > svd.eps_sigma() && svd.sigma(k) > 0.0, ErrorCategory::Numerical,
                  "singular value too small for stable derivative");
  SigmaDerivative out;
  const Eigen::VectorXd Fv = as_matrix(F) * svd.V.col(k);
  out.dF = (svd.quad_weight / svd.sigma(k)) * Fv * svd.V.col(k).transpose();
  out.subgradient = svd.gap(k) < svd.eps_gap();
  return out;
}

/// Chain rule through the singular values: given dD/dsigma_k, returns
/// sum_k dD/dsigma_k * dsigma_k/dF = w F V diag(dD/dsigma / sigma) V^T.
/// Terms with sigma_k <= eps_sigma are dropped; `dropped` reports whether any
/// of them carried a nonzero coefficient.
inline Eigen::MatrixXd sigma_pullback(const FeatureMatrix& F, const ThinSVD& svd,
                                      const Eigen::VectorXd& dsig, bool* dropped = nullptr) {
  Eigen::VectorXd scaled = Eigen::VectorXd::Zero(svd.size());
  bool any_dropped = false;
  for (int k = 0; k < svd.size(); ++k) {
    if (svd.sigma(k) > svd.eps_sigma() && svd.sigma(k) > 0.0)
      scaled(k) = dsig(k) / svd.sigma(k);
    else if (dsig(k) != 0.0)
      any_dropped = true;
  }
  if (dropped) *dropped = any_dropped;
  const Eigen::MatrixXd G = svd.V * scaled.asDiagonal() * svd.V.transpose();
  return svd.quad_weight * (as_matrix(F) * G);
}

/// dF for a spectral function sum_k phi(lambda_k) given the coefficients
/// c_k = d phi / d lambda_k:  dF = 2 w F V diag(c) V^T.
inline Eigen::MatrixXd spectral_pullback(const FeatureMatrix& F, const ThinSVD& svd,
                                         const Eigen::VectorXd& dlambda) {
  const Eigen::MatrixXd G = svd.V * dlambda.asDiagonal() * svd.V.transpose();
  return 2.0 * svd.quad_weight * (as_matrix(F) * G);
}

}  // namespace sqnreg

#endif  // SQNREG_SPECTRAL_HPP_
