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

#ifndef SQNREG_MEASURES_HPP_
#define SQNREG_MEASURES_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sqnreg/error.hpp"
#include "sqnreg/features.hpp"
#include "sqnreg/grid.hpp"
#include "sqnreg/parallel.hpp"
#include "sqnreg/spectral.hpp"

namespace sqnreg {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Distance measure selection. Groupwise kinds act on the feature matrix of
/// the whole stack; pair kinds compare two images.
struct MeasureKind {
  enum class Tag { SSDPair, NGFPair, SqN, CorrDev, LogDet };

  Tag tag = Tag::SqN;
  double q = 4.0;        // SqN, CorrDev; kInf allowed
  double eta_pt = 1e-2;  // NGFPair
  double jitter = 0.0;   // LogDet
  FeatureMapKind feature = FeatureMapKind::ngf(1e-2);

  static MeasureKind sqn(double q, FeatureMapKind f = FeatureMapKind::ngf(1e-2)) {
    return {Tag::SqN, q, 1e-2, 0.0, f};
  }
  static MeasureKind sqn4(FeatureMapKind f = FeatureMapKind::ngf(1e-2)) { return sqn(4.0, f); }
  static MeasureKind sqn_inf(FeatureMapKind f = FeatureMapKind::ngf(1e-2)) { return sqn(kInf, f); }
  static MeasureKind corr_dev(double q, FeatureMapKind f = FeatureMapKind::ngf(1e-2)) {
    return {Tag::CorrDev, q, 1e-2, 0.0, f};
  }
  static MeasureKind logdet(double jitter, FeatureMapKind f = FeatureMapKind::ngf(1e-2)) {
    return {Tag::LogDet, 0.0, 1e-2, jitter, f};
  }
  static MeasureKind ssd() { return {Tag::SSDPair, 0.0, 1e-2, 0.0, FeatureMapKind::intensity()}; }
  static MeasureKind ngf(double eta_pt) { return {Tag::NGFPair, 0.0, eta_pt, 0.0, FeatureMapKind::intensity()}; }

  bool is_groupwise() const { return tag == Tag::SqN || tag == Tag::CorrDev || tag == Tag::LogDet; }

  void validate() const {
    if (tag == Tag::SqN || tag == Tag::CorrDev)
      detail::require(q >= 1.0, ErrorCategory::InvalidArgument, "Schatten exponent q must be >= 1");
    if (tag == Tag::NGFPair)
      detail::require(std::isfinite(eta_pt) && eta_pt > 0.0, ErrorCategory::InvalidArgument,
                      "NGF distance needs eta > 0");
    if (tag == Tag::LogDet)
      detail::require(std::isfinite(jitter) && jitter >= 0.0, ErrorCategory::InvalidArgument,
                      "log-det jitter must be >= 0");
    if (is_groupwise()) feature.validate();
  }
};

/// Value of a feature-matrix measure and its Euclidean gradient dD/dF.
struct SpectralEval {
  double value = 0.0;
  Eigen::MatrixXd dF;
  bool subgradient = false;
  ThinSVD svd;
};

/// Finite q: K - sum sigma_k^q.  q = inf: -sigma_max.  Lower is better aligned.
inline SpectralEval sqn(const FeatureMatrix& F, double q) {
  detail::require(q >= 1.0, ErrorCategory::InvalidArgument, "Schatten exponent q must be >= 1");
  SpectralEval out;
  out.svd = thin_svd(F);
  const auto& svd = out.svd;
  Eigen::VectorXd dsig = Eigen::VectorXd::Zero(svd.size());
  if (std::isinf(q)) {
    detail::require(svd.sigma_max() > 0.0, ErrorCategory::Numerical,
                    "singular value too small for stable derivative");
    out.value = -svd.sigma_max();
    dsig(0) = -1.0;
    out.subgradient = svd.gap(0) < svd.eps_gap();
  } else {
    double sum = 0.0;
    for (int k = 0; k < svd.size(); ++k) {
      sum += std::pow(svd.sigma(k), q);
      dsig(k) = -q * std::pow(svd.sigma(k), q - 1.0);
    }
    out.value = F.K - sum;
  }
  bool dropped = false;
  out.dF = sigma_pullback(F, svd, dsig, &dropped);
  // For q > 1 the dropped terms have vanishing derivative; at q == 1 the
  // function has a kink at sigma = 0.
  if (dropped && q <= 1.0) out.subgradient = true;
  return out;
}

/// ||C - I||_{S,q}^q for finite q (so q = 2 gives the squared Frobenius norm),
/// and the spectral norm of C - I for q = inf. Larger means more correlated.
inline SpectralEval corr_dev_eval(const FeatureMatrix& F, double q) {
  detail::require(q >= 1.0, ErrorCategory::InvalidArgument, "Schatten exponent q must be >= 1");
  SpectralEval out;
  out.svd = thin_svd(F);
  const auto& svd = out.svd;
  const int K = svd.size();
  Eigen::VectorXd dlam = Eigen::VectorXd::Zero(K);
  if (std::isinf(q)) {
    int arg = 0;
    for (int k = 1; k < K; ++k)
      if (std::abs(svd.lambda(k) - 1.0) > std::abs(svd.lambda(arg) - 1.0)) arg = k;
    const double best = std::abs(svd.lambda(arg) - 1.0);
    out.value = best;
    dlam(arg) = svd.lambda(arg) >= 1.0 ? 1.0 : -1.0;
    for (int k = 0; k < K; ++k)
      if (k != arg && best - std::abs(svd.lambda(k) - 1.0) < 1e-8 * std::max(1.0, best))
        out.subgradient = true;
  } else {
    double sum = 0.0;
    for (int k = 0; k < K; ++k) {
      const double d = svd.lambda(k) - 1.0;
      sum += std::pow(std::abs(d), q);
      dlam(k) = q * std::pow(std::abs(d), q - 1.0) * (d >= 0.0 ? 1.0 : -1.0);
    }
    out.value = sum;
  }
  out.dF = spectral_pullback(F, svd, dlam);
  return out;
}

inline double corr_dev(const FeatureMatrix& F, double q) { return corr_dev_eval(F, q).value; }

/// sum_k log(lambda_k + jitter) = log det(C + jitter I).
inline SpectralEval logdet_total_correlation(const FeatureMatrix& F, double jitter) {
  detail::require(jitter >= 0.0, ErrorCategory::InvalidArgument, "log-det jitter must be >= 0");
  SpectralEval out;
  out.svd = thin_svd(F);
  const auto& svd = out.svd;
  const double floor = 1e-14 * std::max(svd.lambda.sum(), std::numeric_limits<double>::min());
  Eigen::VectorXd dlam(svd.size());
  double sum = 0.0;
  for (int k = 0; k < svd.size(); ++k) {
    const double shifted = svd.lambda(k) + jitter;
    detail::require(shifted > floor, ErrorCategory::Degenerate,
                    "rank-deficient correlation: log-det undefined");
    sum += std::log(shifted);
    dlam(k) = 1.0 / shifted;
  }
  out.value = sum;
  out.dF = spectral_pullback(F, svd, dlam);
  return out;
}

/// Value of a two-image measure with sensitivities to both images' intensities.
struct PairEval {
  double value = 0.0;
  std::vector<double> dA;
  std::vector<double> dB;
};

/// 1/2 ||B - A||^2_L2.
inline PairEval ssd_pair(const Image& A, const Image& B) {
  detail::require(A.grid == B.grid, ErrorCategory::InvalidArgument, "SSD: image grids differ");
  const double w = A.grid.cell_volume();
  PairEval out;
  out.dA.resize(A.data.size());
  out.dB.resize(A.data.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < A.data.size(); ++i) {
    const double r = B.data[i] - A.data[i];
    sum += r * r;
    out.dB[i] = w * r;
    out.dA[i] = -w * r;
  }
  out.value = 0.5 * w * sum;
  return out;
}

/// 1/2 integral of 1 - <gradA/|gradA|_eta, gradB/|gradB|_eta>^2 with
/// |a|_eta = sqrt(<a,a> + eta), midpoint quadrature.
inline PairEval ngf_pair(const Image& A, const Image& B, double eta_pt) {
  detail::require(A.grid == B.grid, ErrorCategory::InvalidArgument, "NGF: image grids differ");
  detail::require(std::isfinite(eta_pt) && eta_pt > 0.0, ErrorCategory::InvalidArgument,
                  "NGF distance needs eta > 0");
  const auto& g = A.grid;
  const int n = g.size();
  const double w = g.cell_volume();
  const auto ga = gradient_central(A);
  const auto gb = gradient_central(B);
  std::vector<double> cot_a(2 * static_cast<std::size_t>(n)), cot_b(2 * static_cast<std::size_t>(n));
  double sum = 0.0;
  for (int p = 0; p < n; ++p) {
    const double a1 = ga[p], a2 = ga[n + p], b1 = gb[p], b2 = gb[n + p];
    const double na = std::sqrt(a1 * a1 + a2 * a2 + eta_pt);
    const double nb = std::sqrt(b1 * b1 + b2 * b2 + eta_pt);
    const double ab = a1 * b1 + a2 * b2;
    const double r = ab / (na * nb);
    sum += 1.0 - r * r;
    // d/db of -1/2 w r^2 = -w r (a/(na nb) - ab b/(na nb^3)), symmetric in a.
    const double s = -w * r / (na * nb);
    cot_b[p] = s * (a1 - ab * b1 / (nb * nb));
    cot_b[n + p] = s * (a2 - ab * b2 / (nb * nb));
    cot_a[p] = s * (b1 - ab * a1 / (na * na));
    cot_a[n + p] = s * (b2 - ab * a2 / (na * na));
  }
  PairEval out;
  out.value = 0.5 * w * sum;
  out.dA = gradient_central_adjoint(g, cot_a);
  out.dB = gradient_central_adjoint(g, cot_b);
  return out;
}

inline PairEval pair_eval(const MeasureKind& kind, const Image& A, const Image& B) {
  switch (kind.tag) {
    case MeasureKind::Tag::SSDPair: return ssd_pair(A, B);
    case MeasureKind::Tag::NGFPair: return ngf_pair(A, B, kind.eta_pt);
    default: throw Error(ErrorCategory::InvalidArgument, "not a pairwise measure");
  }
}

/// Groupwise measure on an assembled feature matrix, phrased for minimization
/// (CorrDev is negated).
inline SpectralEval spectral_measure(const FeatureMatrix& F, const MeasureKind& kind) {
  switch (kind.tag) {
    case MeasureKind::Tag::SqN: return sqn(F, kind.q);
    case MeasureKind::Tag::CorrDev: {
      auto out = corr_dev_eval(F, kind.q);
      out.value = -out.value;
      out.dF = -out.dF;
      return out;
    }
    case MeasureKind::Tag::LogDet: return logdet_total_correlation(F, kind.jitter);
    default: throw Error(ErrorCategory::InvalidArgument, "not a groupwise measure");
  }
}

/// Measure value with per-image displacement gradients (2n each, u1 plane then u2 plane).
struct MeasureEval {
  double value = 0.0;
  std::vector<std::vector<double>> grad;
  Eigen::VectorXd sigma;
  Eigen::MatrixXd C;
  bool subgradient = false;
};

namespace detail {

inline std::vector<WarpResult> warp_all(const ImageStack& stack,
                                        const std::vector<DisplacementField>& fields,
                                        const Exec& exec) {
  stack.validate();
  detail::require(fields.size() == stack.images.size(), ErrorCategory::InvalidArgument,
                  "need one displacement field per image");
  std::vector<WarpResult> warped(fields.size());
  parallel_for(stack.size(), exec, [&](int k) {
    try {
      warped[k] = warp_with_derivative(stack.images[k], fields[k]);
    } catch (const Error& e) {
      throw e.annotated("image " + std::to_string(k) + ": ");
    }
  });
  return warped;
}

/// dD/du = dD/dT_warped * grad(T)(x + u), per displacement component.
inline std::vector<double> chain_warp(const WarpResult& w, std::span<const double> dT) {
  const std::size_t n = dT.size();
  std::vector<double> out(2 * n);
  for (std::size_t p = 0; p < n; ++p) {
    out[p] = dT[p] * w.d_du[p];
    out[n + p] = dT[p] * w.d_du[n + p];
  }
  return out;
}

}  // namespace detail

/// Groupwise kinds: warp, assemble features, spectral measure, feature adjoint,
/// warp chain rule. Pair kinds: sum over consecutive pairs (k-1, k).
inline MeasureEval measure_eval(const ImageStack& stack, const std::vector<DisplacementField>& fields,
                                const MeasureKind& kind, const Exec& exec = {}) {
  kind.validate();
  auto warped = detail::warp_all(stack, fields, exec);
  const int K = stack.size();
  MeasureEval out;
  out.grad.resize(K);

  if (kind.is_groupwise()) {
    // Columns go through the spectral step in lexicographic order of the warped
    // images, which makes the result bitwise independent of the stack order.
    std::vector<int> order(K);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const auto& da = warped[a].image.data;
      const auto& db = warped[b].image.data;
      return std::lexicographical_compare(da.begin(), da.end(), db.begin(), db.end());
    });
    std::vector<Image> images;
    images.reserve(K);
    for (int k = 0; k < K; ++k) images.push_back(warped[k].image);
    const FeatureMatrix stacked = assemble_warped(images, kind.feature);
    FeatureMatrix F = stacked;
    const std::size_t n = static_cast<std::size_t>(F.n);
    for (int j = 0; j < K; ++j)
      std::copy_n(stacked.entries.begin() + static_cast<std::ptrdiff_t>(order[j] * n), n,
                  F.entries.begin() + static_cast<std::ptrdiff_t>(j * n));
    const SpectralEval se = spectral_measure(F, kind);
    out.value = se.value;
    out.subgradient = se.subgradient;
    out.sigma = se.svd.sigma;
    const Eigen::MatrixXd C = se.svd.V * se.svd.lambda.asDiagonal() * se.svd.V.transpose();
    out.C.resize(K, K);
    for (int a = 0; a < K; ++a)
      for (int b = 0; b < K; ++b) out.C(order[a], order[b]) = C(a, b);
    parallel_for(K, exec, [&](int j) {
      const int k = order[j];
      try {
        const auto cot = std::span<const double>(se.dF.col(j).data(), static_cast<std::size_t>(F.n));
        const auto dT = feature_adjoint(kind.feature, images[k], cot);
        out.grad[k] = detail::chain_warp(warped[k], dT);
      } catch (const Error& e) {
        throw e.annotated("image " + std::to_string(k) + ": ");
      }
    });
    return out;
  }

  const std::size_t n = static_cast<std::size_t>(stack.grid().size());
  std::vector<PairEval> pairs(K - 1);
  parallel_for(K - 1, exec, [&](int k) { pairs[k] = pair_eval(kind, warped[k].image, warped[k + 1].image); });
  std::vector<std::vector<double>> dT(K, std::vector<double>(n, 0.0));
  for (int k = 0; k + 1 < K; ++k) {
    out.value += pairs[k].value;
    for (std::size_t p = 0; p < n; ++p) {
      dT[k][p] += pairs[k].dA[p];
      dT[k + 1][p] += pairs[k].dB[p];
    }
  }
  for (int k = 0; k < K; ++k) out.grad[k] = detail::chain_warp(warped[k], dT[k]);
  return out;
}

}  // namespace sqnreg

#endif  // SQNREG_MEASURES_HPP_
