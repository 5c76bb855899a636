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

#ifndef SQNREG_FEATURES_HPP_
#define SQNREG_FEATURES_HPP_

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sqnreg/error.hpp"
#include "sqnreg/grid.hpp"

namespace sqnreg {

struct FeatureMapKind {
  enum class Tag { IntensityNormalized, NGF };

  Tag tag = Tag::NGF;
  double eta = 1e-2;  // NGF only

  static FeatureMapKind intensity() { return {Tag::IntensityNormalized, 0.0}; }
  static FeatureMapKind ngf(double eta) { return {Tag::NGF, eta}; }

  void validate() const {
    if (tag == Tag::NGF)
      detail::require(std::isfinite(eta) && eta > 0.0, ErrorCategory::InvalidArgument,
                      "NGF feature needs eta > 0");
  }

  int dimension(const GridSpec& g) const { return tag == Tag::NGF ? 2 * g.size() : g.size(); }
};

/// n x K matrix of feature columns, column-major. Inner products between
/// columns carry the quadrature weight h1*h2 so that they approximate L2.
struct FeatureMatrix {
  int n = 0;
  int K = 0;
  std::vector<double> entries;
  FeatureMapKind kind;
  double quad_weight = 1.0;

  std::span<double> col(int k) { return {entries.data() + static_cast<std::size_t>(k) * n, static_cast<std::size_t>(n)}; }
  std::span<const double> col(int k) const {
    return {entries.data() + static_cast<std::size_t>(k) * n, static_cast<std::size_t>(n)};
  }
  double operator()(int i, int k) const { return entries[static_cast<std::size_t>(k) * n + i]; }
};

namespace detail {

inline double sum_squares(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double intensity_norm(const Image& img) {
  return std::sqrt(sum_squares(img.data) * img.grid.cell_volume());
}

inline void check_intensity_norm(const Image& img, double norm) {
  detail::require(norm >= 1e-12 * std::sqrt(img.grid.domain_volume()), ErrorCategory::Degenerate,
                  "degenerate feature: zero image");
}

}  // namespace detail

/// T / ||T||_L2 with midpoint quadrature.
inline std::vector<double> feature_intensity_normalized(const Image& img) {
  const double norm = detail::intensity_norm(img);
  detail::check_intensity_norm(img, norm);
  std::vector<double> out(img.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = img.data[i] / norm;
  return out;
}

/// Gradient field divided by its eta-stabilized global L2 norm
/// sqrt(||grad T||^2 + eta). Constant images give the zero column.
inline std::vector<double> feature_ngf(const Image& img, double eta) {
  FeatureMapKind::ngf(eta).validate();
  auto grad = gradient_central(img);
  const double s = std::sqrt(detail::sum_squares(grad) * img.grid.cell_volume() + eta);
  for (double& v : grad) v /= s;
  return grad;
}

inline std::vector<double> feature(const Image& img, const FeatureMapKind& kind) {
  return kind.tag == FeatureMapKind::Tag::NGF ? feature_ngf(img, kind.eta)
                                              : feature_intensity_normalized(img);
}

/// Pulls a cotangent on the feature column back to the (warped) intensities:
/// returns g with <g, dT> = <cotangent, dF[dT]> in plain Euclidean pairing.
inline std::vector<double> feature_adjoint(const FeatureMapKind& kind, const Image& img,
                                           std::span<const double> cotangent) {
  const double w = img.grid.cell_volume();
  detail::require(cotangent.size() == static_cast<std::size_t>(kind.dimension(img.grid)),
                  ErrorCategory::InvalidArgument, "feature adjoint: cotangent length mismatch");
  if (kind.tag == FeatureMapKind::Tag::IntensityNormalized) {
    const double norm = detail::intensity_norm(img);
    detail::check_intensity_norm(img, norm);
    // d(T/N) = dT/N - T w<T,dT>/N^3
    const double coef = w * detail::dot(cotangent, img.data) / (norm * norm * norm);
    std::vector<double> out(img.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cotangent[i] / norm - coef * img.data[i];
    return out;
  }
  kind.validate();
  const auto grad = gradient_central(img);
  const double s2 = detail::sum_squares(grad) * w + kind.eta;
  const double s = std::sqrt(s2);
  const double coef = w * detail::dot(cotangent, grad) / (s2 * s);
  std::vector<double> b(grad.size());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = cotangent[i] / s - coef * grad[i];
  return gradient_central_adjoint(img.grid, b);
}

/// Column k is the feature of image k warped by field k.
inline FeatureMatrix assemble_warped(const std::vector<Image>& warped, const FeatureMapKind& kind) {
  detail::require(!warped.empty(), ErrorCategory::InvalidArgument, "assemble: empty stack");
  kind.validate();
  const GridSpec& g = warped.front().grid;
  FeatureMatrix F;
  F.n = kind.dimension(g);
  F.K = static_cast<int>(warped.size());
  F.kind = kind;
  F.quad_weight = g.cell_volume();
  F.entries.resize(static_cast<std::size_t>(F.n) * F.K);
  for (int k = 0; k < F.K; ++k) {
    try {
      const auto column = feature(warped[k], kind);
      std::copy(column.begin(), column.end(), F.col(k).begin());
    } catch (const Error& e) {
      throw e.annotated("image " + std::to_string(k) + ": ");
    }
  }
  return F;
}

inline FeatureMatrix assemble(const ImageStack& stack, const std::vector<DisplacementField>& fields,
                              const FeatureMapKind& kind) {
  stack.validate();
  detail::require(fields.size() == stack.images.size(), ErrorCategory::InvalidArgument,
                  "assemble: need one displacement field per image");
  std::vector<Image> warped;
  warped.reserve(fields.size());
  for (std::size_t k = 0; k < fields.size(); ++k) {
    try {
      warped.push_back(warp(stack.images[k], fields[k]));
    } catch (const Error& e) {
      throw e.annotated("image " + std::to_string(k) + ": ");
    }
  }
  return assemble_warped(warped, kind);
}

}  // namespace sqnreg

#endif  // SQNREG_FEATURES_HPP_
