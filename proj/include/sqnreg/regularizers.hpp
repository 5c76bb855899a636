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

#ifndef SQNREG_REGULARIZERS_HPP_
#define SQNREG_REGULARIZERS_HPP_

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sqnreg/error.hpp"
#include "sqnreg/grid.hpp"

namespace sqnreg {

struct RegKind {
  enum class Tag { Diffusion, Elastic };

  Tag tag = Tag::Diffusion;
  double alpha = 1.0;
  double mu = 1.0;
  double lambda = 0.0;

  static RegKind diffusion(double alpha) { return {Tag::Diffusion, alpha, 1.0, 0.0}; }
  static RegKind elastic(double mu, double lambda, double alpha) { return {Tag::Elastic, alpha, mu, lambda}; }

  void validate() const {
    detail::require(std::isfinite(alpha) && alpha > 0.0, ErrorCategory::InvalidArgument,
                    "regularization weight alpha must be > 0");
    if (tag == Tag::Elastic) {
      detail::require(std::isfinite(mu) && mu > 0.0, ErrorCategory::InvalidArgument,
                      "elastic mu must be > 0");
      detail::require(std::isfinite(lambda) && lambda >= 0.0, ErrorCategory::InvalidArgument,
                      "elastic lambda must be >= 0");
    }
  }
};

/// Energy value and its gradient with respect to the 2n displacement samples.
struct RegValue {
  double value = 0.0;
  std::vector<double> grad;
};

namespace detail {

/// Accumulates c * (sum_i a_i u_i)^2 into value and gradient.
class QuadraticAccumulator {
 public:
  explicit QuadraticAccumulator(std::span<const double> u) : u_(u), out_{0.0, std::vector<double>(u.size(), 0.0)} {}

  template <std::size_t N>
  void add(double c, const std::array<int, N>& idx, const std::array<double, N>& coef) {
    double lin = 0.0;
    for (std::size_t i = 0; i < N; ++i) lin += coef[i] * u_[idx[i]];
    out_.value += c * lin * lin;
    for (std::size_t i = 0; i < N; ++i) out_.grad[idx[i]] += 2.0 * c * lin * coef[i];
  }

  RegValue take() { return std::move(out_); }

 private:
  std::span<const double> u_;
  RegValue out_;
};

}  // namespace detail

/// (alpha/2) sum_components sum_axes sum_edges |forward difference / h|^2 * h1 h2.
inline RegValue diffusion_energy(const GridSpec& g, std::span<const double> u, double alpha) {
  detail::require(u.size() == 2 * static_cast<std::size_t>(g.size()), ErrorCategory::InvalidArgument,
                  "diffusion: field length mismatch");
  const int m1 = g.dims[0], m2 = g.dims[1], n = g.size();
  const double c = 0.5 * alpha * g.cell_volume();
  const double h1 = g.spacing[0], h2 = g.spacing[1];
  detail::QuadraticAccumulator acc(u);
  for (int comp = 0; comp < 2; ++comp) {
    const int off = comp * n;
    for (int j = 0; j < m2; ++j)
      for (int i = 0; i + 1 < m1; ++i)
        acc.add<2>(c, {off + g.index(i + 1, j), off + g.index(i, j)}, {1.0 / h1, -1.0 / h1});
    for (int j = 0; j + 1 < m2; ++j)
      for (int i = 0; i < m1; ++i)
        acc.add<2>(c, {off + g.index(i, j + 1), off + g.index(i, j)}, {1.0 / h2, -1.0 / h2});
  }
  return acc.take();
}

inline RegValue diffusion(const DisplacementField& field, double alpha) {
  RegKind::diffusion(alpha).validate();
  return diffusion_energy(field.grid, field.u, alpha);
}

/// alpha * integral of mu tr(E^2) + (lambda/2) tr(E)^2, E = (grad u + grad u^T)/2.
///
/// Normal strains live on cell edges (forward differences); shear and
/// divergence live on the dual nodes between four cells. Each family is
/// weighted so that its quadrature sums to |Omega|, which makes the energy
/// exact for affine fields and leaves only rigid motions in the null space.
inline RegValue elastic_energy(const GridSpec& g, std::span<const double> u, double mu, double lambda,
                               double alpha) {
  detail::require(u.size() == 2 * static_cast<std::size_t>(g.size()), ErrorCategory::InvalidArgument,
                  "elastic: field length mismatch");
  const int m1 = g.dims[0], m2 = g.dims[1], n = g.size();
  const double h1 = g.spacing[0], h2 = g.spacing[1];
  const double area = g.domain_volume();
  const double w1 = area / ((m1 - 1.0) * m2);
  const double w2 = area / (m1 * (m2 - 1.0));
  const double wb = area / ((m1 - 1.0) * (m2 - 1.0));
  detail::QuadraticAccumulator acc(u);

  for (int j = 0; j < m2; ++j)
    for (int i = 0; i + 1 < m1; ++i)
      acc.add<2>(alpha * mu * w1, {g.index(i + 1, j), g.index(i, j)}, {1.0 / h1, -1.0 / h1});
  for (int j = 0; j + 1 < m2; ++j)
    for (int i = 0; i < m1; ++i)
      acc.add<2>(alpha * mu * w2, {n + g.index(i, j + 1), n + g.index(i, j)}, {1.0 / h2, -1.0 / h2});

  for (int j = 0; j + 1 < m2; ++j) {
    for (int i = 0; i + 1 < m1; ++i) {
      const int p00 = g.index(i, j), p10 = g.index(i + 1, j);
      const int p01 = g.index(i, j + 1), p11 = g.index(i + 1, j + 1);
      const double a1 = 0.5 / h1, a2 = 0.5 / h2;
      // shear: d2 u1 + d1 u2
      acc.add<8>(0.5 * alpha * mu * wb,
                 {p01, p00, p11, p10, n + p10, n + p00, n + p11, n + p01},
                 {a2, -a2, a2, -a2, a1, -a1, a1, -a1});
      // divergence: d1 u1 + d2 u2
      if (lambda > 0.0)
        acc.add<8>(0.5 * alpha * lambda * wb,
                   {p10, p00, p11, p01, n + p01, n + p00, n + p11, n + p10},
                   {a1, -a1, a1, -a1, a2, -a2, a2, -a2});
    }
  }
  return acc.take();
}

inline RegValue elastic(const DisplacementField& field, double mu, double lambda, double alpha) {
  RegKind::elastic(mu, lambda, alpha).validate();
  return elastic_energy(field.grid, field.u, mu, lambda, alpha);
}

inline RegValue regularize(const GridSpec& g, std::span<const double> u, const RegKind& kind) {
  return kind.tag == RegKind::Tag::Diffusion ? diffusion_energy(g, u, kind.alpha)
                                             : elastic_energy(g, u, kind.mu, kind.lambda, kind.alpha);
}

inline RegValue regularize(const DisplacementField& field, const RegKind& kind) {
  kind.validate();
  return regularize(field.grid, field.u, kind);
}

struct RegGloValue {
  double value = 0.0;
  std::vector<std::vector<double>> grad;
};

/// Sum of per-field energies; the gradients are independent per field.
inline RegGloValue reg_glo(const std::vector<DisplacementField>& fields, const RegKind& kind) {
  kind.validate();
  RegGloValue out;
  out.grad.reserve(fields.size());
  for (const auto& f : fields) {
    auto r = regularize(f, kind);
    out.value += r.value;
    out.grad.push_back(std::move(r.grad));
  }
  return out;
}

/// Applies (H + eps I)^{-1} for the regularizer Hessian H of one field. Used as
/// the initial inverse metric of L-BFGS. Diffusion is diagonal in the
/// orthonormal DCT-II basis and is solved directly; elastic uses conjugate
/// gradients preconditioned by the diffusion solve.
class RegularizerMetric {
 public:
  RegularizerMetric(const GridSpec& g, const RegKind& kind, double eps)
      : grid_(g), kind_(kind), eps_(eps) {
    kind.validate();
    detail::require(eps > 0.0, ErrorCategory::InvalidArgument, "metric shift must be > 0");
    for (int a = 0; a < 2; ++a) {
      const int m = g.dims[a];
      basis_[a].resize(m, m);
      eig_[a].resize(m);
      for (int k = 0; k < m; ++k) {
        const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / m);
        for (int i = 0; i < m; ++i)
          basis_[a](i, k) = scale * std::cos(std::numbers::pi * k * (i + 0.5) / m);
        eig_[a](k) = (2.0 - 2.0 * std::cos(std::numbers::pi * k / m)) / (g.spacing[a] * g.spacing[a]);
      }
    }
    // Diffusion Hessian is alpha * w * (L1 + L2); the elastic preconditioner
    // uses the same operator with weight alpha * mu.
    diag_weight_ = kind.alpha * g.cell_volume() * (kind.tag == RegKind::Tag::Elastic ? kind.mu : 1.0);
  }

  const GridSpec& grid() const { return grid_; }

  /// H v, which for a quadratic energy is the gradient evaluated at v.
  std::vector<double> hessian_apply(std::span<const double> v) const {
    return regularize(grid_, v, kind_).grad;
  }

  void apply_inverse(std::span<const double> rhs, std::span<double> out) const {
    if (kind_.tag == RegKind::Tag::Diffusion) {
      diffusion_solve(rhs, out);
      return;
    }
    pcg(rhs, out);
  }

 private:
  void diffusion_solve(std::span<const double> rhs, std::span<double> out) const {
    const int m1 = grid_.dims[0], m2 = grid_.dims[1], n = grid_.size();
    for (int c = 0; c < 2; ++c) {
      Eigen::Map<const Eigen::MatrixXd> G(rhs.data() + static_cast<std::size_t>(c) * n, m1, m2);
      Eigen::MatrixXd hat = basis_[0].transpose() * G * basis_[1];
      for (int l = 0; l < m2; ++l)
        for (int k = 0; k < m1; ++k) hat(k, l) /= diag_weight_ * (eig_[0](k) + eig_[1](l)) + eps_;
      Eigen::Map<Eigen::MatrixXd> Z(out.data() + static_cast<std::size_t>(c) * n, m1, m2);
      Z = basis_[0] * hat * basis_[1].transpose();
    }
  }

  void pcg(std::span<const double> rhs, std::span<double> out) const {
    const std::size_t N = rhs.size();
    Eigen::Map<const Eigen::VectorXd> b(rhs.data(), static_cast<Eigen::Index>(N));
    Eigen::Map<Eigen::VectorXd> x(out.data(), static_cast<Eigen::Index>(N));
    auto apply_A = [&](const Eigen::VectorXd& v) {
      auto hv = hessian_apply(std::span<const double>(v.data(), N));
      Eigen::VectorXd r = Eigen::Map<Eigen::VectorXd>(hv.data(), static_cast<Eigen::Index>(N));
      return Eigen::VectorXd(r + eps_ * v);
    };
    auto precond = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd z(static_cast<Eigen::Index>(N));
      diffusion_solve(std::span<const double>(v.data(), N), std::span<double>(z.data(), N));
      return z;
    };
    x.setZero();
    Eigen::VectorXd r = b;
    const double bnorm = b.norm();
    if (bnorm == 0.0) return;
    Eigen::VectorXd z = precond(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    for (int it = 0; it < 500; ++it) {
      const Eigen::VectorXd Ap = apply_A(p);
      const double step = rz / p.dot(Ap);
      x += step * p;
      r -= step * Ap;
      if (r.norm() <= 1e-10 * bnorm) break;
      z = precond(r);
      const double rz_next = r.dot(z);
      p = z + (rz_next / rz) * p;
      rz = rz_next;
    }
  }

  GridSpec grid_;
  RegKind kind_;
  double eps_;
  double diag_weight_ = 1.0;
  std::array<Eigen::MatrixXd, 2> basis_;
  std::array<Eigen::VectorXd, 2> eig_;
};

}  // namespace sqnreg

#endif  // SQNREG_REGULARIZERS_HPP_
