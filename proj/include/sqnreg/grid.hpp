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

#ifndef SQNREG_GRID_HPP_
#define SQNREG_GRID_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sqnreg/error.hpp"

namespace sqnreg {

using Point = std::array<double, 2>;

/// Regular cell-centered 2D grid. Cell (i1, i2) has its center at
/// origin + (i + 1/2) * spacing; samples are stored with i1 running fastest.
struct GridSpec {
  std::array<int, 2> dims{2, 2};
  Point origin{0.0, 0.0};
  Point spacing{1.0, 1.0};

  GridSpec() = default;
  GridSpec(std::array<int, 2> d, Point o = {0.0, 0.0}, Point h = {1.0, 1.0})
      : dims(d), origin(o), spacing(h) {
    validate();
  }

  int size() const { return dims[0] * dims[1]; }
  double cell_volume() const { return spacing[0] * spacing[1]; }
  double domain_volume() const { return size() * cell_volume(); }
  int index(int i1, int i2) const { return i1 + dims[0] * i2; }

  Point center(int i1, int i2) const {
    return {origin[0] + (i1 + 0.5) * spacing[0], origin[1] + (i2 + 0.5) * spacing[1]};
  }

  /// Continuous index coordinates; integers land on cell centers.
  Point to_index(const Point& p) const {
    return {(p[0] - origin[0]) / spacing[0] - 0.5, (p[1] - origin[1]) / spacing[1] - 0.5};
  }

  void validate() const {
    for (int a = 0; a < 2; ++a) {
      detail::require(dims[a] >= 2, ErrorCategory::InvalidArgument,
                      "grid needs at least 2 cells per axis");
      detail::require(std::isfinite(spacing[a]) && spacing[a] > 0.0,
                      ErrorCategory::InvalidArgument, "grid spacing must be positive");
      detail::require(std::isfinite(origin[a]), ErrorCategory::InvalidArgument,
                      "grid origin must be finite");
    }
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct Image {
  GridSpec grid;
  std::vector<double> data;

  Image() = default;
  explicit Image(const GridSpec& g, double fill = 0.0)
      : grid(g), data(static_cast<std::size_t>(g.size()), fill) {}
  Image(const GridSpec& g, std::vector<double> values) : grid(g), data(std::move(values)) {
    detail::require(data.size() == static_cast<std::size_t>(grid.size()),
                    ErrorCategory::InvalidArgument, "image data length does not match grid");
    for (double v : data)
      detail::require(std::isfinite(v), ErrorCategory::InvalidArgument,
                      "image intensities must be finite");
  }

  int size() const { return grid.size(); }
  double& at(int i1, int i2) { return data[grid.index(i1, i2)]; }
  double at(int i1, int i2) const { return data[grid.index(i1, i2)]; }
};

/// Vector field u with y(x) = x + u(x), in physical units. Storage is two
/// planes: all u1 samples followed by all u2 samples.
struct DisplacementField {
  GridSpec grid;
  std::vector<double> u;

  DisplacementField() = default;
  explicit DisplacementField(const GridSpec& g)
      : grid(g), u(2 * static_cast<std::size_t>(g.size()), 0.0) {}
  DisplacementField(const GridSpec& g, std::vector<double> values) : grid(g), u(std::move(values)) {
    detail::require(u.size() == 2 * static_cast<std::size_t>(grid.size()),
                    ErrorCategory::InvalidArgument, "field data length does not match grid");
    for (double v : u)
      detail::require(std::isfinite(v), ErrorCategory::InvalidArgument,
                      "displacement entries must be finite");
  }

  int size() const { return grid.size(); }
  std::span<double> component(int c) {
    return {u.data() + static_cast<std::size_t>(c) * grid.size(), static_cast<std::size_t>(grid.size())};
  }
  std::span<const double> component(int c) const {
    return {u.data() + static_cast<std::size_t>(c) * grid.size(), static_cast<std::size_t>(grid.size())};
  }
};

struct ImageStack {
  std::vector<Image> images;

  ImageStack() = default;
  explicit ImageStack(std::vector<Image> imgs) : images(std::move(imgs)) { validate(); }

  int size() const { return static_cast<int>(images.size()); }
  const GridSpec& grid() const { return images.front().grid; }

  void validate() const {
    detail::require(images.size() >= 2, ErrorCategory::InvalidArgument,
                    "an image stack needs at least 2 images");
    for (const auto& img : images)
      detail::require(img.grid == images.front().grid, ErrorCategory::InvalidArgument,
                      "all images in a stack must share one grid");
  }
};

/// Interpolated value and its derivative with respect to the sample point.
struct Sample {
  double value = 0.0;
  Point grad{0.0, 0.0};
};

namespace detail {

struct AxisWeight {
  int i0;
  double t;
  bool inside;  // false when the coordinate was clamped
};

inline AxisWeight axis_weight(double s, int m) {
  bool inside = true;
  if (s < 0.0) {
    s = 0.0;
    inside = false;
  } else if (s > m - 1) {
    s = m - 1;
    inside = false;
  }
  int i0 = std::min(static_cast<int>(std::floor(s)), m - 2);
  return {i0, s - i0, inside};
}

}  // namespace detail

/// Bilinear interpolation at continuous index coordinates (s1, s2), with
/// nearest-boundary extension outside the sampled region.
inline Sample interp_at_index(const Image& img, double s1, double s2) {
  const auto& g = img.grid;
  auto a = detail::axis_weight(s1, g.dims[0]);
  auto b = detail::axis_weight(s2, g.dims[1]);
  const double v00 = img.at(a.i0, b.i0);
  const double v10 = img.at(a.i0 + 1, b.i0);
  const double v01 = img.at(a.i0, b.i0 + 1);
  const double v11 = img.at(a.i0 + 1, b.i0 + 1);
  // (1-t)*v0 + t*v1 reproduces v0 at t == 0 and v1 at t == 1 exactly.
  const double lo = (1.0 - a.t) * v00 + a.t * v10;
  const double hi = (1.0 - a.t) * v01 + a.t * v11;
  Sample out;
  out.value = (1.0 - b.t) * lo + b.t * hi;
  if (a.inside) out.grad[0] = ((1.0 - b.t) * (v10 - v00) + b.t * (v11 - v01)) / g.spacing[0];
  if (b.inside) out.grad[1] = (hi - lo) / g.spacing[1];
  return out;
}

inline Sample interp_bilinear_sample(const Image& img, const Point& p) {
  detail::require(std::isfinite(p[0]) && std::isfinite(p[1]), ErrorCategory::InvalidArgument,
                  "invalid sample point");
  const Point s = img.grid.to_index(p);
  return interp_at_index(img, s[0], s[1]);
}

inline double interp_bilinear(const Image& img, const Point& p) {
  return interp_bilinear_sample(img, p).value;
}

/// Central differences in the interior, one-sided at the boundary. Returns
/// 2n values: the d/dx1 plane followed by the d/dx2 plane.
inline std::vector<double> gradient_central(const Image& img) {
  const auto& g = img.grid;
  const int m1 = g.dims[0], m2 = g.dims[1], n = g.size();
  std::vector<double> out(2 * static_cast<std::size_t>(n));
  for (int j = 0; j < m2; ++j) {
    for (int i = 0; i < m1; ++i) {
      const int p = g.index(i, j);
      if (i == 0)
        out[p] = (img.at(1, j) - img.at(0, j)) / g.spacing[0];
      else if (i == m1 - 1)
        out[p] = (img.at(m1 - 1, j) - img.at(m1 - 2, j)) / g.spacing[0];
      else
        out[p] = (img.at(i + 1, j) - img.at(i - 1, j)) / (2.0 * g.spacing[0]);

      if (j == 0)
        out[n + p] = (img.at(i, 1) - img.at(i, 0)) / g.spacing[1];
      else if (j == m2 - 1)
        out[n + p] = (img.at(i, m2 - 1) - img.at(i, m2 - 2)) / g.spacing[1];
      else
        out[n + p] = (img.at(i, j + 1) - img.at(i, j - 1)) / (2.0 * g.spacing[1]);
    }
  }
  return out;
}

/// Transpose of gradient_central: maps a 2n cotangent back to n pixels.
inline std::vector<double> gradient_central_adjoint(const GridSpec& g, std::span<const double> v) {
  const int m1 = g.dims[0], m2 = g.dims[1], n = g.size();
  detail::require(v.size() == 2 * static_cast<std::size_t>(n), ErrorCategory::InvalidArgument,
                  "gradient adjoint: cotangent length mismatch");
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  const double h1 = g.spacing[0], h2 = g.spacing[1];
  for (int j = 0; j < m2; ++j) {
    for (int i = 0; i < m1; ++i) {
      const int p = g.index(i, j);
      const double a = v[p];
      if (i == 0) {
        out[g.index(1, j)] += a / h1;
        out[g.index(0, j)] -= a / h1;
      } else if (i == m1 - 1) {
        out[g.index(m1 - 1, j)] += a / h1;
        out[g.index(m1 - 2, j)] -= a / h1;
      } else {
        out[g.index(i + 1, j)] += a / (2.0 * h1);
        out[g.index(i - 1, j)] -= a / (2.0 * h1);
      }
      const double b = v[n + p];
      if (j == 0) {
        out[g.index(i, 1)] += b / h2;
        out[g.index(i, 0)] -= b / h2;
      } else if (j == m2 - 1) {
        out[g.index(i, m2 - 1)] += b / h2;
        out[g.index(i, m2 - 2)] -= b / h2;
      } else {
        out[g.index(i, j + 1)] += b / (2.0 * h2);
        out[g.index(i, j - 1)] -= b / (2.0 * h2);
      }
    }
  }
  return out;
}

/// Warped image together with d(warped)/du at every cell, which is the
/// spatial gradient of the interpolant at the displaced point.
struct WarpResult {
  Image image;
  std::vector<double> d_du;  // 2n: d/du1 plane, d/du2 plane
};

inline WarpResult warp_with_derivative(const Image& img, const DisplacementField& field) {
  detail::require(img.grid == field.grid, ErrorCategory::InvalidArgument,
                  "warp: image and displacement grids differ");
  const auto& g = img.grid;
  const int n = g.size();
  WarpResult out{Image(g), std::vector<double>(2 * static_cast<std::size_t>(n))};
  auto u1 = field.component(0);
  auto u2 = field.component(1);
  for (int j = 0; j < g.dims[1]; ++j) {
    for (int i = 0; i < g.dims[0]; ++i) {
      const int p = g.index(i, j);
      // Index space keeps u == 0 an exact identity.
      const Sample s = interp_at_index(img, i + u1[p] / g.spacing[0], j + u2[p] / g.spacing[1]);
      out.image.data[p] = s.value;
      out.d_du[p] = s.grad[0];
      out.d_du[n + p] = s.grad[1];
    }
  }
  return out;
}

inline Image warp(const Image& img, const DisplacementField& field) {
  return warp_with_derivative(img, field).image;
}

namespace detail {

/// [1 2 1]/4 along one axis. Boundary cells use a linearly extrapolated ghost
/// value, which leaves them unchanged and keeps affine data affine.
inline std::vector<double> smooth_axis(const GridSpec& g, const std::vector<double>& v, int axis) {
  std::vector<double> out(v.size());
  const int m1 = g.dims[0], m2 = g.dims[1];
  for (int j = 0; j < m2; ++j) {
    for (int i = 0; i < m1; ++i) {
      const int p = g.index(i, j);
      const int len = axis == 0 ? m1 : m2;
      const int pos = axis == 0 ? i : j;
      if (pos == 0 || pos == len - 1) {
        out[p] = v[p];
        continue;
      }
      const int prev = axis == 0 ? g.index(i - 1, j) : g.index(i, j - 1);
      const int next = axis == 0 ? g.index(i + 1, j) : g.index(i, j + 1);
      out[p] = 0.25 * v[prev] + 0.5 * v[p] + 0.25 * v[next];
    }
  }
  return out;
}

}  // namespace detail

inline GridSpec coarsen(const GridSpec& g) {
  detail::require(g.dims[0] >= 4 && g.dims[1] >= 4, ErrorCategory::InvalidArgument,
                  "coarsest level reached");
  GridSpec c;
  c.dims = {g.dims[0] / 2, g.dims[1] / 2};
  c.origin = g.origin;
  c.spacing = {2.0 * g.spacing[0], 2.0 * g.spacing[1]};
  return c;
}

/// Spatial smoothing followed by 2x2 cell averaging. Odd trailing rows or
/// columns are dropped.
inline Image restrict(const Image& img) {
  const GridSpec coarse = coarsen(img.grid);
  const auto smoothed = detail::smooth_axis(img.grid, detail::smooth_axis(img.grid, img.data, 0), 1);
  Image out(coarse);
  for (int j = 0; j < coarse.dims[1]; ++j) {
    for (int i = 0; i < coarse.dims[0]; ++i) {
      const auto& g = img.grid;
      out.at(i, j) = 0.25 * (smoothed[g.index(2 * i, 2 * j)] + smoothed[g.index(2 * i + 1, 2 * j)] +
                             smoothed[g.index(2 * i, 2 * j + 1)] +
                             smoothed[g.index(2 * i + 1, 2 * j + 1)]);
    }
  }
  return out;
}

inline ImageStack restrict(const ImageStack& stack) {
  std::vector<Image> out;
  out.reserve(stack.images.size());
  for (const auto& img : stack.images) out.push_back(restrict(img));
  return ImageStack(std::move(out));
}

/// Bilinear interpolation of a coarse field onto the cell centers of `fine`.
/// Values are physical displacements and are not rescaled.
inline DisplacementField prolong(const DisplacementField& field, const GridSpec& fine) {
  fine.validate();
  DisplacementField out(fine);
  const int n = fine.size();
  for (int c = 0; c < 2; ++c) {
    Image plane(field.grid, std::vector<double>(field.component(c).begin(), field.component(c).end()));
    for (int j = 0; j < fine.dims[1]; ++j) {
      for (int i = 0; i < fine.dims[0]; ++i) {
        out.u[static_cast<std::size_t>(c) * n + fine.index(i, j)] =
            interp_bilinear(plane, fine.center(i, j));
      }
    }
  }
  return out;
}

}  // namespace sqnreg

#endif  // SQNREG_GRID_HPP_
