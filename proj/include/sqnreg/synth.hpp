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

#ifndef SQNREG_SYNTH_HPP_
#define SQNREG_SYNTH_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "sqnreg/error.hpp"
#include "sqnreg/grid.hpp"
#include "sqnreg/rng.hpp"

namespace sqnreg {

enum class SynthKind { ShiftedDisks, RotatedSheppLike, IntensityPerturbed };

inline SynthKind parse_synth_kind(std::string_view s) {
  if (s == "shifted_disks") return SynthKind::ShiftedDisks;
  if (s == "rotated_shepp_like") return SynthKind::RotatedSheppLike;
  if (s == "intensity_perturbed") return SynthKind::IntensityPerturbed;
  throw Error(ErrorCategory::InvalidArgument, "unknown synthetic stack kind '" + std::string(s) + "'");
}

/// Synthetic stack plus the fields u_k that map the common reference frame
/// into each image, i.e. T_k(x + u_k(x)) reproduces the reference image.
struct SynthStack {
  ImageStack stack;
  std::vector<DisplacementField> truth;
  std::vector<Point> shifts;  // ShiftedDisks
  std::vector<double> angles;  // RotatedSheppLike
  std::vector<double> gains;   // IntensityPerturbed
  Point center{0.0, 0.0};      // reference center of the main structure
  double radius = 0.0;         // radius of the main disk / phantom
};

namespace detail {

inline double soft_step(double r, double radius, double width) {
  return 0.5 * (1.0 - std::tanh((r - radius) / width));
}

/// Ellipse phantom in the spirit of Shepp-Logan, scaled to `radius`.
inline double phantom(double x, double y, const Point& c, double radius) {
  struct Ellipse {
    double cx, cy, a, b, phi, value;
  };
  static constexpr Ellipse ellipses[] = {
      {0.0, 0.0, 0.92, 0.69, 0.0, 0.6},      {0.0, -0.02, 0.87, 0.62, 0.0, -0.2},
      {0.22, 0.0, 0.31, 0.11, -0.31, 0.35},  {-0.22, 0.0, 0.41, 0.16, 0.31, 0.3},
      {0.0, 0.35, 0.21, 0.25, 0.0, 0.25},    {0.0, -0.1, 0.046, 0.046, 0.0, 0.3},
      {-0.08, -0.6, 0.046, 0.023, 0.0, 0.3}, {0.06, -0.6, 0.023, 0.046, 0.0, 0.3},
  };
  const double px = (x - c[0]) / radius, py = (y - c[1]) / radius;
  const double width = 1.0 / radius;  // about one pixel
  double v = 0.0;
  for (const auto& e : ellipses) {
    const double dx = px - e.cx, dy = py - e.cy;
    const double cs = std::cos(e.phi), sn = std::sin(e.phi);
    const double ex = (cs * dx + sn * dy) / e.a, ey = (-sn * dx + cs * dy) / e.b;
    const double r = std::sqrt(ex * ex + ey * ey);
    v += e.value * soft_step(r, 1.0, width / std::min(e.a, e.b));
  }
  return v;
}

inline Image sample(const GridSpec& g, const std::function<double(double, double)>& f) {
  Image img(g);
  for (int j = 0; j < g.dims[1]; ++j)
    for (int i = 0; i < g.dims[0]; ++i) {
      const Point x = g.center(i, j);
      img.at(i, j) = f(x[0], x[1]);
    }
  return img;
}

}  // namespace detail

/// Deterministic synthetic stack on a size x size grid with unit spacing.
///
/// Image 1 is the reference pose, image 2 carries the full magnitude and
/// images 3..K draw uniformly from [-magnitude, magnitude] per axis. For
/// RotatedSheppLike only magnitude[0] (radians) is used, for
/// IntensityPerturbed magnitude[0] is a relative gain change.
inline SynthStack synth_stack(std::uint64_t seed, int K, SynthKind kind, Point magnitude, int size = 64) {
  detail::require(K >= 2, ErrorCategory::InvalidArgument, "synthetic stack needs K >= 2");
  detail::require(size >= 8, ErrorCategory::InvalidArgument, "synthetic images need at least 8x8 pixels");
  const GridSpec g({size, size});
  Rng rng = Rng(seed).split("synth_stack");
  SynthStack out;
  out.center = {0.5 * size, 0.5 * size};
  const Point c = out.center;
  std::vector<Image> images;

  auto draw = [&](int k, double mag) {
    if (k == 0) return 0.0;
    if (k == 1) return mag;
    return mag * rng.uniform(-1.0, 1.0);
  };

  switch (kind) {
    case SynthKind::ShiftedDisks: {
      out.radius = 0.22 * size;
      const double R = out.radius;
      const Point inner{c[0] + 0.3 * R, c[1] - 0.25 * R};
      const double r_inner = 0.35 * R;
      for (int k = 0; k < K; ++k) {
        const Point s{draw(k, magnitude[0]), draw(k, magnitude[1])};
        out.shifts.push_back(s);
        images.push_back(detail::sample(g, [&](double x, double y) {
          const double ax = x - s[0], ay = y - s[1];
          const double r1 = std::hypot(ax - c[0], ay - c[1]);
          const double r2 = std::hypot(ax - inner[0], ay - inner[1]);
          return 0.6 * detail::soft_step(r1, R, 1.0) + 0.4 * detail::soft_step(r2, r_inner, 1.0);
        }));
        DisplacementField u(g);
        std::fill(u.component(0).begin(), u.component(0).end(), s[0]);
        std::fill(u.component(1).begin(), u.component(1).end(), s[1]);
        out.truth.push_back(std::move(u));
      }
      break;
    }
    case SynthKind::RotatedSheppLike: {
      out.radius = 0.4 * size;
      for (int k = 0; k < K; ++k) {
        const double theta = draw(k, magnitude[0]);
        out.angles.push_back(theta);
        const double cs = std::cos(theta), sn = std::sin(theta);
        // T_k(y) = P(R(-theta)(y - c) + c)
        images.push_back(detail::sample(g, [&](double x, double y) {
          const double dx = x - c[0], dy = y - c[1];
          return detail::phantom(c[0] + cs * dx + sn * dy, c[1] - sn * dx + cs * dy, c, out.radius);
        }));
        DisplacementField u(g);
        for (int j = 0; j < size; ++j)
          for (int i = 0; i < size; ++i) {
            const Point x = g.center(i, j);
            const double dx = x[0] - c[0], dy = x[1] - c[1];
            u.u[g.index(i, j)] = cs * dx - sn * dy - dx;
            u.u[g.size() + g.index(i, j)] = sn * dx + cs * dy - dy;
          }
        out.truth.push_back(std::move(u));
      }
      break;
    }
    case SynthKind::IntensityPerturbed: {
      out.radius = 0.4 * size;
      for (int k = 0; k < K; ++k) {
        const double gain = 1.0 + draw(k, magnitude[0]);
        out.gains.push_back(gain);
        images.push_back(detail::sample(g, [&](double x, double y) {
          return gain * detail::phantom(x, y, c, out.radius);
        }));
        out.truth.emplace_back(g);
      }
      break;
    }
  }
  out.stack = ImageStack(std::move(images));
  return out;
}

}  // namespace sqnreg

#endif  // SQNREG_SYNTH_HPP_
