// Copyright 2026 The sqnreg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <limits>

#include "test_util.hpp"

namespace sqnreg {
namespace {

using testing::random_field;
using testing::random_image;

TEST(GridSpec, ValidatesDimsAndSpacing) {
  EXPECT_THROW(GridSpec({1, 4}), Error);
  EXPECT_THROW(GridSpec({4, 4}, {0.0, 0.0}, {0.0, 1.0}), Error);
  EXPECT_THROW(GridSpec({4, 4}, {0.0, 0.0}, {1.0, -1.0}), Error);
  const GridSpec g({4, 3}, {1.0, 2.0}, {0.5, 2.0});
  EXPECT_DOUBLE_EQ(g.domain_volume(), 4 * 0.5 * 3 * 2.0);
  EXPECT_EQ(g.center(0, 0), (Point{1.25, 3.0}));
  EXPECT_EQ(g.index(3, 2), 3 + 4 * 2);
}

TEST(Image, RejectsNonFiniteAndWrongLength) {
  const GridSpec g({2, 2});
  EXPECT_THROW(Image(g, std::vector<double>{1, 2, 3}), Error);
  EXPECT_THROW(Image(g, std::vector<double>{1, 2, 3, std::nan("")}), Error);
  std::vector<Image> one{Image(g)};
  EXPECT_THROW(ImageStack(std::move(one)), Error);
  std::vector<Image> mixed{Image(g), Image(GridSpec({3, 2}))};
  EXPECT_THROW(ImageStack(std::move(mixed)), Error);
}

TEST(Interp, AverageOfFourCenters) {
  const Image img(GridSpec({2, 2}), std::vector<double>{0, 1, 1, 2});
  EXPECT_DOUBLE_EQ(interp_bilinear(img, {1.0, 1.0}), 1.0);
}

TEST(Interp, ExactAtCellCenters) {
  Rng rng(1);
  const GridSpec g({5, 4}, {-1.0, 2.0}, {0.5, 0.25});
  Image img = random_image(rng, g);
  img.at(2, 3) = 7.5;
  EXPECT_EQ(interp_bilinear(img, g.center(2, 3)), 7.5);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 5; ++i) EXPECT_EQ(interp_bilinear(img, g.center(i, j)), img.at(i, j));
}

TEST(Interp, ConstantReproductionAndClampExtension) {
  const GridSpec g({4, 4});
  const Image img(g, 3.25);
  Rng rng(2);
  for (int t = 0; t < 50; ++t) EXPECT_DOUBLE_EQ(interp_bilinear(img, {rng.uniform(0, 4), rng.uniform(0, 4)}), 3.25);
  Image ramp(g);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) ramp.at(i, j) = i;
  EXPECT_DOUBLE_EQ(interp_bilinear(ramp, {-10.0, 1.0}), 0.0);
  EXPECT_DOUBLE_EQ(interp_bilinear(ramp, {50.0, 1.0}), 3.0);
}

TEST(Interp, NonFinitePointIsAnError) {
  const Image img(GridSpec({2, 2}), 1.0);
  try {
    interp_bilinear(img, {std::numeric_limits<double>::quiet_NaN(), 0.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::InvalidArgument);
    EXPECT_STREQ(e.what(), "invalid sample point");
  }
  EXPECT_THROW(interp_bilinear(img, {0.0, std::numeric_limits<double>::infinity()}), Error);
}

TEST(Interp, LinearInIntensities) {
  Rng rng(3);
  const GridSpec g({6, 5}, {0.0, 0.0}, {0.7, 1.3});
  const Image a = random_image(rng, g), b = random_image(rng, g);
  Image c(g);
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] = 2.0 * a.data[i] - 0.5 * b.data[i];
  for (int t = 0; t < 100; ++t) {
    const Point p{rng.uniform(-1, 5), rng.uniform(-1, 7)};
    EXPECT_NEAR(interp_bilinear(c, p), 2.0 * interp_bilinear(a, p) - 0.5 * interp_bilinear(b, p), 1e-12);
  }
}

TEST(Gradient, RampIsExact) {
  const GridSpec g({6, 5});
  Image img(g);
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 6; ++i) img.at(i, j) = 3.0 * g.center(i, j)[0];
  const auto grad = gradient_central(img);
  for (int p = 0; p < g.size(); ++p) {
    EXPECT_NEAR(grad[p], 3.0, 1e-12);
    EXPECT_NEAR(grad[g.size() + p], 0.0, 1e-12);
  }
}

TEST(Gradient, AffineImageAnisotropicSpacing) {
  const GridSpec g({5, 7}, {1.0, -2.0}, {0.3, 1.7});
  Image img(g);
  for (int j = 0; j < 7; ++j)
    for (int i = 0; i < 5; ++i) {
      const Point x = g.center(i, j);
      img.at(i, j) = 2.0 - 1.5 * x[0] + 0.25 * x[1];
    }
  const auto grad = gradient_central(img);
  for (int p = 0; p < g.size(); ++p) {
    EXPECT_NEAR(grad[p], -1.5, 1e-12);
    EXPECT_NEAR(grad[g.size() + p], 0.25, 1e-12);
  }
}

TEST(Gradient, ConstantImageGivesZero) {
  const auto grad = gradient_central(Image(GridSpec({4, 4}), 2.0));
  for (double v : grad) EXPECT_EQ(v, 0.0);
}

TEST(Gradient, MatchesDifferenceQuotientsOfInterpolant) {
  Rng rng(4);
  const GridSpec g({8, 8}, {0.0, 0.0}, {0.5, 0.75});
  const Image img = random_image(rng, g);
  const auto grad = gradient_central(img);
  for (int j = 1; j < 7; ++j)
    for (int i = 1; i < 7; ++i) {
      const Point x = g.center(i, j);
      const double d1 = (interp_bilinear(img, {x[0] + g.spacing[0], x[1]}) -
                         interp_bilinear(img, {x[0] - g.spacing[0], x[1]})) / (2 * g.spacing[0]);
      const double d2 = (interp_bilinear(img, {x[0], x[1] + g.spacing[1]}) -
                         interp_bilinear(img, {x[0], x[1] - g.spacing[1]})) / (2 * g.spacing[1]);
      EXPECT_NEAR(grad[g.index(i, j)], d1, 1e-12);
      EXPECT_NEAR(grad[g.size() + g.index(i, j)], d2, 1e-12);
    }
}

TEST(Gradient, AdjointIsTranspose) {
  Rng rng(5);
  const GridSpec g({7, 6}, {0.0, 0.0}, {0.4, 1.1});
  const Image img = random_image(rng, g);
  std::vector<double> v(2 * g.size());
  for (auto& x : v) x = rng.uniform(-1, 1);
  const auto gi = gradient_central(img);
  const auto gtv = gradient_central_adjoint(g, v);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) lhs += gi[i] * v[i];
  for (std::size_t i = 0; i < img.data.size(); ++i) rhs += img.data[i] * gtv[i];
  EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
}

TEST(Warp, ZeroFieldIsBitIdentical) {
  Rng rng(6);
  const GridSpec g({9, 7}, {0.3, -1.2}, {0.37, 0.91});
  const Image img = random_image(rng, g);
  const Image out = warp(img, DisplacementField(g));
  EXPECT_EQ(out.data, img.data);
}

TEST(Warp, ShiftOfRampIsExactInInterior) {
  const GridSpec g({8, 6}, {0.0, 0.0}, {0.5, 1.0});
  Image img(g);
  for (int j = 0; j < 6; ++j)
    for (int i = 0; i < 8; ++i) img.at(i, j) = g.center(i, j)[0];
  DisplacementField u(g);
  std::fill(u.component(0).begin(), u.component(0).end(), g.spacing[0]);
  const Image out = warp(img, u);
  for (int j = 0; j < 6; ++j)
    for (int i = 0; i < 7; ++i) EXPECT_NEAR(out.at(i, j), g.center(i, j)[0] + g.spacing[0], 1e-12);
}

TEST(Warp, MatchesPerPixelOracle) {
  Rng rng(7);
  const GridSpec g({8, 8});
  const Image img = random_image(rng, g);
  DisplacementField u(g);
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i) {
      u.u[g.index(i, j)] = 1.3 * std::sin(0.4 * i + 0.2 * j);
      u.u[g.size() + g.index(i, j)] = -0.8 * std::cos(0.3 * j);
    }
  const Image out = warp(img, u);
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i) {
      const Point x = g.center(i, j);
      const Point y{x[0] + u.u[g.index(i, j)], x[1] + u.u[g.size() + g.index(i, j)]};
      EXPECT_NEAR(out.at(i, j), interp_bilinear(img, y), 1e-14);
    }
}

TEST(Warp, DerivativeMatchesFiniteDifferences) {
  Rng rng(8);
  const GridSpec g({8, 8}, {0.0, 0.0}, {0.5, 0.5});
  const Image img = random_image(rng, g);
  const DisplacementField u = random_field(rng, g, 0.6);
  const WarpResult w = warp_with_derivative(img, u);
  const double h = 1e-6;
  for (int p = 0; p < g.size(); p += 3)
    for (int c = 0; c < 2; ++c) {
      DisplacementField up = u, um = u;
      up.u[c * g.size() + p] += h;
      um.u[c * g.size() + p] -= h;
      const double fd = (warp(img, up).data[p] - warp(img, um).data[p]) / (2 * h);
      EXPECT_NEAR(w.d_du[c * g.size() + p], fd, 1e-6);
    }
}

TEST(Warp, GridMismatchIsAnError) {
  EXPECT_THROW(warp(Image(GridSpec({4, 4})), DisplacementField(GridSpec({4, 5}))), Error);
}

TEST(Restrict, ConstantStaysConstant) {
  const Image out = restrict(Image(GridSpec({10, 8}), 4.5));
  EXPECT_EQ(out.grid.dims, (std::array<int, 2>{5, 4}));
  for (double v : out.data) EXPECT_NEAR(v, 4.5, 1e-14);
}

TEST(Restrict, RampKeepsPhysicalSlope) {
  const GridSpec g({16, 16});
  Image img(g);
  for (int j = 0; j < 16; ++j)
    for (int i = 0; i < 16; ++i) {
      const Point x = g.center(i, j);
      img.at(i, j) = 0.75 * x[0] - 0.2 * x[1] + 1.0;
    }
  const Image out = restrict(img);
  const GridSpec& cg = out.grid;
  EXPECT_EQ(cg.dims, (std::array<int, 2>{8, 8}));
  EXPECT_EQ(cg.spacing, (Point{2.0, 2.0}));
  EXPECT_EQ(cg.origin, g.origin);
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i) {
      const Point x = cg.center(i, j);
      EXPECT_NEAR(out.at(i, j), 0.75 * x[0] - 0.2 * x[1] + 1.0, 1e-12);
    }
}

TEST(Restrict, OddDimsFloorAndCoarsestLevel) {
  EXPECT_EQ(coarsen(GridSpec({9, 7})).dims, (std::array<int, 2>{4, 3}));
  try {
    restrict(Image(GridSpec({3, 8})));
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "coarsest level reached");
  }
}

TEST(Prolong, ZeroAndLinearity) {
  const GridSpec fine({16, 12}), coarse = coarsen(fine);
  const DisplacementField z = prolong(DisplacementField(coarse), fine);
  EXPECT_EQ(z.grid, fine);
  for (double v : z.u) EXPECT_EQ(v, 0.0);

  Rng rng(9);
  const DisplacementField a = random_field(rng, coarse, 1.0), b = random_field(rng, coarse, 1.0);
  DisplacementField c(coarse);
  for (std::size_t i = 0; i < c.u.size(); ++i) c.u[i] = 3.0 * a.u[i] + b.u[i];
  const auto pa = prolong(a, fine), pb = prolong(b, fine), pc = prolong(c, fine);
  for (std::size_t i = 0; i < pc.u.size(); ++i) EXPECT_NEAR(pc.u[i], 3.0 * pa.u[i] + pb.u[i], 1e-12);
}

TEST(Prolong, PreservesConstantDisplacement) {
  const GridSpec fine({16, 16}), coarse = coarsen(fine);
  DisplacementField c(coarse);
  std::fill(c.component(0).begin(), c.component(0).end(), 2.5);
  std::fill(c.component(1).begin(), c.component(1).end(), -1.0);
  const DisplacementField f = prolong(c, fine);
  for (double v : f.component(0)) EXPECT_NEAR(v, 2.5, 1e-14);
  for (double v : f.component(1)) EXPECT_NEAR(v, -1.0, 1e-14);
}

}  // namespace
}  // namespace sqnreg
