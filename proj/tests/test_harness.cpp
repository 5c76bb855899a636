// Copyright 2026 The sqnreg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>

#include "test_util.hpp"

namespace sqnreg {
namespace {

TEST(FdOracle, QuadraticAndLinear) {
  auto quad = [](std::span<const double> x) { return 0.5 * (x[0] * x[0] + x[1] * x[1]); };
  const std::vector<double> e1{1.0, 0.0};
  const auto g = fd_oracle(quad, e1, 1e-5);
  EXPECT_NEAR(g[0], 1.0, 1e-10);
  EXPECT_NEAR(g[1], 0.0, 1e-10);

  const std::vector<double> a{2.0, -3.0, 0.5};
  auto lin = [&](std::span<const double> x) { return a[0] * x[0] + a[1] * x[1] + a[2] * x[2]; };
  const auto gl = fd_oracle(lin, std::vector<double>{0.3, 0.1, -7.0}, 1e-3);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(gl[i], a[i], 1e-10);

  EXPECT_THROW(fd_oracle(quad, e1, 0.0), Error);
  EXPECT_THROW(fd_oracle(quad, e1, -1e-5), Error);
}

TEST(RelativeError, FloorAvoidsDivisionByZero) {
  const std::vector<double> z(3, 0.0);
  EXPECT_EQ(relative_error(z, z), 0.0);
  EXPECT_NEAR(relative_error(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}), std::sqrt(2.0), 1e-15);
}

TEST(Synth, ZeroMagnitudeGivesIdenticalImages) {
  for (auto kind : {SynthKind::ShiftedDisks, SynthKind::RotatedSheppLike}) {
    const auto s = synth_stack(5, 4, kind, {0.0, 0.0}, 32);
    for (int k = 1; k < 4; ++k) EXPECT_EQ(s.stack.images[k].data, s.stack.images[0].data);
    for (const auto& f : s.truth)
      for (double v : f.u) EXPECT_EQ(v, 0.0);
  }
}

TEST(Synth, IntegerShiftIsExactTranslation) {
  const auto s = synth_stack(5, 2, SynthKind::ShiftedDisks, {3.0, 0.0}, 32);
  const Image& a = s.stack.images[0];
  const Image& b = s.stack.images[1];
  for (int j = 0; j < 32; ++j)
    for (int i = 3; i < 32; ++i) EXPECT_EQ(b.at(i, j), a.at(i - 3, j)) << i << "," << j;
  EXPECT_EQ(s.shifts[1], (Point{3.0, 0.0}));
  for (double v : s.truth[1].component(0)) EXPECT_EQ(v, 3.0);
}

TEST(Synth, DeterministicPerSeed) {
  const auto a = synth_stack(11, 5, SynthKind::ShiftedDisks, {4.0, 2.0});
  const auto b = synth_stack(11, 5, SynthKind::ShiftedDisks, {4.0, 2.0});
  const auto c = synth_stack(12, 5, SynthKind::ShiftedDisks, {4.0, 2.0});
  for (int k = 0; k < 5; ++k) EXPECT_EQ(a.stack.images[k].data, b.stack.images[k].data);
  EXPECT_NE(a.shifts[2], c.shifts[2]);
  for (int k = 2; k < 5; ++k) {
    EXPECT_LE(std::abs(a.shifts[k][0]), 4.0);
    EXPECT_LE(std::abs(a.shifts[k][1]), 2.0);
  }
}

TEST(Synth, KindsAndErrors) {
  EXPECT_EQ(parse_synth_kind("shifted_disks"), SynthKind::ShiftedDisks);
  EXPECT_THROW(parse_synth_kind("spirals"), Error);
  const auto s = synth_stack(2, 3, SynthKind::IntensityPerturbed, {0.2, 0.2}, 32);
  for (const auto& f : s.truth)
    for (double v : f.u) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(synth_stack(1, 1, SynthKind::ShiftedDisks, {1.0, 1.0}), Error);
}

TEST(CutView, IdenticalStackGivesIdenticalRows) {
  const auto s = synth_stack(1, 5, SynthKind::ShiftedDisks, {0.0, 0.0}, 32);
  for (int axis : {0, 1}) {
    const Image cut = cut_view(s.stack, axis, 16);
    EXPECT_EQ(cut.grid.dims, (std::array<int, 2>{32, 5}));
    for (int k = 1; k < 5; ++k)
      for (int t = 0; t < 32; ++t) EXPECT_EQ(cut.at(t, k), cut.at(t, 0));
  }
}

TEST(CutView, ShiftedSliceStandsOut) {
  // One slice moved along the cut line: its row differs from the others more
  // than the median row difference.
  std::vector<Image> images;
  const auto base = synth_stack(1, 2, SynthKind::ShiftedDisks, {4.0, 0.0}, 32);
  for (int k = 0; k < 6; ++k) images.push_back(base.stack.images[k == 3 ? 1 : 0]);
  const Image cut = cut_view(ImageStack(images), 1, 16);
  std::vector<double> ssd;
  for (int k = 0; k < 6; ++k) {
    double s = 0.0;
    for (int j = 0; j < 6; ++j)
      for (int t = 0; t < 32; ++t) s += std::pow(cut.at(t, k) - cut.at(t, j), 2);
    ssd.push_back(s);
  }
  std::vector<double> sorted = ssd;
  std::nth_element(sorted.begin(), sorted.begin() + 3, sorted.end());
  EXPECT_GT(ssd[3], sorted[3]);
  EXPECT_EQ(*std::max_element(ssd.begin(), ssd.end()), ssd[3]);
}

TEST(CutView, OutOfRange) {
  const auto s = synth_stack(1, 2, SynthKind::ShiftedDisks, {0.0, 0.0}, 16);
  EXPECT_THROW(cut_view(s.stack, 0, 16), Error);
  EXPECT_THROW(cut_view(s.stack, 1, -1), Error);
  EXPECT_THROW(cut_view(s.stack, 2, 0), Error);
}

TEST(RunConfig, ParsesKnownKeys) {
  const auto rc = run_config(parse_config("measure = sqn\nq = inf\nreg = elastic\nmu = 2\nlambda = 0.5\n"
                                          "alpha = 3\nmaxiter = 5,10,20\nlevels = 3\njitter = auto\n"
                                          "constraint = zero_mean\nseed = 42\nmanifest = s.txt\n"),
                             "/base");
  EXPECT_EQ(rc.spec.measure.tag, MeasureKind::Tag::SqN);
  EXPECT_TRUE(std::isinf(rc.spec.measure.q));
  EXPECT_EQ(rc.spec.reg.alpha, 3.0);
  EXPECT_EQ(rc.spec.constraint, Constraint::ZeroMeanDisplacement);
  EXPECT_EQ(rc.solve.maxiter_per_level, (std::vector<int>{5, 10, 20}));
  EXPECT_EQ(rc.solve.levels, 3);
  EXPECT_TRUE(rc.solve.auto_jitter);
  EXPECT_EQ(rc.seed, 42u);
  EXPECT_EQ(rc.manifest, std::filesystem::path("/base/s.txt"));
}

TEST(RunConfig, RejectsUnknownKeysAndValues) {
  try {
    run_config(parse_config("level = 3\n"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::Parse);
    EXPECT_NE(std::string(e.what()).find("'level'"), std::string::npos);
  }
  EXPECT_THROW(run_config(parse_config("measure = sqn3\n")), Error);
  EXPECT_THROW(run_config(parse_config("alpha = abc\n")), Error);
  EXPECT_THROW(run_config(parse_config("levels = 0\n")), Error);
}

TEST(Metrics, MeanPairwiseNgfOfIdenticalImagesIsSelfDistance) {
  // flat regions contribute 1/2 per unit area even when the images agree
  const auto s = synth_stack(1, 3, SynthKind::ShiftedDisks, {0.0, 0.0}, 32);
  const std::vector<DisplacementField> zero(3, DisplacementField(s.stack.grid()));
  const double self = ngf_pair(s.stack.images[0], s.stack.images[0], 1e-2).value;
  EXPECT_NEAR(mean_pairwise_ngf(s.stack, zero, 1e-2), self, 1e-12 * self);
  const auto t = synth_stack(1, 3, SynthKind::ShiftedDisks, {3.0, 2.0}, 32);
  EXPECT_GT(mean_pairwise_ngf(t.stack, zero, 1e-2), self);
}

TEST(Metrics, DiskMeanAndRms) {
  const auto s = synth_stack(4, 4, SynthKind::ShiftedDisks, {2.0, 1.0}, 32);
  const auto m = mean_displacement_in_disk(s.truth, s.center, s.radius);
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(m[k][0], s.shifts[k][0], 1e-12);
    EXPECT_NEAR(m[k][1], s.shifts[k][1], 1e-12);
  }
  EXPECT_EQ(rms_distance(m, m), 0.0);
  const auto r = relative_to_mean(m);
  double sx = 0.0;
  for (const auto& p : r) sx += p[0];
  EXPECT_NEAR(sx, 0.0, 1e-12);
}

}  // namespace
}  // namespace sqnreg
