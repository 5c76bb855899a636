// Copyright 2026 The sqnreg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace sqnreg {
namespace {

double max_abs(const std::vector<DisplacementField>& fields) {
  double m = 0.0;
  for (const auto& f : fields)
    for (double v : f.u) m = std::max(m, std::abs(v));
  return m;
}

void expect_monotone(const SolveReport& rep) {
  for (const auto& lvl : rep.levels)
    for (std::size_t i = 1; i < lvl.trace.size(); ++i)
      EXPECT_LE(lvl.trace[i].value, lvl.trace[i - 1].value) << "level " << lvl.level << " iter " << i;
}

TEST(ObjectiveSpec, ModeMeasureCompatibility) {
  EXPECT_THROW(ObjectiveSpec::groupwise(MeasureKind::ssd(), RegKind::diffusion(1.0)).validate(), Error);
  EXPECT_THROW(ObjectiveSpec::sequential(MeasureKind::sqn4(), RegKind::diffusion(1.0)).validate(), Error);
  EXPECT_NO_THROW(ObjectiveSpec::groupwise(MeasureKind::logdet(0.0), RegKind::elastic(1, 0, 1)).validate());
  EXPECT_EQ(ObjectiveSpec::groupwise(MeasureKind::sqn4(), RegKind::diffusion(1)).constraint,
            Constraint::ZeroMeanDisplacement);
  EXPECT_EQ(ObjectiveSpec::sequential(MeasureKind::ngf(1e-2), RegKind::diffusion(1)).constraint,
            Constraint::FixFirst);
}

TEST(Project, Constraints) {
  std::vector<std::vector<double>> g{{1.0, 2.0}, {3.0, -2.0}, {5.0, 3.0}};
  auto a = g;
  project(Constraint::None, a);
  EXPECT_EQ(a, g);
  a = g;
  project(Constraint::FixFirst, a);
  EXPECT_EQ(a[0], (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(a[2], g[2]);
  a = g;
  project(Constraint::ZeroMeanDisplacement, a);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(a[0][i] + a[1][i] + a[2][i], 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(a[0][0], 1.0 - 3.0);
}

TEST(Objective, IdenticalImagesGroupwiseMinimum) {
  Rng rng(1);
  const GridSpec g({10, 10});
  const Image img = testing::smooth_image(rng, g);
  const int K = 4;
  const ImageStack stack(std::vector<Image>(K, img));
  const std::vector<DisplacementField> zero(K, DisplacementField(g));
  const auto spec = ObjectiveSpec::groupwise(MeasureKind::sqn4(FeatureMapKind::intensity()), RegKind::diffusion(1.0));
  const auto e = objective(spec, stack, zero);
  EXPECT_NEAR(e.value, K - K * K, 1e-12);
  EXPECT_EQ(e.regularizer, 0.0);
  EXPECT_LE(std::sqrt(detail::sum_squares(testing::flat(e.grad))), 1e-8);
}

TEST(Objective, SequentialSSDIdentical) {
  Rng rng(2);
  const GridSpec g({6, 6});
  const Image img = testing::random_image(rng, g);
  const ImageStack stack({img, img});
  const auto spec = ObjectiveSpec::sequential(MeasureKind::ssd(), RegKind::diffusion(1.0));
  EXPECT_EQ(objective(spec, stack, std::vector<DisplacementField>(2, DisplacementField(g))).value, 0.0);
}

TEST(Objective, SequentialSkipsFirstRegularizer) {
  Rng rng(3);
  const GridSpec g({6, 6});
  const auto stack = testing::random_stack(rng, g, 3);
  const auto fields = testing::random_fields(rng, g, 3, 0.5);
  auto spec = ObjectiveSpec::sequential(MeasureKind::ssd(), RegKind::diffusion(2.0));
  const auto e = objective(spec, stack, fields);
  EXPECT_NEAR(e.regularizer, diffusion(fields[1], 2.0).value + diffusion(fields[2], 2.0).value, 1e-12);
  for (double v : e.grad[0]) EXPECT_EQ(v, 0.0);
}

class ObjectiveFD : public ::testing::TestWithParam<int> {};

TEST_P(ObjectiveFD, ProjectedGradientMatchesFiniteDifferences) {
  const std::vector<ObjectiveSpec> specs = {
      ObjectiveSpec::groupwise(MeasureKind::sqn4(), RegKind::diffusion(0.3)),
      ObjectiveSpec::groupwise(MeasureKind::sqn_inf(), RegKind::elastic(1.0, 0.5, 0.2)),
      {MeasureKind::logdet(1e-6), RegKind::diffusion(0.1), Mode::Groupwise, Constraint::None},
      ObjectiveSpec::sequential(MeasureKind::ngf(1e-2), RegKind::diffusion(0.3)),
      {MeasureKind::ssd(), RegKind::elastic(1.0, 0.0, 0.4), Mode::Sequential, Constraint::None},
  };
  const ObjectiveSpec spec = specs[GetParam()];
  Rng rng(200 + GetParam());
  const GridSpec g({8, 8}, {0.0, 0.0}, {0.8, 0.6});
  const auto stack = testing::random_stack(rng, g, 4);
  auto fields = testing::random_fields(rng, g, 4, 0.5);
  project(spec.constraint == Constraint::FixFirst ? Constraint::None : spec.constraint, fields);
  if (spec.constraint == Constraint::FixFirst) std::fill(fields[0].u.begin(), fields[0].u.end(), 0.0);
  const auto e = objective(spec, stack, fields);
  ASSERT_FALSE(e.subgradient);
  std::vector<DisplacementField> work = fields;
  auto fn = [&](std::span<const double> x) {
    detail::unflatten(x, work);
    return objective(spec, stack, work).value;
  };
  const auto fd = fd_oracle(fn, detail::flatten(fields), 1e-5);
  std::vector<std::vector<double>> fdg(4);
  const std::size_t block = fd.size() / 4;
  for (int k = 0; k < 4; ++k) fdg[k].assign(fd.begin() + k * block, fd.begin() + (k + 1) * block);
  project(spec.constraint, fdg);
  EXPECT_LE(relative_error(testing::flat(e.grad), testing::flat(fdg)), 1e-6);
}

INSTANTIATE_TEST_SUITE_P(Specs, ObjectiveFD, ::testing::Range(0, 5));

TEST(LbfgsSolve, ZeroMeanIsPreservedAndTraceMonotone) {
  const auto s = synth_stack(4, 4, SynthKind::ShiftedDisks, {2.0, 1.5}, 24);
  const auto spec = ObjectiveSpec::groupwise(MeasureKind::sqn4(), RegKind::diffusion(1.0));
  SolveOptions opts;
  opts.lbfgs.max_iter = 20;
  std::vector<DisplacementField> start = s.truth;  // not zero-mean; the solver projects it
  const auto rep = lbfgs_solve(spec, s.stack, start, opts);
  const auto& f = rep.fields;
  for (std::size_t i = 0; i < f[0].u.size(); ++i) {
    double m = 0.0;
    for (const auto& fk : f) m += fk.u[i];
    EXPECT_LE(std::abs(m) / 4.0, 1e-12);
  }
  expect_monotone(rep);
  EXPECT_EQ(rep.levels.size(), 1u);
  EXPECT_EQ(rep.evals, rep.levels[0].evals);
}

TEST(GaussSeidel, AlignedPairStaysPut) {
  Rng rng(5);
  const GridSpec g({12, 12});
  const Image img = testing::smooth_image(rng, g);
  const ImageStack stack({img, img});
  const auto spec = ObjectiveSpec::sequential(MeasureKind::ssd(), RegKind::diffusion(1.0));
  const auto rep = gauss_seidel_sweep(spec, stack, std::vector<DisplacementField>(2, DisplacementField(g)), 1, {});
  EXPECT_LE(max_abs(rep.fields), 1e-12);
  EXPECT_EQ(rep.levels[0].trace.size(), 1u);
}

TEST(GaussSeidel, OneShiftedImageImprovesBothPairs) {
  const auto s = synth_stack(6, 2, SynthKind::ShiftedDisks, {1.5, 0.0}, 32);
  // images 1 and 3 sit at the reference pose, image 2 is shifted
  const ImageStack stack({s.stack.images[0], s.stack.images[1], s.stack.images[0]});
  const GridSpec& g = stack.grid();
  const auto spec = ObjectiveSpec::sequential(MeasureKind::ssd(), RegKind::diffusion(0.1));
  const std::vector<DisplacementField> zero(3, DisplacementField(g));
  SolveOptions opts;
  opts.lbfgs.max_iter = 50;
  const auto rep = gauss_seidel_sweep(spec, stack, zero, 1, opts);
  const auto before = warp_stack(stack, zero), after = warp_stack(stack, rep.fields);
  EXPECT_LT(ssd_pair(after.images[0], after.images[1]).value, ssd_pair(before.images[0], before.images[1]).value);
  EXPECT_LT(ssd_pair(after.images[1], after.images[2]).value, ssd_pair(before.images[1], before.images[2]).value);
  for (double v : rep.fields[0].u) EXPECT_EQ(v, 0.0);
  expect_monotone(rep);
  // the trace records the full sequential objective
  EXPECT_NEAR(rep.final_value, objective(spec, stack, rep.fields).value, 1e-9);
}

TEST(GaussSeidel, ZeroSweepsIsIdentity) {
  Rng rng(7);
  const GridSpec g({8, 8});
  const auto stack = testing::random_stack(rng, g, 3);
  const auto fields = testing::random_fields(rng, g, 3, 0.3);
  const auto spec = ObjectiveSpec::sequential(MeasureKind::ngf(1e-2), RegKind::diffusion(1.0));
  const auto rep = gauss_seidel_sweep(spec, stack, fields, 0, {});
  for (int k = 0; k < 3; ++k) EXPECT_EQ(rep.fields[k].u, fields[k].u);
  EXPECT_EQ(rep.evals, 0);
  EXPECT_THROW(gauss_seidel_sweep(spec, stack, fields, -1, {}), Error);
  EXPECT_THROW(gauss_seidel_sweep(ObjectiveSpec::groupwise(MeasureKind::sqn4(), RegKind::diffusion(1)), stack,
                                  fields, 1, {}),
               Error);
}

TEST(Multilevel, OneLevelEqualsSingleSolve) {
  const auto s = synth_stack(8, 3, SynthKind::ShiftedDisks, {1.0, 1.0}, 16);
  const auto spec = ObjectiveSpec::groupwise(MeasureKind::sqn4(), RegKind::diffusion(1.0));
  SolveOptions opts;
  opts.lbfgs.max_iter = 10;
  opts.exec.deterministic = true;
  const auto ml = multilevel_solve(spec, s.stack, opts);
  ObjectiveSpec ls = spec;
  ls.measure = level_measure(spec, s.stack, std::vector<DisplacementField>(3, DisplacementField(s.stack.grid())), opts);
  const auto single =
      lbfgs_solve(ls, s.stack, std::vector<DisplacementField>(3, DisplacementField(s.stack.grid())), opts);
  ASSERT_EQ(ml.levels.size(), 1u);
  EXPECT_EQ(ml.final_value, single.final_value);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(ml.fields[k].u, single.fields[k].u);
}

TEST(Multilevel, IdenticalImagesGiveZeroFields) {
  const auto s = synth_stack(9, 3, SynthKind::ShiftedDisks, {0.0, 0.0}, 32);
  SolveOptions opts;
  opts.levels = 3;
  const auto rep = multilevel_solve(ObjectiveSpec::groupwise(MeasureKind::sqn4(), RegKind::diffusion(1.0)), s.stack, opts);
  EXPECT_EQ(rep.levels.size(), 3u);
  EXPECT_LE(max_abs(rep.fields), 1e-6);
}

TEST(Multilevel, SequentialIdenticalImagesKeepFirstAndDescend) {
  // Pointwise NGF is not stationary at the identity: flat regions score 1 and
  // widening edges lowers the integral, so only descent is asserted here.
  const auto s = synth_stack(9, 3, SynthKind::ShiftedDisks, {0.0, 0.0}, 32);
  SolveOptions opts;
  opts.levels = 2;
  const auto rep =
      multilevel_solve(ObjectiveSpec::sequential(MeasureKind::ngf(1e-2), RegKind::diffusion(1.0)), s.stack, opts);
  for (double v : rep.fields[0].u) EXPECT_EQ(v, 0.0);
  for (const auto& l : rep.levels) EXPECT_LE(l.trace.back().value, l.trace.front().value);
}

TEST(Multilevel, MatchesSingleLevelWithFewerFineEvaluations) {
  const auto s = synth_stack(10, 5, SynthKind::ShiftedDisks, {4.0, 3.0}, 64);
  const auto spec = ObjectiveSpec::groupwise(MeasureKind::sqn4(), RegKind::diffusion(1.0));
  SolveOptions ml;
  ml.levels = 3;
  ml.maxiter_per_level = {10, 10, 10};
  const auto a = multilevel_solve(spec, s.stack, ml);
  SolveOptions sl;
  sl.lbfgs.max_iter = 30;
  const auto b = multilevel_solve(spec, s.stack, sl);
  EXPECT_LE(a.final_value, b.final_value + 1e-3 * std::abs(b.final_value));
  EXPECT_LT(2 * a.levels.back().evals, b.evals);
  expect_monotone(a);
  EXPECT_EQ(a.levels.front().grid.dims, (std::array<int, 2>{16, 16}));
  EXPECT_EQ(a.levels.back().grid.dims, (std::array<int, 2>{64, 64}));
}

TEST(Multilevel, TooManyLevels) {
  const auto s = synth_stack(1, 2, SynthKind::ShiftedDisks, {1.0, 0.0}, 32);
  SolveOptions opts;
  opts.levels = 4;  // 32 -> 16 -> 8 -> 4
  EXPECT_THROW(multilevel_solve(ObjectiveSpec::groupwise(MeasureKind::sqn4(), RegKind::diffusion(1)), s.stack, opts),
               Error);
}

TEST(Multilevel, ErrorsCarryLevelIndex) {
  const GridSpec g({16, 16});
  Rng rng(11);
  const ImageStack stack({testing::smooth_image(rng, g), Image(g, 0.5)});
  SolveOptions opts;
  opts.levels = 2;
  try {
    multilevel_solve(ObjectiveSpec::groupwise(MeasureKind::logdet(0.0), RegKind::diffusion(1)), stack, opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::Degenerate);
    EXPECT_EQ(std::string(e.what()).rfind("level 1: ", 0), 0u) << e.what();
  }
}

TEST(Multilevel, EvalBudgetIsRespected) {
  const auto s = synth_stack(12, 4, SynthKind::ShiftedDisks, {3.0, 2.0}, 32);
  SolveOptions opts;
  opts.levels = 2;
  opts.max_evals = 15;
  const auto rep = multilevel_solve(ObjectiveSpec::groupwise(MeasureKind::sqn4(), RegKind::diffusion(1)), s.stack, opts);
  EXPECT_LE(rep.evals, 15);
  EXPECT_TRUE(rep.budget_exhausted);
  EXPECT_EQ(rep.fields[0].grid, s.stack.grid());
}

TEST(Multilevel, AutoJitterLogDet) {
  const auto s = synth_stack(13, 4, SynthKind::ShiftedDisks, {2.0, 2.0}, 32);
  SolveOptions opts;
  opts.levels = 2;
  opts.auto_jitter = true;
  opts.lbfgs.max_iter = 30;
  const auto rep = multilevel_solve(ObjectiveSpec::groupwise(MeasureKind::logdet(0.0), RegKind::diffusion(1)),
                                    s.stack, opts);
  for (const auto& lvl : rep.levels) EXPECT_GT(lvl.measure.jitter, 0.0);
  expect_monotone(rep);
}

}  // namespace
}  // namespace sqnreg
