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

#ifndef SQNREG_OPTIM_HPP_
#define SQNREG_OPTIM_HPP_

#include <algorithm>
#include <chrono>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sqnreg/error.hpp"
#include "sqnreg/grid.hpp"
#include "sqnreg/lbfgs.hpp"
#include "sqnreg/measures.hpp"
#include "sqnreg/parallel.hpp"
#include "sqnreg/regularizers.hpp"

namespace sqnreg {

enum class Mode { Groupwise, Sequential };
enum class Constraint { None, FixFirst, ZeroMeanDisplacement };

struct ObjectiveSpec {
  MeasureKind measure = MeasureKind::sqn4();
  RegKind reg = RegKind::diffusion(1.0);
  Mode mode = Mode::Groupwise;
  Constraint constraint = Constraint::ZeroMeanDisplacement;

  static ObjectiveSpec groupwise(MeasureKind m, RegKind r) {
    return {m, r, Mode::Groupwise, Constraint::ZeroMeanDisplacement};
  }
  static ObjectiveSpec sequential(MeasureKind m, RegKind r) {
    return {m, r, Mode::Sequential, Constraint::FixFirst};
  }

  void validate() const {
    measure.validate();
    reg.validate();
    if (mode == Mode::Groupwise)
      detail::require(measure.is_groupwise(), ErrorCategory::InvalidArgument,
                      "groupwise mode needs a groupwise measure");
    else
      detail::require(!measure.is_groupwise(), ErrorCategory::InvalidArgument,
                      "sequential mode needs a pairwise measure");
  }
};

struct ObjectiveEval {
  double value = 0.0;
  double distance = 0.0;
  double regularizer = 0.0;
  std::vector<std::vector<double>> grad;  // per field, projected
  bool subgradient = false;
  Eigen::VectorXd sigma;
};

/// FixFirst zeroes the first field's gradient; ZeroMeanDisplacement removes
/// the per-sample mean over the stack.
inline void project(Constraint c, std::vector<std::vector<double>>& g) {
  if (g.empty()) return;
  if (c == Constraint::FixFirst) {
    std::fill(g[0].begin(), g[0].end(), 0.0);
  } else if (c == Constraint::ZeroMeanDisplacement) {
    const std::size_t N = g[0].size();
    const double K = static_cast<double>(g.size());
    std::vector<double> column(g.size());
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t k = 0; k < g.size(); ++k) column[k] = g[k][i];
      const double mean = detail::exact_sum(column) / K;
      for (auto& gk : g) gk[i] -= mean;
    }
  }
}

inline void project(Constraint c, std::vector<DisplacementField>& fields) {
  std::vector<std::vector<double>> u;
  u.reserve(fields.size());
  for (auto& f : fields) u.push_back(std::move(f.u));
  project(c, u);
  for (std::size_t k = 0; k < fields.size(); ++k) fields[k].u = std::move(u[k]);
}

/// Groupwise: D(T o Y) + sum_k S(y_k).
/// Sequential: sum_{k>=2} D(T_{k-1} o y_{k-1}, T_k o y_k) + S(y_k).
inline ObjectiveEval objective(const ObjectiveSpec& spec, const ImageStack& stack,
                               const std::vector<DisplacementField>& fields, const Exec& exec = {}) {
  spec.validate();
  MeasureEval m = measure_eval(stack, fields, spec.measure, exec);
  ObjectiveEval out;
  out.distance = m.value;
  out.subgradient = m.subgradient;
  out.sigma = std::move(m.sigma);
  out.grad = std::move(m.grad);
  const int K = stack.size();
  std::vector<double> reg_values;
  for (int k = (spec.mode == Mode::Sequential ? 1 : 0); k < K; ++k) {
    RegValue r = regularize(fields[k], spec.reg);
    reg_values.push_back(r.value);
    for (std::size_t i = 0; i < r.grad.size(); ++i) out.grad[k][i] += r.grad[i];
  }
  out.regularizer = detail::exact_sum(reg_values);
  out.value = out.distance + out.regularizer;
  project(spec.constraint, out.grad);
  return out;
}

struct SolveOptions {
  LbfgsOptions lbfgs;
  int levels = 1;
  /// Optional per-level iteration caps, coarsest level first.
  std::vector<int> maxiter_per_level;
  int sweeps = 1;  // Gauss-Seidel sweeps per level (sequential mode)
  bool reg_metric = true;
  double metric_eps_rel = 1e-6;  // metric shift eps = metric_eps_rel * alpha
  /// Per-level NGF eta relative to the stack's mean gradient energy; when
  /// empty the ObjectiveSpec values are used unchanged.
  std::optional<double> eta_rel = 1e-2;
  /// LogDet: replace the jitter by jitter_rel * trace(C)/K computed from the
  /// starting fields of each level.
  bool auto_jitter = false;
  double jitter_rel = 1e-8;
  /// First trial step limited to this many cell widths.
  double first_step_cells = 1.0;
  long max_evals = std::numeric_limits<long>::max();
  Exec exec;
};

struct LevelReport {
  int level = 0;  // number of restrictions applied; 0 is the input resolution
  GridSpec grid;
  MeasureKind measure;  // with the per-level eta / jitter filled in
  std::vector<IterRecord> trace;
  long evals = 0;
  bool converged = false;
  bool linesearch_failed = false;
};

struct SolveReport {
  std::vector<LevelReport> levels;  // in solve order, coarsest first
  std::vector<DisplacementField> fields;
  double final_value = 0.0;
  double wall_time_s = 0.0;
  long evals = 0;
  bool linesearch_failed = false;
  bool budget_exhausted = false;
};

namespace detail {

inline std::vector<double> flatten(const std::vector<DisplacementField>& fields) {
  std::vector<double> x;
  for (const auto& f : fields) x.insert(x.end(), f.u.begin(), f.u.end());
  return x;
}

inline void unflatten(std::span<const double> x, std::vector<DisplacementField>& fields) {
  std::size_t off = 0;
  for (auto& f : fields) {
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(off),
              x.begin() + static_cast<std::ptrdiff_t>(off + f.u.size()), f.u.begin());
    off += f.u.size();
  }
}

/// Block-diagonal inverse metric built from one field's regularizer Hessian.
inline InverseMetric make_metric(const GridSpec& grid, const ObjectiveSpec& spec, const SolveOptions& opts) {
  if (!opts.reg_metric) return {};
  auto metric = std::make_shared<RegularizerMetric>(grid, spec.reg, opts.metric_eps_rel * spec.reg.alpha);
  const std::size_t block = 2 * static_cast<std::size_t>(grid.size());
  return [metric, block](std::span<const double> in, std::span<double> out) {
    for (std::size_t off = 0; off < in.size(); off += block)
      metric->apply_inverse(in.subspan(off, block), out.subspan(off, block));
  };
}

inline LbfgsOptions level_options(const SolveOptions& opts, const GridSpec& grid, long evals_used) {
  LbfgsOptions lo = opts.lbfgs;
  lo.block = 2 * static_cast<std::size_t>(grid.size());
  lo.max_initial_step = opts.first_step_cells * std::min(grid.spacing[0], grid.spacing[1]);
  lo.max_evals = opts.max_evals == std::numeric_limits<long>::max()
                     ? opts.max_evals
                     : std::max(0L, opts.max_evals - evals_used);
  return lo;
}

}  // namespace detail

/// One L-BFGS solve over all fields jointly at the stack's resolution.
inline SolveReport lbfgs_solve(const ObjectiveSpec& spec, const ImageStack& stack,
                               std::vector<DisplacementField> fields, const SolveOptions& opts) {
  spec.validate();
  const auto t0 = std::chrono::steady_clock::now();
  project(spec.constraint == Constraint::FixFirst ? Constraint::None : spec.constraint, fields);
  if (spec.constraint == Constraint::FixFirst) std::fill(fields[0].u.begin(), fields[0].u.end(), 0.0);

  std::vector<DisplacementField> work = fields;
  auto fn = [&](std::span<const double> x, std::span<double> g) {
    detail::unflatten(x, work);
    ObjectiveEval e = objective(spec, stack, work, opts.exec);
    std::size_t off = 0;
    for (const auto& gk : e.grad) {
      std::copy(gk.begin(), gk.end(), g.begin() + static_cast<std::ptrdiff_t>(off));
      off += gk.size();
    }
    return ObjectiveValue(e.value, e.subgradient);
  };
  LbfgsResult r = lbfgs(fn, detail::flatten(fields), detail::level_options(opts, stack.grid(), 0),
                        detail::make_metric(stack.grid(), spec, opts));
  detail::unflatten(r.x, fields);

  SolveReport rep;
  LevelReport lvl;
  lvl.grid = stack.grid();
  lvl.measure = spec.measure;
  lvl.trace = std::move(r.trace);
  lvl.evals = r.evals;
  lvl.converged = r.converged;
  lvl.linesearch_failed = r.linesearch_failed;
  rep.levels.push_back(std::move(lvl));
  rep.fields = std::move(fields);
  rep.final_value = r.value;
  rep.evals = r.evals;
  rep.linesearch_failed = r.linesearch_failed;
  rep.budget_exhausted = r.budget_exhausted;
  rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Nonlinear Gauss-Seidel on the sequential objective: for l = 2..K, minimize
/// over u_l alone with all other fields frozen. u_1 is never touched.
inline SolveReport gauss_seidel_sweep(const ObjectiveSpec& spec, const ImageStack& stack,
                                      std::vector<DisplacementField> fields, int sweeps,
                                      const SolveOptions& opts) {
  spec.validate();
  detail::require(spec.mode == Mode::Sequential, ErrorCategory::InvalidArgument,
                  "Gauss-Seidel sweeps need a sequential objective");
  detail::require(sweeps >= 0, ErrorCategory::InvalidArgument, "sweep count must be >= 0");
  const auto t0 = std::chrono::steady_clock::now();
  const int K = stack.size();
  const GridSpec& grid = stack.grid();

  SolveReport rep;
  LevelReport lvl;
  lvl.grid = grid;
  lvl.measure = spec.measure;
  const ObjectiveEval start = objective(spec, stack, fields, opts.exec);
  double start_norm = 0.0;
  for (const auto& gk : start.grad) start_norm += detail::dot(gk, gk);
  lvl.trace.push_back({0, start.value, std::sqrt(start_norm), 0.0, true, start.subgradient, 0, 0.0, -1});
  double total = start.value;

  // One field's metric; the component problems have a single block.
  const InverseMetric metric = detail::make_metric(grid, spec, opts);
  long evals = 0;
  bool converged = true;
  for (int sweep = 0; sweep < sweeps && !rep.budget_exhausted; ++sweep) {
    for (int l = 1; l < K; ++l) {
      std::vector<Image> warped(K);
      for (int k : {l - 1, l + 1})
        if (k >= 0 && k < K) warped[k] = warp(stack.images[k], fields[k]);
      DisplacementField z = fields[l];

      // Terms of the sequential objective that depend on u_l.
      auto local = [&](const DisplacementField& f, std::vector<double>* grad) {
        WarpResult w = warp_with_derivative(stack.images[l], f);
        const std::size_t n = static_cast<std::size_t>(grid.size());
        std::vector<double> dT(n, 0.0);
        double value = 0.0;
        PairEval left = pair_eval(spec.measure, warped[l - 1], w.image);
        value += left.value;
        for (std::size_t p = 0; p < n; ++p) dT[p] += left.dB[p];
        if (l + 1 < K) {
          PairEval right = pair_eval(spec.measure, w.image, warped[l + 1]);
          value += right.value;
          for (std::size_t p = 0; p < n; ++p) dT[p] += right.dA[p];
        }
        RegValue r = regularize(f, spec.reg);
        value += r.value;
        if (grad) {
          *grad = detail::chain_warp(w, dT);
          for (std::size_t i = 0; i < r.grad.size(); ++i) (*grad)[i] += r.grad[i];
        }
        return value;
      };
      const double before_local = local(z, nullptr);
      const double rest = total - before_local;

      auto fn = [&](std::span<const double> x, std::span<double> g) {
        std::copy(x.begin(), x.end(), z.u.begin());
        std::vector<double> grad;
        const double v = local(z, &grad);
        std::copy(grad.begin(), grad.end(), g.begin());
        return ObjectiveValue(v);
      };
      LbfgsResult r;
      try {
        r = lbfgs(fn, fields[l].u, detail::level_options(opts, grid, evals), metric);
      } catch (const Error& e) {
        throw e.annotated("component " + std::to_string(l) + ": ");
      }
      std::copy(r.x.begin(), r.x.end(), fields[l].u.begin());
      for (std::size_t i = 1; i < r.trace.size(); ++i) {
        IterRecord rec = r.trace[i];
        rec.value += rest;
        rec.evals += evals;
        rec.component = l;
        rec.iter = static_cast<int>(lvl.trace.size());
        lvl.trace.push_back(rec);
      }
      evals += r.evals;
      total = rest + r.value;
      converged = converged && r.converged;
      rep.linesearch_failed = rep.linesearch_failed || r.linesearch_failed;
      if (r.budget_exhausted || evals >= opts.max_evals) {
        rep.budget_exhausted = true;
        break;
      }
    }
  }
  lvl.evals = evals;
  lvl.converged = converged;
  lvl.linesearch_failed = rep.linesearch_failed;
  rep.levels.push_back(std::move(lvl));
  rep.fields = std::move(fields);
  rep.final_value = total;
  rep.evals = evals;
  rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Mean over the stack of the squared-gradient L2 energy, and the mean
/// pointwise squared gradient magnitude.
struct GradientScale {
  double energy = 0.0;
  double pointwise = 0.0;
};

inline GradientScale gradient_scale(const ImageStack& stack) {
  GradientScale s;
  const double w = stack.grid().cell_volume();
  const int n = stack.grid().size();
  std::vector<double> energy, pointwise;
  for (const auto& img : stack.images) {
    const double sq = detail::sum_squares(gradient_central(img));
    energy.push_back(sq * w);
    pointwise.push_back(sq / n);
  }
  s.energy = detail::exact_sum(energy) / stack.size();
  s.pointwise = detail::exact_sum(pointwise) / stack.size();
  return s;
}

/// Measure parameters adapted to one pyramid level.
inline MeasureKind level_measure(const ObjectiveSpec& spec, const ImageStack& stack,
                                 const std::vector<DisplacementField>& fields, const SolveOptions& opts) {
  MeasureKind m = spec.measure;
  if (opts.eta_rel) {
    const GradientScale s = gradient_scale(stack);
    const double floor = std::numeric_limits<double>::min();
    if (m.is_groupwise() && m.feature.tag == FeatureMapKind::Tag::NGF)
      m.feature.eta = std::max(*opts.eta_rel * s.energy, floor);
    if (m.tag == MeasureKind::Tag::NGFPair) m.eta_pt = std::max(*opts.eta_rel * s.pointwise, floor);
  }
  if (m.tag == MeasureKind::Tag::LogDet && opts.auto_jitter) {
    const FeatureMatrix F = assemble(stack, fields, m.feature);
    const Eigen::VectorXd diag = gram(F).C.diagonal();
    m.jitter = opts.jitter_rel * detail::exact_sum({diag.data(), static_cast<std::size_t>(diag.size())}) /
               stack.size();
  }
  return m;
}

/// Coarse-to-fine solve: the stack is restricted levels-1 times, each level is
/// solved from the prolonged result of the coarser one.
inline SolveReport multilevel_solve(const ObjectiveSpec& spec, const ImageStack& stack,
                                    const SolveOptions& opts) {
  spec.validate();
  detail::require(opts.levels >= 1, ErrorCategory::InvalidArgument, "need at least one level");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<ImageStack> pyramid{stack};
  for (int l = 1; l < opts.levels; ++l) {
    const GridSpec& g = pyramid.back().grid();
    detail::require(g.dims[0] / 2 >= 8 && g.dims[1] / 2 >= 8, ErrorCategory::InvalidArgument,
                    "coarsest level would be smaller than 8x8");
    pyramid.push_back(restrict(pyramid.back()));
  }

  SolveReport rep;
  std::vector<DisplacementField> fields;
  for (int l = opts.levels - 1; l >= 0; --l) {
    const ImageStack& level_stack = pyramid[l];
    const GridSpec& grid = level_stack.grid();
    if (fields.empty()) {
      fields.assign(stack.size(), DisplacementField(grid));
    } else {
      for (auto& f : fields) f = prolong(f, grid);
    }
    SolveOptions lo = opts;
    const int idx = opts.levels - 1 - l;
    if (idx < static_cast<int>(opts.maxiter_per_level.size())) lo.lbfgs.max_iter = opts.maxiter_per_level[idx];
    lo.max_evals = opts.max_evals == std::numeric_limits<long>::max() ? opts.max_evals
                                                                         : std::max(0L, opts.max_evals - rep.evals);
    if (lo.max_evals <= 0) {
      rep.budget_exhausted = true;
      continue;  // budget spent: only carry the fields to the finer grids
    }
    SolveReport level;
    try {
      ObjectiveSpec ls = spec;
      ls.measure = level_measure(spec, level_stack, fields, opts);
      level = spec.mode == Mode::Groupwise ? lbfgs_solve(ls, level_stack, std::move(fields), lo)
                                           : gauss_seidel_sweep(ls, level_stack, std::move(fields), opts.sweeps, lo);
      level.levels.front().measure = ls.measure;
    } catch (const Error& e) {
      throw e.annotated("level " + std::to_string(l) + ": ");
    }
    level.levels.front().level = l;
    rep.levels.push_back(std::move(level.levels.front()));
    fields = std::move(level.fields);
    rep.evals += level.evals;
    rep.final_value = level.final_value;
    rep.linesearch_failed = rep.linesearch_failed || level.linesearch_failed;
    rep.budget_exhausted = rep.budget_exhausted || level.budget_exhausted;
  }
  rep.fields = std::move(fields);
  rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace sqnreg

#endif  // SQNREG_OPTIM_HPP_
