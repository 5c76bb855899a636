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

#ifndef SQNREG_LBFGS_HPP_
#define SQNREG_LBFGS_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "sqnreg/parallel.hpp"

namespace sqnreg {

/// Objective value as seen by the optimizer. Implicitly constructible from a
/// plain double so simple lambdas can be passed directly.
struct ObjectiveValue {
  double value = 0.0;
  bool subgradient = false;

  ObjectiveValue() = default;
  ObjectiveValue(double v, bool sub = false) : value(v), subgradient(sub) {}  // NOLINT
};

struct LbfgsOptions {
  int memory = 5;
  int max_iter = 100;
  double gtol = 1e-5;  // relative: ||g|| <= gtol * max(1, ||g0||)
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_linesearch = 20;
  /// Caps the infinity norm of the first trial step of every search along a
  /// direction built without curvature pairs.
  double max_initial_step = std::numeric_limits<double>::infinity();
  long max_evals = std::numeric_limits<long>::max();
  /// When nonzero, x is a sequence of blocks of this length (one per image)
  /// and inner products add the per-block partial sums exactly, so the
  /// iterates do not depend on the block order.
  std::size_t block = 0;
};

struct IterRecord {
  int iter = 0;
  double value = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
  bool wolfe = true;  // strong Wolfe satisfied (false: Armijo-only fallback)
  bool subgradient = false;
  long evals = 0;     // cumulative objective evaluations
  double time_s = 0.0;
  int component = -1;  // Gauss-Seidel component, -1 for joint solves
};

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  double grad_norm = 0.0;
  double grad_norm0 = 0.0;
  std::vector<IterRecord> trace;  // trace[0] is the starting point
  long evals = 0;
  bool converged = false;
  bool linesearch_failed = false;
  bool budget_exhausted = false;
};

/// Inverse of the initial metric M; the two-loop recursion uses tau * M^{-1}
/// as its base operator. Identity when empty.
using InverseMetric = std::function<void(std::span<const double>, std::span<double>)>;

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b, std::size_t block = 0) {
  if (block == 0 || block >= a.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }
  std::vector<double> partial;
  for (std::size_t off = 0; off < a.size(); off += block) {
    double s = 0.0;
    for (std::size_t i = off; i < std::min(off + block, a.size()); ++i) s += a[i] * b[i];
    partial.push_back(s);
  }
  return exact_sum(partial);
}

inline double norm2(const std::vector<double>& a, std::size_t block = 0) { return std::sqrt(dot(a, a, block)); }

inline double norm_inf(const std::vector<double>& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

/// Minimizer of the cubic interpolating (a, fa, da), (b, fb, db), safeguarded
/// into the interior of the bracket.
inline double cubic_step(double a, double fa, double da, double b, double fb, double db) {
  const double lo = std::min(a, b), hi = std::max(a, b);
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  double t = 0.5 * (a + b);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = db - da + 2.0 * d2;
    if (denom != 0.0) t = b - (b - a) * (db + d2 - d1) / denom;
  }
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) t = 0.5 * (a + b);
  return t;
}

}  // namespace detail

/// Limited-memory BFGS with a strong-Wolfe line search.
///
/// `fn(x, g)` returns the objective at x and writes its gradient into g. The
/// gradient must already be projected onto any constraint subspace; the
/// inverse metric must map that subspace to itself.
template <class Fn>
LbfgsResult lbfgs(Fn&& fn, std::vector<double> x0, const LbfgsOptions& opts,
                  const InverseMetric& metric = {}) {
  auto bdot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    return detail::dot(a, b, opts.block);
  };
  auto bnorm = [&](const std::vector<double>& a) { return std::sqrt(bdot(a, a)); };
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const std::size_t N = x0.size();
  LbfgsResult res;
  res.x = std::move(x0);

  auto apply_metric = [&](const std::vector<double>& in, std::vector<double>& out) {
    out.resize(N);
    if (metric)
      metric(in, out);
    else
      std::copy(in.begin(), in.end(), out.begin());
  };
  auto evaluate = [&](const std::vector<double>& x, std::vector<double>& g) {
    g.assign(N, 0.0);
    ObjectiveValue v = fn(std::span<const double>(x), std::span<double>(g));
    ++res.evals;
    return v;
  };
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

  std::vector<double> g;
  ObjectiveValue f = evaluate(res.x, g);
  res.value = f.value;
  res.grad_norm0 = res.grad_norm = bnorm(g);
  res.trace.push_back({0, f.value, res.grad_norm, 0.0, true, f.subgradient, res.evals, elapsed(), -1});
  const double gstop = opts.gtol * std::max(1.0, res.grad_norm0);
  if (res.grad_norm <= gstop) {
    res.converged = true;
    return res;
  }

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> memory;
  double tau = 1.0;

  std::vector<double> d(N), q(N), r(N), x_new(N), g_new(N);
  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    // Two-loop recursion with base operator tau * M^{-1}.
    q = g;
    std::vector<double> alphas(memory.size());
    for (std::size_t i = memory.size(); i-- > 0;) {
      alphas[i] = memory[i].rho * bdot(memory[i].s, q);
      for (std::size_t j = 0; j < N; ++j) q[j] -= alphas[i] * memory[i].y[j];
    }
    apply_metric(q, r);
    for (double& v : r) v *= tau;
    for (std::size_t i = 0; i < memory.size(); ++i) {
      const double beta = memory[i].rho * bdot(memory[i].y, r);
      for (std::size_t j = 0; j < N; ++j) r[j] += (alphas[i] - beta) * memory[i].s[j];
    }
    for (std::size_t j = 0; j < N; ++j) d[j] = -r[j];
    double dphi0 = bdot(g, d);
    if (!(dphi0 < 0.0)) {
      // Not a descent direction (possible at subgradient points): restart.
      memory.clear();
      tau = 1.0;
      apply_metric(g, r);
      for (std::size_t j = 0; j < N; ++j) d[j] = -r[j];
      dphi0 = bdot(g, d);
      if (!(dphi0 < 0.0)) {
        res.linesearch_failed = true;
        break;
      }
    }

    double step = 1.0;
    if (memory.empty()) {
      const double dmax = detail::norm_inf(d);
      if (dmax * step > opts.max_initial_step) step = opts.max_initial_step / dmax;
    }

    // Strong-Wolfe search (bracketing + zoom).
    const double f0 = f.value;
    auto phi = [&](double a, std::vector<double>& xa, std::vector<double>& ga, double& dphi) {
      for (std::size_t j = 0; j < N; ++j) xa[j] = res.x[j] + a * d[j];
      ObjectiveValue v = evaluate(xa, ga);
      dphi = bdot(ga, d);
      return v;
    };
    bool accepted = false, wolfe = false;
    double a_acc = 0.0;
    ObjectiveValue f_acc;
    std::vector<double> x_acc, g_acc;
    // best Armijo point seen, as fallback
    double a_best = 0.0, f_best = f0;
    std::vector<double> x_best, g_best;
    bool best_sub = false;
    auto note = [&](double a, const ObjectiveValue& v, const std::vector<double>& xa, const std::vector<double>& ga) {
      if (v.value <= f0 + opts.c1 * a * dphi0 && v.value < f_best) {
        a_best = a;
        f_best = v.value;
        x_best = xa;
        g_best = ga;
        best_sub = v.subgradient;
      }
    };
    auto accept = [&](double a, const ObjectiveValue& v, const std::vector<double>& xa, const std::vector<double>& ga) {
      accepted = true;
      wolfe = true;
      a_acc = a;
      f_acc = v;
      x_acc = xa;
      g_acc = ga;
    };

    double a_prev = 0.0, f_prev = f0, dphi_prev = dphi0;
    double a_cur = step;
    int trials = 0;
    double lo = 0, flo = 0, dlo = 0, hi = 0, fhi = 0, dhi = 0;
    bool zoom = false;
    while (trials < opts.max_linesearch && res.evals < opts.max_evals) {
      double dphi;
      ObjectiveValue v = phi(a_cur, x_new, g_new, dphi);
      ++trials;
      note(a_cur, v, x_new, g_new);
      const bool armijo = v.value <= f0 + opts.c1 * a_cur * dphi0 && v.value < f0;
      if (!armijo || (trials > 1 && v.value >= f_prev)) {
        lo = a_prev, flo = f_prev, dlo = dphi_prev;
        hi = a_cur, fhi = v.value, dhi = dphi;
        zoom = true;
        break;
      }
      if (std::abs(dphi) <= -opts.c2 * dphi0) {
        accept(a_cur, v, x_new, g_new);
        break;
      }
      if (dphi >= 0.0) {
        lo = a_cur, flo = v.value, dlo = dphi;
        hi = a_prev, fhi = f_prev, dhi = dphi_prev;
        zoom = true;
        break;
      }
      a_prev = a_cur, f_prev = v.value, dphi_prev = dphi;
      a_cur *= 2.0;
    }
    if (zoom) {
      while (trials < opts.max_linesearch && res.evals < opts.max_evals) {
        const double a = detail::cubic_step(lo, flo, dlo, hi, fhi, dhi);
        double dphi;
        ObjectiveValue v = phi(a, x_new, g_new, dphi);
        ++trials;
        note(a, v, x_new, g_new);
        const bool armijo = v.value <= f0 + opts.c1 * a * dphi0 && v.value < f0;
        if (!armijo || v.value >= flo) {
          hi = a, fhi = v.value, dhi = dphi;
        } else {
          if (std::abs(dphi) <= -opts.c2 * dphi0) {
            accept(a, v, x_new, g_new);
            break;
          }
          if (dphi * (hi - lo) >= 0.0) hi = lo, fhi = flo, dhi = dlo;
          lo = a, flo = v.value, dlo = dphi;
        }
        if (std::abs(hi - lo) <= 1e-16 * std::max(1.0, std::abs(lo))) break;
      }
    }
    if (!accepted && a_best > 0.0) {
      accepted = true;
      wolfe = false;
      a_acc = a_best;
      f_acc = ObjectiveValue(f_best, best_sub);
      x_acc = std::move(x_best);
      g_acc = std::move(g_best);
    }
    if (!accepted) {
      if (res.evals >= opts.max_evals)
        res.budget_exhausted = true;
      else
        res.linesearch_failed = true;
      break;
    }

    // Curvature pair.
    Pair pr;
    pr.s.resize(N);
    pr.y.resize(N);
    for (std::size_t j = 0; j < N; ++j) {
      pr.s[j] = x_acc[j] - res.x[j];
      pr.y[j] = g_acc[j] - g[j];
    }
    const double sy = bdot(pr.s, pr.y);
    if (sy > 1e-12 * bnorm(pr.s) * bnorm(pr.y) && sy > 0.0) {
      std::vector<double> my;
      apply_metric(pr.y, my);
      const double ymy = bdot(pr.y, my);
      if (ymy > 0.0) tau = sy / ymy;
      pr.rho = 1.0 / sy;
      memory.push_back(std::move(pr));
      if (static_cast<int>(memory.size()) > opts.memory) memory.pop_front();
    }

    res.x = std::move(x_acc);
    g = std::move(g_acc);
    f = f_acc;
    res.value = f.value;
    res.grad_norm = bnorm(g);
    res.trace.push_back({iter, f.value, res.grad_norm, a_acc, wolfe, f.subgradient, res.evals, elapsed(), -1});
    if (res.grad_norm <= gstop) {
      res.converged = true;
      break;
    }
    if (res.evals >= opts.max_evals) {
      res.budget_exhausted = true;
      break;
    }
  }
  return res;
}

}  // namespace sqnreg

#endif  // SQNREG_LBFGS_HPP_
