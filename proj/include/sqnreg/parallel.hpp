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

#ifndef SQNREG_PARALLEL_HPP_
#define SQNREG_PARALLEL_HPP_

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace sqnreg {

/// Execution policy for per-image loops. Work items write disjoint outputs and
/// all reductions happen afterwards in index order, so results do not depend on
/// the policy; `deterministic` additionally keeps everything on one thread.
struct Exec {
  bool deterministic = false;
  unsigned max_threads = 0;  // 0: hardware concurrency
};

template <class Fn>
void parallel_for(int count, const Exec& exec, Fn&& fn) {
  unsigned threads = exec.max_threads ? exec.max_threads : std::thread::hardware_concurrency();
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max(count, 0)));
  if (exec.deterministic || threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int i = static_cast<int>(t); i < count; i += static_cast<int>(threads)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  pool.clear();
  if (first_error) std::rethrow_exception(first_error);
}

namespace detail {

/// Correctly rounded sum (Shewchuk's nonoverlapping partials). The result does
/// not depend on the order of `values`, which keeps reductions over the image
/// index invariant under reordering of the stack.
inline double exact_sum(std::span<const double> values) {
  std::vector<double> partials;
  for (double x : values) {
    if (!std::isfinite(x)) {
      double plain = 0.0;
      for (double v : values) plain += v;
      return plain;
    }
    std::size_t used = 0;
    for (std::size_t j = 0; j < partials.size(); ++j) {
      double y = partials[j];
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[used++] = lo;
      x = hi;
    }
    partials.resize(used);
    partials.push_back(x);
  }
  if (partials.empty()) return 0.0;
  std::size_t n = partials.size();
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    lo = y - (hi - x);
    if (lo != 0.0) break;
  }
  // round half-way cases the way the infinitely precise sum would
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = 2.0 * lo;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

}  // namespace detail

}  // namespace sqnreg

#endif  // SQNREG_PARALLEL_HPP_
