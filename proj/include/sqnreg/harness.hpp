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

#ifndef SQNREG_HARNESS_HPP_
#define SQNREG_HARNESS_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "sqnreg/error.hpp"
#include "sqnreg/grid.hpp"
#include "sqnreg/io.hpp"
#include "sqnreg/measures.hpp"
#include "sqnreg/optim.hpp"
#include "sqnreg/synth.hpp"

namespace sqnreg {

/// Central-difference gradient estimate, one pair of evaluations per coordinate.
inline std::vector<double> fd_oracle(const std::function<double(std::span<const double>)>& fn,
                                     std::span<const double> x, double step) {
  detail::require(std::isfinite(step) && step > 0.0, ErrorCategory::InvalidArgument,
                  "finite-difference step must be > 0");
  std::vector<double> xp(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = xp[i];
    xp[i] = xi + step;
    const double fp = fn(xp);
    xp[i] = xi - step;
    const double fm = fn(xp);
    xp[i] = xi;
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

/// Plane orthogonal to the stack axis: row k holds the line of image k at
/// `position` along `axis` (0: fixed x1 column, 1: fixed x2 row).
inline Image cut_view(const ImageStack& stack, int axis, int position) {
  detail::require(axis == 0 || axis == 1, ErrorCategory::InvalidArgument, "cut axis must be 0 or 1");
  const GridSpec& g = stack.grid();
  detail::require(position >= 0 && position < g.dims[axis], ErrorCategory::InvalidArgument,
                  "cut position " + std::to_string(position) + " out of range");
  const int other = 1 - axis;
  const int m = g.dims[other];
  const int K = stack.size();
  GridSpec cg({m, K}, {g.origin[other], 0.0}, {g.spacing[other], 1.0});
  Image out(cg);
  for (int k = 0; k < K; ++k)
    for (int t = 0; t < m; ++t)
      out.at(t, k) = axis == 0 ? stack.images[k].at(position, t) : stack.images[k].at(t, position);
  return out;
}

inline ImageStack warp_stack(const ImageStack& stack, const std::vector<DisplacementField>& fields) {
  std::vector<Image> out;
  for (int k = 0; k < stack.size(); ++k) out.push_back(warp(stack.images[k], fields[k]));
  return ImageStack(std::move(out));
}

inline std::vector<MetricsRow> metrics_rows(const SolveReport& report) {
  std::vector<MetricsRow> rows;
  for (const auto& lvl : report.levels)
    for (const auto& rec : lvl.trace) rows.push_back({lvl.level, rec});
  return rows;
}

inline void metrics_csv(const SolveReport& report, const std::filesystem::path& path) {
  detail::write_file(path, format_metrics(metrics_rows(report)));
}

/// Mean NGF distance over all pairs j < k of the warped stack.
inline double mean_pairwise_ngf(const ImageStack& stack, const std::vector<DisplacementField>& fields,
                                double eta_pt) {
  const ImageStack w = warp_stack(stack, fields);
  double sum = 0.0;
  int pairs = 0;
  for (int j = 0; j < w.size(); ++j)
    for (int k = j + 1; k < w.size(); ++k) {
      sum += ngf_pair(w.images[j], w.images[k], eta_pt).value;
      ++pairs;
    }
  return sum / pairs;
}

/// Mean displacement of each field over the disk of radius r around c.
inline std::vector<Point> mean_displacement_in_disk(const std::vector<DisplacementField>& fields, const Point& c,
                                                    double r) {
  std::vector<Point> out;
  for (const auto& f : fields) {
    const GridSpec& g = f.grid;
    Point s{0.0, 0.0};
    int count = 0;
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        const Point x = g.center(i, j);
        if (std::hypot(x[0] - c[0], x[1] - c[1]) > r) continue;
        s[0] += f.u[g.index(i, j)];
        s[1] += f.u[g.size() + g.index(i, j)];
        ++count;
      }
    detail::require(count > 0, ErrorCategory::InvalidArgument, "disk mask is empty");
    out.push_back({s[0] / count, s[1] / count});
  }
  return out;
}

/// Subtracts the stack mean from every vector.
inline std::vector<Point> relative_to_mean(std::vector<Point> v) {
  Point m{0.0, 0.0};
  for (const auto& p : v) {
    m[0] += p[0] / static_cast<double>(v.size());
    m[1] += p[1] / static_cast<double>(v.size());
  }
  for (auto& p : v) {
    p[0] -= m[0];
    p[1] -= m[1];
  }
  return v;
}

/// Root mean square of the per-image Euclidean distance between two shift lists.
inline double rms_distance(const std::vector<Point>& a, const std::vector<Point>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    s += (a[k][0] - b[k][0]) * (a[k][0] - b[k][0]) + (a[k][1] - b[k][1]) * (a[k][1] - b[k][1]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path out = "out";
  ObjectiveSpec spec;
  SolveOptions solve;
  std::uint64_t seed = 1;
  bool deterministic = false;

  // synth subcommand
  SynthKind synth_kind = SynthKind::ShiftedDisks;
  int synth_count = 8;
  Point synth_magnitude{3.0, 3.0};
  int synth_size = 64;

  // view subcommand
  int cut_axis = 0;
  std::optional<int> cut_position;
};

namespace detail {

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw Error(ErrorCategory::Parse, "config key '" + key + "': expected a boolean, got '" + s + "'");
}

inline std::vector<double> parse_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  std::string cell;
  std::istringstream in(s);
  while (std::getline(in, cell, ',')) out.push_back(parse_double(trim(cell), key));
  if (out.empty()) throw Error(ErrorCategory::Parse, "config key '" + key + "': empty list");
  return out;
}

inline int parse_int(const std::string& s, const std::string& key) {
  return static_cast<int>(parse_long(s, key));
}

}  // namespace detail

/// Builds a RunConfig from "key = value" pairs. Unknown keys are errors.
/// Relative paths resolve against `base`.
inline RunConfig run_config(const ConfigMap& cfg, const std::filesystem::path& base = {}) {
  static const std::set<std::string> known = {
      "manifest", "out",        "measure",    "q",           "feature",     "eta",       "eta_rel",
      "jitter",   "reg",        "alpha",      "mu",          "lambda",      "mode",      "constraint",
      "levels",   "maxiter",    "gtol",       "memory",      "sweeps",      "max_evals", "seed",
      "deterministic", "reg_metric", "synth_kind", "synth_count", "synth_magnitude", "synth_size",
      "cut_axis", "cut_position"};
  for (const auto& [k, v] : cfg)
    if (!known.count(k)) throw Error(ErrorCategory::Parse, "unknown config key '" + k + "'");

  auto get = [&](const std::string& k) -> std::optional<std::string> {
    auto it = cfg.find(k);
    if (it == cfg.end()) return std::nullopt;
    return it->second;
  };
  auto num = [&](const std::string& k, double def) {
    auto v = get(k);
    return v ? detail::parse_double(*v, k) : def;
  };
  auto path = [&](const std::string& s) {
    std::filesystem::path p(s);
    return p.is_absolute() || base.empty() ? p : base / p;
  };

  RunConfig rc;
  if (auto v = get("manifest")) rc.manifest = path(*v);
  if (auto v = get("out")) rc.out = path(*v);

  const std::string mode = get("mode").value_or("groupwise");
  if (mode == "groupwise") rc.spec = ObjectiveSpec::groupwise(MeasureKind::sqn4(), RegKind::diffusion(1.0));
  else if (mode == "sequential") rc.spec = ObjectiveSpec::sequential(MeasureKind::ngf(1e-2), RegKind::diffusion(1.0));
  else throw Error(ErrorCategory::Parse, "config key 'mode': unknown value '" + mode + "'");

  const std::string feat = get("feature").value_or("ngf");
  FeatureMapKind fk;
  if (feat == "ngf") fk = FeatureMapKind::ngf(num("eta", 1e-2));
  else if (feat == "intensity") fk = FeatureMapKind::intensity();
  else throw Error(ErrorCategory::Parse, "config key 'feature': unknown value '" + feat + "'");

  const std::string measure =
      get("measure").value_or(rc.spec.mode == Mode::Groupwise ? "sqn4" : "ngf");
  auto q_value = [&](double def) {
    auto v = get("q");
    if (!v) return def;
    if (*v == "inf") return kInf;
    return detail::parse_double(*v, "q");
  };
  bool auto_jitter = false;
  double jitter = 0.0;
  if (auto v = get("jitter")) {
    if (*v == "auto") auto_jitter = true;
    else jitter = detail::parse_double(*v, "jitter");
  }
  if (measure == "sqn4") rc.spec.measure = MeasureKind::sqn4(fk);
  else if (measure == "sqn_inf") rc.spec.measure = MeasureKind::sqn_inf(fk);
  else if (measure == "sqn") rc.spec.measure = MeasureKind::sqn(q_value(4.0), fk);
  else if (measure == "corr_dev") rc.spec.measure = MeasureKind::corr_dev(q_value(2.0), fk);
  else if (measure == "logdet") rc.spec.measure = MeasureKind::logdet(jitter, fk);
  else if (measure == "ssd") rc.spec.measure = MeasureKind::ssd();
  else if (measure == "ngf") rc.spec.measure = MeasureKind::ngf(num("eta", 1e-2));
  else throw Error(ErrorCategory::Parse, "config key 'measure': unknown value '" + measure + "'");
  rc.solve.auto_jitter = auto_jitter;

  // An explicit eta fixes the edge parameter; otherwise it follows the data.
  if (get("eta")) rc.solve.eta_rel.reset();
  if (auto v = get("eta_rel")) rc.solve.eta_rel = detail::parse_double(*v, "eta_rel");

  const std::string reg = get("reg").value_or("diffusion");
  const double alpha = num("alpha", 1.0);
  if (reg == "diffusion") rc.spec.reg = RegKind::diffusion(alpha);
  else if (reg == "elastic") rc.spec.reg = RegKind::elastic(num("mu", 1.0), num("lambda", 0.0), alpha);
  else throw Error(ErrorCategory::Parse, "config key 'reg': unknown value '" + reg + "'");

  if (auto v = get("constraint")) {
    if (*v == "none") rc.spec.constraint = Constraint::None;
    else if (*v == "fix_first") rc.spec.constraint = Constraint::FixFirst;
    else if (*v == "zero_mean") rc.spec.constraint = Constraint::ZeroMeanDisplacement;
    else throw Error(ErrorCategory::Parse, "config key 'constraint': unknown value '" + *v + "'");
  }

  if (auto v = get("levels")) rc.solve.levels = detail::parse_int(*v, "levels");
  if (auto v = get("maxiter")) {
    const auto list = detail::parse_list(*v, "maxiter");
    if (list.size() == 1) rc.solve.lbfgs.max_iter = static_cast<int>(list[0]);
    else
      for (double m : list) rc.solve.maxiter_per_level.push_back(static_cast<int>(m));
  }
  rc.solve.lbfgs.gtol = num("gtol", rc.solve.lbfgs.gtol);
  if (auto v = get("memory")) rc.solve.lbfgs.memory = detail::parse_int(*v, "memory");
  if (auto v = get("sweeps")) rc.solve.sweeps = detail::parse_int(*v, "sweeps");
  if (auto v = get("max_evals")) rc.solve.max_evals = detail::parse_long(*v, "max_evals");
  if (auto v = get("reg_metric")) rc.solve.reg_metric = detail::parse_bool(*v, "reg_metric");
  if (auto v = get("seed")) rc.seed = static_cast<std::uint64_t>(detail::parse_long(*v, "seed"));
  if (auto v = get("deterministic")) rc.deterministic = detail::parse_bool(*v, "deterministic");

  if (auto v = get("synth_kind")) rc.synth_kind = parse_synth_kind(*v);
  if (auto v = get("synth_count")) rc.synth_count = detail::parse_int(*v, "synth_count");
  if (auto v = get("synth_magnitude")) {
    const auto list = detail::parse_list(*v, "synth_magnitude");
    rc.synth_magnitude = {list[0], list.size() > 1 ? list[1] : list[0]};
  }
  if (auto v = get("synth_size")) rc.synth_size = detail::parse_int(*v, "synth_size");
  if (auto v = get("cut_axis")) rc.cut_axis = detail::parse_int(*v, "cut_axis");
  if (auto v = get("cut_position")) rc.cut_position = detail::parse_int(*v, "cut_position");

  rc.spec.validate();
  detail::require(rc.solve.levels >= 1, ErrorCategory::InvalidArgument, "levels must be >= 1");
  detail::require(rc.solve.sweeps >= 0, ErrorCategory::InvalidArgument, "sweeps must be >= 0");
  detail::require(rc.solve.lbfgs.memory >= 1, ErrorCategory::InvalidArgument, "memory must be >= 1");
  detail::require(rc.synth_count >= 2, ErrorCategory::InvalidArgument, "synth_count must be >= 2");
  return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return run_config(parse_config(std::string(bytes.begin(), bytes.end())), path.parent_path());
}

inline SolveReport solve(const RunConfig& rc, const ImageStack& stack) {
  SolveOptions opts = rc.solve;
  opts.exec.deterministic = rc.deterministic;
  return multilevel_solve(rc.spec, stack, opts);
}

/// Registers the manifest stack and writes field_k.sqnf, metrics.csv,
/// registered_k.pgm and a cut view of the registered stack into rc.out.
inline SolveReport run_registration(const RunConfig& rc) {
  detail::require(!rc.manifest.empty(), ErrorCategory::InvalidArgument, "config needs a manifest");
  const StackManifest manifest = load_manifest(rc.manifest);
  const ImageStack stack = load_stack(manifest);
  SolveReport report = solve(rc, stack);

  std::filesystem::create_directories(rc.out);
  for (std::size_t k = 0; k < report.fields.size(); ++k)
    save_field(report.fields[k], rc.out / ("field_" + std::to_string(k + 1) + ".sqnf"));
  metrics_csv(report, rc.out / "metrics.csv");
  const ImageStack registered = warp_stack(stack, report.fields);
  for (int k = 0; k < registered.size(); ++k)
    save_pgm(normalized_for_display(registered.images[k]),
             rc.out / ("registered_" + std::to_string(k + 1) + ".pgm"));
  const int pos = rc.cut_position.value_or(stack.grid().dims[rc.cut_axis] / 2);
  save_pgm(normalized_for_display(cut_view(registered, rc.cut_axis, pos)), rc.out / "cut_registered.pgm");
  return report;
}

/// Writes a synthetic stack (image_k.pgm, truth_k.sqnf, stack.txt) into rc.out.
inline SynthStack run_synth(const RunConfig& rc) {
  SynthStack s = synth_stack(rc.seed, rc.synth_count, rc.synth_kind, rc.synth_magnitude, rc.synth_size);
  std::filesystem::create_directories(rc.out);
  std::string manifest;
  for (int k = 0; k < s.stack.size(); ++k) {
    const std::string name = "image_" + std::to_string(k + 1) + ".pgm";
    save_pgm(s.stack.images[k], rc.out / name, 65535);
    save_field(s.truth[k], rc.out / ("truth_" + std::to_string(k + 1) + ".sqnf"));
    manifest += name + "\n";
  }
  detail::write_file(rc.out / "stack.txt", manifest);
  return s;
}

}  // namespace sqnreg

#endif  // SQNREG_HARNESS_HPP_
