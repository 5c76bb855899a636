// Copyright 2026 The sqnreg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command line front end: register | synth | gradcheck | view.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "sqnreg.hpp"

namespace fs = std::filesystem;
using namespace sqnreg;

namespace {

struct Globals {
  std::string config;
  std::string out;
  bool deterministic = false;
  std::optional<std::uint64_t> seed;
};

RunConfig resolve(const Globals& g) {
  RunConfig rc = g.config.empty() ? run_config({}) : load_run_config(g.config);
  if (!g.out.empty()) rc.out = g.out;
  if (g.deterministic) rc.deterministic = true;
  if (g.seed) rc.seed = *g.seed;
  return rc;
}

int cmd_register(const Globals& g) {
  const RunConfig rc = resolve(g);
  const SolveReport rep = run_registration(rc);
  std::printf("levels %zu  evals %ld  J %.10g  time %.3fs%s\n", rep.levels.size(), rep.evals, rep.final_value,
              rep.wall_time_s, rep.linesearch_failed ? "  (line search failed)" : "");
  std::printf("wrote %s\n", rc.out.string().c_str());
  return 0;
}

int cmd_synth(const Globals& g) {
  const RunConfig rc = resolve(g);
  const SynthStack s = run_synth(rc);
  std::printf("wrote %d images to %s\n", s.stack.size(), rc.out.string().c_str());
  return 0;
}

int cmd_gradcheck(const Globals& g, int size, double step, double tol) {
  RunConfig rc = resolve(g);
  const SynthStack s = synth_stack(rc.seed, rc.synth_count, rc.synth_kind, rc.synth_magnitude, size);
  const GridSpec& grid = s.stack.grid();
  Rng rng = Rng(rc.seed).split("gradcheck");
  std::vector<DisplacementField> fields(s.stack.size(), DisplacementField(grid));
  for (auto& f : fields)
    for (auto& v : f.u) v = rng.uniform(-0.5, 0.5);
  project(rc.spec.constraint == Constraint::FixFirst ? Constraint::None : rc.spec.constraint, fields);
  if (rc.spec.constraint == Constraint::FixFirst) std::fill(fields[0].u.begin(), fields[0].u.end(), 0.0);

  ObjectiveSpec spec = rc.spec;
  spec.measure = level_measure(spec, s.stack, fields, rc.solve);
  Exec exec;
  exec.deterministic = rc.deterministic;
  const ObjectiveEval e = objective(spec, s.stack, fields, exec);

  std::vector<DisplacementField> work = fields;
  const auto x = detail::flatten(fields);
  auto fn = [&](std::span<const double> xs) {
    detail::unflatten(xs, work);
    return objective(spec, s.stack, work, exec).value;
  };
  const auto fd = fd_oracle(fn, x, step);
  std::vector<std::vector<double>> fdg(fields.size());
  for (std::size_t k = 0; k < fields.size(); ++k)
    fdg[k].assign(fd.begin() + static_cast<std::ptrdiff_t>(k * x.size() / fields.size()),
                  fd.begin() + static_cast<std::ptrdiff_t>((k + 1) * x.size() / fields.size()));
  project(spec.constraint, fdg);

  std::vector<double> a, b;
  for (std::size_t k = 0; k < fields.size(); ++k) {
    a.insert(a.end(), e.grad[k].begin(), e.grad[k].end());
    b.insert(b.end(), fdg[k].begin(), fdg[k].end());
  }
  const double err = relative_error(a, b);
  std::printf("J %.12g  |grad| %.6g  relative error %.3e%s\n", e.value, detail::norm2(a), err,
              e.subgradient ? "  (subgradient point)" : "");
  if (err > tol) throw Error(ErrorCategory::Numerical, "gradient check failed");
  return 0;
}

int cmd_view(const Globals& g, const std::string& fields_dir, const std::string& image) {
  const RunConfig rc = resolve(g);
  detail::require(!rc.manifest.empty(), ErrorCategory::InvalidArgument, "config needs a manifest");
  ImageStack stack = load_stack(load_manifest(rc.manifest));
  if (!fields_dir.empty()) {
    std::vector<DisplacementField> fields;
    for (int k = 0; k < stack.size(); ++k) {
      fields.push_back(load_field(fs::path(fields_dir) / ("field_" + std::to_string(k + 1) + ".sqnf")));
      detail::require(fields.back().grid.dims == stack.grid().dims, ErrorCategory::InvalidArgument,
                      "field " + std::to_string(k + 1) + " does not match the stack grid");
    }
    stack = warp_stack(stack, fields);
  }
  const int pos = rc.cut_position.value_or(stack.grid().dims[rc.cut_axis] / 2);
  const fs::path out = image.empty() ? rc.out / "cut.pgm" : fs::path(image);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_pgm(normalized_for_display(cut_view(stack, rc.cut_axis, pos)), out);
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Groupwise image registration with Schatten q-norm distances"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "flat key = value configuration file");
  app.add_option("--out", g.out, "output directory (overrides the config)");
  app.add_flag("--deterministic", g.deterministic, "fixed reduction order, single thread");
  app.add_option("--seed", g.seed, "random seed (overrides the config)");

  auto* reg = app.add_subcommand("register", "register the stack listed in the manifest");
  auto* syn = app.add_subcommand("synth", "write a synthetic stack with ground truth fields");
  auto* grad = app.add_subcommand("gradcheck", "compare the objective gradient with finite differences");
  int size = 8;
  double step = 1e-5, tol = 1e-6;
  grad->add_option("--size", size, "image size of the synthetic instance");
  grad->add_option("--step", step, "finite-difference step");
  grad->add_option("--tol", tol, "relative error tolerance");
  auto* view = app.add_subcommand("view", "write a cut through the (registered) stack");
  std::string fields_dir, image;
  view->add_option("--fields", fields_dir, "directory with field_k.sqnf files");
  view->add_option("--image", image, "output PGM path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorCategory::InvalidArgument);
  }

  try {
    if (*reg) return cmd_register(g);
    if (*syn) return cmd_synth(g);
    if (*grad) return cmd_gradcheck(g, size, step, tol);
    if (*view) return cmd_view(g, fields_dir, image);
  } catch (const Error& e) {
    std::cerr << "error[" << category_name(e.category()) << "]: " << e.what() << "\n";
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error[io]: " << e.what() << "\n";
    return static_cast<int>(ErrorCategory::Io);
  }
  return 0;
}
