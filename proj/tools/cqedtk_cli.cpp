// cqedtk: layout-to-Hamiltonian workflow driver.
//
// Exit status: 0 on success, 1 when a stage fails, 2 for configuration or
// usage errors.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cqedtk/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cqedtk;

namespace {

struct Globals {
  std::string config = "project.json";
  std::vector<std::string> overrides;
  std::string out;
  bool dry_run = false;
  unsigned parallel = 0;
  bool quiet = false;
};

project::ProjectConfig load(const Globals& g) {
  auto cfg = project::load(g.config, g.overrides);
  if (!g.out.empty()) cfg.output_dir = fs::absolute(g.out);
  if (g.parallel > 0) cfg.parallelism = g.parallel;
  return cfg;
}

void flush_warnings(pipeline::Pipeline& p) {
  for (const auto& w : p.warnings) std::cerr << "warning: " << w << '\n';
  p.warnings.clear();
}

void print_jobs(const std::vector<orch::Job>& jobs) {
  for (const auto& j : jobs) {
    std::string state = j.skipped ? "up to date" : orch::to_string(j.status);
    fmt::print("{:<14} {:<10} {}\n", j.id, state, j.workdir.string());
  }
}

void cmd_parse_gds(pipeline::Pipeline& p) {
  const auto path = p.write_layout_summary();
  const auto& lay = p.layout();
  fmt::print("{} metal polygons, {} ports, {} junctions, {} terminals, {} CPW runs\n", lay.metal_polygons.size(),
             lay.ports.size(), lay.junctions.size(), lay.terminals.size(), lay.cpw_specs.size());
  fmt::print("wrote {}\n", path.string());
}

void cmd_plan_mesh(pipeline::Pipeline& p) {
  const auto plan = p.plan();
  const auto& c = plan.controls;
  fmt::print("r = {}, order {}: s_min = {:.4g} um, s_max = {:.4g} um, growth {:g}\n", orch::format_r(c.r), c.order,
             c.s_min * 1e6, c.s_max * 1e6, c.growth_rate);
  for (const auto& g : plan.boundary_groups) fmt::print("  {:>4}  {}\n", g.attribute, g.name);
  orch::RunOptions opt;
  opt.dry_run = true;
  const auto j = orch::run_job(p.mesh_job(), {}, opt);
  if (j.status != orch::JobStatus::done) throw pipeline::StageError("plan-mesh", j.error);
  for (const auto& a : j.artifacts) fmt::print("wrote {}\n", a.string());
}

void cmd_emit_config(pipeline::Pipeline& p) {
  orch::RunOptions opt;
  opt.dry_run = true;
  for (auto& job : p.pass_jobs()) {
    const auto j = orch::run_job(std::move(job), {}, opt);
    if (j.status != orch::JobStatus::done) throw pipeline::StageError("emit-config", j.error);
    for (const auto& a : j.artifacts) fmt::print("wrote {}\n", a.string());
  }
}

void cmd_postprocess(pipeline::Pipeline& p) {
  const auto o = p.postprocess();
  if (o.capacitance) fmt::print("capacitance matrix: {} terminals\n", o.capacitance->size());
  if (o.modes) {
    for (const auto& m : *o.modes) fmt::print("mode {}: {:.6f} GHz, Q = {:.4g}\n", m.index, m.frequency * 1e-9, m.q);
  }
  if (o.sparams) fmt::print("S-parameters: {} frequencies\n", o.sparams->frequencies.size());
  fmt::print("wrote {}\n", (p.out() / "postprocess").string());
}

void cmd_fit(pipeline::Pipeline& p, const std::optional<fs::path>& sparams) {
  const auto fits = p.fit(sparams);
  std::cout << fit::fit_table(fits);
  fmt::print("wrote {}\n", (p.out() / "fit").string());
}

void cmd_hamiltonian(pipeline::Pipeline& p) {
  std::cout << quantum::to_text(p.hamiltonian());
  fmt::print("wrote {}\n", (p.out() / "hamiltonian").string());
}

void cmd_report(pipeline::Pipeline& p, const std::optional<pipeline::Fits>& fits = {}) {
  std::cout << report::to_text(p.make_report(fits));
  fmt::print("wrote {}\n", (p.out() / "report").string());
}

void cmd_sweep(pipeline::Pipeline& p, bool dry_run) {
  const auto s = p.sweep(dry_run);
  std::cout << s.result.table();
  for (const auto& f : s.result.failures)
    fmt::print(stderr, "failed r = {}, order {}: {}\n", orch::format_r(f.point.r), f.point.order, f.error);
  std::cout << s.text;
}

void cmd_pipeline(pipeline::Pipeline& p, bool dry_run) {
  cmd_parse_gds(p);
  print_jobs(p.run(dry_run));
  if (dry_run) return;
  cmd_postprocess(p);
  std::optional<pipeline::Fits> fits;
  if (p.config().has_pass(solver::ProblemType::driven)) {
    fits = p.fit();
    std::cout << fit::fit_table(*fits);
  }
  const auto& c = p.config();
  if (!c.ham_method.empty() || !c.subsystems.empty() ||
      (c.has_pass(solver::ProblemType::eigenmode) && !p.layout().junctions.empty()))
    cmd_hamiltonian(p);
  if (fits && !c.targets.empty()) cmd_report(p, fits);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cqedtk: from a GDSII layout to solver jobs, fits and Hamiltonian parameters"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config, "project file")->capture_default_str();
  app.add_option("--set", g.overrides, "override a config value, e.g. --set mesh.r=2")->allow_extra_args(false);
  app.add_option("--out", g.out, "output directory (defaults to the project's 'output')");
  app.add_option("--parallel", g.parallel, "concurrent solver jobs");
  app.add_flag("-q,--quiet", g.quiet, "suppress warnings");

  auto* parse = app.add_subcommand("parse-gds", "read the layout and write layout.json");
  auto* plan = app.add_subcommand("plan-mesh", "write the mesh script for the configured r and order");
  auto* emit = app.add_subcommand("emit-config", "write solver configs for every pass");
  auto* run = app.add_subcommand("run", "mesh and solve every pass");
  run->add_flag("--dry-run", g.dry_run, "write job inputs without launching anything");
  auto* sweep = app.add_subcommand("sweep", "run the (r, order) convergence grid");
  sweep->add_flag("--dry-run", g.dry_run, "write job inputs without launching anything");
  auto* post = app.add_subcommand("postprocess", "normalize solver outputs");
  auto* fitc = app.add_subcommand("fit", "fit resonances in the through transmission");
  std::string sparams;
  fitc->add_option("--sparams", sparams, "fit this S-parameter CSV instead of the driven pass output");
  auto* ham = app.add_subcommand("hamiltonian", "build Hamiltonian parameters");
  auto* rep = app.add_subcommand("report", "compare fits against the project targets");
  auto* all = app.add_subcommand("pipeline", "every stage in order");
  all->add_flag("--dry-run", g.dry_run, "stop after writing job inputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  std::optional<pipeline::Pipeline> pp;
  const auto warnings = [&] {
    if (pp && !g.quiet) flush_warnings(*pp);
  };
  try {
    auto& p = pp.emplace(load(g));
    if (*parse) cmd_parse_gds(p);
    else if (*plan) cmd_plan_mesh(p);
    else if (*emit) cmd_emit_config(p);
    else if (*run) print_jobs(p.run(g.dry_run));
    else if (*sweep) cmd_sweep(p, g.dry_run);
    else if (*post) cmd_postprocess(p);
    else if (*fitc) cmd_fit(p, sparams.empty() ? std::nullopt : std::optional<fs::path>(fs::absolute(sparams)));
    else if (*ham) cmd_hamiltonian(p);
    else if (*rep) cmd_report(p);
    else if (*all) cmd_pipeline(p, g.dry_run);
  } catch (const project::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    warnings();
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  warnings();
  return 0;
}
