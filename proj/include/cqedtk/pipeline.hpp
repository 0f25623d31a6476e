#pragma once

// Stage implementations behind the command line. Every stage reads its inputs
// from the project's output tree and writes its own artifacts there:
//
//   layout.json
//   mesh_r<r>/mesh/mesh.geo           mesh job (mesh.msh from the mesher)
//   <pass>/config/palace.json         one solver job per pass
//   <pass>/csv/                       solver outputs
//   postprocess/                      normalized tables
//   fit/fits.{csv,json}, fit/plots/   resonator fits
//   hamiltonian/hamiltonian.{json,txt}
//   report/report.{csv,txt}
//   sweep/                            convergence sweep jobs and tables

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "gdsii.hpp"
#include "layout.hpp"
#include "meshplan.hpp"
#include "orchestrate.hpp"
#include "project.hpp"
#include "quantize.hpp"
#include "report.hpp"
#include "results.hpp"
#include "solvercfg.hpp"
#include "specfit.hpp"

namespace cqedtk::pipeline {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error("[" + stage + "] " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Runs `f`, re-throwing toolkit errors tagged with the stage name.
template <class F>
auto staged(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const project::ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline const char* output_file(solver::ProblemType p) {
  switch (p) {
    case solver::ProblemType::electrostatic: return "terminal-C.csv";
    case solver::ProblemType::eigenmode: return "eig.csv";
    case solver::ProblemType::driven: return "port-S.csv";
  }
  return "";
}

inline constexpr const char* epr_file = "port-EPR.csv";

/// The one structure no other structure references.
inline std::string infer_top(const gds::Library& lib) {
  std::vector<std::string> tops;
  for (const auto& s : lib.structures) {
    bool referenced = false;
    for (const auto& o : lib.structures)
      for (const auto& e : o.elements)
        if (e.is_reference() && e.ref_name == s.name) referenced = true;
    if (!referenced) tops.push_back(s.name);
  }
  if (tops.size() != 1)
    throw layout::LayoutError(fmt::format("cannot infer the top structure ({} candidates); set 'top'", tops.size()));
  return tops.front();
}

inline ojson layout_summary(const layout::LayoutModel& lay) {
  const auto rect = [](const Rect& r) { return ojson::array({r.min.x * 1e6, r.min.y * 1e6, r.max.x * 1e6, r.max.y * 1e6}); };
  ojson j;
  j["length_unit"] = "um";
  j["metal_polygons"] = lay.metal_polygons.size();
  j["chip_extent"] = rect(lay.chip_extent);
  ojson ports = ojson::array();
  for (const auto& p : lay.ports)
    ports.push_back({{"name", p.name}, {"rect", rect(p.rect)}, {"impedance", p.impedance}, {"excited", p.excited},
                     {"direction", layout::to_string(p.direction)}});
  j["ports"] = ports;
  ojson juncs = ojson::array();
  for (const auto& s : lay.junctions)
    juncs.push_back({{"name", s.name}, {"rect", rect(s.rect)}, {"critical_current_A", s.critical_current},
                     {"inductance_nH", s.inductance * 1e9}, {"direction", layout::to_string(s.direction)}});
  j["junctions"] = juncs;
  ojson terms = ojson::array();
  for (const auto& t : lay.terminals) terms.push_back({{"name", t.name}, {"polygon", t.polygon}});
  j["terminals"] = terms;
  ojson cpws = ojson::array();
  for (const auto& c : lay.cpw_specs) {
    double len = 0.0;
    for (std::size_t i = 1; i < c.centerline.size(); ++i) len += norm(c.centerline[i] - c.centerline[i - 1]);
    cpws.push_back({{"name", c.name}, {"trace_width", c.trace_width * 1e6}, {"gap", c.gap * 1e6}, {"length", len * 1e6}});
  }
  j["cpw"] = cpws;
  return j;
}

struct Outputs {
  std::optional<results::MaxwellCapMatrix> capacitance;
  std::optional<std::vector<results::ModeResult>> modes;
  std::optional<results::SParamSet> sparams;
};

using Fits = std::vector<std::pair<std::string, fit::FitResult>>;

inline ojson fits_to_json(const Fits& fits) {
  ojson arr = ojson::array();
  for (const auto& [name, r] : fits)
    arr.push_back({{"name", name},
                   {"f_r_Hz", r.f_r},
                   {"Q_l", r.q_l},
                   {"Q_e", r.q_e},
                   {"phi_rad", r.phi},
                   {"Q_i", std::isfinite(r.q_i) ? ojson(r.q_i) : ojson(nullptr)},
                   {"kappa_Hz", r.kappa},
                   {"kappa_convention", "f_r/|Q_e|"},
                   {"residual_rms", r.residual_rms},
                   {"window_Hz", {r.window.first, r.window.second}}});
  return arr;
}

inline Fits fits_from_json(const nlohmann::json& arr) {
  Fits out;
  for (const auto& j : arr) {
    fit::FitResult r;
    r.f_r = j.at("f_r_Hz").get<double>();
    r.q_l = j.at("Q_l").get<double>();
    r.q_e = j.at("Q_e").get<double>();
    r.phi = j.at("phi_rad").get<double>();
    r.q_i = j.at("Q_i").is_null() ? std::numeric_limits<double>::infinity() : j.at("Q_i").get<double>();
    r.kappa = j.at("kappa_Hz").get<double>();
    r.residual_rms = j.at("residual_rms").get<double>();
    out.emplace_back(j.at("name").get<std::string>(), r);
  }
  return out;
}

/// Fits every dip in the through transmission (or the given windows).
inline Fits fit_resonators(const results::SParamSet& sp, results::PortPair through,
                           const std::vector<project::FitWindow>& windows, const std::vector<std::string>& names,
                           std::size_t max_count = 16) {
  std::vector<project::FitWindow> w = windows;
  if (w.empty()) {
    const auto found = fit::find_dips(sp, through, max_count);
    if (found.empty()) throw fit::FitError("no resonances found in the transmission sweep");
    for (std::size_t i = 0; i < found.size(); ++i)
      w.push_back({i < names.size() ? names[i] : fmt::format("R{}", i + 1), found[i].first, found[i].second});
  }
  Fits out;
  for (const auto& win : w) {
    try {
      out.emplace_back(win.name, fit::fit_notch(sp, through, {win.lo, win.hi}));
    } catch (const Error& e) {
      throw fit::FitError(win.name + ": " + e.what());
    }
  }
  return out;
}

struct SweepSummary {
  orch::SweepResult result;
  struct PerOrder {
    int order = 0;
    std::optional<fit::Extrapolation> extrapolation;
    std::string note;
  };
  std::vector<PerOrder> orders;
  std::optional<fit::CriterionResult> criterion;
  std::string text;
};

class Pipeline {
 public:
  explicit Pipeline(project::ProjectConfig cfg) : cfg_(std::move(cfg)) {}

  const project::ProjectConfig& config() const { return cfg_; }
  const fs::path& out() const { return cfg_.output_dir; }
  Warnings warnings;

  // --- parse-gds -----------------------------------------------------------

  const layout::LayoutModel& layout() {
    if (layout_) return *layout_;
    layout_ = staged("parse-gds", [&] {
      if (cfg_.gds.empty()) throw layout::LayoutError("project has no 'gds' file");
      if (cfg_.annotations.empty()) throw layout::LayoutError("project has no 'annotations' file");
      const std::string bytes = orch::read_file(cfg_.gds);
      const auto lib = gds::parse_gds(
          std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()), &warnings);
      const std::string top = cfg_.top.empty() ? infer_top(lib) : cfg_.top;
      const auto flat = gds::flatten(lib, top, &warnings);
      nlohmann::json ann;
      try {
        ann = nlohmann::json::parse(orch::read_file(cfg_.annotations));
      } catch (const nlohmann::json::parse_error& e) {
        throw layout::LayoutError(cfg_.annotations.string() + ": " + e.what());
      }
      return layout::build_layout(flat, layout::parse_annotations(ann), cfg_.chord_tolerance, &warnings);
    });
    return *layout_;
  }

  fs::path write_layout_summary() {
    const auto& lay = layout();
    const fs::path p = out() / "layout.json";
    orch::write_file(p, layout_summary(lay).dump(2) + "\n");
    return p;
  }

  // --- plan-mesh / emit-config ---------------------------------------------

  mesh::MeshPlan plan(std::optional<double> r = {}, std::optional<int> order = {}) {
    const auto& lay = layout();
    return staged("plan-mesh", [&] {
      mesh::MeshControls c = cfg_.mesh;
      if (r) c.r = *r;
      if (order) c.order = *order;
      return mesh::build_plan(lay, c);
    });
  }

  orch::Job mesh_job() { return orch::mesh_job(out(), orch::mesh_job_id(cfg_.mesh.r), plan()); }

  solver::SolveSpec solve_spec(solver::ProblemType p) {
    const auto pl = plan();
    return staged("emit-config", [&] {
      const std::string ref = orch::mesh_ref_from(orch::mesh_job_id(cfg_.mesh.r));
      switch (p) {
        case solver::ProblemType::electrostatic: return solver::make_electrostatic(pl, cfg_.materials, ref);
        case solver::ProblemType::eigenmode:
          return solver::make_eigenmode(pl, cfg_.materials, cfg_.eig_modes, shift_ghz(), ref);
        case solver::ProblemType::driven:
          return solver::make_driven(pl, cfg_.materials, cfg_.drv_f_min_ghz, cfg_.drv_f_max_ghz, step_ghz(),
                                     cfg_.drv_tol, ref);
      }
      throw solver::ConfigError("unknown pass");
    });
  }

  std::vector<orch::Job> pass_jobs() {
    std::vector<orch::Job> jobs;
    for (const auto p : cfg_.passes) {
      auto j = orch::solve_job(out(), solver::to_string(p), solve_spec(p));
      j.expected = {std::string("csv/") + output_file(p)};
      jobs.push_back(std::move(j));
    }
    return jobs;
  }

  // --- run -----------------------------------------------------------------

  /// Mesh job then one solver job per pass. Failures raise after every job ran.
  std::vector<orch::Job> run(bool dry_run) {
    auto mj = mesh_job();
    auto jobs = pass_jobs();
    return staged("run", [&] {
      orch::RunOptions opt;
      opt.dry_run = dry_run;
      opt.timeout = std::chrono::milliseconds(static_cast<long long>(cfg_.timeout_s * 1000.0));
      std::vector<orch::Job> done;
      done.push_back(orch::run_job(std::move(mj), executable(cfg_.mesher, "CQED_MESHER"), opt));
      if (done.front().status != orch::JobStatus::done)
        throw orch::JobError("mesh job " + done.front().id + " failed: " + done.front().error);
      auto solved = orch::run_jobs(std::move(jobs), executable(cfg_.solver, "CQED_SOLVER", cfg_.launcher), opt, cfg_.parallelism);
      std::string failed;
      for (auto& j : solved) {
        if (j.status != orch::JobStatus::done) failed += (failed.empty() ? "" : "; ") + j.id + ": " + j.error;
        done.push_back(std::move(j));
      }
      if (!failed.empty()) throw orch::JobError("solver job failed: " + failed);
      return done;
    });
  }

  // --- postprocess ---------------------------------------------------------

  Outputs postprocess(bool write = true) {
    return staged("postprocess", [&] {
      Outputs o;
      const auto csv = [&](solver::ProblemType p, const char* name) { return out() / solver::to_string(p) / "csv" / name; };
      if (cfg_.has_pass(solver::ProblemType::electrostatic)) {
        const auto p = csv(solver::ProblemType::electrostatic, output_file(solver::ProblemType::electrostatic));
        std::vector<std::string> names;
        for (const auto& t : layout().terminals) names.push_back(t.name);
        o.capacitance = results::parse_cap_csv(orch::read_file(p), names);
      }
      if (cfg_.has_pass(solver::ProblemType::eigenmode)) {
        const auto p = csv(solver::ProblemType::eigenmode, output_file(solver::ProblemType::eigenmode));
        const auto e = csv(solver::ProblemType::eigenmode, epr_file);
        std::optional<std::string> epr;
        if (fs::is_regular_file(e)) epr = orch::read_file(e);
        auto modes = results::parse_modes(orch::read_file(p), epr ? std::optional<std::string_view>(*epr) : std::nullopt);
        o.modes = results::filter_modes(modes, cfg_.eig_band_ghz.first * 1e9, cfg_.eig_band_ghz.second * 1e9,
                                        cfg_.eig_q_min);
      }
      if (cfg_.has_pass(solver::ProblemType::driven)) {
        const auto p = csv(solver::ProblemType::driven, output_file(solver::ProblemType::driven));
        o.sparams = results::parse_sparams_csv(orch::read_file(p), &warnings,
                                               std::pair{cfg_.drv_f_min_ghz * 1e9, cfg_.drv_f_max_ghz * 1e9});
      }
      if (write) write_outputs(o);
      return o;
    });
  }

  // --- fit -----------------------------------------------------------------

  Fits fit(const std::optional<fs::path>& sparams_file = {}) {
    return staged("fit", [&] {
      results::SParamSet sp;
      if (sparams_file) sp = results::parse_sparams_csv(orch::read_file(*sparams_file), &warnings);
      else {
        auto o = postprocess(false);
        if (!o.sparams) throw fit::FitError("no driven pass in this project");
        sp = std::move(*o.sparams);
      }
      Fits fits = fit_resonators(sp, cfg_.through, cfg_.fit_windows, cfg_.fit_names, cfg_.max_resonances);
      const fs::path dir = out() / "fit";
      orch::write_file(dir / "fits.csv", fit::fit_table(fits));
      orch::write_file(dir / "fits.json", fits_to_json(fits).dump(2) + "\n");
      for (const auto& [name, r] : fits) {
        const auto [f, z] = fit::window_samples(sp, cfg_.through, r.window.first, r.window.second);
        const auto [data, model] = fit::plot_data(f, z, r);
        orch::write_file(dir / "plots" / (name + "_data.txt"), data);
        orch::write_file(dir / "plots" / (name + "_model.txt"), model);
      }
      return fits;
    });
  }

  // --- hamiltonian ---------------------------------------------------------

  quantum::HamiltonianSpec hamiltonian() {
    auto o = postprocess(false);
    const auto& lay = layout();
    return staged("hamiltonian", [&] {
      std::string method = cfg_.ham_method;
      if (method.empty()) method = o.modes ? "epr" : "lom";
      quantum::HamiltonianSpec h;
      if (method == "epr") {
        if (!o.modes) throw quantum::QuantizeError("EPR quantization needs an eigenmode pass");
        std::vector<double> ej;
        for (const auto& j : lay.junctions) ej.push_back(quantum::josephson_energy(j.inductance));
        h = quantum::epr_kerr(*o.modes, ej);
      } else {
        if (!o.capacitance) throw quantum::QuantizeError("lumped model needs an electrostatic pass");
        h = quantum::lom_reduce(*o.capacitance, subsystems(lay, o));
      }
      const fs::path dir = out() / "hamiltonian";
      orch::write_file(dir / "hamiltonian.json", quantum::to_json(h).dump(2) + "\n");
      orch::write_file(dir / "hamiltonian.txt", quantum::to_text(h));
      return h;
    });
  }

  // --- report --------------------------------------------------------------

  report::Report make_report(const std::optional<Fits>& fits_in = {}) {
    return staged("report", [&] {
      Fits fits;
      if (fits_in) fits = *fits_in;
      else {
        const fs::path p = out() / "fit" / "fits.json";
        if (!fs::is_regular_file(p)) throw fit::FitError("no fit results at " + p.string() + "; run 'fit' first");
        fits = fits_from_json(nlohmann::json::parse(orch::read_file(p)));
      }
      auto rep = report::build(fits, cfg_.targets, cfg_.freq_tol, cfg_.kappa_tol);
      orch::write_file(out() / "report" / "report.csv", report::to_csv(rep));
      orch::write_file(out() / "report" / "report.txt", report::to_text(rep));
      return rep;
    });
  }

  // --- sweep ---------------------------------------------------------------

  SweepSummary sweep(bool dry_run) {
    const auto& lay = layout();
    return staged("sweep", [&] {
      if (cfg_.sweep_grid.empty()) throw orch::JobError("'sweep.grid' is empty");
      orch::SweepOptions opt;
      opt.out_dir = out() / "sweep";
      opt.solver = executable(cfg_.solver, "CQED_SOLVER", cfg_.launcher);
      opt.mesher = executable(cfg_.mesher, "CQED_MESHER");
      opt.materials = cfg_.materials;
      opt.parallelism = cfg_.parallelism;
      opt.run.dry_run = dry_run;
      opt.run.timeout = std::chrono::milliseconds(static_cast<long long>(cfg_.timeout_s * 1000.0));
      opt.modes = std::max(cfg_.eig_modes, cfg_.sweep_mode);
      opt.shift_ghz = shift_ghz();
      opt.band_ghz = cfg_.eig_band_ghz;
      SweepSummary s;
      s.result = orch::run_sweep(lay, cfg_.mesh, cfg_.sweep_grid, opt);
      orch::write_file(opt.out_dir / "table.csv", s.result.table());
      orch::write_file(opt.out_dir / "failures.csv", s.result.failure_table());
      if (dry_run) return s;
      summarize_convergence(s);
      orch::write_file(opt.out_dir / "convergence.txt", s.text);
      return s;
    });
  }

 private:
  project::ProjectConfig cfg_;
  std::optional<layout::LayoutModel> layout_;

  double shift_ghz() {
    if (cfg_.eig_shift_ghz) return *cfg_.eig_shift_ghz;
    return solver::default_eigen_shift_ghz(layout(), cfg_.materials.substrate);
  }

  double step_ghz() const {
    return cfg_.drv_f_step_ghz > 0 ? cfg_.drv_f_step_ghz : (cfg_.drv_f_max_ghz - cfg_.drv_f_min_ghz) / 1000.0;
  }

  // an unresolvable name is kept so the job fails with a spawn error
  static orch::Executable executable(const std::string& configured, const char* env, std::string launcher = {}) {
    const auto p = orch::resolve_executable(configured, env);
    const char* e = std::getenv(env);
    return {p ? p->string() : (e && *e ? std::string(e) : configured), std::move(launcher)};
  }

  std::vector<quantum::Subsystem> subsystems(const layout::LayoutModel& lay, const Outputs& o) const {
    if (cfg_.subsystems.empty()) throw quantum::QuantizeError("lumped model needs 'hamiltonian.subsystems'");
    std::vector<quantum::Subsystem> subs;
    for (const auto& s : cfg_.subsystems) {
      quantum::Subsystem q{s.name, s.terminals, {}, {}};
      if (s.e_j_ghz) q.e_j = *s.e_j_ghz * 1e9 * constants::planck;
      if (s.junction) {
        const auto it = std::find_if(lay.junctions.begin(), lay.junctions.end(),
                                     [&](const layout::JunctionSite& j) { return j.name == *s.junction; });
        if (it == lay.junctions.end()) throw quantum::QuantizeError("no junction named '" + *s.junction + "'");
        q.e_j = quantum::josephson_energy(it->inductance);
      }
      if (s.frequency_ghz) q.frequency = *s.frequency_ghz * 1e9;
      if (s.mode) {
        if (!o.modes) throw quantum::QuantizeError("subsystem " + s.name + " refers to a mode but no eigenmode pass ran");
        const auto it = std::find_if(o.modes->begin(), o.modes->end(),
                                     [&](const results::ModeResult& m) { return m.index == *s.mode; });
        if (it == o.modes->end()) throw quantum::QuantizeError("no eigenmode " + std::to_string(*s.mode));
        q.frequency = it->frequency;
      }
      subs.push_back(q);
    }
    return subs;
  }

  void write_outputs(const Outputs& o) {
    const fs::path dir = out() / "postprocess";
    if (o.capacitance) {
      const auto& c = *o.capacitance;
      std::string maxwell = "terminal";
      for (const auto& n : c.terminal_names) maxwell += ",C[" + n + "] (fF)";
      maxwell += '\n';
      for (Eigen::Index i = 0; i < c.C.rows(); ++i) {
        maxwell += c.terminal_names[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < c.C.cols(); ++j) maxwell += fmt::format(",{:.9g}", c.C(i, j) * 1e15);
        maxwell += '\n';
      }
      orch::write_file(dir / "capacitance_maxwell.csv", maxwell);
      const auto m = results::maxwell_to_mutual(c);
      std::string mutual = "a,b,C (fF)\n";
      for (Eigen::Index i = 0; i < c.C.rows(); ++i) {
        const auto& a = c.terminal_names[static_cast<std::size_t>(i)];
        mutual += fmt::format("{},ground,{:.9g}\n", a, m.to_ground[i] * 1e15);
        for (Eigen::Index j = i + 1; j < c.C.cols(); ++j)
          mutual += fmt::format("{},{},{:.9g}\n", a, c.terminal_names[static_cast<std::size_t>(j)], m.mutual(i, j) * 1e15);
      }
      orch::write_file(dir / "capacitance_mutual.csv", mutual);
    }
    if (o.modes) {
      std::size_t nj = 0;
      for (const auto& m : *o.modes) nj = std::max(nj, m.participation.size());
      std::string t = "mode,f_GHz,Q";
      for (std::size_t j = 0; j < nj; ++j) t += fmt::format(",p[{}]", j + 1);
      t += '\n';
      for (const auto& m : *o.modes) {
        t += fmt::format("{},{:.9f},{:.6g}", m.index, m.frequency * 1e-9, m.q);
        for (std::size_t j = 0; j < nj; ++j)
          t += j < m.participation.size() ? fmt::format(",{:.6g}", m.participation[j]) : std::string(",");
        t += '\n';
      }
      orch::write_file(dir / "modes.csv", t);
    }
    if (o.sparams) {
      const auto& sp = *o.sparams;
      std::string t = "f_GHz";
      for (const auto& [pair, _] : sp.s) t += fmt::format(",|S[{0}][{1}]|,arg(S[{0}][{1}]) (rad)", pair.first, pair.second);
      t += '\n';
      for (std::size_t i = 0; i < sp.frequencies.size(); ++i) {
        t += fmt::format("{:.9f}", sp.frequencies[i] * 1e-9);
        for (const auto& [_, v] : sp.s) t += fmt::format(",{:.12g},{:.12g}", std::abs(v[i]), std::arg(v[i]));
        t += '\n';
      }
      orch::write_file(dir / "sparams.csv", t);
    }
  }

  void summarize_convergence(SweepSummary& s) {
    const auto& rows = s.result.rows;
    std::vector<int> orders;
    for (const auto& r : rows)
      if (std::find(orders.begin(), orders.end(), r.point.order) == orders.end()) orders.push_back(r.point.order);
    std::sort(orders.begin(), orders.end());
    const std::size_t mi = static_cast<std::size_t>(std::max(1, cfg_.sweep_mode) - 1);
    std::string& t = s.text;
    t += fmt::format("mode {} extrapolated with f(r) = f_inf + A 2^(-p r)\n", mi + 1);
    std::vector<fit::ConvergencePoint> cand_pts;
    for (int order : orders) {
      SweepSummary::PerOrder po;
      po.order = order;
      std::vector<fit::ConvergencePoint> pts;
      for (const auto& r : rows)
        if (r.point.order == order && mi < r.frequencies.size())
          pts.push_back({r.point.r, order, r.dofs, r.frequencies[mi], {}});
      try {
        po.extrapolation = fit::richardson_extrapolate(pts, &warnings);
        const auto& e = *po.extrapolation;
        t += fmt::format("order {}: f_inf = {:.6f} GHz, p = {:.4f}\n", order, e.f_inf * 1e-9, e.rate);
        for (std::size_t i = 0; i < pts.size(); ++i)
          t += fmt::format("  r = {:<6} dofs = {:<10} f = {:.6f} GHz  dev = {:.4f}%\n", orch::format_r(pts[i].r),
                           pts[i].dofs, pts[i].f * 1e-9, e.deviation[i] * 100.0);
      } catch (const Error& e) {
        po.note = e.what();
        t += fmt::format("order {}: not extrapolated ({})\n", order, po.note);
      }
      if (cfg_.sweep_candidate && cfg_.sweep_candidate->order == order) cand_pts = pts;
      s.orders.push_back(po);
    }
    if (!cfg_.sweep_candidate) return;
    const auto c = *cfg_.sweep_candidate;
    // the reference is the extrapolation at the highest order that converged
    for (auto it = s.orders.rbegin(); it != s.orders.rend(); ++it)
      if (it->extrapolation) {
        try {
          s.criterion = fit::check_convergence_criterion(cand_pts, {c.r, c.order}, it->extrapolation->f_inf,
                                                         cfg_.sweep_threshold);
          t += fmt::format("candidate r = {}, order {}: deviation {:.4f}% vs order-{} limit, {} (threshold {:g}%)\n",
                           orch::format_r(c.r), c.order, s.criterion->deviation * 100.0, it->order,
                           s.criterion->pass ? "PASS" : "FAIL", cfg_.sweep_threshold * 100.0);
        } catch (const Error& e) {
          t += fmt::format("candidate r = {}, order {}: {}\n", orch::format_r(c.r), c.order, e.what());
        }
        break;
      }
  }
};

}  // namespace cqedtk::pipeline
