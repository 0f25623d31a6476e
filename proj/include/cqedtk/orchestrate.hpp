#pragma once

// External mesher/solver invocation, per-job work directories and (r, order)
// convergence sweeps.
//
// Work directory: <out>/<jobid>/{config/, mesh/, csv/, job.json, log.txt, .inputs.hash}

#include <fcntl.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "error.hpp"
#include "meshplan.hpp"
#include "results.hpp"
#include "solvercfg.hpp"

extern char** environ;

namespace cqedtk::orch {

namespace fs = std::filesystem;

class JobError : public Error {
 public:
  using Error::Error;
};

enum class JobKind { mesh, solve };
enum class JobStatus { pending, running, done, failed };

inline const char* to_string(JobKind k) { return k == JobKind::mesh ? "mesh" : "solve"; }
inline const char* to_string(JobStatus s) {
  switch (s) {
    case JobStatus::pending: return "pending";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "?";
}

/// Executable plus an optional launcher prefix ("mpirun -np 4").
struct Executable {
  std::string path;
  std::string launcher;
};

struct Job {
  std::string id;
  JobKind kind = JobKind::solve;
  fs::path workdir;
  std::map<std::string, std::string> inputs;  // relative path -> content
  std::vector<std::string> args;              // after the executable; relative to workdir
  std::string run_subdir;                     // cwd for the process, relative to workdir
  std::vector<std::string> expected;          // artifacts that must exist (relative)
  std::string artifact_glob_dir = "csv";      // every regular file in here is an artifact

  JobStatus status = JobStatus::pending;
  std::vector<fs::path> artifacts;
  int exit_code = -1;
  std::chrono::duration<double> wall_time{0};
  std::string error;
  bool skipped = false;  // idempotent rerun
  bool started = false;  // a process was actually spawned
};

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex(std::uint64_t v) { return fmt::format("{:016x}", v); }

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw JobError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, std::string_view content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw JobError("cannot write " + p.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

/// Environment variable wins over the configured path; bare names go through PATH.
inline std::optional<fs::path> resolve_executable(const std::string& configured, const char* env_name = nullptr) {
  std::string name = configured;
  if (env_name)
    if (const char* e = std::getenv(env_name); e && *e) name = e;
  if (name.empty()) return std::nullopt;
  const auto runnable = [](const fs::path& p) { return fs::is_regular_file(p) && ::access(p.c_str(), X_OK) == 0; };
  if (name.find('/') != std::string::npos) {
    if (runnable(name)) return fs::absolute(name);
    return std::nullopt;
  }
  const char* path = std::getenv("PATH");
  std::istringstream dirs(path ? path : "");
  for (std::string d; std::getline(dirs, d, ':');)
    if (!d.empty() && runnable(fs::path(d) / name)) return fs::path(d) / name;
  return std::nullopt;
}

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string spawn_error;
  std::chrono::duration<double> wall{0};
};

/// fork/exec with cwd, combined stdout+stderr into `log`, and a wall-clock timeout.
inline ProcessResult run_process(const std::vector<std::string>& argv, const fs::path& cwd, const fs::path& log,
                                 std::chrono::milliseconds timeout) {
  ProcessResult out;
  std::vector<char*> cargv;
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);
  const std::string cwd_s = cwd.string(), log_s = log.string();

  const auto t0 = std::chrono::steady_clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) {
    out.spawn_error = "fork failed";
    return out;
  }
  if (pid == 0) {
    // async-signal-safe calls only
    const int fd = ::open(log_s.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd >= 0) {
      ::dup2(fd, 1);
      ::dup2(fd, 2);
      ::close(fd);
    }
    if (::chdir(cwd_s.c_str()) != 0) ::_exit(126);
    ::execve(cargv[0], cargv.data(), environ);
    ::_exit(127);
  }
  int status = 0;
  for (;;) {
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) {
      out.spawn_error = "waitpid failed";
      break;
    }
    if (std::chrono::steady_clock::now() - t0 > timeout) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      out.timed_out = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::microseconds(500));
  }
  out.wall = std::chrono::steady_clock::now() - t0;
  if (WIFEXITED(status)) out.exit_code = WEXITSTATUS(status);
  else if (WIFSIGNALED(status)) out.exit_code = 128 + WTERMSIG(status);
  if (out.exit_code == 127 && !out.timed_out) out.spawn_error = "exec failed for " + argv.front();
  return out;
}

// ---------------------------------------------------------------------------
// Jobs
// ---------------------------------------------------------------------------

inline std::uint64_t inputs_hash(const Job& job, const std::vector<std::string>& command) {
  std::uint64_t h = fnv1a(job.id);
  for (const auto& [path, content] : job.inputs) {  // std::map: sorted by path
    h = fnv1a(path, h);
    h = fnv1a(std::string_view("\0", 1), h);
    h = fnv1a(content, h);
  }
  for (const auto& c : command) h = fnv1a(c + '\n', h);
  return h;
}

inline std::vector<fs::path> discover_artifacts(const Job& job) {
  std::vector<fs::path> out;
  const fs::path dir = job.workdir / job.artifact_glob_dir;
  if (fs::is_directory(dir))
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file()) out.push_back(e.path());
  for (const auto& x : job.expected) {
    const fs::path p = job.workdir / x;
    if (fs::is_regular_file(p) && std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline void write_job_record(const Job& job, std::uint64_t hash) {
  nlohmann::ordered_json j;
  j["id"] = job.id;
  j["kind"] = to_string(job.kind);
  j["status"] = to_string(job.status);
  j["exit_code"] = job.exit_code;
  j["wall_time_s"] = job.wall_time.count();
  j["error"] = job.error;
  nlohmann::json arts = nlohmann::json::array();
  for (const auto& a : job.artifacts) arts.push_back(fs::relative(a, job.workdir).generic_string());
  j["artifacts"] = arts;
  write_file(job.workdir / "job.json", j.dump(2) + "\n");
  write_file(job.workdir / ".inputs.hash", hex(hash) + "\n");
}

inline bool already_done(const Job& job, std::uint64_t hash) {
  const fs::path hf = job.workdir / ".inputs.hash", rec = job.workdir / "job.json";
  if (!fs::is_regular_file(hf) || !fs::is_regular_file(rec)) return false;
  std::string stored = read_file(hf);
  while (!stored.empty() && (stored.back() == '\n' || stored.back() == '\r')) stored.pop_back();
  if (stored != hex(hash)) return false;
  try {
    const auto j = nlohmann::json::parse(read_file(rec));
    if (j.value("status", "") != "done") return false;
    for (const auto& a : j.at("artifacts"))
      if (!fs::is_regular_file(job.workdir / a.get<std::string>())) return false;
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

struct RunOptions {
  std::chrono::milliseconds timeout{std::chrono::hours(24)};
  bool dry_run = false;
  bool force = false;
};

/// Process failures are recorded in the returned job, never thrown.
inline Job run_job(Job job, const Executable& exe, const RunOptions& opt = {}) {
  job.workdir = fs::absolute(job.workdir);
  std::vector<std::string> command = split_words(exe.launcher);
  std::optional<fs::path> resolved;
  if (!exe.path.empty()) resolved = resolve_executable(exe.path);
  command.push_back(resolved ? resolved->string() : exe.path);
  for (const auto& a : job.args) command.push_back(a);
  const std::uint64_t hash = inputs_hash(job, opt.dry_run ? std::vector<std::string>{"dry-run"} : command);

  try {
    if (!opt.force && already_done(job, hash)) {
      job.status = JobStatus::done;
      job.skipped = true;
      job.exit_code = 0;
      job.artifacts = opt.dry_run ? std::vector<fs::path>{} : discover_artifacts(job);
      if (opt.dry_run)
        for (const auto& [p, _] : job.inputs) job.artifacts.push_back(job.workdir / p);
      return job;
    }
    fs::create_directories(job.workdir);
    fs::remove_all(job.workdir / job.artifact_glob_dir);
    fs::remove(job.workdir / "job.json");
    for (const auto& [p, content] : job.inputs) write_file(job.workdir / p, content);
    fs::create_directories(job.workdir / job.artifact_glob_dir);

    if (opt.dry_run) {
      job.status = JobStatus::done;
      job.exit_code = 0;
      for (const auto& [p, _] : job.inputs) job.artifacts.push_back(job.workdir / p);
      write_job_record(job, hash);
      return job;
    }
    const auto fail = [&](std::string why) {
      job.status = JobStatus::failed;
      job.error = std::move(why);
      job.artifacts.clear();
      write_job_record(job, hash);
      return job;
    };
    if (!resolved) return fail("executable not found: '" + exe.path + "'");
    if (!command.empty() && command.front() != resolved->string()) {
      // launcher prefix: resolve its first word too
      const auto l = resolve_executable(command.front());
      if (!l) return fail("launcher not found: '" + command.front() + "'");
      command.front() = l->string();
    }

    job.status = JobStatus::running;
    const fs::path cwd = job.workdir / job.run_subdir;
    fs::create_directories(cwd);
    job.started = true;
    const auto pr = run_process(command, cwd, job.workdir / "log.txt", opt.timeout);
    job.exit_code = pr.exit_code;
    job.wall_time = pr.wall;
    if (pr.timed_out) return fail(fmt::format("timed out after {} ms", opt.timeout.count()));
    if (!pr.spawn_error.empty()) return fail(pr.spawn_error);
    if (pr.exit_code != 0) return fail(fmt::format("exited with status {} (see {})", pr.exit_code,
                                                   (job.workdir / "log.txt").string()));
    for (const auto& x : job.expected)
      if (!fs::is_regular_file(job.workdir / x)) return fail("missing expected artifact " + x);
    job.artifacts = discover_artifacts(job);
    if (job.artifacts.empty()) return fail("no artifacts produced");
    job.status = JobStatus::done;
    write_job_record(job, hash);
  } catch (const std::exception& e) {
    job.status = JobStatus::failed;
    job.error = e.what();
    job.artifacts.clear();
  }
  return job;
}

/// Runs independent jobs on `parallelism` threads; output order equals input order.
inline std::vector<Job> run_jobs(std::vector<Job> jobs, const Executable& exe, const RunOptions& opt,
                                 unsigned parallelism) {
  if (parallelism < 1) throw JobError("parallelism must be at least 1");
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) jobs[i] = run_job(std::move(jobs[i]), exe, opt);
  };
  const unsigned n = std::min<unsigned>(parallelism, static_cast<unsigned>(jobs.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return jobs;
}

// ---------------------------------------------------------------------------
// Job builders
// ---------------------------------------------------------------------------

inline constexpr const char* mesh_script_name = "mesh.geo";
inline constexpr const char* mesh_file_name = "mesh.msh";
inline constexpr const char* config_file_name = "palace.json";

inline std::string format_r(double r) { return fmt::format("{}", r); }
inline std::string mesh_job_id(double r) { return "mesh_r" + format_r(r); }
inline std::string solve_job_id(double r, int order) { return fmt::format("r{}_o{}", format_r(r), order); }

/// `<mesher> mesh.geo -3 -o mesh.msh`, run inside mesh/.
inline Job mesh_job(const fs::path& out_dir, const std::string& id, const mesh::MeshPlan& plan) {
  Job j;
  j.id = id;
  j.kind = JobKind::mesh;
  j.workdir = out_dir / id;
  j.inputs["mesh/" + std::string(mesh_script_name)] = mesh::emit_mesh_script(plan);
  j.args = {mesh_script_name, "-3", "-o", mesh_file_name};
  j.run_subdir = "mesh";
  j.expected = {"mesh/" + std::string(mesh_file_name)};
  j.artifact_glob_dir = "csv";
  return j;
}

/// Path of a mesh job's output as seen from another job's workdir.
inline std::string mesh_ref_from(const std::string& mesh_id) {
  return "../" + mesh_id + "/mesh/" + mesh_file_name;
}

/// Solver is run from the job workdir with `config/palace.json` as argv[1].
inline Job solve_job(const fs::path& out_dir, const std::string& id, solver::SolveSpec spec) {
  spec.output_dir = "csv";
  Job j;
  j.id = id;
  j.kind = JobKind::solve;
  j.workdir = out_dir / id;
  j.inputs["config/" + std::string(config_file_name)] = solver::serialize_spec(spec);
  j.args = {"config/" + std::string(config_file_name)};
  return j;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

struct GridPoint {
  double r = 0.0;
  int order = 0;
  auto operator<=>(const GridPoint&) const = default;
};

struct SweepRow {
  GridPoint point;
  std::string job_id;
  long long dofs = 0;
  std::vector<double> frequencies;  // Hz, mode order
  std::vector<double> q;
};

struct SweepFailure {
  GridPoint point;
  std::string job_id;
  std::string error;
};

struct SweepResult {
  std::vector<GridPoint> grid;
  std::vector<Job> mesh_jobs;
  std::vector<Job> solve_jobs;  // grid order
  std::vector<SweepRow> rows;
  std::vector<SweepFailure> failures;
  std::size_t invocations = 0;  // processes actually started
  std::size_t reported_modes = 1;

  std::string table() const {
    std::string out = "r,order,dofs";
    for (std::size_t m = 0; m < reported_modes; ++m) out += fmt::format(",f{}_GHz", m + 1);
    out += '\n';
    for (const auto& row : rows) {
      out += fmt::format("{},{},{}", format_r(row.point.r), row.point.order, row.dofs);
      for (std::size_t m = 0; m < reported_modes; ++m)
        out += m < row.frequencies.size() ? fmt::format(",{:.9f}", row.frequencies[m] * 1e-9) : std::string(",");
      out += '\n';
    }
    return out;
  }

  std::string failure_table() const {
    std::string out = "r,order,job,error\n";
    for (const auto& f : failures) out += fmt::format("{},{},{},\"{}\"\n", format_r(f.point.r), f.point.order, f.job_id, f.error);
    return out;
  }
};

struct SweepOptions {
  fs::path out_dir = "sweep";
  Executable solver;
  Executable mesher;
  solver::Materials materials;
  unsigned parallelism = 1;
  RunOptions run;
  int modes = 1;
  std::optional<double> shift_ghz;  // default from the layout's quarter-wave estimate
  std::pair<double, double> band_ghz{0.0, 1e6};
};

inline std::vector<GridPoint> normalize_grid(std::vector<GridPoint> grid) {
  std::sort(grid.begin(), grid.end());
  if (std::adjacent_find(grid.begin(), grid.end()) != grid.end()) throw JobError("sweep grid has duplicate points");
  return grid;
}

/// Reads eig.csv and palace.json from a finished eigenmode job.
inline SweepRow collect_eigen(const Job& job, GridPoint pt, const SweepOptions& opt) {
  SweepRow row;
  row.point = pt;
  row.job_id = job.id;
  const fs::path csv = job.workdir / "csv";
  auto modes = results::parse_eig_csv(read_file(csv / "eig.csv"));
  modes = results::filter_modes(modes, opt.band_ghz.first * 1e9, opt.band_ghz.second * 1e9, 0.0);
  if (modes.empty()) throw JobError("no eigenmodes in band");
  for (const auto& m : modes) {
    row.frequencies.push_back(m.frequency);
    row.q.push_back(m.q);
  }
  if (fs::is_regular_file(csv / "palace.json"))
    if (const auto d = results::find_dofs(nlohmann::json::parse(read_file(csv / "palace.json")))) row.dofs = *d;
  return row;
}

inline SweepResult run_sweep(const layout::LayoutModel& lay, const mesh::MeshControls& base,
                             std::vector<GridPoint> grid, const SweepOptions& opt) {
  if (grid.empty()) throw JobError("sweep grid is empty");
  if (opt.parallelism < 1) throw JobError("parallelism must be at least 1");
  SweepResult out;
  out.grid = normalize_grid(std::move(grid));
  out.reported_modes = static_cast<std::size_t>(std::max(1, opt.modes));
  const double shift = opt.shift_ghz ? *opt.shift_ghz
                                     : solver::default_eigen_shift_ghz(lay, opt.materials.substrate);

  std::vector<double> rs;
  for (const auto& p : out.grid)
    if (std::find(rs.begin(), rs.end(), p.r) == rs.end()) rs.push_back(p.r);

  std::vector<Job> meshes;
  for (double r : rs) {
    mesh::MeshControls c = base;
    c.r = r;
    meshes.push_back(mesh_job(opt.out_dir, mesh_job_id(r), mesh::build_plan(lay, c)));
  }
  out.mesh_jobs = run_jobs(std::move(meshes), opt.mesher, opt.run, opt.parallelism);

  std::vector<Job> solves;
  std::vector<std::size_t> slot;  // index into out.grid
  for (std::size_t i = 0; i < out.grid.size(); ++i) {
    const auto& p = out.grid[i];
    const std::string mid = mesh_job_id(p.r);
    const auto mj = std::find_if(out.mesh_jobs.begin(), out.mesh_jobs.end(), [&](const Job& j) { return j.id == mid; });
    const std::string sid = solve_job_id(p.r, p.order);
    if (mj->status != JobStatus::done) {
      out.failures.push_back({p, sid, "mesh job " + mid + " failed: " + mj->error});
      continue;
    }
    mesh::MeshControls c = base;
    c.r = p.r;
    c.order = p.order;
    const auto plan = mesh::build_plan(lay, c);
    solves.push_back(solve_job(opt.out_dir, sid,
                               solver::make_eigenmode(plan, opt.materials, opt.modes, shift, mesh_ref_from(mid))));
    slot.push_back(i);
  }
  auto done = run_jobs(std::move(solves), opt.solver, opt.run, opt.parallelism);

  for (const auto& j : out.mesh_jobs) out.invocations += j.started;
  for (std::size_t k = 0; k < done.size(); ++k) {
    const auto& j = done[k];
    const auto& p = out.grid[slot[k]];
    out.invocations += j.started;
    if (j.status != JobStatus::done) {
      out.failures.push_back({p, j.id, j.error});
      continue;
    }
    if (opt.run.dry_run) continue;
    try {
      out.rows.push_back(collect_eigen(j, p, opt));
    } catch (const std::exception& e) {
      out.failures.push_back({p, j.id, std::string("postprocess: ") + e.what()});
    }
  }
  out.solve_jobs = std::move(done);
  std::sort(out.failures.begin(), out.failures.end(),
            [](const SweepFailure& a, const SweepFailure& b) { return a.point < b.point; });
  if (!opt.run.dry_run && out.rows.empty()) throw JobError("all sweep points failed");
  return out;
}

}  // namespace cqedtk::orch
