#include <cqedtk/orchestrate.hpp>

#include <unistd.h>

#include <cmath>
#include <cstdlib>

#include <gtest/gtest.h>

#include "support/layouts.hpp"
#include "support/scratch.hpp"

using namespace cqedtk;
using namespace cqedtk::orch;
using cqedtk::test_support::EnvGuard;
using cqedtk::test_support::TempDir;

namespace {

void eigen_fixture(const fs::path& dir, double f_hz, long long dofs) {
  write_file(dir / "eig.csv", fmt::format("m,Re{{f}} (GHz),Im{{f}} (GHz),Q\n1,{:.12f},{:.6e},{:.6e}\n2,{:.12f},0,1e6\n",
                                          f_hz * 1e-9, f_hz * 1e-9 / 2e6, 1e6, 2 * f_hz * 1e-9));
  write_file(dir / "palace.json", fmt::format("{{\"Problem\": {{\"DegreesOfFreedom\": {}}}}}\n", dofs));
}

const std::vector<GridPoint> six = {{2.0, 4}, {1.0, 3}, {1.5, 4}, {1.0, 4}, {1.5, 3}, {2.0, 3}};

// f(r, p) = 7.5 GHz (1 + c_p 2^{-2r}), DoFs growing with r and order
void sweep_fixtures(const fs::path& root) {
  for (const auto& p : six)
    eigen_fixture(root / solve_job_id(p.r, p.order), 7.5e9 * (1 + (p.order == 3 ? 0.02 : 0.005) * std::exp2(-2 * p.r)),
                  static_cast<long long>(1000 * std::exp2(2 * p.r) * p.order));
}

SweepOptions mock_options(const fs::path& out, unsigned parallelism) {
  SweepOptions o;
  o.out_dir = out;
  o.solver = {CQEDTK_MOCK_SOLVER, ""};
  o.mesher = {CQEDTK_MOCK_MESHER, ""};
  o.parallelism = parallelism;
  o.modes = 1;
  o.shift_ghz = 6.0;
  o.band_ghz = {1.0, 12.0};
  return o;
}

std::size_t count_lines(const fs::path& p) {
  if (!fs::exists(p)) return 0;
  const auto s = read_file(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

solver::SolveSpec eigen_spec() {
  const auto plan = mesh::build_plan(test_support::small_resonator(), {});
  return solver::make_eigenmode(plan, {}, 2, 6.0, "mesh.msh");
}

}  // namespace

TEST(RunJob, DryRunWritesInputsOnly) {
  TempDir tmp;
  const auto job = run_job(solve_job(tmp.path, "eig", eigen_spec()), {"/nonexistent/solver", ""}, {.dry_run = true});
  EXPECT_EQ(job.status, JobStatus::done);
  EXPECT_FALSE(job.started);
  ASSERT_EQ(job.artifacts.size(), 1u);
  EXPECT_EQ(job.artifacts[0], tmp.path / "eig/config/palace.json");
  EXPECT_TRUE(fs::is_regular_file(job.artifacts[0]));
  EXPECT_EQ(nlohmann::json::parse(read_file(job.artifacts[0]))["Problem"]["Output"], "csv");
}

TEST(RunJob, MockSolverCopiesFixtures) {
  TempDir tmp;
  EnvGuard env;
  eigen_fixture(tmp.path / "fx/eigenmode", 7.3e9, 1234);
  env.set("CQED_MOCK_FIXTURES", (tmp.path / "fx").string());
  const auto job = run_job(solve_job(tmp.path / "out", "eig", eigen_spec()), {CQEDTK_MOCK_SOLVER, ""});
  ASSERT_EQ(job.status, JobStatus::done) << job.error;
  EXPECT_EQ(job.exit_code, 0);
  ASSERT_EQ(job.artifacts.size(), 2u);
  EXPECT_EQ(job.artifacts[0].filename(), "eig.csv");
  EXPECT_EQ(read_file(job.artifacts[0]), read_file(tmp.path / "fx/eigenmode/eig.csv"));
  const auto rec = nlohmann::json::parse(read_file(tmp.path / "out/eig/job.json"));
  EXPECT_EQ(rec["status"], "done");
  EXPECT_EQ(rec["artifacts"].size(), 2u);
  EXPECT_TRUE(fs::exists(tmp.path / "out/eig/log.txt"));
}

TEST(RunJob, TimeoutMarksFailed) {
  TempDir tmp;
  EnvGuard env;
  env.set("CQED_MOCK_SLEEP_MS", "2000");
  const auto t0 = std::chrono::steady_clock::now();
  const auto job = run_job(solve_job(tmp.path, "slow", eigen_spec()), {CQEDTK_MOCK_SOLVER, ""},
                           {.timeout = std::chrono::milliseconds(1)});
  EXPECT_EQ(job.status, JobStatus::failed);
  EXPECT_NE(job.error.find("timed out"), std::string::npos);
  EXPECT_TRUE(job.artifacts.empty());
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(1));
}

TEST(RunJob, ProcessFailures) {
  TempDir tmp;
  EnvGuard env;
  const auto missing = run_job(solve_job(tmp.path, "a", eigen_spec()), {tmp.path.string() + "/no_such_solver", ""});
  EXPECT_EQ(missing.status, JobStatus::failed);
  EXPECT_NE(missing.error.find("not found"), std::string::npos);
  EXPECT_FALSE(missing.started);

  env.set("CQED_MOCK_EXIT", "3");
  const auto bad = run_job(solve_job(tmp.path, "b", eigen_spec()), {CQEDTK_MOCK_SOLVER, ""});
  EXPECT_EQ(bad.status, JobStatus::failed);
  EXPECT_EQ(bad.exit_code, 3);
  ::unsetenv("CQED_MOCK_EXIT");

  // fixtures present but the declared artifact is not among them
  write_file(tmp.path / "fx/eigenmode/other.csv", "x\n1\n");
  env.set("CQED_MOCK_FIXTURES", (tmp.path / "fx").string());
  auto j = solve_job(tmp.path, "c", eigen_spec());
  j.expected = {"csv/eig.csv"};
  const auto absent = run_job(j, {CQEDTK_MOCK_SOLVER, ""});
  EXPECT_EQ(absent.status, JobStatus::failed);
  EXPECT_NE(absent.error.find("csv/eig.csv"), std::string::npos);
}

TEST(RunJob, LauncherPrefix) {
  TempDir tmp;
  EnvGuard env;
  eigen_fixture(tmp.path / "fx/eigenmode", 7.3e9, 1);
  env.set("CQED_MOCK_FIXTURES", (tmp.path / "fx").string());
  const auto job = run_job(solve_job(tmp.path, "eig", eigen_spec()), {CQEDTK_MOCK_SOLVER, "env"});
  EXPECT_EQ(job.status, JobStatus::done) << job.error;
}

TEST(RunJob, EnvironmentOverridesConfiguredPath) {
  EnvGuard env;
  env.set("CQED_SOLVER", CQEDTK_MOCK_SOLVER);
  const auto p = resolve_executable("/nonexistent/palace", "CQED_SOLVER");
  ASSERT_TRUE(p);
  EXPECT_EQ(fs::path(*p), fs::path(CQEDTK_MOCK_SOLVER));
  EXPECT_FALSE(resolve_executable("/nonexistent/palace"));
  EXPECT_TRUE(resolve_executable("sh"));
}

TEST(RunSweep, DryRunBuildsTree) {
  TempDir tmp;
  auto opt = mock_options(tmp.path, 2);
  opt.solver = {"/nonexistent", ""};
  opt.mesher = {"/nonexistent", ""};
  opt.run.dry_run = true;
  const auto res = run_sweep(test_support::small_resonator(), {}, six, opt);
  EXPECT_EQ(res.invocations, 0u);
  EXPECT_TRUE(res.failures.empty());
  EXPECT_EQ(res.mesh_jobs.size(), 3u);
  EXPECT_TRUE(fs::is_regular_file(tmp.path / "mesh_r1.5/mesh/mesh.geo"));
  const auto cfg = nlohmann::json::parse(read_file(tmp.path / "r1.5_o4/config/palace.json"));
  EXPECT_EQ(cfg["Model"]["Mesh"], "../mesh_r1.5/mesh/mesh.msh");
  EXPECT_EQ(cfg["Solver"]["Order"], 4);
}

TEST(RunSweep, DeterministicAcrossParallelism) {
  TempDir tmp;
  EnvGuard env;
  sweep_fixtures(tmp.path / "fx");
  env.set("CQED_MOCK_FIXTURES", (tmp.path / "fx").string());
  env.set("CQED_MOCK_SLEEP_MS", "5");
  std::vector<std::string> tables;
  for (unsigned par : {1u, 2u, 8u}) {
    const auto res = run_sweep(test_support::small_resonator(), {}, six, mock_options(tmp.path / fmt::format("p{}", par), par));
    EXPECT_EQ(res.rows.size(), 6u);
    EXPECT_EQ(res.invocations, 9u);
    tables.push_back(res.table());
  }
  EXPECT_EQ(tables[0], tables[1]);
  EXPECT_EQ(tables[0], tables[2]);
  EXPECT_EQ(tables[0].substr(0, tables[0].find('\n')), "r,order,dofs,f1_GHz");
  // sorted by (r, order)
  EXPECT_NE(tables[0].find("1,3,"), std::string::npos);
  EXPECT_LT(tables[0].find("1,3,"), tables[0].find("1,4,"));
  EXPECT_LT(tables[0].find("1,4,"), tables[0].find("1.5,3,"));
  EXPECT_LT(tables[0].find("1.5,4,"), tables[0].find("2,3,"));
}

TEST(RunSweep, IdempotentRerun) {
  TempDir tmp;
  EnvGuard env;
  sweep_fixtures(tmp.path / "fx");
  env.set("CQED_MOCK_FIXTURES", (tmp.path / "fx").string());
  env.set("CQED_MOCK_LOG", (tmp.path / "calls.log").string());
  const auto opt = mock_options(tmp.path / "out", 2);
  const auto first = run_sweep(test_support::small_resonator(), {}, six, opt);
  const auto calls = count_lines(tmp.path / "calls.log");
  EXPECT_EQ(calls, 9u);
  const auto again = run_sweep(test_support::small_resonator(), {}, six, opt);
  EXPECT_EQ(again.invocations, 0u);
  EXPECT_EQ(count_lines(tmp.path / "calls.log"), calls);
  EXPECT_EQ(again.table(), first.table());
  for (const auto& j : again.solve_jobs) EXPECT_TRUE(j.skipped);

  // a changed input reruns only the affected jobs
  auto two = opt;
  two.modes = 2;
  const auto changed = run_sweep(test_support::small_resonator(), {}, six, two);
  EXPECT_EQ(changed.invocations, 6u);
}

TEST(RunSweep, CorruptedFixtureRecordedNotFatal) {
  TempDir tmp;
  EnvGuard env;
  sweep_fixtures(tmp.path / "fx");
  write_file(tmp.path / "fx/r1.5_o3/eig.csv", "m,Re{f} (GHz)\n1,not-a-number\n");
  env.set("CQED_MOCK_FIXTURES", (tmp.path / "fx").string());
  const auto res = run_sweep(test_support::small_resonator(), {}, six, mock_options(tmp.path / "out", 3));
  EXPECT_EQ(res.rows.size(), 5u);
  ASSERT_EQ(res.failures.size(), 1u);
  EXPECT_EQ(res.failures[0].job_id, "r1.5_o3");
  EXPECT_NE(res.failure_table().find("r1.5_o3"), std::string::npos);
}

TEST(RunSweep, SinglePointMatchesRunJob) {
  TempDir tmp;
  EnvGuard env;
  sweep_fixtures(tmp.path / "fx");
  env.set("CQED_MOCK_FIXTURES", (tmp.path / "fx").string());
  const auto opt = mock_options(tmp.path / "sweep", 1);
  const auto res = run_sweep(test_support::small_resonator(), {}, {{1.5, 4}}, opt);
  ASSERT_EQ(res.rows.size(), 1u);

  mesh::MeshControls c;
  c.r = 1.5;
  const auto plan = mesh::build_plan(test_support::small_resonator(), c);
  const auto direct = run_job(solve_job(tmp.path / "sweep", "r1.5_o4",
                                        solver::make_eigenmode(plan, {}, 1, 6.0, mesh_ref_from("mesh_r1.5"))),
                              opt.solver);
  EXPECT_TRUE(direct.skipped);
  EXPECT_EQ(collect_eigen(direct, {1.5, 4}, opt).frequencies, res.rows[0].frequencies);
}

TEST(RunSweep, GridErrors) {
  TempDir tmp;
  const auto opt = mock_options(tmp.path, 1);
  EXPECT_THROW(run_sweep(test_support::small_resonator(), {}, {}, opt), JobError);
  EXPECT_THROW(run_sweep(test_support::small_resonator(), {}, {{1.5, 4}, {1.5, 4}}, opt), JobError);
  auto zero = opt;
  zero.parallelism = 0;
  EXPECT_THROW(run_sweep(test_support::small_resonator(), {}, {{1.5, 4}}, zero), JobError);
}

TEST(RunSweep, AllPointsFailing) {
  TempDir tmp;
  EnvGuard env;
  env.set("CQED_MOCK_FIXTURES", (tmp.path / "empty").string());
  EXPECT_THROW(run_sweep(test_support::small_resonator(), {}, {{1.0, 4}, {1.5, 4}}, mock_options(tmp.path / "o", 2)),
               JobError);
}
