#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace std::string_literals;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

CliResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd =
      EQN_CLI_PATH + (" " + args) + " > " + out.string() + " 2> " + err.string();
  const int rc = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_config(const fs::path& path, const std::string& extra_run = "",
                  const std::string& sampler = "eqn", int iterations = 200) {
  std::ofstream f(path);
  f << "[target]\nkind = gaussian\nvariances = 1 4\n\n";
  f << "[sampler]\nkind = " << sampler << "\nh = 0.25\ngamma = 1.0\n"
    << "steps_per_iteration = 2\nmetropolize = true\n\n";
  if (sampler == "eqn") f << "[preconditioner]\nmode = blended\nmu = 1.0\n\n";
  f << "[ensemble]\nwalkers = 8\ngroups = 2\n\n";
  f << "[run]\niterations = " << iterations << "\nseed = 7\n"
    << "observables = coord:0 sq:0 sq:1\n"
    << extra_run;
}

}  // namespace

TEST_CASE("sample runs are deterministic for a fixed seed") {
  auto dir = fresh_dir("eqn_cli_det");
  write_config(dir / "run.cfg");
  auto r1 = run_cli("sample --config " + (dir / "run.cfg").string() + " --output " +
                        (dir / "a").string(),
                    dir);
  REQUIRE(r1.exit_code == 0);
  auto r2 = run_cli("sample --config " + (dir / "run.cfg").string() + " --output " +
                        (dir / "b").string(),
                    dir);
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(dir / "a" / "trace.trace") == slurp(dir / "b" / "trace.trace"));

  // a different seed changes the trace
  auto r3 = run_cli("sample --config " + (dir / "run.cfg").string() + " --seed 8 --output " +
                        (dir / "c").string(),
                    dir);
  REQUIRE(r3.exit_code == 0);
  CHECK(slurp(dir / "a" / "trace.trace") != slurp(dir / "c" / "trace.trace"));
  fs::remove_all(dir);
}

TEST_CASE("identical seeds give identical binary traces for workers 1, 4, 16") {
  auto dir = fresh_dir("eqn_cli_workers");
  write_config(dir / "run.cfg");
  std::string ref;
  for (int w : {1, 4, 16}) {
    const auto out = dir / ("w" + std::to_string(w));
    auto r = run_cli("sample --config " + (dir / "run.cfg").string() + " --workers " +
                         std::to_string(w) + " --output " + out.string(),
                     dir);
    REQUIRE(r.exit_code == 0);
    const std::string bytes = slurp(out / "trace.trace");
    if (ref.empty()) ref = bytes;
    CHECK(bytes == ref);
  }
  fs::remove_all(dir);
}

TEST_CASE("missing required keys exit with code 2 and name the key") {
  auto dir = fresh_dir("eqn_cli_missing");
  {
    std::ofstream f(dir / "bad.cfg");
    f << "[target]\nkind = gaussian\nvariances = 1\n[sampler]\nkind = eqn\nh = 0.1\n"
      << "[run]\nseed = 1\n";  // no iterations
  }
  auto r = run_cli("sample --config " + (dir / "bad.cfg").string(), dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("run.iterations") != std::string::npos);

  // unknown keys are rejected up front
  {
    std::ofstream f(dir / "unknown.cfg");
    f << "[target]\nkind = gaussian\nvariances = 1\nbogus = 3\n"
      << "[sampler]\nkind = eqn\nh = 0.1\n[run]\niterations = 5\n";
  }
  auto r2 = run_cli("sample --config " + (dir / "unknown.cfg").string(), dir);
  CHECK(r2.exit_code == 2);
  CHECK(r2.err.find("bogus") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("resume continues bitwise-identically to an uninterrupted run") {
  auto dir = fresh_dir("eqn_cli_resume");
  write_config(dir / "short.cfg", "", "eqn", 40);
  write_config(dir / "long.cfg", "", "eqn", 90);

  auto rl = run_cli("sample --config " + (dir / "long.cfg").string() + " --output " +
                        (dir / "full").string(),
                    dir);
  REQUIRE(rl.exit_code == 0);

  auto rs = run_cli("sample --config " + (dir / "short.cfg").string() + " --output " +
                        (dir / "split").string(),
                    dir);
  REQUIRE(rs.exit_code == 0);
  auto rr = run_cli("sample --config " + (dir / "long.cfg").string() + " --output " +
                        (dir / "split").string() + " --resume " +
                        (dir / "split" / "trace.ckpt").string(),
                    dir);
  REQUIRE(rr.exit_code == 0);
  CHECK(slurp(dir / "full" / "trace.trace") == slurp(dir / "split" / "trace.trace"));
  fs::remove_all(dir);
}

TEST_CASE("diagnose summarizes traces and refuses mixed lineages") {
  auto dir = fresh_dir("eqn_cli_diag");
  write_config(dir / "run.cfg");
  REQUIRE(run_cli("sample --config " + (dir / "run.cfg").string() + " --output " +
                      (dir / "a").string(),
                  dir)
              .exit_code == 0);
  auto r = run_cli("diagnose " + (dir / "a" / "trace.trace").string() + " --output " +
                       (dir / "rep").string(),
                   dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("tau(sq:0)") != std::string::npos);
  CHECK(fs::exists(dir / "rep" / "report.kv"));

  // different target -> different lineage -> refused
  {
    std::ofstream f(dir / "other.cfg");
    f << "[target]\nkind = gaussian\nvariances = 2 2\n"
      << "[sampler]\nkind = eqn\nh = 0.25\nsteps_per_iteration = 2\n"
      << "[preconditioner]\nmode = blended\nmu = 1.0\n"
      << "[ensemble]\nwalkers = 8\ngroups = 2\n"
      << "[run]\niterations = 50\nseed = 7\nobservables = coord:0 sq:0 sq:1\n";
  }
  REQUIRE(run_cli("sample --config " + (dir / "other.cfg").string() + " --output " +
                      (dir / "b").string(),
                  dir)
              .exit_code == 0);
  auto bad = run_cli("diagnose " + (dir / "a" / "trace.trace").string() + " " +
                         (dir / "b" / "trace.trace").string(),
                     dir);
  CHECK(bad.exit_code == 3);
  CHECK(bad.err.find("lineage") != std::string::npos);

  // unreadable trace names the file
  auto miss = run_cli("diagnose /tmp/nosuch_trace_file.trace", dir);
  CHECK(miss.exit_code == 3);
  CHECK(miss.err.find("nosuch_trace_file") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("biased runs are flagged in the report") {
  auto dir = fresh_dir("eqn_cli_biased");
  write_config(dir / "run.cfg");
  auto r = run_cli("sample --config " + (dir / "run.cfg").string() +
                       " --no-metropolize --divergence omitted --output " +
                       (dir / "a").string(),
                   dir);
  REQUIRE(r.exit_code == 0);
  auto d = run_cli("diagnose " + (dir / "a" / "trace.trace").string(), dir);
  CHECK(d.exit_code == 0);
  CHECK(d.out.find("[biased]") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("text trace format round-trips through diagnose") {
  auto dir = fresh_dir("eqn_cli_text");
  write_config(dir / "run.cfg", "trace_format = text\n");
  REQUIRE(run_cli("sample --config " + (dir / "run.cfg").string() + " --output " +
                      (dir / "a").string(),
                  dir)
              .exit_code == 0);
  CHECK(fs::exists(dir / "a" / "trace.txt"));
  auto d = run_cli("diagnose " + (dir / "a" / "trace.txt").string(), dir);
  CHECK(d.exit_code == 0);
  CHECK(d.out.find("eqn") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("unknown experiment preset prints the available list") {
  auto dir = fresh_dir("eqn_cli_preset");
  auto r = run_cli("experiment nosuch --output " + (dir / "o").string(), dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("gaussian_conditioning") != std::string::npos);
  CHECK(r.err.find("mixture") != std::string::npos);
  CHECK(r.err.find("cox_small") != std::string::npos);
  fs::remove_all(dir);
}
