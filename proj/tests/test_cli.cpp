#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "poupinn/config.hpp"
#include "poupinn/errors.hpp"

using namespace poupinn;

#ifndef POUPINN_CLI_PATH
#define POUPINN_CLI_PATH "./poupinn"
#endif

namespace {

namespace fs = std::filesystem;

struct RunOutput {
  int exit_code = -1;
  std::string stdout_text;
  std::string stderr_text;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunOutput run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(POUPINN_CLI_PATH) + " " + args + " > " +
                          out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunOutput r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.stdout_text = slurp(out);
  r.stderr_text = slurp(err);
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path("cli_test_tmp") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

const char* kTinyConfig =
    "# tiny supervised run\n"
    "problem = supervised\n"
    "balls = 3\n"
    "hidden = 6\n"
    "kmeans_points = 500\n"
    "outer_iterations = 4\n"
    "n_interior = 200\n"
    "n_boundary = 0\n"
    "heldout_boundary = 0\n"
    "heldout_interior = 200\n"
    "ascent_inner_steps = 2\n"
    "n_mc_mass = 5000\n"
    "seed = 3\n";

// report.csv rows with the wall-clock column stripped; run-to-run comparisons
// must ignore timing.
std::vector<std::string> non_timing_rows(const fs::path& csv) {
  std::ifstream in(csv);
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t cut = line.rfind(',');
    rows.push_back(line.substr(0, cut));
  }
  return rows;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config parser rejects unknown keys with the line number") {
  CHECK_THROWS_WITH_AS(
      parse_run_config_text("problem = supervised\nfoo = 1\n", "cfg"),
      doctest::Contains("cfg:2"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config_text("foo = 1\n", "cfg"),
                       doctest::Contains("foo"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config_text("balls 4\n", "cfg"),
                       doctest::Contains("cfg:1"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config_text("balls = x\n", "cfg"),
                       doctest::Contains("number"), ConfigError);
}

TEST_CASE("config parser handles comments, spacing and lists") {
  const RunConfig cfg = parse_run_config_text(
      "problem = helmholtz  # the default instance\n"
      "\n"
      "hidden = 12, 8\n"
      "  beta = 0.25\n",
      "cfg");
  CHECK(cfg.problem == "helmholtz");
  CHECK(cfg.hidden == std::vector<int>{12, 8});
  CHECK(cfg.train.beta == 0.25);
}

TEST_CASE("train command writes report, checkpoint and density files") {
  const fs::path dir = fresh_dir("train");
  write_file(dir / "run.cfg", kTinyConfig);
  const RunOutput r = run_cli("train --config " + (dir / "run.cfg").string() +
                                  " --out " + (dir / "out").string(),
                              dir);
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "out" / "report.csv"));
  CHECK(fs::exists(dir / "out" / "model.ckpt"));
  CHECK(fs::exists(dir / "out" / "density.csv"));
  std::ifstream in(dir / "out" / "report.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "iter,loss,rel_l2,eta,nnz_frac,kl_uniform,wall_ms");
}

TEST_CASE("unknown config keys exit with code 2 and name the key") {
  const fs::path dir = fresh_dir("badkey");
  write_file(dir / "run.cfg", std::string(kTinyConfig) + "foo = 1\n");
  const RunOutput r = run_cli("train --config " + (dir / "run.cfg").string() +
                                  " --out " + (dir / "out").string(),
                              dir);
  CHECK(r.exit_code == 2);
  CHECK(r.stderr_text.find("foo") != std::string::npos);
}

TEST_CASE("identical config and seed reproduce the outputs") {
  const fs::path dir = fresh_dir("determinism");
  write_file(dir / "run.cfg", kTinyConfig);
  const std::string base = "train --config " + (dir / "run.cfg").string();
  CHECK(run_cli(base + " --out " + (dir / "a").string(), dir).exit_code == 0);
  CHECK(run_cli(base + " --out " + (dir / "b").string(), dir).exit_code == 0);
  CHECK(non_timing_rows(dir / "a" / "report.csv") ==
        non_timing_rows(dir / "b" / "report.csv"));
  CHECK(slurp(dir / "a" / "density.csv") == slurp(dir / "b" / "density.csv"));
  CHECK(slurp(dir / "a" / "model.ckpt") == slurp(dir / "b" / "model.ckpt"));

  // a different seed changes the series
  CHECK(run_cli(base + " --seed 99 --out " + (dir / "c").string(), dir).exit_code == 0);
  CHECK(non_timing_rows(dir / "a" / "report.csv") !=
        non_timing_rows(dir / "c" / "report.csv"));
}

TEST_CASE("oracle command writes the grid and reports cache hits") {
  const fs::path dir = fresh_dir("oracle");
  const std::string cmd = "oracle --problem helmholtz --resolution 24 --out " +
                          (dir / "cache").string();
  const RunOutput first = run_cli(cmd, dir);
  CHECK(first.exit_code == 0);
  CHECK(first.stdout_text.find("self-convergence ratio") != std::string::npos);
  CHECK(first.stdout_text.find("written to") != std::string::npos);
  const RunOutput second = run_cli(cmd, dir);
  CHECK(second.exit_code == 0);
  CHECK(second.stdout_text.find("cache hit") != std::string::npos);
}

TEST_CASE("burgers oracle values stay inside the maximum principle bounds") {
  const fs::path dir = fresh_dir("oracle_burgers");
  const RunOutput r = run_cli("oracle --problem burgers --resolution 10 --out " +
                                  (dir / "cache").string(),
                              dir);
  CHECK(r.exit_code == 0);
  bool found = false;
  for (const auto& entry : fs::directory_iterator(dir / "cache")) {
    std::ifstream in(entry.path());
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      const std::size_t cut = line.rfind(',');
      const double u = std::stod(line.substr(cut + 1));
      CHECK(u >= -1.0 - 1e-9);
      CHECK(u <= 1.0 + 1e-9);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("scale-bench writes rows and the single-ball row is fully dense") {
  const fs::path dir = fresh_dir("bench");
  const RunOutput r = run_cli(
      "scale-bench --sizes 400 --balls 1,6 --points 300 --out " + dir.string(), dir);
  CHECK(r.exit_code == 0);
  std::ifstream in(dir / "scale_bench.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header.find("nnz_j_pct") != std::string::npos);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells[0] == "1") CHECK(std::stod(cells[5]) == doctest::Approx(100.0));
  }
  CHECK(rows == 2);
}

TEST_CASE("check command passes clean and fails the negative control") {
  const fs::path dir = fresh_dir("check");
  CHECK(run_cli("check", dir).exit_code == 0);
  const RunOutput bad = run_cli("check --corrupt-gate", dir);
  CHECK(bad.exit_code == 1);
  CHECK(bad.stdout_text.find("FAIL") != std::string::npos);
}

TEST_CASE("eval command reproduces the trained rel-L2 from the checkpoint") {
  const fs::path dir = fresh_dir("eval");
  write_file(dir / "run.cfg", std::string(kTinyConfig) + "eval_resolution = 16\n");
  const RunOutput tr = run_cli("train --config " + (dir / "run.cfg").string() +
                                   " --out " + (dir / "out").string(),
                               dir);
  REQUIRE(tr.exit_code == 0);
  const RunOutput ev = run_cli(
      "eval --config " + (dir / "run.cfg").string() + " --checkpoint " +
          (dir / "out" / "model.ckpt").string() + " --resolution 16 --out " +
          (dir / "eval_out").string(),
      dir);
  CHECK(ev.exit_code == 0);
  CHECK(ev.stdout_text.find("rel-L2") != std::string::npos);
  CHECK(fs::exists(dir / "eval_out" / "error_field.csv"));
}

}  // TEST_SUITE
