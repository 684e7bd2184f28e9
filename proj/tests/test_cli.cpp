#include "doctest.h"

#include "stmc/panel.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr
};

Run run(const std::string& args) {
  const std::string cmd = std::string(STMC_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.output.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> data_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);)
    if (!l.empty() && l[0] != '#') out.push_back(l);
  return out;
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("stmc_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path sim_config() { return fs::path(STMC_SOURCE_DIR) / "configs" / "simulate_default.cfg"; }

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// Simulated panel plus its adjacency, shared by the fit tests.
fs::path simulated(const fs::path& dir) {
  const auto r = run("simulate -c " + sim_config().string() + " -o " + (dir / "sim").string());
  REQUIRE(r.code == 0);
  return dir / "sim";
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and usage errors") {
  CHECK(run("--help").code == 0);
  CHECK(run("").code != 0);
  CHECK(run("fit -p /nonexistent.csv -c /nonexistent.cfg -o /tmp/x").code != 0);
}

TEST_CASE("simulate writes a full panel and is reproducible") {
  const auto dir = scratch("sim");
  const auto out = dir / "a";
  REQUIRE(run("simulate -c " + sim_config().string() + " -o " + out.string()).code == 0);
  CHECK(data_lines(out / "panel.csv").size() == 29 * 15 + 1);
  CHECK(data_lines(out / "truth.csv").size() == 29 * 15 + 1);
  CHECK(fs::exists(out / "adjacency.csv"));
  const std::string first = slurp(out / "panel.csv");
  CHECK(first.find("# seed: 1") != std::string::npos);
  REQUIRE(run("simulate -c " + sim_config().string() + " -o " + out.string()).code == 0);
  CHECK(slurp(out / "panel.csv") == first);
  REQUIRE(run("simulate -c " + sim_config().string() + " -o " + out.string() + " --set seed=2").code == 0);
  CHECK(slurp(out / "panel.csv") != first);
  const auto p = stmc::load_panel(out / "panel.csv");
  CHECK(p.units() == 29);
  CHECK(p.treated.count() == 42);

  write(dir / "bad.cfg", "units = 29\n");
  const auto r = run("simulate -c " + (dir / "bad.cfg").string() + " -o " + out.string());
  CHECK(r.code == 1);
  CHECK(r.output.find("missing required key") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("fit configuration errors") {
  const auto dir = scratch("fiterr");
  const auto sim = simulated(dir);
  const std::string panel = (sim / "panel.csv").string();

  write(dir / "nok.cfg", "family = vanilla\n");
  auto r = run("fit -p " + panel + " -c " + (dir / "nok.cfg").string() + " -o " + (dir / "o").string());
  CHECK(r.code == 1);
  CHECK(r.output.find("'k'") != std::string::npos);

  write(dir / "fam.cfg", "family = banana\nk = 1\n");
  r = run("fit -p " + panel + " -c " + (dir / "fam.cfg").string() + " -o " + (dir / "o").string());
  CHECK(r.code == 2);
  CHECK(r.output.find("banana") != std::string::npos);

  write(dir / "adj.cfg", "family = space\nk = 1\n");
  r = run("fit -p " + panel + " -c " + (dir / "adj.cfg").string() + " -o " + (dir / "o").string());
  CHECK(r.code == 1);
  CHECK(r.output.find("adjacency") != std::string::npos);

  write(dir / "unk.cfg", "family = vanilla\nk = 1\nchians = 2\n");
  r = run("fit -p " + panel + " -c " + (dir / "unk.cfg").string() + " -o " + (dir / "o").string());
  CHECK(r.code == 1);
  CHECK(r.output.find("chians") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("fit then att") {
  const auto dir = scratch("fit");
  const auto sim = simulated(dir);
  const std::string panel = (sim / "panel.csv").string();
  write(dir / "fit.cfg",
        "family = vanilla\nk = 1\niterations = 600\nwarmup = 300\nchains = 2\nseed = 3\n");
  const auto t0 = std::chrono::steady_clock::now();
  auto r = run("fit -p " + panel + " -c " + (dir / "fit.cfg").string() + " -o " + (dir / "fit").string());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE(r.code == 0);
  CHECK(secs < 60.0);
  for (const char* f : {"draws.csv", "predictive.csv", "pretreatment_att.csv", "diagnostics.csv", "model_config.txt"})
    CHECK(fs::exists(dir / "fit" / f));
  const std::string diag = slurp(dir / "fit" / "diagnostics.csv");
  const auto at = diag.find("mean_predictive_rhat = ");
  REQUIRE(at != std::string::npos);
  CHECK(std::stod(diag.substr(at + 23)) < 1.05);
  CHECK(slurp(dir / "fit" / "draws.csv").find("# seed: 3") != std::string::npos);

  r = run("att -f " + (dir / "fit").string() + " -p " + panel);
  REQUIRE(r.code == 0);
  CHECK(r.output.find("overall ATT") != std::string::npos);
  const auto p = stmc::load_panel(panel);
  std::set<long> times;
  std::set<std::string> groups;
  for (Eigen::Index i = 0; i < p.units(); ++i)
    for (Eigen::Index t = 0; t < p.times(); ++t)
      if (p.treated(i, t)) times.insert(p.time_labels[t]), groups.insert(p.group_of_unit[i]);
  const auto rows = data_lines(dir / "fit" / "att.csv");
  CHECK(rows.size() == 1 + times.size() + groups.size() + 1);
  CHECK(rows.front() == "scope,label,att_mean,ci_lo,ci_hi,dropped_fraction");
  CHECK(fs::exists(dir / "fit" / "att.svg"));

  r = run("att -f " + (dir / "fit").string() + " -p " + panel + " --no-groups --rate-denominator 1000");
  REQUIRE(r.code == 0);
  CHECK(data_lines(dir / "fit" / "att.csv").size() == 1 + times.size() + 1);
  fs::remove_all(dir);
}

TEST_CASE("single chain fit") {
  const auto dir = scratch("one");
  const auto sim = simulated(dir);
  write(dir / "fit.cfg", "family = vanilla\nk = 1\niterations = 200\nwarmup = 100\nchains = 1\n");
  const auto r = run("fit -p " + (sim / "panel.csv").string() + " -c " + (dir / "fit.cfg").string() + " -o " +
                     (dir / "fit").string());
  CHECK(r.code == 0);
  CHECK(data_lines(dir / "fit" / "predictive.csv").size() > 1);
  fs::remove_all(dir);
}

TEST_CASE("all draws guarded") {
  const auto dir = scratch("guard");
  const auto sim = simulated(dir);
  const std::string panel = (sim / "panel.csv").string();
  write(dir / "fit.cfg",
        "family = vanilla\nk = 1\niterations = 200\nwarmup = 100\nchains = 2\nguard_threshold = -100\n");
  auto r = run("fit -p " + panel + " -c " + (dir / "fit.cfg").string() + " -o " + (dir / "fit").string());
  REQUIRE(r.code == 0);
  CHECK(r.output.find("unstable") != std::string::npos);
  r = run("att -f " + (dir / "fit").string() + " -p " + panel);
  CHECK(r.code == 1);
  CHECK(r.output.find("sentinel") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("scree and smooth") {
  const auto dir = scratch("scree");
  const auto sim = simulated(dir);
  const std::string panel = (sim / "panel.csv").string();
  REQUIRE(run("scree -p " + panel + " -o " + (dir / "scree").string()).code == 0);
  CHECK(data_lines(dir / "scree" / "scree.csv").size() == 1 + 15);
  CHECK(fs::exists(dir / "scree" / "scree.svg"));
  REQUIRE(run("smooth -p " + panel + " -o " + (dir / "smooth.csv").string()).code == 0);
  const auto s = stmc::load_panel(dir / "smooth.csv");
  CHECK(s.smoothed);
  CHECK(s.units() == 29);
  fs::remove_all(dir);
}

TEST_CASE("benchmark with reference methods") {
  const auto dir = scratch("bench");
  write(dir / "b.cfg", "methods = oracle, zero\nreplicates = 2\nseed = 5\nalphas = -5\n");
  const auto r = run("benchmark -c " + (dir / "b.cfg").string() + " -o " + (dir / "out").string() + " -w 1");
  REQUIRE(r.code == 0);
  CHECK(r.output.find("oracle") != std::string::npos);
  CHECK(data_lines(dir / "out" / "replicates.csv").size() == 1 + 4);
  CHECK(data_lines(dir / "out" / "aggregate.csv").size() == 1 + 2);
  write(dir / "bad.cfg", "methods = oracle\nreplicates = 2\n");
  CHECK(run("benchmark -c " + (dir / "bad.cfg").string() + " -o " + (dir / "out2").string()).code == 1);
  fs::remove_all(dir);
}

}  // TEST_SUITE
