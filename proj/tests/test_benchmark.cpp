#include "doctest.h"

#include "stmc/benchmark.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace stmc;

namespace {

BenchmarkConfig cheap_config() {
  BenchmarkConfig c;
  c.methods = {BenchmarkMethod::parse("oracle"), BenchmarkMethod::parse("zero"), BenchmarkMethod::parse("als:2")};
  c.replicates = 3;
  c.seed = 77;
  c.workers = 1;
  return c;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  return d;
}

}  // namespace

TEST_SUITE("benchmark") {

TEST_CASE("method strings") {
  const auto m = BenchmarkMethod::parse("space_time_ar:3");
  CHECK(m.kind == MethodKind::Bayes);
  CHECK(m.family == Family::SpaceTimeAr);
  CHECK(m.K == 3);
  CHECK(m.method_name() == "bayes");
  CHECK(m.label() == "space_time_ar:3");
  CHECK(BenchmarkMethod::parse("als:7").label() == "als:7");
  CHECK(BenchmarkMethod::parse("svt").label() == "svt");
  CHECK(BenchmarkMethod::parse("oracle").family_name().empty());
  CHECK_THROWS_AS(BenchmarkMethod::parse("vanilla"), std::invalid_argument);
  CHECK_THROWS_AS(BenchmarkMethod::parse("svt:2"), std::invalid_argument);
  CHECK_THROWS_AS(BenchmarkMethod::parse("als:0"), std::invalid_argument);
  CHECK_THROWS_AS(BenchmarkMethod::parse("mystery"), std::invalid_argument);
}

TEST_CASE("grid order") {
  BenchmarkGrid g;
  g.smoothed = {false, true};
  const auto cells = grid_cells(g);
  REQUIRE(cells.size() == 4);
  CHECK(cells[0].alpha == -5.0);
  CHECK_FALSE(cells[0].smoothed);
  CHECK(cells[1].alpha == -7.0);
  CHECK(cells[2].smoothed);
}

TEST_CASE("reference methods") {
  const auto cfg = cheap_config();
  const auto recs = run_benchmark(cfg);
  CHECK(recs.size() == 2 * 3 * 3);
  for (const auto& r : recs) {
    CAPTURE(r.method);
    CHECK(r.error.empty());
    CHECK(std::isfinite(r.bias_pct));
    if (r.method == "oracle") {
      // E|Y - lambda| / lambda is below one standard deviation, sqrt(lambda)/lambda.
      CHECK(r.bias_pct > 0.0);
      CHECK(r.bias_pct < (r.alpha == -5.0 ? 25.0 : 60.0));
    }
    if (r.method == "zero") CHECK(r.bias_pct == doctest::Approx(100.0).epsilon(0.35));
  }
  CHECK(std::is_sorted(recs.begin(), recs.end(), record_less));
  // Same seed, same numbers.
  const auto again = run_benchmark(cfg);
  for (std::size_t i = 0; i < recs.size(); ++i) CHECK(again[i].bias_pct == recs[i].bias_pct);
}

TEST_CASE("oracle estimate is the truth") {
  SimConfig sc;
  sc.replicate_seed = 9;
  const auto sim = generate(sc);
  const auto est = estimate_counterfactual(BenchmarkMethod::parse("oracle"), sim, sim.panel, cheap_config(), 1);
  const auto cells = masked_cells(mask_treated(sim.panel).observed);
  REQUIRE(static_cast<std::size_t>(est.size()) == cells.size());
  CHECK(est(0) == sim.truth.lambda(cells[0].first, cells[0].second));
}

TEST_CASE("aggregate") {
  std::vector<ReplicateRecord> recs;
  for (int r = 0; r < 4; ++r) recs.push_back({"oracle", "", 0, -5.0, 0.1, false, r, 10.0 * (r + 1), {}});
  recs.push_back({"oracle", "", 0, -7.0, 0.1, false, 0, std::nan(""), "failed"});
  const auto rows = aggregate(recs, BenchmarkGrid{});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].cells[0].n == 4);
  CHECK(rows[0].cells[0].mean == doctest::Approx(25.0));
  CHECK(rows[0].cells[0].q25 == doctest::Approx(17.5));
  CHECK(rows[0].cells[0].q75 == doctest::Approx(32.5));
  CHECK(rows[0].cells[1].n == 0);
  CHECK(std::isnan(rows[0].cells[1].mean));
}

TEST_CASE("records round-trip") {
  const auto recs = run_benchmark(cheap_config());
  const auto path = std::filesystem::temp_directory_path() / "stmc_records_test.csv";
  write_records_csv(path, recs, "test");
  const auto back = read_records_csv(path);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].same_job(recs[i]));
    CHECK(back[i].bias_pct == doctest::Approx(recs[i].bias_pct).epsilon(1e-12));
  }
  std::filesystem::remove(path);
}

TEST_CASE("interrupted sweep resumes to the same result") {
  const auto cfg = cheap_config();
  const auto full_dir = fresh_dir("stmc_bench_full");
  const auto full = run_benchmark_checkpointed(cfg, full_dir, "test");

  // Keep the header and the first few records, and cut the next one mid-line.
  const auto part_dir = fresh_dir("stmc_bench_part");
  std::filesystem::create_directories(part_dir);
  std::ifstream in(full_dir / "replicates.partial.csv");
  std::ostringstream kept;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    if (n < 6) kept << line << '\n';
    else if (n == 6) kept << line.substr(0, line.size() / 2);
    ++n;
  }
  std::ofstream(part_dir / "replicates.partial.csv") << kept.str();
  const auto resumed = run_benchmark_checkpointed(cfg, part_dir, "test");
  REQUIRE(resumed.size() == full.size());
  for (std::size_t i = 0; i < full.size(); ++i) {
    CHECK(resumed[i].same_job(full[i]));
    CHECK(resumed[i].bias_pct == doctest::Approx(full[i].bias_pct).epsilon(1e-12));
  }
  CHECK(std::filesystem::exists(part_dir / "aggregate.csv"));
  CHECK(std::filesystem::exists(part_dir / "replicates.csv"));
  std::filesystem::remove_all(full_dir);
  std::filesystem::remove_all(part_dir);
}

}  // TEST_SUITE
