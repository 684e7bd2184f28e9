#include "doctest.h"
#include "helpers.hpp"

#include "stmc/counterfactual.hpp"

#include <filesystem>
#include <fstream>

using namespace stmc;

namespace {

// Two treated units (0 and 1, groups east and west) from time index 2 of 4.
PanelData treated_panel() {
  auto p = testing::toy_panel(4, 4, 5, 2, 2);
  p.populations.setConstant(1000.0);
  p.counts.setConstant(10.0);
  return p;
}

// One chain whose predictive draw m is `base + m` at every held-out cell.
DrawSet draws_for(const PanelData& p, int n, double base) {
  DrawSet d;
  const auto m = mask_treated(p);
  for (Eigen::Index i = 0; i < p.units(); ++i)
    for (Eigen::Index t = 0; t < p.times(); ++t)
      if (!m.observed(i, t)) d.masked_cells.push_back({i, t});
  Eigen::MatrixXd pred(n, static_cast<Eigen::Index>(d.masked_cells.size()));
  for (int r = 0; r < n; ++r) pred.row(r).setConstant(base + r);
  d.predictive.push_back(pred);
  d.guarded.push_back(std::vector<bool>(n, false));
  d.chains.push_back(Eigen::MatrixXd::Zero(n, 1));
  return d;
}

}  // namespace

TEST_SUITE("counterfactual") {

TEST_CASE("summaries") {
  const auto s = summarize({1, 2, 3, 4, 5});
  CHECK(s.mean == 3.0);
  CHECK(s.lo == doctest::Approx(1.1));
  CHECK(s.hi == doctest::Approx(4.9));
  CHECK_THROWS(summarize({}));
}

TEST_CASE("per-time ATT on the rate scale") {
  const auto p = treated_panel();
  const auto d = draws_for(p, 3, 8.0);  // draws 8, 9, 10
  const auto r = att_per_time(p, d);
  REQUIRE(r.per_time.size() == 2);
  CHECK(r.per_time[0].time == 2002);
  // (10 - 8) / 1000 * 1e5 = 200, then 100, then 0.
  CHECK(r.per_time[0].draws == std::vector<double>{200.0, 100.0, 0.0});
  CHECK(r.per_time[1].summary.mean == doctest::Approx(100.0));
  CHECK(r.overall.summary.mean == doctest::Approx(100.0));
  CHECK(r.dropped_fraction == 0.0);
  CHECK_FALSE(r.unstable());

  AttOptions per_capita;
  per_capita.rate_denominator = 1.0;
  CHECK(att_per_time(p, d, per_capita).overall.summary.mean == doctest::Approx(0.001));
}

TEST_CASE("unequal populations average per-unit rates") {
  auto p = treated_panel();
  p.populations.row(1).setConstant(4000.0);
  const auto d = draws_for(p, 1, 6.0);
  // unit 0: 4/1000, unit 1: 4/4000; mean 0.0025 per capita.
  CHECK(att_per_time(p, d).per_time[0].draws[0] == doctest::Approx(250.0));
}

TEST_CASE("overall is the unweighted mean over times") {
  auto p = treated_panel();
  p.treated(0, 1) = true;  // unit 0 adopts one period earlier
  const auto d = draws_for(p, 1, 10.0);
  auto y1 = p.counts;
  y1(0, 1) = 30.0;  // ATT at 2001 is 2000; later times 0
  AttOptions o;
  o.substitute_y1 = &y1;
  const auto r = att_per_time(p, d, o);
  REQUIRE(r.per_time.size() == 3);
  CHECK(r.per_time[0].draws[0] == doctest::Approx(2000.0));
  CHECK(r.overall.draws[0] == doctest::Approx(2000.0 / 3.0));
}

TEST_CASE("groups") {
  auto p = treated_panel();
  p.group_of_unit = {"east", "west", "north", "north"};
  const auto d = draws_for(p, 2, 9.0);
  Grid y1 = p.counts;
  y1(1, 2) = y1(1, 3) = 13.0;
  AttOptions o;
  o.substitute_y1 = &y1;
  const auto r = compute_att(p, d, o);
  REQUIRE(r.per_group.size() == 2);
  CHECK(r.per_group[0].label == "east");
  CHECK(r.per_group[1].label == "west");
  CHECK(r.per_group[0].draws[0] == doctest::Approx(100.0));
  CHECK(r.per_group[1].draws[0] == doctest::Approx(400.0));
  CHECK(r.notices.size() == 1);
  CHECK(r.notices[0].find("north") != std::string::npos);
}

TEST_CASE("sentinels are dropped") {
  const auto p = treated_panel();
  auto d = draws_for(p, 4, 8.0);
  d.predictive[0].row(3).setConstant(-1.0);
  d.guarded[0][3] = true;
  const auto r = att_per_time(p, d);
  CHECK(r.per_time[0].draws.size() == 3);
  CHECK(r.dropped_fraction == doctest::Approx(0.25));
  CHECK(r.unstable());
  for (int m = 0; m < 4; ++m) d.guarded[0][m] = true;
  CHECK_THROWS_AS(att_per_time(p, d), AttError);
}

TEST_CASE("errors") {
  const auto p = treated_panel();
  auto d = draws_for(p, 2, 8.0);
  d.masked_cells.pop_back();
  d.predictive[0] = d.predictive[0].leftCols(d.masked_cells.size()).eval();
  CHECK_THROWS_AS(att_per_time(p, d), AttError);
  const auto untreated = testing::toy_panel(3, 3, 1);
  CHECK_THROWS_AS(att_per_time(untreated, draws_for(untreated, 2, 1.0)), AttError);
  AttOptions bad;
  bad.rate_denominator = 0.0;
  CHECK_THROWS_AS(att_per_time(p, draws_for(p, 2, 8.0), bad), std::invalid_argument);
}

TEST_CASE("pre-treatment diagnostic") {
  auto data = treated_panel();
  const Model model(ModelSpec{}, mask_treated(data));
  ParameterState s;
  s.alpha = std::log(0.008);
  s.gamma = Eigen::VectorXd::Zero(4);
  s.psi = Eigen::VectorXd::Zero(4);
  s.U = FactorMatrix::Zero(1, 4);
  s.V = FactorMatrix::Zero(1, 4);
  s.beta.resize(0);
  DrawSet d;
  d.chains.push_back(s.pack(model.layout()).transpose().replicate(3, 1));
  const auto pre = pretreatment_att(model, d);
  REQUIRE(pre.size() == 2);
  CHECK(pre[0].time == 2000);
  // (10 - 8) / 1000 per capita.
  CHECK(pre[1].summary.mean == doctest::Approx(0.002));

  const auto post = att_per_time(data, draws_for(data, 3, 8.0));
  const auto series = att_time_series(pre, post);
  REQUIRE(series.size() == 4);
  CHECK(series[0].summary.mean == doctest::Approx(200.0));
  CHECK(series[3].time == 2003);

  const auto path = std::filesystem::temp_directory_path() / "stmc_pre_test.csv";
  write_pretreatment_csv(path, pre, "test");
  const auto back = read_pretreatment_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].draws.size() == 3);
  CHECK(back[1].summary.mean == doctest::Approx(0.002));
  std::filesystem::remove(path);
}

TEST_CASE("csv rows") {
  const auto p = treated_panel();
  const auto r = compute_att(p, draws_for(p, 3, 8.0));
  const auto path = std::filesystem::temp_directory_path() / "stmc_att_test.csv";
  write_att_csv(path, r, "header line");
  std::ifstream in(path);
  std::string line;
  int data_rows = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.rfind("#", 0) == 0) continue;
    if (!header_seen) {
      CHECK(line == "scope,label,att_mean,ci_lo,ci_hi,dropped_fraction");
      header_seen = true;
      continue;
    }
    ++data_rows;
  }
  // two times, two groups, one overall
  CHECK(data_rows == 5);
  std::filesystem::remove(path);
}

}  // TEST_SUITE
