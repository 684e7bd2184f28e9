#include "doctest.h"

#include "stmc/simulate.hpp"

#include <cmath>

using namespace stmc;

TEST_SUITE("simulate") {

TEST_CASE("fixture shape") {
  const Grid pop = fixture_populations();
  CHECK(pop.rows() == 29);
  CHECK(pop.cols() == 15);
  CHECK((pop.array() > 0.0).all());
  // Units are ordered by their first-period population.
  for (Eigen::Index i = 1; i < 29; ++i) CHECK(pop(i - 1, 0) >= pop(i, 0));
  CHECK(fixture_centroids().size() == 29);
}

TEST_CASE("default panel") {
  const auto sim = generate(SimConfig{});
  const auto& p = sim.panel;
  CHECK(p.units() == 29);
  CHECK(p.times() == 15);
  CHECK(p.treated.count() == 6 * 7);
  CHECK(p.treated(5, 8));
  CHECK_FALSE(p.treated(5, 7));
  CHECK_FALSE(p.treated(6, 14));
  CHECK(p.counts == sim.truth.y0);
  CHECK(p.unit_ids.front() == "u01");
  CHECK(p.time_labels.back() == 15);
  CHECK(sim.truth.U.rows() == 3);
  CHECK(sim.truth.V.cols() == 15);
}

TEST_CASE("same seed, same panel") {
  SimConfig c;
  c.replicate_seed = 42;
  const auto a = generate(c), b = generate(c);
  CHECK(a.panel.counts == b.panel.counts);
  CHECK(a.truth.U == b.truth.U);
  c.replicate_seed = 43;
  CHECK_FALSE(generate(c).truth.U == a.truth.U);
}

TEST_CASE("intercept scales the mean by its exponential") {
  SimConfig c;
  c.replicate_seed = 7;
  c.alpha = -5.0;
  const auto a = generate(c);
  c.alpha = -7.0;
  const auto b = generate(c);
  const Grid ratio = a.truth.lambda.cwiseQuotient(b.truth.lambda);
  CHECK((ratio.array() - std::exp(2.0)).abs().maxCoeff() < 1e-9);
}

TEST_CASE("degenerate factors reduce to the offset") {
  SimConfig c;
  c.tau2 = 1e-14;
  c.fe_variance = 0.0;
  c.alpha = -6.0;
  const auto s = generate(c);
  const Grid expected = fixture_populations() * std::exp(-6.0);
  CHECK(s.truth.lambda.isApprox(expected, 1e-6));
}

TEST_CASE("counts track their means") {
  double y = 0.0, lam = 0.0;
  for (std::uint64_t r = 0; r < 20; ++r) {
    SimConfig c;
    c.replicate_seed = r;
    const auto s = generate(c);
    y += s.truth.y0.sum();
    lam += s.truth.lambda.sum();
  }
  CHECK(std::abs(y - lam) < 4.0 * std::sqrt(lam));
}

TEST_CASE("temporal factors are persistent") {
  double acf = 0.0;
  int n = 0;
  for (std::uint64_t r = 0; r < 30; ++r) {
    SimConfig c;
    c.replicate_seed = 100 + r;
    const auto s = generate(c);
    for (Eigen::Index k = 0; k < s.truth.V.rows(); ++k) {
      const Eigen::VectorXd v = s.truth.V.row(k).transpose();
      const Eigen::VectorXd d = v.array() - v.mean();
      acf += d.head(14).dot(d.tail(14)) / d.squaredNorm();
      ++n;
    }
  }
  CHECK(acf / n > 0.5);
}

TEST_CASE("treatment effect adds cases only on treated cells") {
  SimConfig c;
  c.replicate_seed = 3;
  c.effect_rate = 50.0;
  const auto s = generate(c);
  const Grid diff = s.panel.counts - s.truth.y0;
  for (Eigen::Index i = 0; i < 29; ++i)
    for (Eigen::Index t = 0; t < 15; ++t) {
      if (s.panel.treated(i, t))
        CHECK(diff(i, t) >= 0.0);
      else
        CHECK(diff(i, t) == 0.0);
    }
  CHECK(diff.sum() > 0.0);
}

TEST_CASE("config validation") {
  SimConfig c;
  c.rho_S = 1.0;
  CHECK_THROWS_AS(generate(c), std::invalid_argument);
  c = SimConfig{};
  c.N = 10;
  CHECK_THROWS_AS(generate(c), std::invalid_argument);
  c = SimConfig{};
  c.t_start = 0;
  CHECK_THROWS_AS(generate(c), std::invalid_argument);
  c = SimConfig{};
  c.N = 4;
  c.T = 3;
  c.n_treated = 1;
  c.t_start = 2;
  c.adjacency = path_adjacency(4);
  c.populations = Grid::Constant(4, 3, 1e5);
  const auto s = generate(c);
  CHECK(s.panel.units() == 4);
  CHECK(s.panel.group_of_unit[0] == "all");
}

TEST_CASE("percent bias") {
  SimTruth t;
  t.y0 = Grid(2, 2);
  t.y0 << 10, 20, 30, 40;
  t.lambda = Grid::Constant(2, 2, 20.0);
  Mask observed = Mask::Constant(2, 2, true);
  observed(0, 1) = observed(1, 1) = false;
  CHECK(masked_cells(observed) == std::vector<std::pair<Eigen::Index, Eigen::Index>>{{0, 1}, {1, 1}});
  // |22 - 20| / 20 = 10%, |30 - 40| / 20 = 50%
  CHECK(percent_bias(Eigen::Vector2d(22, 30), t, observed) == doctest::Approx(30.0));
  CHECK(percent_bias(Eigen::Vector2d(20, 40), t, observed) == 0.0);
  CHECK_THROWS(percent_bias(Eigen::VectorXd::Zero(3), t, observed));
  CHECK_THROWS(percent_bias(Eigen::VectorXd::Zero(0), t, Mask::Constant(2, 2, true)));
}

}  // TEST_SUITE
