#include "doctest.h"
#include "helpers.hpp"

#include "stmc/diagnostics.hpp"
#include "stmc/sampler.hpp"

#include <algorithm>
#include <random>

using namespace stmc;

namespace {

// Correlated bivariate normal with means (1, -2), sds (1, 3), correlation 0.6.
class Normal2 final : public LogDensityModel {
 public:
  Normal2() {
    Eigen::Matrix2d s;
    s << 1.0, 0.6 * 3.0, 0.6 * 3.0, 9.0;
    prec_ = s.inverse();
  }
  Eigen::Index dimension() const override { return 2; }
  double log_density_gradient(const Eigen::VectorXd& q, Eigen::VectorXd& g) const override {
    const Eigen::Vector2d d = q - Eigen::Vector2d(1.0, -2.0);
    g = -prec_ * d;
    return -0.5 * d.dot(prec_ * d);
  }

 private:
  Eigen::Matrix2d prec_;
};

// log of a Gamma(3, 2) variable: density exp(3x - 2 e^x).
class LogGamma final : public LogDensityModel {
 public:
  Eigen::Index dimension() const override { return 1; }
  double log_density_gradient(const Eigen::VectorXd& q, Eigen::VectorXd& g) const override {
    g.resize(1);
    g(0) = 3.0 - 2.0 * std::exp(q(0));
    return 3.0 * q(0) - 2.0 * std::exp(q(0));
  }
};

class StdNormal final : public LogDensityModel {
 public:
  Eigen::Index dimension() const override { return 1; }
  double log_density_gradient(const Eigen::VectorXd& q, Eigen::VectorXd& g) const override {
    g = -q;
    return -0.5 * q.squaredNorm();
  }
};

SamplerConfig config(int iterations, int warmup, int chains, std::uint64_t seed) {
  SamplerConfig c;
  c.iterations = iterations;
  c.warmup = warmup;
  c.chains = chains;
  c.seed = seed;
  return c;
}

auto zero_init(Eigen::Index d) {
  return [d](int, std::mt19937_64&) { return Eigen::VectorXd::Zero(d).eval(); };
}

Eigen::MatrixXd pooled(const DrawSet& d) {
  Eigen::MatrixXd all(d.kept() * d.num_chains(), d.chains.front().cols());
  for (int c = 0; c < d.num_chains(); ++c) all.middleRows(c * d.kept(), d.kept()) = d.chains[c];
  return all;
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("config validation") {
  CHECK_NOTHROW(config(20, 10, 1, 1).validate());
  CHECK_THROWS_AS(config(10, 10, 1, 1).validate(), std::invalid_argument);
  CHECK_THROWS_AS(config(20, 10, 0, 1).validate(), std::invalid_argument);
  CHECK_THROWS_AS(config(12, 10, 1, 1).validate(), std::invalid_argument);
  auto c = config(20, 10, 1, 1);
  c.target_accept = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("correlated normal moments") {
  const Normal2 target;
  const auto d = run_chains(target, zero_init(2), config(3000, 1000, 4, 7));
  const Eigen::MatrixXd x = pooled(d);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centred = x.rowwise() - mean;
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(x.rows() - 1);
  CHECK(mean(0) == doctest::Approx(1.0).epsilon(0.1));
  CHECK(mean(1) == doctest::Approx(-2.0).epsilon(0.15));
  CHECK(cov(0, 0) == doctest::Approx(1.0).epsilon(0.1));
  CHECK(cov(1, 1) == doctest::Approx(9.0).epsilon(0.1));
  CHECK(cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1)) == doctest::Approx(0.6).epsilon(0.1));
  for (Eigen::Index j = 0; j < 2; ++j) CHECK(rhat(d.parameter(j)).value < 1.01);
  CHECK(d.divergences() == 0);
  for (const auto& s : d.stats) {
    double acc = 0.0;
    for (double a : s.accept_stat) acc += a;
    CHECK(acc / static_cast<double>(s.accept_stat.size()) > 0.6);
  }
}

TEST_CASE("log-gamma target") {
  const LogGamma target;
  const auto d = run_chains(target, zero_init(1), config(3000, 1000, 2, 3));
  const Eigen::ArrayXd y = pooled(d).col(0).array().exp();
  CHECK(y.mean() == doctest::Approx(1.5).epsilon(0.05));
  const double var = (y - y.mean()).square().sum() / static_cast<double>(y.size() - 1);
  CHECK(var == doctest::Approx(0.75).epsilon(0.12));
}

TEST_CASE("draws pass a Kolmogorov-Smirnov check against N(0,1)") {
  const StdNormal target;
  const auto d = run_chains(target, zero_init(1), config(2000, 500, 2, 17));
  // Thin to reduce autocorrelation before the test.
  std::vector<double> x;
  for (int c = 0; c < d.num_chains(); ++c)
    for (Eigen::Index m = 0; m < d.chains[c].rows(); m += 3) x.push_back(d.chains[c](m, 0));
  std::sort(x.begin(), x.end());
  double D = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double F = 0.5 * std::erfc(-x[i] / std::sqrt(2.0));
    D = std::max({D, std::abs(F - static_cast<double>(i) / n), std::abs(F - static_cast<double>(i + 1) / n)});
  }
  // 1% critical value.
  CHECK(D < 1.63 / std::sqrt(n));
}

TEST_CASE("fixed seed is reproducible and chains differ") {
  const Normal2 target;
  auto cfg = config(300, 150, 2, 99);
  const auto a = run_chains(target, zero_init(2), cfg);
  cfg.threads = 1;
  const auto b = run_chains(target, zero_init(2), cfg);
  CHECK(a.chains[0] == b.chains[0]);
  CHECK(a.chains[1] == b.chains[1]);
  CHECK_FALSE(a.chains[0] == a.chains[1]);
  cfg.seed = 100;
  CHECK_FALSE(run_chains(target, zero_init(2), cfg).chains[0] == a.chains[0]);
}

TEST_CASE("more iterations extend the same chain") {
  const Normal2 target;
  const auto short_run = run_chains(target, zero_init(2), config(300, 150, 1, 5));
  const auto long_run = run_chains(target, zero_init(2), config(400, 150, 1, 5));
  CHECK(long_run.kept() == 250);
  CHECK(long_run.chains[0].topRows(150) == short_run.chains[0]);
}

TEST_CASE("posterior predictive") {
  auto data = testing::toy_panel(3, 4, 2, 1, 2);
  const Model model(ModelSpec{}, mask_treated(data));
  const auto& L = model.layout();
  std::mt19937_64 rng(1);
  auto s = init_state(model.spec(), model.panel(), rng);
  s.U.setZero();
  s.V.setZero();
  s.alpha = std::log(0.01);

  DrawSet d;
  auto cfg = config(20, 10, 1, 4);
  const int draws = 4000;

  SUBCASE("large dispersion approaches Poisson") {
    s.log_phi_nb = 25.0;
    d.chains.assign(1, s.pack(L).transpose().replicate(draws, 1));
    posterior_predictive(d, model, cfg);
    REQUIRE(d.masked_cells.size() == 2);
    CHECK(d.masked_cells[0] == Cell{0, 2});
    for (std::size_t c = 0; c < 2; ++c) {
      const double mu = std::exp(mean_log_rate(s, model.panel(), 0, 2 + static_cast<Eigen::Index>(c)));
      const Eigen::VectorXd x = d.predictive[0].col(static_cast<Eigen::Index>(c));
      const double m = x.mean();
      const double v = (x.array() - m).square().sum() / (draws - 1.0);
      CHECK(std::abs(m - mu) < 4.0 * std::sqrt(mu / draws));
      CHECK(v / m == doctest::Approx(1.0).epsilon(0.1));
    }
    CHECK(d.guarded_fraction() == 0.0);
  }
  SUBCASE("overdispersion inflates the variance") {
    s.log_phi_nb = std::log(2.0);
    d.chains.assign(1, s.pack(L).transpose().replicate(draws, 1));
    posterior_predictive(d, model, cfg);
    const double mu = std::exp(mean_log_rate(s, model.panel(), 0, 2));
    const Eigen::VectorXd x = d.predictive[0].col(0);
    const double m = x.mean();
    const double v = (x.array() - m).square().sum() / (draws - 1.0);
    CHECK(v == doctest::Approx(mu + mu * mu / 2.0).epsilon(0.15));
  }
  SUBCASE("guard writes sentinel rows") {
    Eigen::MatrixXd chain = s.pack(L).transpose().replicate(10, 1);
    chain.block(0, L.alpha, 3, 1).setConstant(25.0);
    d.chains.assign(1, chain);
    posterior_predictive(d, model, cfg);
    CHECK(d.guarded_fraction() == doctest::Approx(0.3));
    CHECK((d.predictive[0].topRows(3).array() == -1.0).all());
    CHECK((d.predictive[0].bottomRows(7).array() >= 0.0).all());
    const Eigen::VectorXd pm = d.predictive_mean();
    CHECK((pm.array() >= 0.0).all());
    chain.col(L.alpha).setConstant(25.0);
    d.chains.assign(1, chain);
    posterior_predictive(d, model, cfg);
    CHECK(d.guarded_fraction() == 1.0);
    CHECK(std::isnan(d.predictive_mean()(0)));
  }
  SUBCASE("no held-out cells") {
    const Model plain(ModelSpec{}, mask_treated(testing::toy_panel(3, 4, 2)));
    d.chains.assign(1, s.pack(plain.layout()).transpose().replicate(5, 1));
    posterior_predictive(d, plain, cfg);
    CHECK(d.masked_cells.empty());
    CHECK(d.predictive[0].cols() == 0);
  }
}

TEST_CASE("sampling a small model") {
  const auto panel = mask_treated(testing::toy_panel(5, 6, 8, 1, 4, 0.02));
  ModelSpec spec;
  spec.K = 1;
  const Model model(spec, panel);
  const auto d = sample_model(model, config(400, 200, 2, 21));
  CHECK(d.num_chains() == 2);
  CHECK(d.kept() == 200);
  CHECK(d.parameter_names == model.layout().names());
  CHECK(d.masked_cells.size() == 2);
  CHECK(d.predictive[0].rows() == 200);
  const Eigen::MatrixXd alpha = d.parameter(model.layout().alpha);
  CHECK(alpha.mean() == doctest::Approx(std::log(0.02)).epsilon(0.1));
}

TEST_CASE("split rhat and ess") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  Eigen::MatrixXd iid(1000, 4);
  for (Eigen::Index j = 0; j < iid.size(); ++j) iid.data()[j] = z(rng);

  SUBCASE("independent chains") {
    CHECK(rhat(iid).value < 1.01);
    CHECK(rhat(iid, false).value < 1.01);
    CHECK(ess_bulk(iid).value > 3000.0);
    CHECK(ess_basic(iid).value > 3000.0);
  }
  SUBCASE("shifted chain is detected") {
    Eigen::MatrixXd x = iid;
    x.col(0).array() += 3.0;
    CHECK(rhat(x).value > 1.1);
    CHECK(rhat(x, false).value > 1.1);
  }
  SUBCASE("trend inside one chain is detected by splitting") {
    Eigen::MatrixXd x = iid.leftCols(1);
    for (Eigen::Index m = 0; m < 1000; ++m) x(m, 0) += m < 500 ? -2.0 : 2.0;
    CHECK(rhat(x, false).value > 1.1);
  }
  SUBCASE("autocorrelation lowers ess") {
    Eigen::MatrixXd ar(1000, 4);
    for (Eigen::Index c = 0; c < 4; ++c) {
      double prev = 0.0;
      for (Eigen::Index m = 0; m < 1000; ++m) ar(m, c) = prev = 0.9 * prev + z(rng);
    }
    // Theoretical ess per draw is (1 - 0.9) / (1 + 0.9).
    CHECK(ess_bulk(ar).value == doctest::Approx(4000.0 * 0.1 / 1.9).epsilon(0.35));
  }
  SUBCASE("constant draws are flagged") {
    const Eigen::MatrixXd c = Eigen::MatrixXd::Constant(100, 2, 4.0);
    CHECK(rhat(c).flagged);
    CHECK(ess_bulk(c).flagged);
  }
}

}  // TEST_SUITE
