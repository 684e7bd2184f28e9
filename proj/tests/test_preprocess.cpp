#include "doctest.h"
#include "helpers.hpp"

#include "stmc/preprocess.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <random>

using namespace stmc;

namespace {

double type7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(h);
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Natural cubic splines built independently: the truncated-power cubic basis
// on the same knots, restricted to s'' = 0 at both boundary knots.
Eigen::MatrixXd oracle_design(const Eigen::VectorXd& t, int df) {
  std::vector<double> v(t.data(), t.data() + t.size());
  const double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
  std::vector<double> interior;
  for (int k = 1; k < df; ++k) interior.push_back(type7(v, static_cast<double>(k) / df));
  const Eigen::Index p = 4 + static_cast<Eigen::Index>(interior.size());
  // Shifted to lo: cubes of calendar years swamp the solve otherwise.
  for (auto& k : interior) k -= lo;
  auto row = [&](double x) {
    x -= lo;
    Eigen::RowVectorXd r(p);
    r(0) = 1.0;
    r(1) = x;
    r(2) = x * x;
    r(3) = x * x * x;
    for (std::size_t j = 0; j < interior.size(); ++j) r(4 + j) = std::pow(std::max(0.0, x - interior[j]), 3);
    return r;
  };
  auto second = [&](double x) {
    x -= lo;
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(p);
    r(2) = 2.0;
    r(3) = 6.0 * x;
    for (std::size_t j = 0; j < interior.size(); ++j) r(4 + j) = 6.0 * std::max(0.0, x - interior[j]);
    return r;
  };
  Eigen::MatrixXd C(2, p);
  C.row(0) = second(lo);
  C.row(1) = second(hi);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(C);
  const Eigen::MatrixXd null = lu.kernel();
  Eigen::MatrixXd X(t.size(), p);
  for (Eigen::Index i = 0; i < t.size(); ++i) X.row(i) = row(t(i));
  return X * null;
}

Eigen::VectorXd project_onto(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return X * X.colPivHouseholderQr().solve(y);
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& B) {
  Eigen::MatrixXd X(B.rows(), B.cols() + 1);
  X.col(0).setOnes();
  X.rightCols(B.cols()) = B;
  return X;
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("natural spline basis spans the natural cubic splines") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  for (int df : {2, 3, 5}) {
    for (const Eigen::VectorXd& t : {Eigen::VectorXd(Eigen::VectorXd::LinSpaced(15, 1, 15)),
                                     Eigen::VectorXd((Eigen::VectorXd(9) << 2000, 2001, 2003, 2004, 2005, 2008, 2009,
                                                      2011, 2015).finished())}) {
      CAPTURE(df);
      const Eigen::MatrixXd B = natural_spline_basis(t, df);
      CHECK(B.rows() == t.size());
      CHECK(B.cols() == df);
      const Eigen::MatrixXd ours = with_intercept(B);
      const Eigen::MatrixXd ref = oracle_design(t, df);
      CHECK(ref.cols() == df + 1);
      for (int rep = 0; rep < 3; ++rep) {
        Eigen::VectorXd y(t.size());
        for (auto& v : y) v = z(rng);
        CHECK((project_onto(ours, y) - project_onto(ref, y)).norm() < 1e-8);
      }
    }
  }
}

TEST_CASE("basis is linear beyond the boundary knots") {
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(10, 0, 9);
  const Eigen::VectorXd at = (Eigen::VectorXd(6) << -3, -2, -1, 10, 11, 12).finished();
  const Eigen::MatrixXd B = natural_spline_basis(t, 4, at);
  for (Eigen::Index c = 0; c < 4; ++c) {
    CHECK(B(0, c) - 2 * B(1, c) + B(2, c) == doctest::Approx(0.0).scale(1.0));
    CHECK(B(3, c) - 2 * B(4, c) + B(5, c) == doctest::Approx(0.0).scale(1.0));
  }
}

TEST_CASE("basis needs enough distinct times") {
  CHECK_THROWS_AS(natural_spline_basis(Eigen::VectorXd::LinSpaced(5, 1, 5), 5), PreprocessError);
  CHECK_THROWS_AS(natural_spline_basis(Eigen::VectorXd::LinSpaced(5, 1, 5), 1), std::invalid_argument);
}

TEST_CASE("Poisson smoothing") {
  const Eigen::VectorXd pop = Eigen::VectorXd::LinSpaced(15, 10000, 12000);
  SUBCASE("score equations hold at the fit") {
    std::mt19937_64 rng(4);
    Eigen::VectorXd y(15);
    for (Eigen::Index t = 0; t < 15; ++t)
      y(t) = std::poisson_distribution<int>(pop(t) * 0.002 * (1.0 + 0.5 * std::sin(t / 3.0)))(rng);
    const auto r = smooth_series(y, pop);
    const Eigen::MatrixXd X = with_intercept(natural_spline_basis(Eigen::VectorXd::LinSpaced(15, 1, 15), 5));
    CHECK(r.fitted.sum() == doctest::Approx(y.sum()).epsilon(1e-8));
    CHECK((X.transpose() * (y - r.fitted)).cwiseAbs().maxCoeff() < 1e-5 * y.sum());
    CHECK(r.iterations > 0);
  }
  SUBCASE("a rate that is itself a spline is reproduced") {
    const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(15, 1, 15);
    const Eigen::VectorXd mu = (pop.array() * (-5.0 + 0.05 * t.array()).exp()).matrix();
    // Expected counts as data: the MLE is the truth itself.
    const auto r = smooth_series(mu, pop);
    CHECK((r.fitted - mu).cwiseAbs().maxCoeff() < 1e-6 * mu.maxCoeff());
  }
  SUBCASE("leading zeros converge") {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(15);
    y.tail(4) << 1, 0, 2, 1;
    const auto r = smooth_series(y, pop);
    CHECK(r.fitted.allFinite());
    CHECK(r.fitted.sum() == doctest::Approx(4.0).epsilon(1e-6));
  }
  SUBCASE("all zero is returned as is") {
    const auto r = smooth_series(Eigen::VectorXd::Zero(15), pop);
    CHECK(r.all_zero);
    CHECK(r.fitted.isZero());
  }
  SUBCASE("bad input") {
    CHECK_THROWS_AS(smooth_series(Eigen::VectorXd::Ones(15), Eigen::VectorXd::Ones(14)), std::invalid_argument);
    CHECK_THROWS_AS(smooth_series(-Eigen::VectorXd::Ones(15), pop), std::invalid_argument);
  }
}

TEST_CASE("panel smoothing touches untreated cells only") {
  auto p = testing::toy_panel(4, 10, 3, 2, 7, 0.02);
  p.treated.row(1).setConstant(false);
  p.treated.row(1).tail(6).setConstant(true);  // four untreated periods: too few
  std::vector<std::string> notices;
  const auto s = smooth_panel(p, 5, &notices);
  CHECK(s.smoothed);
  CHECK(s.counts.row(0).tail(3) == p.counts.row(0).tail(3));
  CHECK(s.counts.row(1) == p.counts.row(1));
  REQUIRE(notices.size() == 1);
  CHECK(notices[0].find("u2") != std::string::npos);
  CHECK(s.counts.row(0).head(7).sum() == doctest::Approx(p.counts.row(0).head(7).sum()).epsilon(1e-8));
  CHECK(s.counts.row(3).sum() == doctest::Approx(p.counts.row(3).sum()).epsilon(1e-8));
  CHECK_FALSE(s.counts.row(3) == p.counts.row(3));
}

TEST_CASE("scree") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z;
  Eigen::MatrixXd m(20, 6);
  for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = z(rng);
  m.col(1) += 3.0 * m.col(0);
  const Eigen::VectorXd s = scree(m);
  CHECK(s.sum() == doctest::Approx(1.0));
  for (Eigen::Index j = 1; j < s.size(); ++j) CHECK(s(j) <= s(j - 1));
  const Eigen::MatrixXd c = m.rowwise() - m.colwise().mean();
  Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c.transpose() * c).eigenvalues().reverse();
  ev /= ev.sum();
  CHECK((s - ev).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS(scree(Eigen::MatrixXd::Ones(3, 3)));
}

TEST_CASE("scree matrix fills treated cells with the untreated period mean") {
  auto p = testing::toy_panel(3, 3, 1, 1, 1);
  p.populations.setConstant(1e5);
  p.counts << 1, 50, 60, 2, 4, 6, 3, 8, 10;
  const Eigen::MatrixXd r = scree_matrix(p);
  CHECK(r(0, 0) == 1.0);
  CHECK(r(0, 1) == doctest::Approx(6.0));
  CHECK(r(0, 2) == doctest::Approx(8.0));
  p.treated.setConstant(true);
  CHECK_THROWS(scree_matrix(p));
}

}  // TEST_SUITE
