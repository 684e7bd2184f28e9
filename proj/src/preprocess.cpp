#include "stmc/preprocess.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace stmc {

namespace {

double quantile7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double cube_plus(double x) { return x > 0.0 ? x * x * x : 0.0; }

}  // namespace

Eigen::MatrixXd natural_spline_basis(const Eigen::VectorXd& times, int df) {
  return natural_spline_basis(times, df, times);
}

Eigen::MatrixXd natural_spline_basis(const Eigen::VectorXd& times, int df, const Eigen::VectorXd& at) {
  if (df < 2) throw std::invalid_argument("spline df must be at least 2");
  std::vector<double> v(times.data(), times.data() + times.size());
  std::vector<double> distinct(v);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (static_cast<int>(distinct.size()) <= df)
    throw PreprocessError("natural spline with df " + std::to_string(df) + " needs more than " + std::to_string(df) +
                          " distinct times");

  const double lo = distinct.front(), hi = distinct.back();
  std::vector<double> knots{lo};
  for (int k = 1; k < df; ++k) knots.push_back(quantile7(v, static_cast<double>(k) / df));
  knots.push_back(hi);
  for (std::size_t k = 1; k < knots.size(); ++k)
    if (!(knots[k] > knots[k - 1])) throw PreprocessError("spline knots coincide; too few distinct times");

  // Work on [0, 1] for conditioning; the spanned space is unchanged.
  const double span = hi - lo;
  for (double& k : knots) k = (k - lo) / span;
  const std::size_t K = knots.size();
  const double last = knots[K - 1];
  auto d = [&](std::size_t k, double x) {
    return (cube_plus(x - knots[k]) - cube_plus(x - last)) / (last - knots[k]);
  };

  Eigen::MatrixXd B(at.size(), df);
  for (Eigen::Index r = 0; r < at.size(); ++r) {
    const double x = (at(r) - lo) / span;
    B(r, 0) = x;
    const double tail = d(K - 2, x);
    for (std::size_t k = 0; k + 2 < K; ++k) B(r, static_cast<Eigen::Index>(k) + 1) = d(k, x) - tail;
  }
  return B;
}

SmoothResult smooth_series(const Eigen::VectorXd& counts, const Eigen::VectorXd& populations, int df,
                           const Eigen::VectorXd& times) {
  const Eigen::Index T = counts.size();
  if (populations.size() != T) throw std::invalid_argument("counts and populations differ in length");
  if ((populations.array() <= 0.0).any()) throw std::invalid_argument("populations must be positive");
  if ((counts.array() < 0.0).any()) throw std::invalid_argument("counts must be non-negative");
  SmoothResult out;
  if (counts.sum() <= 0.0) {
    out.fitted = counts;
    out.all_zero = true;
    return out;
  }
  Eigen::VectorXd t = times;
  if (t.size() == 0) t = Eigen::VectorXd::LinSpaced(T, 1.0, static_cast<double>(T));
  if (t.size() != T) throw std::invalid_argument("times and counts differ in length");

  Eigen::MatrixXd X(T, df + 1);
  X.col(0).setOnes();
  X.rightCols(df) = natural_spline_basis(t, df);
  const Eigen::VectorXd offset = populations.array().log().matrix();

  auto deviance = [&](const Eigen::VectorXd& mu) {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < T; ++i) {
      const double y = counts(i);
      dev += (y > 0.0 ? y * std::log(y / mu(i)) : 0.0) - (y - mu(i));
    }
    return 2.0 * dev;
  };

  // Inverse link floored at machine epsilon, as in R's poisson family, so
  // series with runs of zeros converge to tiny fitted values.
  constexpr double kFloor = std::numeric_limits<double>::epsilon();
  auto inv_link = [&](const Eigen::VectorXd& e) { return e.array().exp().max(kFloor).matrix().eval(); };

  Eigen::VectorXd mu = (counts.array() + 0.1).matrix();
  Eigen::VectorXd eta = mu.array().log().matrix();
  Eigen::VectorXd beta_old;
  double dev_old = deviance(mu);
  for (int it = 1; it <= 100; ++it) {
    const Eigen::VectorXd z = (eta - offset).array() + (counts - mu).array() / mu.array();
    const Eigen::VectorXd sw = mu.array().sqrt().matrix();
    Eigen::VectorXd beta = (sw.asDiagonal() * X).colPivHouseholderQr().solve(sw.cwiseProduct(z));
    eta = X * beta + offset;
    mu = inv_link(eta);
    double dev = deviance(mu);
    // Step halving on a non-finite deviance.
    for (int h = 0; !std::isfinite(dev) && beta_old.size() > 0 && h < 30; ++h) {
      beta = 0.5 * (beta + beta_old);
      eta = X * beta + offset;
      mu = inv_link(eta);
      dev = deviance(mu);
    }
    out.iterations = it;
    if (!std::isfinite(dev)) throw PreprocessError("Poisson spline fit diverged");
    if (std::abs(dev - dev_old) / (std::abs(dev) + 0.1) < 1e-8) {
      out.fitted = mu;
      return out;
    }
    dev_old = dev;
    beta_old = beta;
  }
  throw PreprocessError("Poisson spline fit did not converge in 100 iterations");
}

PanelData smooth_panel(const PanelData& panel, int df, std::vector<std::string>* notices) {
  PanelData out = panel;
  for (Eigen::Index i = 0; i < panel.units(); ++i) {
    const Eigen::Index n = panel.adoption_time(i);
    if (n < df + 1) {
      if (notices) notices->push_back("unit " + panel.unit_ids[i] + " has too few untreated periods; left unsmoothed");
      continue;
    }
    Eigen::VectorXd y = panel.counts.row(i).head(n).transpose();
    Eigen::VectorXd theta = panel.populations.row(i).head(n).transpose();
    Eigen::VectorXd times(n);
    for (Eigen::Index t = 0; t < n; ++t) times(t) = static_cast<double>(panel.time_labels[t]);
    const SmoothResult r = smooth_series(y, theta, df, times);
    if (r.all_zero && notices) notices->push_back("unit " + panel.unit_ids[i] + " has no cases; left unsmoothed");
    out.counts.row(i).head(n) = r.fitted.transpose();
  }
  out.smoothed = true;
  return out;
}

Eigen::VectorXd scree(const Eigen::MatrixXd& m) {
  if (m.size() == 0 || !m.allFinite()) throw std::invalid_argument("scree needs a finite, non-empty matrix");
  const Eigen::MatrixXd c = m.rowwise() - m.colwise().mean();
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(c).singularValues();
  const double total = s.squaredNorm();
  if (!(total > 1e-300)) throw std::invalid_argument("matrix has zero variance");
  return s.array().square().matrix() / total;
}

Eigen::MatrixXd scree_matrix(const PanelData& panel, double rate_denominator) {
  Eigen::MatrixXd r = (panel.counts.array() / panel.populations.array() * rate_denominator).matrix();
  for (Eigen::Index t = 0; t < panel.times(); ++t) {
    double s = 0.0, n = 0.0;
    for (Eigen::Index i = 0; i < panel.units(); ++i)
      if (!panel.treated(i, t)) s += r(i, t), n += 1.0;
    if (n == 0.0) throw std::invalid_argument("period " + std::to_string(panel.time_labels[t]) + " has no untreated unit");
    for (Eigen::Index i = 0; i < panel.units(); ++i)
      if (panel.treated(i, t)) r(i, t) = s / n;
  }
  return r;
}

}  // namespace stmc
