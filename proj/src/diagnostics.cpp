#include "stmc/diagnostics.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace stmc {

namespace {

bool degenerate(const Eigen::MatrixXd& d) {
  if (!d.allFinite()) return true;
  return d.maxCoeff() - d.minCoeff() <= 1e-12 * std::max(1.0, d.cwiseAbs().maxCoeff());
}

Eigen::MatrixXd split(const Eigen::MatrixXd& d) {
  const Eigen::Index half = d.rows() / 2;
  Eigen::MatrixXd out(half, 2 * d.cols());
  for (Eigen::Index c = 0; c < d.cols(); ++c) {
    out.col(2 * c) = d.col(c).head(half);
    out.col(2 * c + 1) = d.col(c).tail(half);
  }
  return out;
}

/// Normal scores of pooled fractional ranks (average rank for ties).
Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& d) {
  const Eigen::Index S = d.size();
  std::vector<Eigen::Index> idx(S);
  std::iota(idx.begin(), idx.end(), 0);
  const double* v = d.data();
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
  Eigen::MatrixXd z(d.rows(), d.cols());
  double* out = z.data();
  const boost::math::normal_distribution<double> normal;
  for (Eigen::Index a = 0; a < S;) {
    Eigen::Index b = a;
    while (b + 1 < S && v[idx[b + 1]] == v[idx[a]]) ++b;
    const double r = 0.5 * static_cast<double>(a + b) + 1.0;
    const double zz = boost::math::quantile(normal, (r - 0.375) / (static_cast<double>(S) + 0.25));
    for (Eigen::Index k = a; k <= b; ++k) out[idx[k]] = zz;
    a = b + 1;
  }
  return z;
}

double rhat_core(const Eigen::MatrixXd& d) {
  const double n = static_cast<double>(d.rows());
  const Eigen::VectorXd means = d.colwise().mean().transpose();
  double w = 0.0;
  for (Eigen::Index c = 0; c < d.cols(); ++c) w += (d.col(c).array() - means(c)).square().sum() / (n - 1.0);
  w /= static_cast<double>(d.cols());
  const double b = n * (means.array() - means.mean()).square().sum() / static_cast<double>(d.cols() - 1);
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

/// Autocovariance of one chain at every lag, via direct summation.
Eigen::VectorXd autocovariance(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  const Eigen::VectorXd c = x.array() - x.mean();
  Eigen::VectorXd acov(n);
  for (Eigen::Index lag = 0; lag < n; ++lag)
    acov(lag) = c.head(n - lag).dot(c.tail(n - lag)) / static_cast<double>(n);
  return acov;
}

double ess_core(const Eigen::MatrixXd& d) {
  const Eigen::Index chains = d.cols();
  const Eigen::Index n = d.rows();
  const double nd = static_cast<double>(n);
  Eigen::MatrixXd acov(n, chains);
  Eigen::VectorXd means(chains), vars(chains);
  for (Eigen::Index c = 0; c < chains; ++c) {
    acov.col(c) = autocovariance(d.col(c));
    means(c) = d.col(c).mean();
    vars(c) = acov(0, c) * nd / (nd - 1.0);
  }
  const double w = vars.mean();
  double var_plus = w * (nd - 1.0) / nd;
  if (chains > 1) var_plus += (means.array() - means.mean()).square().sum() / static_cast<double>(chains - 1);

  auto rho = [&](Eigen::Index t) { return 1.0 - (w - acov.row(t).mean()) / var_plus; };
  Eigen::VectorXd r = Eigen::VectorXd::Zero(n + 1);
  r(0) = 1.0;
  double even = 1.0;
  double odd = rho(1);
  r(1) = odd;
  // Geyer initial positive sequence over pairs.
  Eigen::Index s = 1;
  while (s < n - 4 && even + odd > 0.0) {
    even = rho(s + 1);
    odd = rho(s + 2);
    if (even + odd >= 0.0) {
      r(s + 1) = even;
      r(s + 2) = odd;
    }
    s += 2;
  }
  const Eigen::Index max_s = s;
  if (even > 0.0) r(max_s + 1) = even;
  // Initial monotone sequence.
  for (s = 1; s + 3 <= max_s; s += 2) {
    if (r(s + 1) + r(s + 2) > r(s - 1) + r(s)) {
      r(s + 1) = (r(s - 1) + r(s)) / 2.0;
      r(s + 2) = r(s + 1);
    }
  }
  double tau = -1.0 + 2.0 * r.head(max_s).sum() + r(max_s + 1);
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(chains) * nd));
  return static_cast<double>(chains) * nd / tau;
}

void check_shape(const Eigen::MatrixXd& d) {
  if (d.cols() < 1 || d.rows() < 4) throw std::invalid_argument("diagnostics need at least 4 draws per chain");
}

}  // namespace

Diagnostic rhat(const Eigen::MatrixXd& draws, bool rank_normalized) {
  check_shape(draws);
  if (degenerate(draws)) return {1.0, true};
  const Eigen::MatrixXd s = split(draws);
  if (!rank_normalized) return {rhat_core(s), false};
  const double bulk = rhat_core(rank_normalize(s));
  const double median = [&] {
    std::vector<double> v(s.data(), s.data() + s.size());
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    double hi = v[v.size() / 2];
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + v.size() / 2);
    return 0.5 * (lo + hi);
  }();
  const Eigen::MatrixXd folded = (s.array() - median).abs().matrix();
  const double tail = degenerate(folded) ? 1.0 : rhat_core(rank_normalize(folded));
  return {std::max(bulk, tail), false};
}

Diagnostic ess_bulk(const Eigen::MatrixXd& draws) {
  check_shape(draws);
  if (degenerate(draws)) return {static_cast<double>(draws.size()), true};
  return {ess_core(rank_normalize(split(draws))), false};
}

Diagnostic ess_basic(const Eigen::MatrixXd& draws) {
  check_shape(draws);
  if (degenerate(draws)) return {static_cast<double>(draws.size()), true};
  return {ess_core(split(draws)), false};
}

}  // namespace stmc
