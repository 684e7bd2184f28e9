#include "stmc/distributions.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <cmath>
#include <numbers>

namespace stmc {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;
}

NegBinEval negbin_log_pmf(double y, NegBinParams p) {
  const double mu = p.mu;
  const double phi = p.phi;
  const double log_phi_mu = std::log(phi + mu);
  const double value = std::lgamma(y + phi) - std::lgamma(phi) - std::lgamma(y + 1.0) - phi * std::log1p(mu / phi) +
                       (y > 0.0 ? y * (std::log(mu) - log_phi_mu) : 0.0);
  const double frac = mu / (phi + mu);
  const double d_log_mu = y - (y + phi) * frac;
  const double d_phi = boost::math::digamma(y + phi) - boost::math::digamma(phi) - std::log1p(mu / phi) + 1.0 -
                       (y + phi) / (phi + mu);
  return {value, d_log_mu, phi * d_phi};
}

NormalEval normal_log_density(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  const double value = -kHalfLog2Pi - std::log(sd) - 0.5 * z * z;
  const double d_x = -z / sd;
  return {value, d_x, -d_x, (z * z - 1.0) / sd};
}

GammaEval gamma_log_density(double x, double shape, double rate) {
  const double value = shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
  return {value, (shape - 1.0) / x - rate};
}

IcarEval icar_log_density(std::span<const double> u, const Adjacency& adj, double tau, std::span<double> grad_u) {
  double ss = 0.0;
  for (auto [a, b] : adj.edges()) {
    const double d = u[a] - u[b];
    ss += d * d;
    if (!grad_u.empty()) {
      grad_u[a] -= tau * d;
      grad_u[b] += tau * d;
    }
  }
  const double half_rank = 0.5 * static_cast<double>(adj.laplacian_rank());
  return {half_rank * std::log(tau) - 0.5 * tau * ss, half_rank - 0.5 * tau * ss};
}

Ar1Eval ar1_log_density(std::span<const double> v, double a, double b, double sigma, std::span<double> grad_v) {
  const std::size_t n = v.size();
  const bool want_v = !grad_v.empty();
  const auto anchor = normal_log_density(v[0], 0.0, kAr1AnchorSd);
  Ar1Eval out{anchor.value, 0.0, 0.0, 0.0};
  if (want_v) grad_v[0] += anchor.d_x;
  const double inv_var = 1.0 / (sigma * sigma);
  double ss = 0.0;
  for (std::size_t t = 1; t < n; ++t) {
    const double r = v[t] - a - b * v[t - 1];
    ss += r * r;
    const double g = r * inv_var;  // -d/dmean
    out.d_a += g;
    out.d_b += g * v[t - 1];
    if (want_v) {
      grad_v[t] -= g;
      grad_v[t - 1] += g * b;
    }
  }
  const double m = static_cast<double>(n - 1);
  out.value += -m * (kHalfLog2Pi + std::log(sigma)) - 0.5 * ss * inv_var;
  out.d_log_sigma = -m + ss * inv_var;
  return out;
}

FusedLaplaceEval fused_laplace_log_density(std::span<const double> x, const Adjacency& adj, double lambda_fuse,
                                           double lambda_sparse, std::span<double> grad_x) {
  const bool want_x = !grad_x.empty();
  auto sgn = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
  double fuse = 0.0;
  for (auto [a, b] : adj.edges()) {
    const double d = x[a] - x[b];
    fuse += std::abs(d);
    if (want_x) {
      grad_x[a] -= lambda_fuse * sgn(d);
      grad_x[b] += lambda_fuse * sgn(d);
    }
  }
  double sparse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sparse += std::abs(x[i]);
    if (want_x) grad_x[i] -= lambda_sparse * sgn(x[i]);
  }
  return {-lambda_fuse * fuse - lambda_sparse * sparse, -lambda_fuse * fuse, -lambda_sparse * sparse};
}

Eigen::VectorXd ShrinkageState::eta() const {
  Eigen::VectorXd e(delta.size());
  double running = 1.0;
  for (Eigen::Index k = 0; k < delta.size(); ++k) {
    running *= delta(k);
    e(k) = running;
  }
  return e;
}

ShrinkageEval shrinkage_ar1_log_density(
    const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>& v_rows,
    double a, double b, const ShrinkageState& state, std::span<double> grad_v, std::span<double> grad_log_phi,
    std::span<double> grad_log_delta) {
  const auto K = v_rows.rows();
  const auto T = v_rows.cols();
  const Eigen::VectorXd eta = state.eta();
  ShrinkageEval out{0.0, 0.0, 0.0};
  Eigen::VectorXd d_log_eta = Eigen::VectorXd::Zero(K);

  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index t = 0; t < T; ++t) {
      const double prev = t > 0 ? v_rows(k, t - 1) : 0.0;
      const double prec = state.phi_local(k, t) * eta(k);
      const double r = v_rows(k, t) - a - b * prev;
      out.value += 0.5 * std::log(prec) - kHalfLog2Pi - 0.5 * prec * r * r;
      const double g = prec * r;
      out.d_a += g;
      out.d_b += g * prev;
      if (!grad_v.empty()) {
        grad_v[k * T + t] -= g;
        if (t > 0) grad_v[k * T + t - 1] += g * b;
      }
      const double d_log_prec = 0.5 - 0.5 * prec * r * r;
      d_log_eta(k) += d_log_prec;
      if (!grad_log_phi.empty()) grad_log_phi[k * T + t] += d_log_prec;

      const double phi = state.phi_local(k, t);
      const auto gp = gamma_log_density(phi, 0.5 * state.nu, 0.5 * state.nu);
      out.value += gp.value;
      if (!grad_log_phi.empty()) grad_log_phi[k * T + t] += gp.d_x * phi;
    }
  }
  double tail = 0.0;
  for (Eigen::Index l = K - 1; l >= 0; --l) {
    tail += d_log_eta(l);
    const double shape = l == 0 ? state.a1 : state.a2;
    const auto gd = gamma_log_density(state.delta(l), shape, 1.0);
    out.value += gd.value;
    if (!grad_log_delta.empty()) grad_log_delta[l] += tail + gd.d_x * state.delta(l);
  }
  return out;
}

}  // namespace stmc
