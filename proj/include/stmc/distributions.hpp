#pragma once

// Log-density kernels with hand-derived gradients.
//
// Gradient outputs passed as spans are accumulated into (+=), so several
// kernels can write into one packed gradient. An empty span skips that
// gradient. Positive scalars report derivatives with respect to their log.

#include "stmc/graphs.hpp"

#include <Eigen/Dense>

#include <span>

namespace stmc {

/// NB2 negative binomial: variance mu + mu^2 / phi.
struct NegBinParams {
  double mu;
  double phi;
};

struct NegBinEval {
  double value;
  double d_log_mu;
  double d_log_phi;
};

NegBinEval negbin_log_pmf(double y, NegBinParams p);

struct NormalEval {
  double value;
  double d_x;
  double d_mean;
  double d_sd;
};

NormalEval normal_log_density(double x, double mean, double sd);

struct GammaEval {
  double value;
  double d_x;
};

/// Shape-rate parameterisation.
GammaEval gamma_log_density(double x, double shape, double rate);

struct IcarEval {
  double value;
  double d_log_tau;
};

/// (rank/2) log tau - (tau/2) sum over edges of (u_i - u_j)^2.
IcarEval icar_log_density(std::span<const double> u, const Adjacency& adj, double tau, std::span<double> grad_u);

/// Sd of the diffuse normal placed on the first element of an AR(1) series.
inline constexpr double kAr1AnchorSd = 10.0;

struct Ar1Eval {
  double value;
  double d_a;
  double d_b;
  double d_log_sigma;
};

/// v_1 ~ N(0, kAr1AnchorSd), v_t ~ N(a + b v_{t-1}, sigma) for t >= 2.
Ar1Eval ar1_log_density(std::span<const double> v, double a, double b, double sigma, std::span<double> grad_v);

struct FusedLaplaceEval {
  double value;
  double d_log_lambda_fuse;
  double d_log_lambda_sparse;
};

/// -lambda_fuse sum_edges |x_j - x_j'| - lambda_sparse sum_i |x_i|, normalising
/// constants dropped. Subgradient of |.| at 0 is taken as 0.
FusedLaplaceEval fused_laplace_log_density(std::span<const double> x, const Adjacency& adj, double lambda_fuse,
                                           double lambda_sparse, std::span<double> grad_x);

/// Multiplicative gamma process state for K factor rows over T times.
struct ShrinkageState {
  Eigen::MatrixXd phi_local;  // K x T local precisions
  Eigen::VectorXd delta;      // K
  double nu = 3.0;
  double a1 = 2.0;
  double a2 = 3.0;

  /// Running products eta_k = prod_{l <= k} delta_l.
  Eigen::VectorXd eta() const;
};

struct ShrinkageEval {
  double value;
  double d_a;
  double d_b;
};

/// AR(1) rows with innovation precision phi_kt * eta_k, plus the gamma priors
/// on phi and delta. Each row starts from a zero pre-sample value, so the
/// first element is N(a, 1 / (phi_k1 eta_k)).
///
/// `v_rows` is K x T, row-major. grad_v has K*T entries, grad_log_phi K*T
/// (row-major), grad_log_delta K.
ShrinkageEval shrinkage_ar1_log_density(const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                                          Eigen::RowMajor>>& v_rows,
                                        double a, double b, const ShrinkageState& state, std::span<double> grad_v,
                                        std::span<double> grad_log_phi, std::span<double> grad_log_delta);

}  // namespace stmc
