#pragma once

#include "stmc/distributions.hpp"
#include "stmc/graphs.hpp"
#include "stmc/panel.hpp"

#include <Eigen/Dense>

#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stmc {

/// Prior families on the factor loadings U_k and factors V_k.
enum class Family {
  Vanilla,             // U: N(0,1)       V: N(0,1)
  Space,               // U: ICAR         V: N(0,1)
  SpaceTimeIcar,       // U: ICAR         V: temporal ICAR
  SpaceTimeAr,         // U: ICAR         V: AR(1)
  SpaceTimeLasso,      // U: fused Laplace V: fused Laplace
  SpaceTimeShrinkage,  // U: ICAR         V: AR(1) with multiplicative gamma shrinkage
};

inline constexpr Family kAllFamilies[] = {Family::Vanilla,      Family::Space,          Family::SpaceTimeIcar,
                                          Family::SpaceTimeAr,  Family::SpaceTimeLasso, Family::SpaceTimeShrinkage};

std::string_view family_name(Family f);
/// Accepts the names produced by family_name. Throws std::invalid_argument.
Family parse_family(std::string_view name);

struct ModelSpec {
  Family family = Family::Vanilla;
  int K = 1;
  std::optional<Adjacency> spatial_adjacency;
  // Multiplicative gamma process; a2 > 1.
  double nu = 3.0;
  double a1 = 2.0;
  double a2 = 3.0;
  // Gamma(shape, rate) prior shared by every ICAR precision and Laplace rate.
  double gamma_shape = 1.0;
  double gamma_rate = 0.01;
  // Sd of the normal prior on each factor row mean (all families but Vanilla).
  double soft_sd = 0.1;
  // Sd of normal priors on unit and time intercepts; 0 means flat.
  double fe_sd = 10.0;
  // Sd of normal priors on covariate coefficients; 0 means flat.
  double beta_sd = 0.0;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate(Eigen::Index units, Eigen::Index times) const;
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Offsets of each parameter block inside the packed unconstrained vector.
/// Absent blocks have offset -1.
struct ParameterLayout {
  Eigen::Index n = 0, t = 0, k = 0, p = 0;
  Eigen::Index alpha = 0, gamma = 0, psi = 0, U = 0, V = 0, beta = 0, log_phi_nb = 0;
  Eigen::Index log_tau_s = -1, log_tau_t = -1;
  Eigen::Index ar_a = -1, ar_b = -1, log_sigma = -1;
  Eigen::Index log_lambda = -1;  // four entries: U fuse, U sparse, V fuse, V sparse
  Eigen::Index log_phi_local = -1, log_delta = -1;
  Eigen::Index dim = 0;

  static ParameterLayout make(Family family, Eigen::Index n, Eigen::Index t, Eigen::Index k, Eigen::Index p);
  std::vector<std::string> names() const;
};

using FactorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One MCMC state. Positive scalars are held on the log scale.
struct ParameterState {
  double alpha = 0.0;
  Eigen::VectorXd gamma, psi;
  FactorMatrix U, V;  // K x N, K x T
  Eigen::VectorXd beta;
  double log_phi_nb = 0.0;
  double log_tau_s = 0.0, log_tau_t = 0.0;
  double ar_a = 0.0, ar_b = 0.0, log_sigma = 0.0;
  Eigen::Vector4d log_lambda = Eigen::Vector4d::Zero();
  FactorMatrix log_phi_local;  // K x T
  Eigen::VectorXd log_delta;   // K

  Eigen::VectorXd pack(const ParameterLayout& layout) const;
  static ParameterState unpack(const Eigen::VectorXd& q, const ParameterLayout& layout);
  bool operator==(const ParameterState&) const = default;
};

/// Additive pieces of the log posterior, reported for diagnostics.
struct LogPosteriorTerms {
  double likelihood = 0.0;
  double dispersion_prior = 0.0;
  double fixed_effect_prior = 0.0;
  double factor_prior = 0.0;
  double hyper_prior = 0.0;
  double soft_constraint = 0.0;
  double jacobian = 0.0;

  double total() const {
    return likelihood + dispersion_prior + fixed_effect_prior + factor_prior + hyper_prior + soft_constraint +
           jacobian;
  }
};

/// Target density for the sampler: log density and gradient in an
/// unconstrained parameterisation. Implementations must be safe to evaluate
/// concurrently.
class LogDensityModel {
 public:
  virtual ~LogDensityModel() = default;
  virtual Eigen::Index dimension() const = 0;
  /// Writes the gradient into `grad` (resized as needed) and returns the log
  /// density. Non-finite values are returned, not thrown.
  virtual double log_density_gradient(const Eigen::VectorXd& q, Eigen::VectorXd& grad) const = 0;
};

/// Joint posterior of one model family over a masked panel.
class Model final : public LogDensityModel {
 public:
  Model(ModelSpec spec, MaskedPanel panel);

  const ModelSpec& spec() const { return spec_; }
  const MaskedPanel& panel() const { return panel_; }
  const ParameterLayout& layout() const { return layout_; }

  Eigen::Index dimension() const override { return layout_.dim; }
  double log_density_gradient(const Eigen::VectorXd& q, Eigen::VectorXd& grad) const override;
  double log_density(const Eigen::VectorXd& q) const;
  LogPosteriorTerms terms(const Eigen::VectorXd& q) const;

  /// Full N x T grid of linear predictors, including held-out cells.
  Grid linear_predictor(const Eigen::VectorXd& q) const;

 private:
  double evaluate(const Eigen::VectorXd& q, Eigen::VectorXd* grad, LogPosteriorTerms* terms) const;

  ModelSpec spec_;
  MaskedPanel panel_;
  ParameterLayout layout_;
  Adjacency temporal_;
  Grid log_offset_;
  Grid y_;        // observed counts, 0 at held-out cells
  Grid weight_;   // 1 observed, 0 held out
  std::vector<std::pair<double, double>> y_table_;  // distinct observed count -> multiplicity
  double n_obs_ = 0.0;
  double lgamma_y1_ = 0.0;
};

/// Sampling coordinates for a Model. The unit and time intercepts are split
/// into their means and orthonormal sum-zero contrasts, and the global
/// intercept absorbs both means. The map is linear with unit Jacobian, so the
/// density is unchanged; it only removes the intercept/mean ridge that a
/// diagonal metric cannot follow. Block offsets match the model layout: the
/// gamma block holds N-1 contrasts then the mean, likewise psi.
class CenteredTarget final : public LogDensityModel {
 public:
  explicit CenteredTarget(const Model& model);

  Eigen::Index dimension() const override { return model_.dimension(); }
  double log_density_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const override;

  Eigen::VectorXd to_model(const Eigen::VectorXd& z) const;
  Eigen::VectorXd from_model(const Eigen::VectorXd& q) const;

 private:
  const Model& model_;
  Eigen::MatrixXd basis_n_, basis_t_;  // orthonormal, columns sum to zero
};

/// Orthonormal basis (n x n-1) of the vectors summing to zero.
Eigen::MatrixXd sum_zero_basis(Eigen::Index n);

/// alpha + gamma_i + psi_t + U_i'V_t + X_it'beta + log(theta_it)
double mean_log_rate(const ParameterState& state, const MaskedPanel& panel, Eigen::Index i, Eigen::Index t);

/// Checked evaluation; throws ModelError naming the non-finite term.
double log_posterior(const ParameterState& state, const MaskedPanel& panel, const ModelSpec& spec);

/// Checked gradient in packed order; throws ModelError naming the parameter.
Eigen::VectorXd grad_log_posterior(const ParameterState& state, const MaskedPanel& panel, const ModelSpec& spec);

/// Moment-matched intercept, zero fixed effects, small random factors, and
/// positive scalars at their prior medians, jittered per chain.
ParameterState init_state(const ModelSpec& spec, const MaskedPanel& panel, std::mt19937_64& rng);

}  // namespace stmc
