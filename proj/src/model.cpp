#include "stmc/model.hpp"

#include "stmc/kernels.hpp"

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include <cmath>
#include <map>
#include <span>

namespace stmc {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double gamma_median(double shape, double rate) {
  return boost::math::quantile(boost::math::gamma_distribution<>(shape, 1.0 / rate), 0.5);
}

}  // namespace

std::string_view family_name(Family f) {
  switch (f) {
    case Family::Vanilla: return "vanilla";
    case Family::Space: return "space";
    case Family::SpaceTimeIcar: return "space_time_icar";
    case Family::SpaceTimeAr: return "space_time_ar";
    case Family::SpaceTimeLasso: return "space_time_lasso";
    case Family::SpaceTimeShrinkage: return "space_time_shrinkage";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  for (Family f : kAllFamilies)
    if (family_name(f) == name) return f;
  throw std::invalid_argument("unknown model family '" + std::string(name) +
                              "' (expected vanilla, space, space_time_icar, space_time_ar, space_time_lasso or "
                              "space_time_shrinkage)");
}

void ModelSpec::validate(Eigen::Index units, Eigen::Index times) const {
  if (K < 1) throw std::invalid_argument("rank K must be positive");
  if (K > std::min(units, times)) throw std::invalid_argument("rank K exceeds min(N, T)");
  if (family != Family::Vanilla) {
    if (!spatial_adjacency) throw std::invalid_argument(std::string(family_name(family)) + " needs a spatial adjacency");
    if (spatial_adjacency->size() != units)
      throw std::invalid_argument("spatial adjacency size does not match the number of units");
  }
  if (!(a2 > 1.0)) throw std::invalid_argument("shrinkage hyperparameter a2 must exceed 1");
  if (!(nu > 0.0) || !(a1 > 0.0)) throw std::invalid_argument("shrinkage hyperparameters must be positive");
  if (!(gamma_shape > 0.0) || !(gamma_rate > 0.0)) throw std::invalid_argument("gamma prior must be proper");
  if (!(soft_sd > 0.0)) throw std::invalid_argument("soft_sd must be positive");
  if (fe_sd < 0.0 || beta_sd < 0.0) throw std::invalid_argument("prior sds must be non-negative");
  if (times < 2) throw std::invalid_argument("at least two time points are required");
}

ParameterLayout ParameterLayout::make(Family family, Eigen::Index n, Eigen::Index t, Eigen::Index k, Eigen::Index p) {
  ParameterLayout L;
  L.n = n;
  L.t = t;
  L.k = k;
  L.p = p;
  Eigen::Index at = 0;
  L.alpha = at++;
  L.gamma = at;
  at += n;
  L.psi = at;
  at += t;
  L.U = at;
  at += k * n;
  L.V = at;
  at += k * t;
  L.beta = at;
  at += p;
  L.log_phi_nb = at++;
  switch (family) {
    case Family::Vanilla: break;
    case Family::Space: L.log_tau_s = at++; break;
    case Family::SpaceTimeIcar:
      L.log_tau_s = at++;
      L.log_tau_t = at++;
      break;
    case Family::SpaceTimeAr:
      L.log_tau_s = at++;
      L.ar_a = at++;
      L.ar_b = at++;
      L.log_sigma = at++;
      break;
    case Family::SpaceTimeLasso:
      L.log_lambda = at;
      at += 4;
      break;
    case Family::SpaceTimeShrinkage:
      L.log_tau_s = at++;
      L.ar_a = at++;
      L.ar_b = at++;
      L.log_phi_local = at;
      at += k * t;
      L.log_delta = at;
      at += k;
      break;
  }
  L.dim = at;
  return L;
}

std::vector<std::string> ParameterLayout::names() const {
  std::vector<std::string> out(static_cast<std::size_t>(dim));
  auto idx = [](Eigen::Index i) { return std::to_string(i + 1); };
  out[alpha] = "alpha";
  for (Eigen::Index i = 0; i < n; ++i) out[gamma + i] = "gamma[" + idx(i) + "]";
  for (Eigen::Index s = 0; s < t; ++s) out[psi + s] = "psi[" + idx(s) + "]";
  for (Eigen::Index f = 0; f < k; ++f) {
    for (Eigen::Index i = 0; i < n; ++i) out[U + f * n + i] = "U[" + idx(f) + "," + idx(i) + "]";
    for (Eigen::Index s = 0; s < t; ++s) out[V + f * t + s] = "V[" + idx(f) + "," + idx(s) + "]";
  }
  for (Eigen::Index j = 0; j < p; ++j) out[beta + j] = "beta[" + idx(j) + "]";
  out[log_phi_nb] = "log_phi_nb";
  if (log_tau_s >= 0) out[log_tau_s] = "log_tau_s";
  if (log_tau_t >= 0) out[log_tau_t] = "log_tau_t";
  if (ar_a >= 0) out[ar_a] = "ar_a";
  if (ar_b >= 0) out[ar_b] = "ar_b";
  if (log_sigma >= 0) out[log_sigma] = "log_sigma";
  if (log_lambda >= 0) {
    out[log_lambda + 0] = "log_lambda_u_fuse";
    out[log_lambda + 1] = "log_lambda_u_sparse";
    out[log_lambda + 2] = "log_lambda_v_fuse";
    out[log_lambda + 3] = "log_lambda_v_sparse";
  }
  if (log_phi_local >= 0)
    for (Eigen::Index f = 0; f < k; ++f)
      for (Eigen::Index s = 0; s < t; ++s) out[log_phi_local + f * t + s] = "log_phi_local[" + idx(f) + "," + idx(s) + "]";
  if (log_delta >= 0)
    for (Eigen::Index f = 0; f < k; ++f) out[log_delta + f] = "log_delta[" + idx(f) + "]";
  return out;
}

Eigen::VectorXd ParameterState::pack(const ParameterLayout& L) const {
  Eigen::VectorXd q(L.dim);
  q(L.alpha) = alpha;
  q.segment(L.gamma, L.n) = gamma;
  q.segment(L.psi, L.t) = psi;
  q.segment(L.U, L.k * L.n) = Eigen::Map<const Eigen::VectorXd>(U.data(), L.k * L.n);
  q.segment(L.V, L.k * L.t) = Eigen::Map<const Eigen::VectorXd>(V.data(), L.k * L.t);
  if (L.p > 0) q.segment(L.beta, L.p) = beta;
  q(L.log_phi_nb) = log_phi_nb;
  if (L.log_tau_s >= 0) q(L.log_tau_s) = log_tau_s;
  if (L.log_tau_t >= 0) q(L.log_tau_t) = log_tau_t;
  if (L.ar_a >= 0) q(L.ar_a) = ar_a;
  if (L.ar_b >= 0) q(L.ar_b) = ar_b;
  if (L.log_sigma >= 0) q(L.log_sigma) = log_sigma;
  if (L.log_lambda >= 0) q.segment<4>(L.log_lambda) = log_lambda;
  if (L.log_phi_local >= 0)
    q.segment(L.log_phi_local, L.k * L.t) = Eigen::Map<const Eigen::VectorXd>(log_phi_local.data(), L.k * L.t);
  if (L.log_delta >= 0) q.segment(L.log_delta, L.k) = log_delta;
  return q;
}

ParameterState ParameterState::unpack(const Eigen::VectorXd& q, const ParameterLayout& L) {
  if (q.size() != L.dim) throw std::invalid_argument("packed state has the wrong dimension");
  ParameterState s;
  s.alpha = q(L.alpha);
  s.gamma = q.segment(L.gamma, L.n);
  s.psi = q.segment(L.psi, L.t);
  s.U = Eigen::Map<const FactorMatrix>(q.data() + L.U, L.k, L.n);
  s.V = Eigen::Map<const FactorMatrix>(q.data() + L.V, L.k, L.t);
  s.beta = q.segment(L.beta, L.p);
  s.log_phi_nb = q(L.log_phi_nb);
  if (L.log_tau_s >= 0) s.log_tau_s = q(L.log_tau_s);
  if (L.log_tau_t >= 0) s.log_tau_t = q(L.log_tau_t);
  if (L.ar_a >= 0) s.ar_a = q(L.ar_a);
  if (L.ar_b >= 0) s.ar_b = q(L.ar_b);
  if (L.log_sigma >= 0) s.log_sigma = q(L.log_sigma);
  if (L.log_lambda >= 0) s.log_lambda = q.segment<4>(L.log_lambda);
  if (L.log_phi_local >= 0) s.log_phi_local = Eigen::Map<const FactorMatrix>(q.data() + L.log_phi_local, L.k, L.t);
  if (L.log_delta >= 0) s.log_delta = q.segment(L.log_delta, L.k);
  return s;
}

Model::Model(ModelSpec spec, MaskedPanel panel)
    : spec_(std::move(spec)), panel_(std::move(panel)), temporal_(path_adjacency(std::max<Eigen::Index>(panel_.times(), 2))) {
  const auto N = panel_.units();
  const auto T = panel_.times();
  spec_.validate(N, T);
  layout_ = ParameterLayout::make(spec_.family, N, T, spec_.K, panel_.data.n_covariates());
  log_offset_ = panel_.data.populations.array().log().matrix();
  weight_ = panel_.observed.cast<double>().matrix();
  y_ = panel_.data.counts.cwiseProduct(weight_);

  std::map<double, double> table;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index s = 0; s < T; ++s)
      if (panel_.observed(i, s)) {
        table[y_(i, s)] += 1.0;
        lgamma_y1_ += std::lgamma(y_(i, s) + 1.0);
        n_obs_ += 1.0;
      }
  y_table_.assign(table.begin(), table.end());
}

Grid Model::linear_predictor(const Eigen::VectorXd& q) const {
  const auto& L = layout_;
  const auto N = L.n, T = L.t;
  Grid offset = log_offset_;
  for (Eigen::Index j = 0; j < L.p; ++j) offset += q(L.beta + j) * panel_.data.covariates[j];
  Eigen::VectorXd row_base = q.segment(L.gamma, N).array() + q(L.alpha);
  Grid eta(N, T);
  kernels::linear_predictor(row_base.data(), q.data() + L.psi, offset.data(), q.data() + L.U, q.data() + L.V,
                            N, T, L.k, eta.data());
  return eta;
}

double Model::log_density_gradient(const Eigen::VectorXd& q, Eigen::VectorXd& grad) const {
  grad.setZero(layout_.dim);
  return evaluate(q, &grad, nullptr);
}

double Model::log_density(const Eigen::VectorXd& q) const { return evaluate(q, nullptr, nullptr); }

LogPosteriorTerms Model::terms(const Eigen::VectorXd& q) const {
  LogPosteriorTerms t;
  evaluate(q, nullptr, &t);
  return t;
}

double Model::evaluate(const Eigen::VectorXd& q, Eigen::VectorXd* grad_out, LogPosteriorTerms* terms_out) const {
  const auto& L = layout_;
  const auto N = L.n, T = L.t, K = L.k;
  const bool want_grad = grad_out != nullptr;
  Eigen::VectorXd scratch;
  if (!want_grad) scratch.setZero(L.dim);
  Eigen::VectorXd& g = want_grad ? *grad_out : scratch;
  LogPosteriorTerms tm;

  // Likelihood over observed cells.
  const double log_phi = q(L.log_phi_nb);
  const double phi = std::exp(log_phi);
  const Grid eta = linear_predictor(q);
  Grid resid(N, T);
  const auto sums = kernels::negbin_cells(eta.data(), y_.data(), weight_.data(), N * T, phi, resid.data());
  double lg = 0.0, dg = 0.0;
  for (auto [y, m] : y_table_) {
    lg += m * std::lgamma(y + phi);
    dg += m * boost::math::digamma(y + phi);
  }
  tm.likelihood = sums.value + n_obs_ * (phi * log_phi - std::lgamma(phi)) + lg - lgamma_y1_;
  const double d_phi = sums.d_phi + n_obs_ * (log_phi + 1.0 - boost::math::digamma(phi)) + dg;
  g(L.log_phi_nb) += phi * d_phi;

  Eigen::VectorXd d_row = Eigen::VectorXd::Zero(N);
  kernels::low_rank_backprop(resid.data(), q.data() + L.U, q.data() + L.V, N, T, K, d_row.data(), g.data() + L.psi,
                             g.data() + L.U, g.data() + L.V);
  g.segment(L.gamma, N) += d_row;
  g(L.alpha) += d_row.sum();
  for (Eigen::Index j = 0; j < L.p; ++j) g(L.beta + j) += resid.cwiseProduct(panel_.data.covariates[j]).sum();

  // log(dispersion) ~ N(0, 1)
  tm.dispersion_prior = -kHalfLog2Pi - 0.5 * log_phi * log_phi;
  g(L.log_phi_nb) -= log_phi;

  if (spec_.fe_sd > 0.0) {
    const double s2 = spec_.fe_sd * spec_.fe_sd;
    const auto gam = q.segment(L.gamma, N);
    const auto psi = q.segment(L.psi, T);
    tm.fixed_effect_prior += -static_cast<double>(N + T) * (kHalfLog2Pi + std::log(spec_.fe_sd)) -
                             0.5 * (gam.squaredNorm() + psi.squaredNorm()) / s2;
    g.segment(L.gamma, N) -= gam / s2;
    g.segment(L.psi, T) -= psi / s2;
  }
  if (spec_.beta_sd > 0.0 && L.p > 0) {
    const double s2 = spec_.beta_sd * spec_.beta_sd;
    const auto b = q.segment(L.beta, L.p);
    tm.fixed_effect_prior += -static_cast<double>(L.p) * (kHalfLog2Pi + std::log(spec_.beta_sd)) -
                             0.5 * b.squaredNorm() / s2;
    g.segment(L.beta, L.p) -= b / s2;
  }

  auto u_row = [&](Eigen::Index k) { return std::span<const double>(q.data() + L.U + k * N, N); };
  auto v_row = [&](Eigen::Index k) { return std::span<const double>(q.data() + L.V + k * T, T); };
  auto gu_row = [&](Eigen::Index k) { return std::span<double>(g.data() + L.U + k * N, N); };
  auto gv_row = [&](Eigen::Index k) { return std::span<double>(g.data() + L.V + k * T, T); };

  auto iid_normal = [&](Eigen::Index offset, Eigen::Index count) {
    const auto x = q.segment(offset, count);
    tm.factor_prior += -static_cast<double>(count) * kHalfLog2Pi - 0.5 * x.squaredNorm();
    g.segment(offset, count) -= x;
  };
  // Gamma(shape, rate) prior on exp(q(idx)) plus the log-Jacobian.
  auto gamma_hyper = [&](Eigen::Index idx) {
    const double x = std::exp(q(idx));
    const auto gd = gamma_log_density(x, spec_.gamma_shape, spec_.gamma_rate);
    tm.hyper_prior += gd.value;
    tm.jacobian += q(idx);
    g(idx) += gd.d_x * x + 1.0;
  };
  auto icar_rows = [&](Eigen::Index log_tau_idx, bool spatial) {
    const double tau = std::exp(q(log_tau_idx));
    const Adjacency& adj = spatial ? *spec_.spatial_adjacency : temporal_;
    for (Eigen::Index k = 0; k < K; ++k) {
      const auto r = spatial ? icar_log_density(u_row(k), adj, tau, gu_row(k))
                             : icar_log_density(v_row(k), adj, tau, gv_row(k));
      tm.factor_prior += r.value;
      g(log_tau_idx) += r.d_log_tau;
    }
    gamma_hyper(log_tau_idx);
  };

  switch (spec_.family) {
    case Family::Vanilla:
      iid_normal(L.U, K * N);
      iid_normal(L.V, K * T);
      break;
    case Family::Space:
      icar_rows(L.log_tau_s, true);
      iid_normal(L.V, K * T);
      break;
    case Family::SpaceTimeIcar:
      icar_rows(L.log_tau_s, true);
      icar_rows(L.log_tau_t, false);
      break;
    case Family::SpaceTimeAr: {
      icar_rows(L.log_tau_s, true);
      const double sigma = std::exp(q(L.log_sigma));
      for (Eigen::Index k = 0; k < K; ++k) {
        const auto r = ar1_log_density(v_row(k), q(L.ar_a), q(L.ar_b), sigma, gv_row(k));
        tm.factor_prior += r.value;
        g(L.ar_a) += r.d_a;
        g(L.ar_b) += r.d_b;
        g(L.log_sigma) += r.d_log_sigma;
      }
      // Flat prior on sigma itself.
      tm.jacobian += q(L.log_sigma);
      g(L.log_sigma) += 1.0;
      break;
    }
    case Family::SpaceTimeLasso: {
      const Adjacency& adj = *spec_.spatial_adjacency;
      const Eigen::Index lu1 = L.log_lambda, lu2 = L.log_lambda + 1, lv1 = L.log_lambda + 2, lv2 = L.log_lambda + 3;
      const double lam_u1 = std::exp(q(lu1)), lam_u2 = std::exp(q(lu2));
      const double lam_v1 = std::exp(q(lv1)), lam_v2 = std::exp(q(lv2));
      for (Eigen::Index k = 0; k < K; ++k) {
        const auto ru = fused_laplace_log_density(u_row(k), adj, lam_u1, lam_u2, gu_row(k));
        const auto rv = fused_laplace_log_density(v_row(k), temporal_, lam_v1, lam_v2, gv_row(k));
        tm.factor_prior += ru.value + rv.value;
        g(lu1) += ru.d_log_lambda_fuse;
        g(lu2) += ru.d_log_lambda_sparse;
        g(lv1) += rv.d_log_lambda_fuse;
        g(lv2) += rv.d_log_lambda_sparse;
      }
      // The joint density of one row is homogeneous of degree -dim in the two
      // rates; its normaliser is taken as (lambda_fuse + lambda_sparse)^dim.
      auto normaliser = [&](Eigen::Index i1, Eigen::Index i2, double l1, double l2, Eigen::Index dim) {
        const double c = static_cast<double>(K * dim);
        tm.factor_prior += c * std::log(l1 + l2);
        g(i1) += c * l1 / (l1 + l2);
        g(i2) += c * l2 / (l1 + l2);
      };
      normaliser(lu1, lu2, lam_u1, lam_u2, N);
      normaliser(lv1, lv2, lam_v1, lam_v2, T);
      for (Eigen::Index j = 0; j < 4; ++j) gamma_hyper(L.log_lambda + j);
      break;
    }
    case Family::SpaceTimeShrinkage: {
      icar_rows(L.log_tau_s, true);
      ShrinkageState st;
      st.phi_local = Eigen::Map<const FactorMatrix>(q.data() + L.log_phi_local, K, T).array().exp().matrix();
      st.delta = q.segment(L.log_delta, K).array().exp().matrix();
      st.nu = spec_.nu;
      st.a1 = spec_.a1;
      st.a2 = spec_.a2;
      const Eigen::Map<const FactorMatrix> V(q.data() + L.V, K, T);
      const auto r = shrinkage_ar1_log_density(V, q(L.ar_a), q(L.ar_b), st, std::span<double>(g.data() + L.V, K * T),
                                               std::span<double>(g.data() + L.log_phi_local, K * T),
                                               std::span<double>(g.data() + L.log_delta, K));
      tm.factor_prior += r.value;
      g(L.ar_a) += r.d_a;
      g(L.ar_b) += r.d_b;
      tm.jacobian += q.segment(L.log_phi_local, K * T).sum() + q.segment(L.log_delta, K).sum();
      g.segment(L.log_phi_local, K * T).array() += 1.0;
      g.segment(L.log_delta, K).array() += 1.0;
      break;
    }
  }

  if (spec_.family != Family::Vanilla) {
    const double s2 = spec_.soft_sd * spec_.soft_sd;
    auto soft = [&](Eigen::Index offset, Eigen::Index len) {
      const double m = q.segment(offset, len).mean();
      tm.soft_constraint += -kHalfLog2Pi - std::log(spec_.soft_sd) - 0.5 * m * m / s2;
      g.segment(offset, len).array() -= m / s2 / static_cast<double>(len);
    };
    for (Eigen::Index k = 0; k < K; ++k) {
      soft(L.U + k * N, N);
      soft(L.V + k * T, T);
    }
  }

  if (terms_out) *terms_out = tm;
  return tm.total();
}

double mean_log_rate(const ParameterState& s, const MaskedPanel& panel, Eigen::Index i, Eigen::Index t) {
  double v = s.alpha + s.gamma(i) + s.psi(t) + s.U.col(i).dot(s.V.col(t)) + std::log(panel.data.populations(i, t));
  for (Eigen::Index j = 0; j < s.beta.size(); ++j) v += s.beta(j) * panel.data.covariates[j](i, t);
  return v;
}

double log_posterior(const ParameterState& state, const MaskedPanel& panel, const ModelSpec& spec) {
  Model model(spec, panel);
  const auto t = model.terms(state.pack(model.layout()));
  const std::pair<const char*, double> parts[] = {
      {"likelihood", t.likelihood},         {"dispersion prior", t.dispersion_prior},
      {"fixed-effect prior", t.fixed_effect_prior}, {"factor prior", t.factor_prior},
      {"hyperprior", t.hyper_prior},        {"soft sum-to-zero constraint", t.soft_constraint},
      {"log-Jacobian", t.jacobian}};
  for (auto [name, v] : parts)
    if (!std::isfinite(v)) throw ModelError(std::string("log posterior is non-finite in the ") + name + " term");
  return t.total();
}

Eigen::VectorXd grad_log_posterior(const ParameterState& state, const MaskedPanel& panel, const ModelSpec& spec) {
  Model model(spec, panel);
  Eigen::VectorXd grad;
  model.log_density_gradient(state.pack(model.layout()), grad);
  for (Eigen::Index j = 0; j < grad.size(); ++j)
    if (!std::isfinite(grad(j)))
      throw ModelError("gradient is non-finite for parameter " + model.layout().names()[j]);
  return grad;
}

ParameterState init_state(const ModelSpec& spec, const MaskedPanel& panel, std::mt19937_64& rng) {
  const auto N = panel.units(), T = panel.times();
  spec.validate(N, T);
  if (panel.observed_count() == 0) throw ModelError("cannot initialise: the panel has no observed cells");
  const auto layout = ParameterLayout::make(spec.family, N, T, spec.K, panel.data.n_covariates());
  const Grid w = panel.observed.cast<double>().matrix();
  const double cases = panel.data.counts.cwiseProduct(w).sum();
  const double exposure = panel.data.populations.cwiseProduct(w).sum();

  std::normal_distribution<double> small(0.0, 0.1);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  ParameterState s;
  s.alpha = std::log(std::max(cases, 0.5) / exposure);
  s.gamma = Eigen::VectorXd::Zero(N);
  s.psi = Eigen::VectorXd::Zero(T);
  s.U.resize(spec.K, N);
  s.V.resize(spec.K, T);
  for (Eigen::Index j = 0; j < s.U.size(); ++j) s.U.data()[j] = small(rng);
  for (Eigen::Index j = 0; j < s.V.size(); ++j) s.V.data()[j] = small(rng);
  s.beta = Eigen::VectorXd::Zero(panel.data.n_covariates());
  s.log_phi_nb = jitter(rng);

  const double log_hyper_median = std::log(gamma_median(spec.gamma_shape, spec.gamma_rate));
  if (layout.log_tau_s >= 0) s.log_tau_s = log_hyper_median + jitter(rng);
  if (layout.log_tau_t >= 0) s.log_tau_t = log_hyper_median + jitter(rng);
  if (layout.log_sigma >= 0) s.log_sigma = jitter(rng);
  if (layout.log_lambda >= 0)
    for (int j = 0; j < 4; ++j) s.log_lambda(j) = log_hyper_median + jitter(rng);
  if (layout.log_phi_local >= 0) {
    const double m = std::log(gamma_median(0.5 * spec.nu, 0.5 * spec.nu));
    s.log_phi_local.resize(spec.K, T);
    for (Eigen::Index j = 0; j < s.log_phi_local.size(); ++j) s.log_phi_local.data()[j] = m + jitter(rng);
    s.log_delta.resize(spec.K);
    for (Eigen::Index k = 0; k < spec.K; ++k)
      s.log_delta(k) = std::log(gamma_median(k == 0 ? spec.a1 : spec.a2, 1.0)) + jitter(rng);
  }
  return s;
}

}  // namespace stmc

namespace stmc {

Eigen::MatrixXd sum_zero_basis(Eigen::Index n) {
  // Helmert contrasts.
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, std::max<Eigen::Index>(n - 1, 0));
  for (Eigen::Index k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    const double s = 1.0 / std::sqrt(kk * (kk + 1.0));
    Q.col(k - 1).head(k).setConstant(s);
    Q(k, k - 1) = -kk * s;
  }
  return Q;
}

CenteredTarget::CenteredTarget(const Model& model)
    : model_(model), basis_n_(sum_zero_basis(model.layout().n)), basis_t_(sum_zero_basis(model.layout().t)) {}

Eigen::VectorXd CenteredTarget::to_model(const Eigen::VectorXd& z) const {
  const auto& L = model_.layout();
  const auto N = L.n, T = L.t;
  Eigen::VectorXd q = z;
  const double mg = z(L.gamma + N - 1), mp = z(L.psi + T - 1);
  q.segment(L.gamma, N) = basis_n_ * z.segment(L.gamma, N - 1) + Eigen::VectorXd::Constant(N, mg);
  q.segment(L.psi, T) = basis_t_ * z.segment(L.psi, T - 1) + Eigen::VectorXd::Constant(T, mp);
  q(L.alpha) = z(L.alpha) - mg - mp;
  return q;
}

Eigen::VectorXd CenteredTarget::from_model(const Eigen::VectorXd& q) const {
  const auto& L = model_.layout();
  const auto N = L.n, T = L.t;
  Eigen::VectorXd z = q;
  const auto gam = q.segment(L.gamma, N);
  const auto psi = q.segment(L.psi, T);
  const double mg = gam.mean(), mp = psi.mean();
  z.segment(L.gamma, N - 1) = basis_n_.transpose() * gam;
  z(L.gamma + N - 1) = mg;
  z.segment(L.psi, T - 1) = basis_t_.transpose() * psi;
  z(L.psi + T - 1) = mp;
  z(L.alpha) = q(L.alpha) + mg + mp;
  return z;
}

double CenteredTarget::log_density_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const {
  const auto& L = model_.layout();
  const auto N = L.n, T = L.t;
  Eigen::VectorXd gq;
  const double lp = model_.log_density_gradient(to_model(z), gq);
  grad = gq;
  const double ga = gq(L.alpha);
  const auto gg = gq.segment(L.gamma, N);
  const auto gp = gq.segment(L.psi, T);
  grad.segment(L.gamma, N - 1) = basis_n_.transpose() * gg;
  grad(L.gamma + N - 1) = gg.sum() - ga;
  grad.segment(L.psi, T - 1) = basis_t_.transpose() * gp;
  grad(L.psi + T - 1) = gp.sum() - ga;
  return lp;
}

}  // namespace stmc
