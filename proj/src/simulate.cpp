#include "stmc/simulate.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace stmc {

void SimConfig::validate() const {
  if (N < 1 || T < 2) throw std::invalid_argument("simulation needs N >= 1 and T >= 2");
  if (K_true < 1) throw std::invalid_argument("K_true must be positive");
  if (n_treated < 0 || n_treated > N) throw std::invalid_argument("n_treated must lie in [0, N]");
  if (t_start < 1 || t_start > T) throw std::invalid_argument("t_start must lie in [1, T]");
  if (!(rho_S >= 0.0 && rho_S < 1.0) || !(rho_T >= 0.0 && rho_T < 1.0))
    throw std::invalid_argument("rho_S and rho_T must lie in [0, 1)");
  if (!(tau2 > 0.0)) throw std::invalid_argument("tau2 must be positive");
  if (!(fe_variance >= 0.0)) throw std::invalid_argument("fe_variance must be non-negative");
  if (!(effect_denominator > 0.0)) throw std::invalid_argument("effect_denominator must be positive");
  if (adjacency && adjacency->size() != N) throw std::invalid_argument("adjacency size differs from N");
  if (populations && (populations->rows() != N || populations->cols() != T))
    throw std::invalid_argument("population grid is not N x T");
  if (!adjacency && N != 29) throw std::invalid_argument("the bundled adjacency has 29 units; supply one for N != 29");
  if (!populations && (N != 29 || T != 15))
    throw std::invalid_argument("the bundled populations are 29 x 15; supply a grid for other shapes");
}

std::mt19937_64 replicate_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x51u};
  return std::mt19937_64(seq);
}

Simulation generate(const SimConfig& cfg) {
  auto rng = replicate_rng(cfg.replicate_seed);
  return generate(cfg, rng);
}

Simulation generate(const SimConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const auto N = cfg.N, T = cfg.T, K = cfg.K_true;
  const Adjacency spatial = cfg.adjacency ? *cfg.adjacency : fixture_adjacency();
  const Grid theta = cfg.populations ? *cfg.populations : fixture_populations();
  const PrecisionMatrix qs = leroux_precision(spatial, cfg.rho_S);
  const PrecisionMatrix qt = leroux_precision(path_adjacency(T), cfg.rho_T);

  Simulation sim;
  SimTruth& truth = sim.truth;
  truth.U.resize(K, N);
  truth.V.resize(K, T);
  for (Eigen::Index k = 0; k < K; ++k) truth.U.row(k) = sample_gmrf(qs, cfg.tau2, rng).transpose();
  for (Eigen::Index k = 0; k < K; ++k) truth.V.row(k) = sample_gmrf(qt, cfg.tau2, rng).transpose();
  std::normal_distribution<double> fe(0.0, std::sqrt(cfg.fe_variance));
  truth.gamma.resize(N);
  truth.psi.resize(T);
  for (Eigen::Index i = 0; i < N; ++i) truth.gamma(i) = cfg.fe_variance > 0.0 ? fe(rng) : 0.0;
  for (Eigen::Index t = 0; t < T; ++t) truth.psi(t) = cfg.fe_variance > 0.0 ? fe(rng) : 0.0;

  truth.lambda.resize(N, T);
  truth.y0.resize(N, T);
  const Eigen::MatrixXd uv = truth.U.transpose() * truth.V;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index t = 0; t < T; ++t) {
      const double eta = cfg.alpha + truth.gamma(i) + truth.psi(t) + uv(i, t) + std::log(theta(i, t));
      truth.lambda(i, t) = std::exp(eta);
      truth.y0(i, t) = static_cast<double>(std::poisson_distribution<long long>(truth.lambda(i, t))(rng));
    }

  PanelData& p = sim.panel;
  p.counts = truth.y0;
  p.populations = theta;
  p.treated = Mask::Constant(N, T, false);
  for (Eigen::Index i = 0; i < cfg.n_treated; ++i)
    for (Eigen::Index t = cfg.t_start - 1; t < T; ++t) {
      p.treated(i, t) = true;
      if (cfg.effect_rate > 0.0) {
        const double extra = cfg.effect_rate * theta(i, t) / cfg.effect_denominator;
        p.counts(i, t) += static_cast<double>(std::poisson_distribution<long long>(extra)(rng));
      }
    }
  const auto centroids = cfg.adjacency ? std::vector<std::array<double, 2>>{} : fixture_centroids();
  for (Eigen::Index i = 0; i < N; ++i) {
    const std::string id = std::to_string(i + 1);
    p.unit_ids.push_back("u" + std::string(id.size() < 2 ? "0" : "") + id);
    if (centroids.empty())
      p.group_of_unit.push_back("all");
    else
      p.group_of_unit.push_back(centroids[i][1] >= 3.0 ? "north" : "south");
  }
  for (Eigen::Index t = 0; t < T; ++t) p.time_labels.push_back(static_cast<long>(t + 1));
  p.validate();
  return sim;
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> masked_cells(const Mask& observed) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  for (Eigen::Index i = 0; i < observed.rows(); ++i)
    for (Eigen::Index t = 0; t < observed.cols(); ++t)
      if (!observed(i, t)) out.emplace_back(i, t);
  return out;
}

double percent_bias(const Eigen::VectorXd& estimates, const SimTruth& truth, const Mask& observed) {
  const auto cells = masked_cells(observed);
  if (static_cast<Eigen::Index>(cells.size()) != estimates.size())
    throw std::invalid_argument("estimates must cover every held-out cell");
  if (cells.empty()) throw std::invalid_argument("no held-out cells to score");
  double sum = 0.0;
  for (std::size_t w = 0; w < cells.size(); ++w) {
    const auto [i, t] = cells[w];
    sum += std::abs(estimates(static_cast<Eigen::Index>(w)) - truth.y0(i, t)) / truth.lambda(i, t);
  }
  return 100.0 * sum / static_cast<double>(cells.size());
}

}  // namespace stmc
