#pragma once

#include "stmc/graphs.hpp"
#include "stmc/panel.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace stmc {

/// Data-generating process for synthetic panels: Leroux-correlated factors,
/// small two-way fixed effects and Poisson counts over population offsets.
struct SimConfig {
  Eigen::Index N = 29;
  Eigen::Index T = 15;
  Eigen::Index K_true = 3;
  Eigen::Index n_treated = 6;
  Eigen::Index t_start = 9;  // 1-indexed first treated period
  double rho_S = 0.99;
  double rho_T = 0.99;
  double tau2 = 0.1;
  double alpha = -5.0;
  double fe_variance = 0.000015;
  std::uint64_t replicate_seed = 1;
  /// Additive rate effect on treated cells, per effect_denominator person-years.
  double effect_rate = 0.0;
  double effect_denominator = 1e5;
  std::optional<Adjacency> adjacency;  // default: bundled fixture
  std::optional<Grid> populations;     // default: bundled fixture

  void validate() const;
};

struct SimTruth {
  Grid y0;      // untreated outcomes at every cell
  Grid lambda;  // E[Y(0)]
  Eigen::MatrixXd U, V;  // K x N, K x T
  Eigen::VectorXd gamma, psi;
};

struct Simulation {
  PanelData panel;
  SimTruth truth;
};

/// RNG stream of one replicate.
std::mt19937_64 replicate_rng(std::uint64_t seed);

/// Draws one panel from `cfg` using `rng`.
Simulation generate(const SimConfig& cfg, std::mt19937_64& rng);
/// Same, seeded from cfg.replicate_seed.
Simulation generate(const SimConfig& cfg);

/// Held-out cells in row-major order.
std::vector<std::pair<Eigen::Index, Eigen::Index>> masked_cells(const Mask& observed);

/// Mean over held-out cells of 100 |estimate - Y(0)| / lambda. `estimates`
/// follows the order of masked_cells.
double percent_bias(const Eigen::VectorXd& estimates, const SimTruth& truth, const Mask& observed);

/// Bundled 29-unit fixture.
std::vector<std::array<double, 2>> fixture_centroids();
Adjacency fixture_adjacency();
Grid fixture_populations();

}  // namespace stmc
