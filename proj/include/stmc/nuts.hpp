#pragma once

#include "stmc/model.hpp"

#include <Eigen/Dense>

#include <random>
#include <stdexcept>
#include <vector>

namespace stmc {

struct NutsSettings {
  int warmup = 1000;
  int iterations = 2000;  // total, including warmup
  int max_tree_depth = 10;
  double target_accept = 0.8;
  double max_energy_error = 1000.0;  // divergence threshold
  double initial_step_size = 1.0;
};

struct ChainStats {
  double step_size = 0.0;
  Eigen::VectorXd inv_metric;
  std::vector<double> accept_stat;  // per kept draw
  std::vector<int> tree_depth;
  std::vector<int> n_leapfrog;
  std::vector<bool> divergent;
  int divergences = 0;          // kept draws only
  int warmup_divergences = 0;
};

struct ChainResult {
  Eigen::MatrixXd draws;  // kept x dim
  ChainStats stats;
};

class SamplerError : public std::runtime_error {
 public:
  SamplerError(const std::string& what, int chain) : std::runtime_error(what), chain_(chain) {}
  int chain() const noexcept { return chain_; }

 private:
  int chain_;
};

/// Multinomial No-U-Turn sampler with a diagonal metric. During warmup the
/// step size follows dual averaging toward target_accept and the metric is
/// re-estimated over doubling windows.
ChainResult run_nuts_chain(const LogDensityModel& target, const Eigen::VectorXd& init, const NutsSettings& settings,
                           std::mt19937_64& rng, int chain_index = 0);

}  // namespace stmc
