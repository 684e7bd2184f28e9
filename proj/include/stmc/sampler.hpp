#pragma once

#include "stmc/model.hpp"
#include "stmc/nuts.hpp"
#include "stmc/panel.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace stmc {

struct SamplerConfig {
  int iterations = 2000;  // total per chain, including warmup
  int warmup = 1000;
  int chains = 4;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 1;
  double guard_threshold = 20.0;
  int threads = 0;  // 0: STMC_WORKERS or hardware concurrency

  void validate() const;
  int kept() const { return iterations - warmup; }
  NutsSettings nuts() const;
};

struct Cell {
  Eigen::Index unit = 0;
  Eigen::Index time = 0;
  bool operator==(const Cell&) const = default;
};

/// Post-warmup draws of every chain, plus counterfactual predictive draws at
/// the held-out cells once posterior_predictive has run.
struct DrawSet {
  std::vector<std::string> parameter_names;
  std::vector<Eigen::MatrixXd> chains;  // per chain: kept x dim
  std::vector<ChainStats> stats;
  std::vector<Cell> masked_cells;       // row-major order over the panel
  std::vector<Eigen::MatrixXd> predictive;  // per chain: kept x |masked|, -1 rows where guarded
  std::vector<std::vector<bool>> guarded;   // per chain, per kept draw

  int num_chains() const { return static_cast<int>(chains.size()); }
  int kept() const { return chains.empty() ? 0 : static_cast<int>(chains.front().rows()); }
  /// kept x chains matrix of one packed coordinate.
  Eigen::MatrixXd parameter(Eigen::Index j) const;
  /// kept x chains matrix of predictive draws at one masked cell, sentinel rows included.
  Eigen::MatrixXd predictive_cell(std::size_t c) const;
  int divergences() const;
  double guarded_fraction() const;
  /// Mean predictive draw per masked cell over non-sentinel draws; NaN where every draw is a sentinel.
  Eigen::VectorXd predictive_mean() const;
};

/// Runs cfg.chains independent NUTS chains on an arbitrary target. `init`
/// supplies the starting point of a chain from its own RNG stream.
DrawSet run_chains(const LogDensityModel& target, const std::function<Eigen::VectorXd(int, std::mt19937_64&)>& init,
                   const SamplerConfig& cfg, std::vector<std::string> names = {});

/// Samples a model in CenteredTarget coordinates from init_state starting
/// points, stores the draws in model coordinates and fills the predictive
/// draws.
DrawSet sample_model(const Model& model, const SamplerConfig& cfg);

/// Builds the model and calls sample_model.
DrawSet run_chains(const ModelSpec& spec, const MaskedPanel& panel, const SamplerConfig& cfg);

/// Per-chain RNG stream derived from (seed, chain, purpose).
std::mt19937_64 chain_rng(std::uint64_t seed, int chain, std::uint32_t purpose = 0);

/// Negative binomial counterfactual draws at every held-out cell. A kept draw
/// whose linear predictor exceeds cfg.guard_threshold at any held-out cell
/// gets a row of -1 instead.
void posterior_predictive(DrawSet& draws, const Model& model, const SamplerConfig& cfg);

/// Worker count from STMC_WORKERS, else the hardware concurrency.
int default_workers();

/// Long-format exports. Time and unit columns carry the panel labels.
void write_draws_csv(const std::filesystem::path& path, const DrawSet& draws, const std::string& header);
void write_predictive_csv(const std::filesystem::path& path, const DrawSet& draws, const PanelData& panel,
                          const std::string& header);
/// Reads a predictive CSV back against `panel`, whose held-out cells define the column order.
DrawSet read_predictive_csv(const std::filesystem::path& path, const PanelData& panel);

}  // namespace stmc
