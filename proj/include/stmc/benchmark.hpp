#pragma once

#include "stmc/model.hpp"
#include "stmc/sampler.hpp"
#include "stmc/simulate.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace stmc {

enum class MethodKind { Bayes, Als, SoftImpute, NuclearFe, Svt, Oracle, Zero };

struct BenchmarkMethod {
  MethodKind kind = MethodKind::Oracle;
  Family family = Family::Vanilla;  // Bayes only
  int K = 0;                         // Bayes and ALS

  /// "bayes", "als", ... as written to the CSVs.
  std::string method_name() const;
  std::string family_name() const;  // empty unless Bayes
  /// Accepts "<family>:<K>", "als:<K>", "soft_impute", "nuclear_fe", "svt", "oracle", "zero".
  static BenchmarkMethod parse(const std::string& text);
  std::string label() const;
};

struct BenchmarkGrid {
  std::vector<double> alphas{-5.0, -7.0};
  std::vector<double> tau2s{0.1};
  std::vector<bool> smoothed{false};
};

struct BenchmarkConfig {
  BenchmarkGrid grid;
  std::vector<BenchmarkMethod> methods;
  int replicates = 20;
  int first_replicate = 0;
  std::uint64_t seed = 1;
  SimConfig base;
  SamplerConfig sampler;  // seed is replaced per replicate
  ModelSpec model;        // family and K replaced per method
  double als_ridge = 0.1;
  int cv_folds = 10;
  int smooth_df = 5;
  double rate_denominator = 1e5;
  int workers = 0;  // 0: STMC_WORKERS or hardware concurrency
};

struct ReplicateRecord {
  std::string method, family;
  int K = 0;
  double alpha = 0.0, tau2 = 0.0;
  bool smoothed = false;
  int replicate = 0;
  double bias_pct = 0.0;  // NaN when the fit failed
  std::string error;

  bool same_job(const ReplicateRecord& o) const;
};

struct AggregateCell {
  int n = 0;
  double mean = 0.0, q25 = 0.0, q75 = 0.0;
};

struct AggregateRow {
  std::string method, family;
  int K = 0;
  std::vector<AggregateCell> cells;  // one per grid cell, in grid order
};

struct GridCell {
  double alpha, tau2;
  bool smoothed;
};

std::vector<GridCell> grid_cells(const BenchmarkGrid& grid);

/// Counterfactual estimates of one method at the held-out cells of `sim`,
/// in masked_cells order.
Eigen::VectorXd estimate_counterfactual(const BenchmarkMethod& method, const Simulation& sim,
                                        const PanelData& fit_panel, const BenchmarkConfig& cfg,
                                        std::uint64_t job_seed);

using ProgressFn = std::function<void(const ReplicateRecord&)>;

/// Runs every (grid cell, replicate, method) job not already present in
/// `done`, on a worker pool. Returns the union, sorted.
std::vector<ReplicateRecord> run_benchmark(const BenchmarkConfig& cfg, std::vector<ReplicateRecord> done = {},
                                           const ProgressFn& on_record = {});

/// Checkpointed sweep in `out_dir`: replicate records stream into
/// replicates.partial.csv, which a later call resumes from. On completion
/// writes replicates.csv and aggregate.csv.
std::vector<ReplicateRecord> run_benchmark_checkpointed(const BenchmarkConfig& cfg,
                                                        const std::filesystem::path& out_dir,
                                                        const std::string& header);

std::vector<AggregateRow> aggregate(const std::vector<ReplicateRecord>& records, const BenchmarkGrid& grid);

void write_records_csv(const std::filesystem::path& path, const std::vector<ReplicateRecord>& records,
                       const std::string& header);
std::vector<ReplicateRecord> read_records_csv(const std::filesystem::path& path);
void write_aggregate_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows,
                         const BenchmarkGrid& grid, const std::string& header);

/// Sort order of replicate records: grid cell, method, K, replicate.
bool record_less(const ReplicateRecord& a, const ReplicateRecord& b);

}  // namespace stmc
