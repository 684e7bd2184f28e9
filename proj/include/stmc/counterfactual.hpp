#pragma once

#include "stmc/model.hpp"
#include "stmc/panel.hpp"
#include "stmc/sampler.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace stmc {

struct Summary {
  double mean = 0.0;
  double lo = 0.0;  // 2.5% quantile
  double hi = 0.0;  // 97.5% quantile
};

/// Mean and central 95% interval. Throws on an empty vector.
Summary summarize(const std::vector<double>& draws);

struct AttSeries {
  std::string label;
  long time = 0;  // time label for per-time series
  std::vector<double> draws;
  Summary summary;
};

struct AttResult {
  std::vector<AttSeries> per_time;   // one entry per time with treated units
  std::vector<AttSeries> per_group;  // groups with at least one treated unit
  AttSeries overall;
  double rate_denominator = 1e5;
  double dropped_fraction = 0.0;
  std::vector<std::string> notices;

  /// More than 10% of predictive draws were sentinels.
  bool unstable() const { return dropped_fraction > 0.1; }
};

struct AttOptions {
  double rate_denominator = 1e5;
  /// Replaces the observed treated outcomes Y(1) when set (N x T).
  const Grid* substitute_y1 = nullptr;
};

class AttError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Time-specific ATT draws on the rate scale. Sentinel draws are dropped.
AttResult att_per_time(const PanelData& panel, const DrawSet& predictive, const AttOptions& options = {});

/// Averages the per-time draws across treated times, unweighted.
AttSeries att_overall(const AttResult& result);

/// ATT restricted to each group's treated units, averaged across times.
void att_by_group(AttResult& result, const PanelData& panel, const DrawSet& predictive,
                  const AttOptions& options = {});

/// Per-time, per-group and overall ATT in one pass.
AttResult compute_att(const PanelData& panel, const DrawSet& predictive, const AttOptions& options = {});

/// Per-draw ATT of ever-treated units at their pre-treatment times, using the
/// in-sample predictive mean exp(eta). Returned per capita (denominator 1),
/// one series per time that has at least one not-yet-treated adopter.
std::vector<AttSeries> pretreatment_att(const Model& model, const DrawSet& draws);

/// Full-length series: pre-treatment diagnostic (scaled to the denominator)
/// followed by the post-treatment per-time ATTs, ordered by time.
std::vector<AttSeries> att_time_series(const std::vector<AttSeries>& pre_per_capita, const AttResult& post);

void write_att_csv(const std::filesystem::path& path, const AttResult& result, const std::string& header);
void write_pretreatment_csv(const std::filesystem::path& path, const std::vector<AttSeries>& pre,
                            const std::string& header);
std::vector<AttSeries> read_pretreatment_csv(const std::filesystem::path& path);

}  // namespace stmc
