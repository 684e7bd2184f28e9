#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace stmc {

using Grid = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Validation failure tied to one (unit, time) cell of a panel.
class PanelError : public std::runtime_error {
 public:
  PanelError(const std::string& what, std::string unit = {}, long time = 0)
      : std::runtime_error(what), unit_(std::move(unit)), time_(time) {}
  const std::string& unit() const noexcept { return unit_; }
  long time() const noexcept { return time_; }

 private:
  std::string unit_;
  long time_;
};

/// Unit x time panel of counts with population offsets.
///
/// Counts are integer-valued unless `smoothed` is set, in which case they hold
/// fitted expected counts from temporal pre-smoothing.
struct PanelData {
  Grid counts;
  Grid populations;
  std::vector<Grid> covariates;
  Mask treated;
  std::vector<std::string> unit_ids;
  std::vector<std::string> group_of_unit;
  std::vector<long> time_labels;
  std::vector<std::string> covariate_names;
  bool smoothed = false;

  Eigen::Index units() const { return counts.rows(); }
  Eigen::Index times() const { return counts.cols(); }
  Eigen::Index n_covariates() const { return static_cast<Eigen::Index>(covariates.size()); }

  /// Checks shapes, positivity, integrality and the absorbing-treatment staircase.
  void validate() const;

  /// First treated time index of unit i, or times() if never treated.
  Eigen::Index adoption_time(Eigen::Index i) const;
};

/// Panel with the treated cells held out. Observed cells are the complement of
/// the treated set; the underlying grids are not modified.
struct MaskedPanel {
  PanelData data;
  Mask observed;

  Eigen::Index units() const { return data.units(); }
  Eigen::Index times() const { return data.times(); }
  Eigen::Index observed_count() const { return observed.count(); }
  Eigen::Index masked_count() const { return observed.size() - observed.count(); }
};

/// Column names of the long-format CSV. Covariates are every column whose
/// name starts with `covariate_prefix`.
struct PanelSchema {
  std::string unit = "unit";
  std::string group = "group";
  std::string time = "time";
  std::string count = "count";
  std::string population = "population";
  std::string treated = "treated";
  std::string covariate_prefix = "cov_";
  std::string smoothed = "smoothed";
};

PanelData load_panel(const std::filesystem::path& path, const PanelSchema& schema = {});
PanelData parse_panel(std::istream& in, const PanelSchema& schema = {});

/// Writes the long format read by load_panel. Lines in `header_comments` are
/// emitted first, each prefixed with "# ".
void write_panel(std::ostream& out, const PanelData& panel,
                 const std::vector<std::string>& header_comments = {},
                 const PanelSchema& schema = {});

MaskedPanel mask_treated(const PanelData& panel);

/// Drops units whose pre-treatment case total is <= min_cases. Never-treated
/// units are judged on the full period.
PanelData min_pretreatment_filter(const PanelData& panel, double min_cases);

/// Keeps the listed units, in the given order.
PanelData select_units(const PanelData& panel, const std::vector<Eigen::Index>& rows);

}  // namespace stmc
