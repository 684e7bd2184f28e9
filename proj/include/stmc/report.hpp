#pragma once

#include "stmc/counterfactual.hpp"
#include "stmc/diagnostics.hpp"
#include "stmc/sampler.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace stmc {

struct ParameterDiagnostic {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  Diagnostic rhat;
  Diagnostic ess;
};

struct FitReport {
  std::vector<ParameterDiagnostic> parameters;
  std::vector<Diagnostic> predictive_rhat;  // per held-out cell
  double mean_predictive_rhat = 1.0;
  double max_parameter_rhat = 1.0;
  double min_parameter_ess = 0.0;
  int divergences = 0;
  int warmup_divergences = 0;
  double guarded_fraction = 0.0;
  std::vector<double> step_sizes;
};

/// R-hat and ESS of every parameter and of the predictive draws at every
/// held-out cell. Sentinel rows are dropped before the predictive R-hat;
/// chains are truncated to a common length.
FitReport diagnose(const DrawSet& draws, bool rank_normalized = true);

void write_fit_report(const std::filesystem::path& path, const FitReport& report, const std::string& header);

/// Line plot of ATT over time with a 95% band, a zero line and a vertical
/// rule at the first treated period.
std::string att_svg(const std::vector<AttSeries>& series, long treatment_start, const std::string& title);

/// Bar chart of variance fractions.
std::string scree_svg(const Eigen::VectorXd& fractions, const std::string& title);

void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace stmc
