#pragma once

#include "stmc/panel.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace stmc {

class PreprocessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Natural cubic spline basis without intercept: boundary knots at the range
/// of `times`, df - 1 interior knots at equally spaced quantiles. Linear
/// beyond the boundary knots. Returns times.size() x df.
Eigen::MatrixXd natural_spline_basis(const Eigen::VectorXd& times, int df);

/// Same basis evaluated at `at`, with knots placed from `times`.
Eigen::MatrixXd natural_spline_basis(const Eigen::VectorXd& times, int df, const Eigen::VectorXd& at);

struct SmoothResult {
  Eigen::VectorXd fitted;  // expected counts
  int iterations = 0;
  bool all_zero = false;   // input returned unchanged
};

/// Poisson regression of counts on an intercept plus the spline basis with
/// offset log(populations), fitted by IRLS.
SmoothResult smooth_series(const Eigen::VectorXd& counts, const Eigen::VectorXd& populations, int df = 5,
                           const Eigen::VectorXd& times = {});

/// Smooths every unit over its untreated periods. Treated cells keep their
/// values. Units with fewer than df + 1 untreated periods are left raw and
/// listed in `notices`.
PanelData smooth_panel(const PanelData& panel, int df = 5, std::vector<std::string>* notices = nullptr);

/// Variance fractions of the principal components of the column-centred
/// matrix, descending.
Eigen::VectorXd scree(const Eigen::MatrixXd& m);

/// Rates per rate_denominator with treated cells replaced by the mean
/// of the untreated cells in the same period.
Eigen::MatrixXd scree_matrix(const PanelData& panel, double rate_denominator = 1e5);

}  // namespace stmc
