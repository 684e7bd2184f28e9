#pragma once

#include <Eigen/Dense>

namespace stmc {

struct Diagnostic {
  double value = 1.0;
  bool flagged = false;  // constant or non-finite input; value is a convention
};

/// Potential scale reduction of a kept x chains matrix. Each chain is split
/// in half. The rank-normalized form reports the larger of the bulk and
/// folded-tail statistics; the plain form is classic split R-hat.
Diagnostic rhat(const Eigen::MatrixXd& draws, bool rank_normalized = true);

/// Bulk effective sample size of the rank-normalized split chains, with the
/// autocorrelation sum truncated by Geyer's initial monotone sequence.
Diagnostic ess_bulk(const Eigen::MatrixXd& draws);

/// Effective sample size of the raw draws (no rank normalization).
Diagnostic ess_basic(const Eigen::MatrixXd& draws);

}  // namespace stmc
