#pragma once

#include "stmc/panel.hpp"

#include <Eigen/Dense>

#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

namespace stmc {

/// Real matrix with an observed mask. Entries outside the mask are ignored.
struct RateMatrix {
  Eigen::MatrixXd values;
  Mask observed;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  /// Throws unless every row and column has an observed entry and observed values are finite.
  void validate() const;
};

/// counts / populations * rate_denominator over the observed cells of a panel.
RateMatrix rates_from_panel(const MaskedPanel& panel, double rate_denominator = 1e5);

class BaselineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Completion {
  Eigen::MatrixXd completed;  // observed cells keep their input values
  Eigen::MatrixXd fitted;     // the model's own reconstruction everywhere
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective;  // per iteration, where defined
};

/// Rank-K factorisation by ridge-regularised alternating least squares.
Completion als_complete(const RateMatrix& m, int K, double ridge = 0.1, int max_iter = 1000, double tol = 1e-10);

/// Iterative SVD soft-thresholding at `lambda`. With `debias`, the singular
/// values of the final rank are re-fitted to the observed entries.
Completion soft_impute(const RateMatrix& m, double lambda, int max_iter = 5000, double tol = 1e-12,
                       bool debias = true);

/// Singular value thresholding with dual step `step`. Throws BaselineError if
/// the observed residual grows for 50 consecutive iterations or turns non-finite.
Completion svt(const RateMatrix& m, double threshold, double step, int max_iter = 5000, double tol = 1e-6);

struct FixedEffectCompletion : Completion {
  Eigen::VectorXd row_effects;  // include the grand mean
  Eigen::VectorXd col_effects;
  Eigen::MatrixXd low_rank;
};

/// Two-way fixed effects plus a nuclear-norm penalised low-rank residual.
FixedEffectCompletion nuclear_fe(const RateMatrix& m, double lambda, int max_iter = 5000, double tol = 1e-10);

/// Two-way additive fit r_i + c_t by least squares on the observed cells.
void two_way_fit(const RateMatrix& m, Eigen::VectorXd& row, Eigen::VectorXd& col, int max_iter = 10000,
                 double tol = 1e-13);

/// Largest singular value of the observed entries, zero filled.
double top_singular_value(const RateMatrix& m);

using Completer = std::function<Eigen::MatrixXd(const RateMatrix&, double)>;

/// K-fold cross-validation over observed entries. Returns the grid value with
/// the smallest mean held-out RMSE; ties go to the stronger regularisation
/// (the larger value when `larger_is_stronger`).
double cv_tune(const Completer& method, const RateMatrix& m, const std::vector<double>& grid, int folds,
               std::mt19937_64& rng, bool larger_is_stronger = true);

}  // namespace stmc
