#include "stmc/baselines.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace stmc {

namespace {

Eigen::MatrixXd mask_matrix(const Mask& observed) {
  Eigen::MatrixXd w(observed.rows(), observed.cols());
  for (Eigen::Index i = 0; i < observed.rows(); ++i)
    for (Eigen::Index t = 0; t < observed.cols(); ++t) w(i, t) = observed(i, t) ? 1.0 : 0.0;
  return w;
}

/// Observed entries of `m`, zero elsewhere.
Eigen::MatrixXd project(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w) { return x.cwiseProduct(w); }

struct Shrunk {
  Eigen::MatrixXd value;
  Eigen::MatrixXd U, V;
  Eigen::VectorXd d;  // shrunk singular values, positive only
};

Shrunk shrink(const Eigen::MatrixXd& x, double lambda) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  Eigen::Index r = 0;
  while (r < s.size() && s(r) > lambda) ++r;
  Shrunk out;
  out.U = svd.matrixU().leftCols(r);
  out.V = svd.matrixV().leftCols(r);
  out.d = (s.head(r).array() - lambda).matrix();
  out.value = out.U * out.d.asDiagonal() * out.V.transpose();
  return out;
}

Eigen::MatrixXd fill_observed(const RateMatrix& m, const Eigen::MatrixXd& fitted) {
  Eigen::MatrixXd out = fitted;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index t = 0; t < m.cols(); ++t)
      if (m.observed(i, t)) out(i, t) = m.values(i, t);
  return out;
}

void require_coverage(const RateMatrix& m) {
  m.validate();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (!m.observed.row(i).any()) throw BaselineError("row " + std::to_string(i + 1) + " has no observed entry");
  for (Eigen::Index t = 0; t < m.cols(); ++t)
    if (!m.observed.col(t).any()) throw BaselineError("column " + std::to_string(t + 1) + " has no observed entry");
}

}  // namespace

void RateMatrix::validate() const {
  if (observed.rows() != values.rows() || observed.cols() != values.cols())
    throw std::invalid_argument("mask shape differs from the matrix");
  if (values.size() == 0) throw std::invalid_argument("empty matrix");
  for (Eigen::Index i = 0; i < rows(); ++i)
    for (Eigen::Index t = 0; t < cols(); ++t)
      if (observed(i, t) && !std::isfinite(values(i, t)))
        throw std::invalid_argument("non-finite observed entry at (" + std::to_string(i + 1) + ", " +
                                    std::to_string(t + 1) + ")");
}

RateMatrix rates_from_panel(const MaskedPanel& panel, double rate_denominator) {
  RateMatrix m;
  m.values = (panel.data.counts.array() / panel.data.populations.array() * rate_denominator).matrix();
  m.observed = panel.observed;
  return m;
}

double top_singular_value(const RateMatrix& m) {
  const Eigen::MatrixXd x = project(m.values, mask_matrix(m.observed));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

Completion als_complete(const RateMatrix& m, int K, double ridge, int max_iter, double tol) {
  require_coverage(m);
  if (K < 1 || K > std::min(m.rows(), m.cols())) throw std::invalid_argument("ALS rank must lie in [1, min(N, T)]");
  if (!(ridge >= 0.0)) throw std::invalid_argument("ALS ridge must be non-negative");
  const Eigen::Index N = m.rows(), T = m.cols();

  Eigen::MatrixXd start = m.values;
  for (Eigen::Index t = 0; t < T; ++t) {
    double s = 0.0, n = 0.0;
    for (Eigen::Index i = 0; i < N; ++i)
      if (m.observed(i, t)) s += m.values(i, t), n += 1.0;
    for (Eigen::Index i = 0; i < N; ++i)
      if (!m.observed(i, t)) start(i, t) = s / n;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(start, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd root = svd.singularValues().head(K).cwiseSqrt();
  Eigen::MatrixXd A = svd.matrixU().leftCols(K) * root.asDiagonal();
  Eigen::MatrixXd B = svd.matrixV().leftCols(K) * root.asDiagonal();

  auto objective = [&] {
    double f = 0.0;
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index t = 0; t < T; ++t)
        if (m.observed(i, t)) {
          const double r = m.values(i, t) - A.row(i).dot(B.row(t));
          f += r * r;
        }
    return f + ridge * (A.squaredNorm() + B.squaredNorm());
  };

  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(K, K);
  Completion out;
  double prev = objective();
  for (int it = 0; it < max_iter; ++it) {
    for (Eigen::Index i = 0; i < N; ++i) {
      Eigen::MatrixXd G = ridge * I;
      Eigen::VectorXd h = Eigen::VectorXd::Zero(K);
      for (Eigen::Index t = 0; t < T; ++t)
        if (m.observed(i, t)) {
          G += B.row(t).transpose() * B.row(t);
          h += B.row(t).transpose() * m.values(i, t);
        }
      A.row(i) = G.ldlt().solve(h).transpose();
    }
    for (Eigen::Index t = 0; t < T; ++t) {
      Eigen::MatrixXd G = ridge * I;
      Eigen::VectorXd h = Eigen::VectorXd::Zero(K);
      for (Eigen::Index i = 0; i < N; ++i)
        if (m.observed(i, t)) {
          G += A.row(i).transpose() * A.row(i);
          h += A.row(i).transpose() * m.values(i, t);
        }
      B.row(t) = G.ldlt().solve(h).transpose();
    }
    const double f = objective();
    out.objective.push_back(f);
    out.iterations = it + 1;
    if (!std::isfinite(f)) throw BaselineError("ALS objective became non-finite");
    if (std::abs(prev - f) <= tol * std::max(prev, 1e-300) || f < 1e-300) {
      out.converged = true;
      break;
    }
    prev = f;
  }
  out.fitted = A * B.transpose();
  out.completed = fill_observed(m, out.fitted);
  return out;
}

Completion soft_impute(const RateMatrix& m, double lambda, int max_iter, double tol, bool debias) {
  m.validate();
  if (!(lambda >= 0.0)) throw std::invalid_argument("soft-impute lambda must be non-negative");
  const Eigen::MatrixXd w = mask_matrix(m.observed);
  const Eigen::MatrixXd xo = project(m.values, w);
  const Eigen::MatrixXd wc = (1.0 - w.array()).matrix();

  Completion out;
  Shrunk z{Eigen::MatrixXd::Zero(m.rows(), m.cols()), {}, {}, {}};
  for (int it = 0; it < max_iter; ++it) {
    Shrunk next = shrink(xo + z.value.cwiseProduct(wc), lambda);
    const double change = (next.value - z.value).squaredNorm();
    const double scale = z.value.squaredNorm();
    z = std::move(next);
    out.objective.push_back(0.5 * project(m.values - z.value, w).squaredNorm() + lambda * z.d.sum());
    out.iterations = it + 1;
    if (change <= tol * std::max(scale, 1e-300) || (scale == 0.0 && z.d.size() == 0)) {
      out.converged = true;
      break;
    }
  }
  out.fitted = z.value;
  if (debias && z.d.size() > 0) {
    const Eigen::Index r = z.d.size();
    const Eigen::Index n_obs = m.observed.count();
    Eigen::MatrixXd design(n_obs, r);
    Eigen::VectorXd target(n_obs);
    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index t = 0; t < m.cols(); ++t)
        if (m.observed(i, t)) {
          for (Eigen::Index k = 0; k < r; ++k) design(row, k) = z.U(i, k) * z.V(t, k);
          target(row++) = m.values(i, t);
        }
    const Eigen::VectorXd d = design.colPivHouseholderQr().solve(target);
    out.fitted = z.U * d.asDiagonal() * z.V.transpose();
  }
  out.completed = fill_observed(m, out.fitted);
  return out;
}

Completion svt(const RateMatrix& m, double threshold, double step, int max_iter, double tol) {
  m.validate();
  if (!(threshold > 0.0) || !(step > 0.0)) throw std::invalid_argument("SVT threshold and step must be positive");
  const Eigen::MatrixXd w = mask_matrix(m.observed);
  const Eigen::MatrixXd xo = project(m.values, w);
  const double norm_obs = xo.norm();
  Completion out;
  if (norm_obs == 0.0) {
    out.fitted = Eigen::MatrixXd::Zero(m.rows(), m.cols());
    out.completed = fill_observed(m, out.fitted);
    out.converged = true;
    return out;
  }
  const double spectral = Eigen::JacobiSVD<Eigen::MatrixXd>(xo).singularValues()(0);
  const double k0 = std::ceil(threshold / (step * spectral));
  Eigen::MatrixXd Y = k0 * step * xo;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  double prev = std::numeric_limits<double>::infinity();
  int growth = 0;
  for (int it = 0; it < max_iter; ++it) {
    X = shrink(Y, threshold).value;
    const Eigen::MatrixXd resid = project(m.values - X, w);
    const double r = resid.norm() / norm_obs;
    out.objective.push_back(r);
    out.iterations = it + 1;
    if (!std::isfinite(r)) throw BaselineError("SVT diverged: non-finite residual at iteration " + std::to_string(it + 1));
    growth = r > prev ? growth + 1 : 0;
    if (growth >= 50)
      throw BaselineError("SVT diverged: observed residual grew for 50 consecutive iterations (step too large?)");
    prev = r;
    if (r < tol) {
      out.converged = true;
      break;
    }
    Y += step * resid;
  }
  out.fitted = X;
  out.completed = fill_observed(m, X);
  return out;
}

void two_way_fit(const RateMatrix& m, Eigen::VectorXd& row, Eigen::VectorXd& col, int max_iter, double tol) {
  const Eigen::Index N = m.rows(), T = m.cols();
  if (row.size() != N) row = Eigen::VectorXd::Zero(N);
  if (col.size() != T) col = Eigen::VectorXd::Zero(T);
  for (int it = 0; it < max_iter; ++it) {
    double delta = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      double s = 0.0, n = 0.0;
      for (Eigen::Index t = 0; t < T; ++t)
        if (m.observed(i, t)) s += m.values(i, t) - col(t), n += 1.0;
      const double v = n > 0.0 ? s / n : row(i);
      delta = std::max(delta, std::abs(v - row(i)));
      row(i) = v;
    }
    for (Eigen::Index t = 0; t < T; ++t) {
      double s = 0.0, n = 0.0;
      for (Eigen::Index i = 0; i < N; ++i)
        if (m.observed(i, t)) s += m.values(i, t) - row(i), n += 1.0;
      const double v = n > 0.0 ? s / n : col(t);
      delta = std::max(delta, std::abs(v - col(t)));
      col(t) = v;
    }
    const double shift = col.mean();
    col.array() -= shift;
    row.array() += shift;
    const double scale = std::max(1.0, row.cwiseAbs().maxCoeff());
    if (delta <= tol * scale) break;
  }
}

FixedEffectCompletion nuclear_fe(const RateMatrix& m, double lambda, int max_iter, double tol) {
  require_coverage(m);
  if (!(lambda >= 0.0)) throw std::invalid_argument("nuclear-norm lambda must be non-negative");
  const Eigen::MatrixXd w = mask_matrix(m.observed);
  const Eigen::MatrixXd wc = (1.0 - w.array()).matrix();
  FixedEffectCompletion out;
  Eigen::VectorXd row, col;
  two_way_fit(m, row, col);
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  RateMatrix resid{m.values, m.observed};
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd fe = row.replicate(1, m.cols()) + col.transpose().replicate(m.rows(), 1);
    Shrunk next = shrink(project(m.values - fe, w) + L.cwiseProduct(wc), lambda);
    const double change = (next.value - L).squaredNorm();
    const double scale = L.squaredNorm();
    L = std::move(next.value);
    resid.values = m.values - L;
    Eigen::VectorXd row_old = row, col_old = col;
    two_way_fit(resid, row, col);
    const double fe_change = (row - row_old).squaredNorm() + (col - col_old).squaredNorm();
    out.objective.push_back(0.5 * project(m.values - fe - L, w).squaredNorm() + lambda * next.d.sum());
    out.iterations = it + 1;
    const double fe_scale = row.squaredNorm() + col.squaredNorm();
    if (change <= tol * std::max(scale, 1e-300) && fe_change <= tol * std::max(fe_scale, 1e-300)) {
      out.converged = true;
      break;
    }
    if (scale == 0.0 && change == 0.0 && fe_change <= tol * std::max(fe_scale, 1e-300)) {
      out.converged = true;
      break;
    }
  }
  out.row_effects = row;
  out.col_effects = col;
  out.low_rank = L;
  out.fitted = row.replicate(1, m.cols()) + col.transpose().replicate(m.rows(), 1) + L;
  out.completed = fill_observed(m, out.fitted);
  return out;
}

double cv_tune(const Completer& method, const RateMatrix& m, const std::vector<double>& grid, int folds,
               std::mt19937_64& rng, bool larger_is_stronger) {
  if (grid.empty()) throw std::invalid_argument("cross-validation grid is empty");
  for (double g : grid)
    if (!std::isfinite(g)) throw std::invalid_argument("cross-validation grid has a non-finite value");
  if (folds < 2) throw std::invalid_argument("cross-validation needs at least 2 folds");
  m.validate();
  std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index t = 0; t < m.cols(); ++t)
      if (m.observed(i, t)) cells.emplace_back(i, t);
  if (static_cast<int>(cells.size()) < folds) throw std::invalid_argument("fewer observed entries than folds");
  if (grid.size() == 1) return grid.front();
  std::shuffle(cells.begin(), cells.end(), rng);

  std::vector<double> order(grid);
  std::sort(order.begin(), order.end());
  if (larger_is_stronger) std::reverse(order.begin(), order.end());

  double best_value = order.front();
  double best_rmse = std::numeric_limits<double>::infinity();
  for (double value : order) {
    double total = 0.0;
    int used = 0;
    for (int f = 0; f < folds; ++f) {
      RateMatrix train = m;
      for (std::size_t c = f; c < cells.size(); c += folds) train.observed(cells[c].first, cells[c].second) = false;
      Eigen::MatrixXd fit;
      try {
        fit = method(train, value);
      } catch (const BaselineError&) {
        continue;
      } catch (const std::invalid_argument&) {
        continue;
      }
      double sse = 0.0, n = 0.0;
      for (std::size_t c = f; c < cells.size(); c += folds) {
        const double r = fit(cells[c].first, cells[c].second) - m.values(cells[c].first, cells[c].second);
        sse += r * r;
        n += 1.0;
      }
      total += std::sqrt(sse / n);
      ++used;
    }
    const double rmse = used > 0 ? total / used : std::numeric_limits<double>::infinity();
    if (rmse < best_rmse * (1.0 - 1e-12)) {
      best_rmse = rmse;
      best_value = value;
    }
  }
  return best_value;
}

}  // namespace stmc
