#pragma once

#include "stmc/panel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <string>

namespace testing {

/// Poisson panel with rate `rate` per capita; units [0, n_treated) treated
/// from time index `start`.
inline stmc::PanelData toy_panel(Eigen::Index N, Eigen::Index T, std::uint64_t seed, Eigen::Index n_treated = 0,
                                 Eigen::Index start = 0, double rate = 0.01) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pop(200.0, 2000.0);
  stmc::PanelData p;
  p.counts.resize(N, T);
  p.populations.resize(N, T);
  p.treated = stmc::Mask::Constant(N, T, false);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double base = pop(rng);
    for (Eigen::Index t = 0; t < T; ++t) {
      p.populations(i, t) = std::round(base * (1.0 + 0.01 * static_cast<double>(t)));
      p.counts(i, t) = static_cast<double>(std::poisson_distribution<int>(rate * p.populations(i, t))(rng));
      p.treated(i, t) = i < n_treated && t >= start;
    }
    p.unit_ids.push_back("u" + std::to_string(i + 1));
    p.group_of_unit.push_back(i % 2 == 0 ? "east" : "west");
  }
  for (Eigen::Index t = 0; t < T; ++t) p.time_labels.push_back(2000 + static_cast<long>(t));
  return p;
}

/// Central finite-difference gradient.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd a = x, b = x;
    a(j) += h;
    b(j) -= h;
    g(j) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

}  // namespace testing
