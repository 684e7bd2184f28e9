#include "backends.hpp"

#include <algorithm>
#include <cmath>

namespace stmc::kernels::scalar {

void linear_predictor(const double* row_base, const double* col_base, const double* offset, const double* U,
                      const double* V, std::size_t n, std::size_t t, std::size_t k, double* eta) {
  for (std::size_t i = 0; i < n; ++i) {
    double* e = eta + i * t;
    const double* o = offset + i * t;
    for (std::size_t s = 0; s < t; ++s) e[s] = row_base[i] + col_base[s] + o[s];
    for (std::size_t f = 0; f < k; ++f) {
      const double u = U[f * n + i];
      const double* v = V + f * t;
      for (std::size_t s = 0; s < t; ++s) e[s] += u * v[s];
    }
  }
}

NegBinSums negbin_cells(const double* eta, const double* y, const double* w, std::size_t cells, double phi,
                        double* resid) {
  const double log_phi = std::log(phi);
  const double inv_phi = 1.0 / phi;
  NegBinSums out{0.0, 0.0};
  for (std::size_t c = 0; c < cells; ++c) {
    const double d = eta[c] - log_phi;
    const double e = std::exp(-std::abs(d));
    const double inv = 1.0 / (1.0 + e);
    // s = mu / (phi + mu), sc = phi / (phi + mu)
    const double s = d >= 0.0 ? inv : e * inv;
    const double sc = d >= 0.0 ? e * inv : inv;
    const double log_phi_mu = std::max(eta[c], log_phi) + std::log(1.0 + e);
    const double yp = y[c] + phi;
    out.value += w[c] * (y[c] * eta[c] - yp * log_phi_mu);
    out.d_phi += w[c] * (-log_phi_mu - yp * sc * inv_phi);
    resid[c] = w[c] * (y[c] - yp * s);
  }
  return out;
}

void low_rank_backprop(const double* resid, const double* U, const double* V, std::size_t n, std::size_t t,
                       std::size_t k, double* d_row, double* d_col, double* dU, double* dV) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = resid + i * t;
    double rs = 0.0;
    for (std::size_t s = 0; s < t; ++s) {
      rs += r[s];
      d_col[s] += r[s];
    }
    d_row[i] += rs;
    for (std::size_t f = 0; f < k; ++f) {
      const double u = U[f * n + i];
      const double* v = V + f * t;
      double* dv = dV + f * t;
      double acc = 0.0;
      for (std::size_t s = 0; s < t; ++s) {
        acc += r[s] * v[s];
        dv[s] += r[s] * u;
      }
      dU[f * n + i] += acc;
    }
  }
}

void exp_array(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

void log_array(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(x[i]);
}

}  // namespace stmc::kernels::scalar
