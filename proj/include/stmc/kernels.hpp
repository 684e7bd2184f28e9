#pragma once

// Data-parallel inner loops of the likelihood. Each kernel has a scalar
// reference and, on x86-64, an AVX2/FMA variant. The variant is chosen once at
// startup from CPU features; STMC_SIMD=scalar|avx2 overrides the choice.
//
// Grids are row-major N x T. Factor matrices are row-major K x N (U) and
// K x T (V).

#include <cstddef>
#include <string_view>

namespace stmc::kernels {

enum class Backend { Scalar, Avx2 };

struct NegBinSums {
  double value;   // sum_c w_c (y_c eta_c - (y_c + phi) log(phi + mu_c))
  double d_phi;   // sum_c w_c (-log(phi + mu_c) - (y_c + phi) / (phi + mu_c))
};

struct Table {
  void (*linear_predictor)(const double* row_base, const double* col_base, const double* offset, const double* U,
                           const double* V, std::size_t n, std::size_t t, std::size_t k, double* eta);
  NegBinSums (*negbin_cells)(const double* eta, const double* y, const double* w, std::size_t cells, double phi,
                             double* resid);
  void (*low_rank_backprop)(const double* resid, const double* U, const double* V, std::size_t n, std::size_t t,
                            std::size_t k, double* d_row, double* d_col, double* dU, double* dV);
  void (*exp_array)(const double* x, double* out, std::size_t n);
  void (*log_array)(const double* x, double* out, std::size_t n);
};

bool available(Backend b);
/// Throws std::invalid_argument if the backend is not available.
void set_backend(Backend b);
Backend active_backend();
std::string_view backend_name(Backend b);

const Table& table();
const Table& table(Backend b);

// eta[i,t] = row_base[i] + col_base[t] + offset[i,t] + sum_k U[k,i] V[k,t]
inline void linear_predictor(const double* row_base, const double* col_base, const double* offset, const double* U,
                             const double* V, std::size_t n, std::size_t t, std::size_t k, double* eta) {
  table().linear_predictor(row_base, col_base, offset, U, V, n, t, k, eta);
}

// Per-cell NB2 terms that depend on the linear predictor. resid[c] receives
// w_c * d/d eta_c of the log pmf. Cells with w_c = 0 contribute nothing.
inline NegBinSums negbin_cells(const double* eta, const double* y, const double* w, std::size_t cells, double phi,
                               double* resid) {
  return table().negbin_cells(eta, y, w, cells, phi, resid);
}

// Accumulates (+=) row sums, column sums, dU[k,i] = sum_t R[i,t] V[k,t] and
// dV[k,t] = sum_i R[i,t] U[k,i].
inline void low_rank_backprop(const double* resid, const double* U, const double* V, std::size_t n, std::size_t t,
                              std::size_t k, double* d_row, double* d_col, double* dU, double* dV) {
  table().low_rank_backprop(resid, U, V, n, t, k, d_row, d_col, dU, dV);
}

}  // namespace stmc::kernels
