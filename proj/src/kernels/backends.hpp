#pragma once

#include "stmc/kernels.hpp"

namespace stmc::kernels {

namespace scalar {
void linear_predictor(const double*, const double*, const double*, const double*, const double*, std::size_t,
                      std::size_t, std::size_t, double*);
NegBinSums negbin_cells(const double*, const double*, const double*, std::size_t, double, double*);
void low_rank_backprop(const double*, const double*, const double*, std::size_t, std::size_t, std::size_t, double*,
                       double*, double*, double*);
void exp_array(const double*, double*, std::size_t);
void log_array(const double*, double*, std::size_t);
}  // namespace scalar

#ifdef STMC_BUILD_AVX2
namespace avx2 {
void linear_predictor(const double*, const double*, const double*, const double*, const double*, std::size_t,
                      std::size_t, std::size_t, double*);
NegBinSums negbin_cells(const double*, const double*, const double*, std::size_t, double, double*);
void low_rank_backprop(const double*, const double*, const double*, std::size_t, std::size_t, std::size_t, double*,
                       double*, double*, double*);
void exp_array(const double*, double*, std::size_t);
void log_array(const double*, double*, std::size_t);
}  // namespace avx2
#endif

}  // namespace stmc::kernels
