// Compiled with -mavx2 -mfma; only called after a runtime CPU check.

#include "backends.hpp"

#include <immintrin.h>

#include <cmath>

namespace stmc::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// Cephes-style exp: x = n ln2 + r, |r| <= ln2/2, exp(r) by a (2,3) Pade form.
inline __m256d exp_pd(__m256d x) {
  const __m256d hi = _mm256_set1_pd(708.0);
  const __m256d lo = _mm256_set1_pd(-708.0);
  x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93145751953125E-1), x);
  x = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212E-6), x);

  const __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_set1_pd(1.26177193074810590878E-4);
  px = _mm256_fmadd_pd(px, xx, _mm256_set1_pd(3.02994407707441961300E-2));
  px = _mm256_fmadd_pd(px, xx, _mm256_set1_pd(9.99999999999999999910E-1));
  px = _mm256_mul_pd(px, x);
  __m256d qx = _mm256_set1_pd(3.00198505138664455042E-6);
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.52448340349684104192E-3));
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.27265548208155028766E-1));
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.00000000000000000009E0));
  __m256d r = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  r = _mm256_fmadd_pd(_mm256_set1_pd(2.0), r, _mm256_set1_pd(1.0));

  // 2^n assembled in the exponent field.
  __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  n64 = _mm256_add_epi64(n64, _mm256_set1_epi64x(1023));
  __m256d scale = _mm256_castsi256_pd(_mm256_slli_epi64(n64, 52));
  return _mm256_mul_pd(r, scale);
}

// Cephes-style log for positive normal inputs.
inline __m256d log_pd(__m256d x) {
  const __m256i bits = _mm256_castpd_si256(x);
  const __m256i exp_bits = _mm256_and_si256(_mm256_srli_epi64(bits, 52), _mm256_set1_epi64x(0x7ff));
  const __m256i magic = _mm256_set1_epi64x(0x4330000000000000LL);  // 2^52
  __m256d e = _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(exp_bits, magic)), _mm256_set1_pd(4503599627370496.0));
  e = _mm256_sub_pd(e, _mm256_set1_pd(1022.0));
  // Mantissa in [0.5, 1).
  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(bits, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL)),
                                                  _mm256_set1_epi64x(0x3FE0000000000000LL)));
  const __m256d sqrth = _mm256_set1_pd(0.70710678118654752440);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d small = _mm256_cmp_pd(m, sqrth, _CMP_LT_OQ);
  // m < sqrt(1/2): e -= 1, f = 2m - 1; else f = m - 1
  e = _mm256_sub_pd(e, _mm256_and_pd(small, one));
  __m256d f = _mm256_sub_pd(_mm256_add_pd(m, _mm256_and_pd(small, m)), one);

  const __m256d z = _mm256_mul_pd(f, f);
  __m256d p = _mm256_set1_pd(1.01875663804580931796E-4);
  p = _mm256_fmadd_pd(p, f, _mm256_set1_pd(4.97494994976747001425E-1));
  p = _mm256_fmadd_pd(p, f, _mm256_set1_pd(4.70579119878881725854E0));
  p = _mm256_fmadd_pd(p, f, _mm256_set1_pd(1.44989225341610930846E1));
  p = _mm256_fmadd_pd(p, f, _mm256_set1_pd(1.79368678507819816313E1));
  p = _mm256_fmadd_pd(p, f, _mm256_set1_pd(7.70838733755885391666E0));
  __m256d q = _mm256_add_pd(f, _mm256_set1_pd(1.12873587189167450590E1));
  q = _mm256_fmadd_pd(q, f, _mm256_set1_pd(4.52279145837532221105E1));
  q = _mm256_fmadd_pd(q, f, _mm256_set1_pd(8.29875266912776603211E1));
  q = _mm256_fmadd_pd(q, f, _mm256_set1_pd(7.11544750618563894466E1));
  q = _mm256_fmadd_pd(q, f, _mm256_set1_pd(2.31251620126765340583E1));
  __m256d y = _mm256_mul_pd(_mm256_mul_pd(f, z), _mm256_div_pd(p, q));
  y = _mm256_fnmadd_pd(e, _mm256_set1_pd(2.121944400546905827679E-4), y);
  y = _mm256_fnmadd_pd(_mm256_set1_pd(0.5), z, y);
  __m256d r = _mm256_add_pd(f, y);
  return _mm256_fmadd_pd(e, _mm256_set1_pd(0.693359375), r);
}

}  // namespace

void linear_predictor(const double* row_base, const double* col_base, const double* offset, const double* U,
                      const double* V, std::size_t n, std::size_t t, std::size_t k, double* eta) {
  const std::size_t tv = t & ~std::size_t{3};
  for (std::size_t i = 0; i < n; ++i) {
    double* e = eta + i * t;
    const double* o = offset + i * t;
    const __m256d rb = _mm256_set1_pd(row_base[i]);
    std::size_t s = 0;
    for (; s < tv; s += 4) {
      __m256d acc = _mm256_add_pd(_mm256_add_pd(rb, _mm256_loadu_pd(col_base + s)), _mm256_loadu_pd(o + s));
      for (std::size_t f = 0; f < k; ++f)
        acc = _mm256_fmadd_pd(_mm256_set1_pd(U[f * n + i]), _mm256_loadu_pd(V + f * t + s), acc);
      _mm256_storeu_pd(e + s, acc);
    }
    for (; s < t; ++s) {
      double acc = row_base[i] + col_base[s] + o[s];
      for (std::size_t f = 0; f < k; ++f) acc = std::fma(U[f * n + i], V[f * t + s], acc);
      e[s] = acc;
    }
  }
}

NegBinSums negbin_cells(const double* eta, const double* y, const double* w, std::size_t cells, double phi,
                        double* resid) {
  const double log_phi_s = std::log(phi);
  const __m256d log_phi = _mm256_set1_pd(log_phi_s);
  const __m256d phi_v = _mm256_set1_pd(phi);
  const __m256d inv_phi = _mm256_set1_pd(1.0 / phi);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  __m256d acc_v = _mm256_setzero_pd();
  __m256d acc_d = _mm256_setzero_pd();
  const std::size_t cv = cells & ~std::size_t{3};
  std::size_t c = 0;
  for (; c < cv; c += 4) {
    const __m256d et = _mm256_loadu_pd(eta + c);
    const __m256d yy = _mm256_loadu_pd(y + c);
    const __m256d ww = _mm256_loadu_pd(w + c);
    const __m256d d = _mm256_sub_pd(et, log_phi);
    const __m256d e = exp_pd(_mm256_or_pd(d, sign_mask));  // exp(-|d|)
    const __m256d inv = _mm256_div_pd(one, _mm256_add_pd(one, e));
    const __m256d ei = _mm256_mul_pd(e, inv);
    const __m256d pos = _mm256_cmp_pd(d, _mm256_setzero_pd(), _CMP_GE_OQ);
    const __m256d s = _mm256_blendv_pd(ei, inv, pos);
    const __m256d sc = _mm256_blendv_pd(inv, ei, pos);
    const __m256d lpm = _mm256_add_pd(_mm256_max_pd(et, log_phi), log_pd(_mm256_add_pd(one, e)));
    const __m256d yp = _mm256_add_pd(yy, phi_v);
    const __m256d term = _mm256_fnmadd_pd(yp, lpm, _mm256_mul_pd(yy, et));
    acc_v = _mm256_fmadd_pd(ww, term, acc_v);
    const __m256d dterm = _mm256_fmadd_pd(_mm256_mul_pd(yp, sc), _mm256_sub_pd(_mm256_setzero_pd(), inv_phi),
                                          _mm256_sub_pd(_mm256_setzero_pd(), lpm));
    acc_d = _mm256_fmadd_pd(ww, dterm, acc_d);
    _mm256_storeu_pd(resid + c, _mm256_mul_pd(ww, _mm256_fnmadd_pd(yp, s, yy)));
  }
  NegBinSums out{hsum(acc_v), hsum(acc_d)};
  if (c < cells) {
    auto tail = scalar::negbin_cells(eta + c, y + c, w + c, cells - c, phi, resid + c);
    out.value += tail.value;
    out.d_phi += tail.d_phi;
  }
  return out;
}

void low_rank_backprop(const double* resid, const double* U, const double* V, std::size_t n, std::size_t t,
                       std::size_t k, double* d_row, double* d_col, double* dU, double* dV) {
  const std::size_t tv = t & ~std::size_t{3};
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = resid + i * t;
    __m256d rs = _mm256_setzero_pd();
    std::size_t s = 0;
    for (; s < tv; s += 4) {
      const __m256d rv = _mm256_loadu_pd(r + s);
      rs = _mm256_add_pd(rs, rv);
      _mm256_storeu_pd(d_col + s, _mm256_add_pd(_mm256_loadu_pd(d_col + s), rv));
    }
    double rsum = hsum(rs);
    for (; s < t; ++s) {
      rsum += r[s];
      d_col[s] += r[s];
    }
    d_row[i] += rsum;

    for (std::size_t f = 0; f < k; ++f) {
      const __m256d u = _mm256_set1_pd(U[f * n + i]);
      const double* v = V + f * t;
      double* dv = dV + f * t;
      __m256d acc = _mm256_setzero_pd();
      s = 0;
      for (; s < tv; s += 4) {
        const __m256d rv = _mm256_loadu_pd(r + s);
        acc = _mm256_fmadd_pd(rv, _mm256_loadu_pd(v + s), acc);
        _mm256_storeu_pd(dv + s, _mm256_fmadd_pd(rv, u, _mm256_loadu_pd(dv + s)));
      }
      double a = hsum(acc);
      for (; s < t; ++s) {
        a += r[s] * v[s];
        dv[s] += r[s] * U[f * n + i];
      }
      dU[f * n + i] += a;
    }
  }
}

void exp_array(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp_pd(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = std::exp(x[i]);
}

void log_array(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, log_pd(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = std::log(x[i]);
}

}  // namespace stmc::kernels::avx2
