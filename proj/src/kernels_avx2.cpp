// SPDX-License-Identifier: Apache-2.0
//
// AVX2 kernels. Compiled with -mavx2 only; callers reach this file through
// the runtime dispatcher. Bit-compatibility with the scalar reference is a
// hard requirement: mul/add stay separate (no FMA) and the horizontal dot
// fold is (s0+s2)+(s1+s3), the same order the scalar loop uses.

#include "averify/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace averify::kernels {
namespace {

inline double hfold(__m256d acc) {
  const __m128d lo = _mm256_castpd256_pd128(acc);   // s0, s1
  const __m128d hi = _mm256_extractf128_pd(acc, 1); // s2, s3
  const __m128d pair = _mm_add_pd(lo, hi);          // s0+s2, s1+s3
  return _mm_cvtsd_f64(pair) + _mm_cvtsd_f64(_mm_unpackhi_pd(pair, pair));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t{3};
  for (; i < n4; i += 4) {
    const __m256d va = _mm256_loadu_pd(a + i);
    const __m256d vb = _mm256_loadu_pd(b + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
  }
  double s = hfold(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemv_avx2(const double* a, std::size_t rows, std::size_t cols,
               const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_avx2(a + r * cols, x, cols);
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t{3};
  for (; i < n4; i += 4) {
    const __m256d vy = _mm256_loadu_pd(y + i);
    const __m256d vx = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, vx)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_t_acc_avx2(const double* a, std::size_t rows, std::size_t cols,
                     const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) axpy_avx2(x[r], a + r * cols, y, cols);
}

void outer_acc_avx2(double* a, const double* x, const double* y,
                    std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy_avx2(x[r], y, a + r * cols, cols);
}

void mul_acc_avx2(double* out, const double* a, const double* b,
                  std::size_t n) {
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t{3};
  for (; i < n4; i += 4) {
    const __m256d vo = _mm256_loadu_pd(out + i);
    const __m256d va = _mm256_loadu_pd(a + i);
    const __m256d vb = _mm256_loadu_pd(b + i);
    _mm256_storeu_pd(out + i, _mm256_add_pd(vo, _mm256_mul_pd(va, vb)));
  }
  for (; i < n; ++i) out[i] += a[i] * b[i];
}

void adam_update_avx2(double* p, double* m, double* v, const double* g,
                      std::size_t n, const AdamHp& hp) {
  const __m256d vb1 = _mm256_set1_pd(hp.beta1);
  const __m256d vb2 = _mm256_set1_pd(hp.beta2);
  const __m256d vomb1 = _mm256_set1_pd(1.0 - hp.beta1);
  const __m256d vomb2 = _mm256_set1_pd(1.0 - hp.beta2);
  const __m256d vbc1 = _mm256_set1_pd(hp.bc1);
  const __m256d vbc2 = _mm256_set1_pd(hp.bc2);
  const __m256d vlr = _mm256_set1_pd(hp.lr);
  const __m256d veps = _mm256_set1_pd(hp.eps);
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t{3};
  for (; i < n4; i += 4) {
    const __m256d vg = _mm256_loadu_pd(g + i);
    __m256d vm = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    vm = _mm256_add_pd(_mm256_mul_pd(vb1, vm), _mm256_mul_pd(vomb1, vg));
    vv = _mm256_add_pd(_mm256_mul_pd(vb2, vv),
                       _mm256_mul_pd(vomb2, _mm256_mul_pd(vg, vg)));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_mul_pd(vm, vbc1);
    const __m256d vhat = _mm256_mul_pd(vv, vbc2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
  }
  const double omb1 = 1.0 - hp.beta1;
  const double omb2 = 1.0 - hp.beta2;
  for (; i < n; ++i) {
    m[i] = hp.beta1 * m[i] + omb1 * g[i];
    v[i] = hp.beta2 * v[i] + omb2 * (g[i] * g[i]);
    const double mhat = m[i] * hp.bc1;
    const double vhat = v[i] * hp.bc2;
    p[i] -= (hp.lr * mhat) / (std::sqrt(vhat) + hp.eps);
  }
}

}  // namespace

const Backend* avx2_backend_impl() {
  static const Backend backend = {
      "avx2",         dot_avx2,     gemv_avx2, gemv_t_acc_avx2,
      outer_acc_avx2, axpy_avx2,    mul_acc_avx2, adam_update_avx2,
  };
  return &backend;
}

}  // namespace averify::kernels
