// SPDX-License-Identifier: Apache-2.0
//
// Scalar reference kernels. These pin the numeric contract: the AVX2
// variants must reproduce every result of this file bit for bit, so the
// reduction order here deliberately mirrors a 4-lane vector register.

#include "averify/kernels.hpp"

#include <cmath>

namespace averify::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t{3};
  for (; i < n4; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  // (s0+s2)+(s1+s3) matches the AVX2 128-bit fold.
  double s = (s0 + s2) + (s1 + s3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemv_scalar(const double* a, std::size_t rows, std::size_t cols,
                 const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_scalar(a + r * cols, x, cols);
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_t_acc_scalar(const double* a, std::size_t rows, std::size_t cols,
                       const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(x[r], a + r * cols, y, cols);
}

void outer_acc_scalar(double* a, const double* x, const double* y,
                      std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(x[r], y, a + r * cols, cols);
}

void mul_acc_scalar(double* out, const double* a, const double* b,
                    std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

void adam_update_scalar(double* p, double* m, double* v, const double* g,
                        std::size_t n, const AdamHp& hp) {
  const double omb1 = 1.0 - hp.beta1;
  const double omb2 = 1.0 - hp.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = hp.beta1 * m[i] + omb1 * g[i];
    v[i] = hp.beta2 * v[i] + omb2 * (g[i] * g[i]);
    const double mhat = m[i] * hp.bc1;
    const double vhat = v[i] * hp.bc2;
    p[i] -= (hp.lr * mhat) / (std::sqrt(vhat) + hp.eps);
  }
}

}  // namespace

const Backend& scalar_backend() {
  static const Backend backend = {
      "scalar",        dot_scalar,     gemv_scalar, gemv_t_acc_scalar,
      outer_acc_scalar, axpy_scalar,   mul_acc_scalar, adam_update_scalar,
  };
  return backend;
}

}  // namespace averify::kernels
