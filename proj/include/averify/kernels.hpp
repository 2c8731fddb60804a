// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace averify::kernels {

/// Per-step Adam hyperparameters. bc1/bc2 are the precomputed bias
/// corrections 1/(1-beta1^t) and 1/(1-beta2^t) for the current step t.
struct AdamHp {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bc1;
  double bc2;
};

/// A kernel backend: the double-precision inner loops everything above the
/// tensor layer is built on. Every backend must produce bit-identical
/// results for identical inputs. Reductions use a fixed lane-blocked
/// accumulation order (four interleaved partial sums combined as
/// (s0+s2)+(s1+s3), then a sequential tail) and plain mul/add with no FMA,
/// so the scalar reference and the AVX2 variant round identically.
struct Backend {
  const char* name;

  // sum_i a[i]*b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y = A x, A row-major rows x cols
  void (*gemv)(const double* a, std::size_t rows, std::size_t cols,
               const double* x, double* y);
  // y += A^T x, A row-major rows x cols, x has rows elements
  void (*gemv_t_acc)(const double* a, std::size_t rows, std::size_t cols,
                     const double* x, double* y);
  // A += x y^T (rank-1 update)
  void (*outer_acc)(double* a, const double* x, const double* y,
                    std::size_t rows, std::size_t cols);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out += a[i]*b[i]
  void (*mul_acc)(double* out, const double* a, const double* b,
                  std::size_t n);
  // Bias-corrected Adam update of p with moments m, v and gradient g.
  void (*adam_update)(double* p, double* m, double* v, const double* g,
                      std::size_t n, const AdamHp& hp);
};

const Backend& scalar_backend();

/// AVX2 backend, or nullptr when the binary was built without it or the
/// CPU lacks support.
const Backend* avx2_backend();

/// Currently selected backend. Defaults to the widest available.
const Backend& active_backend();

/// Select "auto", "scalar" or "avx2". Throws std::invalid_argument for an
/// unknown or unavailable name.
void select_backend(std::string_view name);

/// Names accepted by select_backend on this machine.
std::vector<std::string> available_backends();

}  // namespace averify::kernels
