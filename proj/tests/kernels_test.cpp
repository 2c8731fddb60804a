// SPDX-License-Identifier: Apache-2.0
//
// Backend equivalence: every SIMD variant must reproduce the scalar
// reference bit for bit, including ragged tails and the Adam update.

#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "averify/kernels.hpp"
#include "averify/rng.hpp"

using namespace averify;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

std::vector<const kernels::Backend*> all_backends() {
  std::vector<const kernels::Backend*> backends = {&kernels::scalar_backend()};
  if (const kernels::Backend* avx2 = kernels::avx2_backend())
    backends.push_back(avx2);
  return backends;
}

}  // namespace

TEST_CASE("dot matches a plain sequential sum within rounding") {
  Rng rng(11);
  for (std::size_t n : {1u, 3u, 4u, 7u, 64u, 129u}) {
    const auto a = random_vec(n, rng);
    const auto b = random_vec(n, rng);
    double expect = 0.0;
    for (std::size_t i = 0; i < n; ++i) expect += a[i] * b[i];
    const double got = kernels::scalar_backend().dot(a.data(), b.data(), n);
    CHECK(got == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("backends agree bitwise on every kernel") {
  const auto backends = all_backends();
  INFO("backends available: " << backends.size());

  Rng rng(1234);
  for (std::size_t trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng.below(67);
    const std::size_t rows = 1 + rng.below(17);
    const std::size_t cols = 1 + rng.below(23);

    const auto a = random_vec(n, rng);
    const auto b = random_vec(n, rng);
    const auto mat = random_vec(rows * cols, rng);
    const auto x_cols = random_vec(cols, rng);
    const auto x_rows = random_vec(rows, rng);

    std::vector<double> dots, axpys, muls, gemvs, gemvts, outers;
    std::vector<std::vector<double>> adams;
    for (const kernels::Backend* backend : backends) {
      dots.push_back(backend->dot(a.data(), b.data(), n));

      auto y = b;
      backend->axpy(0.37, a.data(), y.data(), n);
      axpys.insert(axpys.end(), y.begin(), y.end());

      auto m = b;
      backend->mul_acc(m.data(), a.data(), b.data(), n);
      muls.insert(muls.end(), m.begin(), m.end());

      std::vector<double> gv(rows);
      backend->gemv(mat.data(), rows, cols, x_cols.data(), gv.data());
      gemvs.insert(gemvs.end(), gv.begin(), gv.end());

      std::vector<double> gt(cols, 0.5);
      backend->gemv_t_acc(mat.data(), rows, cols, x_rows.data(), gt.data());
      gemvts.insert(gemvts.end(), gt.begin(), gt.end());

      auto acc = mat;
      backend->outer_acc(acc.data(), x_rows.data(), x_cols.data(), rows, cols);
      outers.insert(outers.end(), acc.begin(), acc.end());

      kernels::AdamHp hp{1e-3, 0.9, 0.999, 1e-8, 1.0 / (1.0 - 0.9),
                         1.0 / (1.0 - 0.999)};
      std::vector<double> p = a, mm(n, 0.01), vv(n, 0.02);
      backend->adam_update(p.data(), mm.data(), vv.data(), b.data(), n, hp);
      std::vector<double> packed;
      packed.insert(packed.end(), p.begin(), p.end());
      packed.insert(packed.end(), mm.begin(), mm.end());
      packed.insert(packed.end(), vv.begin(), vv.end());
      adams.push_back(std::move(packed));
    }

    // Bitwise equality between backend 0 (scalar) and the rest.
    for (std::size_t bi = 1; bi < backends.size(); ++bi) {
      CHECK(dots[bi] == dots[0]);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(axpys[bi * n + i] == axpys[i]);
        CHECK(muls[bi * n + i] == muls[i]);
      }
      for (std::size_t i = 0; i < rows; ++i) CHECK(gemvs[bi * rows + i] == gemvs[i]);
      for (std::size_t i = 0; i < cols; ++i) CHECK(gemvts[bi * cols + i] == gemvts[i]);
      for (std::size_t i = 0; i < rows * cols; ++i)
        CHECK(outers[bi * rows * cols + i] == outers[i]);
      REQUIRE(adams[bi].size() == adams[0].size());
      for (std::size_t i = 0; i < adams[0].size(); ++i)
        CHECK(adams[bi][i] == adams[0][i]);
    }
  }
}

TEST_CASE("gemv equals the naive triple loop") {
  Rng rng(7);
  const std::size_t rows = 9, cols = 13;
  const auto mat = random_vec(rows * cols, rng);
  const auto x = random_vec(cols, rng);
  std::vector<double> y(rows);
  kernels::active_backend().gemv(mat.data(), rows, cols, x.data(), y.data());
  for (std::size_t r = 0; r < rows; ++r) {
    double expect = 0.0;
    for (std::size_t c = 0; c < cols; ++c) expect += mat[r * cols + c] * x[c];
    CHECK(y[r] == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("backend selection") {
  kernels::select_backend("scalar");
  CHECK(std::string(kernels::active_backend().name) == "scalar");
  CHECK_THROWS_AS(kernels::select_backend("sse9"), std::invalid_argument);
  kernels::select_backend("auto");
  if (kernels::avx2_backend() != nullptr)
    CHECK(std::string(kernels::active_backend().name) == "avx2");
}
