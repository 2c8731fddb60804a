// SPDX-License-Identifier: Apache-2.0
//
// Test-only step-by-step LSTM reference. Plain nested loops, no production
// kernels, sequential summation: an independent path the vectorized
// implementation is checked against.

#pragma once

#include <cmath>
#include <vector>

#include "averify/nn.hpp"
#include "averify/tensor.hpp"

namespace averify::testing {

inline std::vector<double> lstm_oracle_final_h(const nn::LstmParams& params,
                                               const Tensor2& inputs,
                                               std::size_t true_length) {
  const std::size_t H = params.hidden_dim;
  const std::size_t D = params.input_dim;
  std::vector<double> h(H, 0.0), c(H, 0.0);

  const auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };

  for (std::size_t t = 0; t < true_length; ++t) {
    std::vector<double> pre(4 * H, 0.0);
    for (std::size_t j = 0; j < 4 * H; ++j) {
      double s = params.bias.data[j];
      for (std::size_t k = 0; k < D; ++k)
        s += params.w_input.at(j, k) * inputs.at(t, k);
      for (std::size_t k = 0; k < H; ++k)
        s += params.w_recur.at(j, k) * h[k];
      pre[j] = s;
    }
    std::vector<double> c_next(H), h_next(H);
    for (std::size_t j = 0; j < H; ++j) {
      const double gi = sig(pre[j]);
      const double gf = sig(pre[H + j]);
      const double gg = std::tanh(pre[2 * H + j]);
      const double go = sig(pre[3 * H + j]);
      c_next[j] = gf * c[j] + gi * gg;
      h_next[j] = go * std::tanh(c_next[j]);
    }
    c = std::move(c_next);
    h = std::move(h_next);
  }
  return h;
}

}  // namespace averify::testing
