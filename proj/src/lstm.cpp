// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "averify/kernels.hpp"
#include "averify/nn.hpp"

namespace averify::nn {

namespace {

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void fill_uniform(Tensor2& t, double bound, Rng& rng) {
  for (double& x : t.data) x = rng.uniform(-bound, bound);
}

}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

LstmParams make_lstm(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_input = Tensor2(4 * hidden_dim, input_dim);
  p.w_recur = Tensor2(4 * hidden_dim, hidden_dim);
  p.bias = Tensor2(1, 4 * hidden_dim);
  fill_uniform(p.w_input, xavier_bound(input_dim, hidden_dim), rng);
  fill_uniform(p.w_recur, xavier_bound(hidden_dim, hidden_dim), rng);
  for (std::size_t j = hidden_dim; j < 2 * hidden_dim; ++j) p.bias.data[j] = 1.0;
  return p;
}

std::vector<double> LstmCache::final_h() const {
  std::vector<double> out(h.cols, 0.0);
  if (true_length == 0) return out;
  const double* last = h.row(true_length - 1);
  out.assign(last, last + h.cols);
  return out;
}

LstmCache lstm_forward(const LstmParams& params, const Tensor2& inputs,
                       std::size_t true_length) {
  const std::size_t T = inputs.rows;
  const std::size_t H = params.hidden_dim;
  if (inputs.cols != params.input_dim)
    throw std::invalid_argument("lstm_forward: input dim mismatch");
  if (T == 0) throw std::invalid_argument("lstm_forward: empty input sequence");
  if (true_length > T)
    throw std::invalid_argument("lstm_forward: true_length exceeds sequence length");

  const auto& k = kernels::active_backend();

  LstmCache cache;
  cache.true_length = true_length;
  cache.inputs = inputs;
  cache.gate_i = Tensor2(T, H);
  cache.gate_f = Tensor2(T, H);
  cache.gate_g = Tensor2(T, H);
  cache.gate_o = Tensor2(T, H);
  cache.c = Tensor2(T, H);
  cache.tanh_c = Tensor2(T, H);
  cache.h = Tensor2(T, H);

  std::vector<double> pre(4 * H);
  const std::vector<double> zeros(H, 0.0);

  for (std::size_t t = 0; t < true_length; ++t) {
    const double* h_prev = (t == 0) ? zeros.data() : cache.h.row(t - 1);
    const double* c_prev = (t == 0) ? zeros.data() : cache.c.row(t - 1);

    // pre = W x_t + U h_{t-1} + b
    k.gemv(params.w_input.data.data(), 4 * H, params.input_dim, inputs.row(t),
           pre.data());
    std::vector<double> rec(4 * H, 0.0);
    k.gemv(params.w_recur.data.data(), 4 * H, H, h_prev, rec.data());
    for (std::size_t j = 0; j < 4 * H; ++j)
      pre[j] += rec[j] + params.bias.data[j];

    double* gi = cache.gate_i.row(t);
    double* gf = cache.gate_f.row(t);
    double* gg = cache.gate_g.row(t);
    double* go = cache.gate_o.row(t);
    for (std::size_t j = 0; j < H; ++j) {
      gi[j] = sigmoid(pre[j]);
      gf[j] = sigmoid(pre[H + j]);
      gg[j] = std::tanh(pre[2 * H + j]);
      go[j] = sigmoid(pre[3 * H + j]);
    }

    double* ct = cache.c.row(t);
    double* tct = cache.tanh_c.row(t);
    double* ht = cache.h.row(t);
    for (std::size_t j = 0; j < H; ++j) {
      ct[j] = gf[j] * c_prev[j] + gi[j] * gg[j];
      tct[j] = std::tanh(ct[j]);
      ht[j] = go[j] * tct[j];
    }
  }

  // Masked tail: carry the last real state forward unchanged.
  for (std::size_t t = true_length; t < T; ++t) {
    const double* h_prev = (t == 0) ? zeros.data() : cache.h.row(t - 1);
    const double* c_prev = (t == 0) ? zeros.data() : cache.c.row(t - 1);
    std::copy(h_prev, h_prev + H, cache.h.row(t));
    std::copy(c_prev, c_prev + H, cache.c.row(t));
  }

  return cache;
}

LstmGrads lstm_backward(const LstmParams& params, const LstmCache& cache,
                        std::span<const double> d_final_h) {
  const std::size_t H = params.hidden_dim;
  const std::size_t T = cache.inputs.rows;
  if (d_final_h.size() != H)
    throw std::invalid_argument("lstm_backward: upstream gradient dim mismatch");

  const auto& k = kernels::active_backend();

  LstmGrads g;
  g.d_w_input = Tensor2(4 * H, params.input_dim);
  g.d_w_recur = Tensor2(4 * H, H);
  g.d_bias = Tensor2(1, 4 * H);
  g.d_inputs = Tensor2(T, params.input_dim);

  if (cache.true_length == 0) return g;

  const std::vector<double> zeros(H, 0.0);
  std::vector<double> dh(d_final_h.begin(), d_final_h.end());
  std::vector<double> dc(H, 0.0);
  std::vector<double> da(4 * H);

  for (std::size_t t = cache.true_length; t-- > 0;) {
    const double* gi = cache.gate_i.row(t);
    const double* gf = cache.gate_f.row(t);
    const double* gg = cache.gate_g.row(t);
    const double* go = cache.gate_o.row(t);
    const double* tct = cache.tanh_c.row(t);
    const double* c_prev = (t == 0) ? zeros.data() : cache.c.row(t - 1);
    const double* h_prev = (t == 0) ? zeros.data() : cache.h.row(t - 1);

    // Through h_t = o.tanh(c_t), then c_t = f.c_{t-1} + i.g.
    for (std::size_t j = 0; j < H; ++j) {
      const double d_o = dh[j] * tct[j];
      dc[j] += dh[j] * go[j] * (1.0 - tct[j] * tct[j]);
      const double d_i = dc[j] * gg[j];
      const double d_f = dc[j] * c_prev[j];
      const double d_g = dc[j] * gi[j];
      da[j] = d_i * gi[j] * (1.0 - gi[j]);
      da[H + j] = d_f * gf[j] * (1.0 - gf[j]);
      da[2 * H + j] = d_g * (1.0 - gg[j] * gg[j]);
      da[3 * H + j] = d_o * go[j] * (1.0 - go[j]);
    }

    k.outer_acc(g.d_w_input.data.data(), da.data(), cache.inputs.row(t),
                4 * H, params.input_dim);
    k.outer_acc(g.d_w_recur.data.data(), da.data(), h_prev, 4 * H, H);
    k.axpy(1.0, da.data(), g.d_bias.data.data(), 4 * H);
    k.gemv_t_acc(params.w_input.data.data(), 4 * H, params.input_dim, da.data(),
                 g.d_inputs.row(t));

    // dh_{t-1} = U^T da; dc_{t-1} = dc_t . f_t
    std::fill(dh.begin(), dh.end(), 0.0);
    k.gemv_t_acc(params.w_recur.data.data(), 4 * H, H, da.data(), dh.data());
    for (std::size_t j = 0; j < H; ++j) dc[j] *= gf[j];
  }

  return g;
}

}  // namespace averify::nn
