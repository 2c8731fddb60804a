// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "averify/rng.hpp"
#include "averify/tensor.hpp"

namespace averify::nn {

// Gate packing order inside every 4H-stacked LSTM tensor. Fixed so that
// checkpoints stay readable across versions: rows [0,H) input gate,
// [H,2H) forget gate, [2H,3H) cell candidate, [3H,4H) output gate.
inline constexpr const char* kGateOrder = "ifgo";

double sigmoid(double x);

// ---------------------------------------------------------------------------
// LSTM cell with full backpropagation through time.
//
// Per step: i = sig(Wi x + Ui h' + bi), f = sig(Wf x + Uf h' + bf),
// g = tanh(Wg x + Ug h' + bg), o = sig(Wo x + Uo h' + bo),
// c = f.c' + i.g, h = o.tanh(c), with h0 = c0 = 0. No peepholes.
// ---------------------------------------------------------------------------

struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Tensor2 w_input;  // 4H x input_dim
  Tensor2 w_recur;  // 4H x H
  Tensor2 bias;     // 1 x 4H, forget slice initialized to 1.0
};

/// Seeded Xavier-uniform init, bound sqrt(6/(fan_in+fan_out)) per gate
/// block; biases zero except the forget slice at 1.0.
LstmParams make_lstm(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);

/// Everything the backward pass needs, plus the full h/c trajectories.
/// Rows at t >= true_length carry the last real state forward unchanged,
/// so h.row(T-1) is always the sequence representation.
struct LstmCache {
  std::size_t true_length = 0;
  Tensor2 inputs;  // T x d, copy of the fed sequence
  Tensor2 gate_i, gate_f, gate_g, gate_o;  // T x H, post-activation
  Tensor2 c, tanh_c, h;                    // T x H
  std::vector<double> final_h() const;     // zero vector when true_length = 0
};

LstmCache lstm_forward(const LstmParams& params, const Tensor2& inputs,
                       std::size_t true_length);

struct LstmGrads {
  Tensor2 d_w_input;
  Tensor2 d_w_recur;
  Tensor2 d_bias;
  Tensor2 d_inputs;  // T x d, zero at masked positions
};

/// Exact reverse-mode gradients of lstm_forward for an upstream gradient
/// on h at true_length. Masked steps contribute nothing.
LstmGrads lstm_backward(const LstmParams& params, const LstmCache& cache,
                        std::span<const double> d_final_h);

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

enum class Activation { kIdentity, kTanh, kRelu, kSigmoid };

struct DenseParams {
  Tensor2 weight;  // out x in
  Tensor2 bias;    // 1 x out
  Activation activation = Activation::kIdentity;
};

DenseParams make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng);

struct DenseCache {
  std::vector<double> x;  // input
  std::vector<double> z;  // pre-activation
  std::vector<double> y;  // output
};

DenseCache dense_apply(const DenseParams& params, std::span<const double> x);

struct DenseGrads {
  Tensor2 d_weight;
  Tensor2 d_bias;
  std::vector<double> d_x;
};

DenseGrads dense_backward(const DenseParams& params, const DenseCache& cache,
                          std::span<const double> d_y);

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

struct BceResult {
  double loss;
  double d_p;  // dloss/dp; zero where the clamp binds
};

/// Binary cross-entropy on a probability p clamped to [1e-7, 1-1e-7].
BceResult bce_loss(double p, int label);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// A named view of one trainable tensor. Parameter registries (model ->
/// optimizer/grad-check) are ordered lists of these; order is part of the
/// contract.
struct ParamRef {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(const std::vector<ParamRef>& params, AdamConfig config);

  /// One bias-corrected update. Returns false and leaves parameters, moments
  /// and the step counter untouched when any gradient entry is non-finite.
  bool step(const std::vector<ParamRef>& params,
            const std::vector<std::vector<double>>& grads);

  std::int64_t steps_taken() const { return t_; }

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  double mean_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool pass = false;
  std::vector<GradCheckEntry> per_param;
};

/// Central finite differences of loss_fn against the supplied analytic
/// gradients (one vector per ParamRef, same order). Relative error is
/// |num-ana| / max(|num|+|ana|, 1e-6). When the total coordinate count
/// exceeds sample_cap, a seeded without-replacement sample is checked.
/// Throws on a non-finite loss value.
GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           const std::vector<ParamRef>& params,
                           const std::vector<std::vector<double>>& analytic,
                           double step, double tolerance,
                           std::size_t sample_cap, std::uint64_t seed);

}  // namespace averify::nn
