// SPDX-License-Identifier: Apache-2.0
//
// Dense layer, loss, Adam and the finite-difference harness.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "averify/kernels.hpp"
#include "averify/nn.hpp"

namespace averify::nn {

namespace {

double activate(Activation act, double z) {
  switch (act) {
    case Activation::kIdentity: return z;
    case Activation::kTanh: return std::tanh(z);
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kSigmoid: return sigmoid(z);
  }
  return z;
}

// d(act)/dz given both z and y = act(z).
double activate_grad(Activation act, double z, double y) {
  switch (act) {
    case Activation::kIdentity: return 1.0;
    case Activation::kTanh: return 1.0 - y * y;
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kSigmoid: return y * (1.0 - y);
  }
  return 1.0;
}

constexpr double kBceClamp = 1e-7;

}  // namespace

DenseParams make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  DenseParams p;
  p.weight = Tensor2(out, in);
  p.bias = Tensor2(1, out);
  p.activation = act;
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& x : p.weight.data) x = rng.uniform(-bound, bound);
  return p;
}

DenseCache dense_apply(const DenseParams& params, std::span<const double> x) {
  if (x.size() != params.weight.cols)
    throw std::invalid_argument("dense_apply: input dim mismatch");
  const std::size_t out = params.weight.rows;
  DenseCache cache;
  cache.x.assign(x.begin(), x.end());
  cache.z.resize(out);
  cache.y.resize(out);
  kernels::active_backend().gemv(params.weight.data.data(), out,
                                 params.weight.cols, cache.x.data(),
                                 cache.z.data());
  for (std::size_t j = 0; j < out; ++j) {
    cache.z[j] += params.bias.data[j];
    cache.y[j] = activate(params.activation, cache.z[j]);
  }
  return cache;
}

DenseGrads dense_backward(const DenseParams& params, const DenseCache& cache,
                          std::span<const double> d_y) {
  const std::size_t out = params.weight.rows;
  const std::size_t in = params.weight.cols;
  if (d_y.size() != out)
    throw std::invalid_argument("dense_backward: upstream gradient dim mismatch");
  const auto& k = kernels::active_backend();

  std::vector<double> d_z(out);
  for (std::size_t j = 0; j < out; ++j)
    d_z[j] = d_y[j] * activate_grad(params.activation, cache.z[j], cache.y[j]);

  DenseGrads g;
  g.d_weight = Tensor2(out, in);
  g.d_bias = Tensor2(1, out);
  g.d_x.assign(in, 0.0);
  k.outer_acc(g.d_weight.data.data(), d_z.data(), cache.x.data(), out, in);
  k.axpy(1.0, d_z.data(), g.d_bias.data.data(), out);
  k.gemv_t_acc(params.weight.data.data(), out, in, d_z.data(), g.d_x.data());
  return g;
}

BceResult bce_loss(double p, int label) {
  const double pc = std::clamp(p, kBceClamp, 1.0 - kBceClamp);
  const double loss =
      label == 1 ? -std::log(pc) : -std::log(1.0 - pc);
  // The clamp is part of the function; its flat regions have zero slope.
  const double d_p = (pc == p) ? (pc - label) / (pc * (1.0 - pc)) : 0.0;
  return {loss, d_p};
}

AdamState::AdamState(const std::vector<ParamRef>& params, AdamConfig config)
    : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const ParamRef& p : params) {
    m_.emplace_back(p.size, 0.0);
    v_.emplace_back(p.size, 0.0);
  }
}

bool AdamState::step(const std::vector<ParamRef>& params,
                     const std::vector<std::vector<double>>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::invalid_argument("adam: parameter/gradient registry mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size)
      throw std::invalid_argument("adam: gradient shape mismatch for " +
                                  params[i].name);
    for (double x : grads[i])
      if (!std::isfinite(x)) return false;
  }

  ++t_;
  kernels::AdamHp hp;
  hp.lr = config_.lr;
  hp.beta1 = config_.beta1;
  hp.beta2 = config_.beta2;
  hp.eps = config_.eps;
  hp.bc1 = 1.0 / (1.0 - std::pow(config_.beta1, static_cast<double>(t_)));
  hp.bc2 = 1.0 / (1.0 - std::pow(config_.beta2, static_cast<double>(t_)));

  const auto& k = kernels::active_backend();
  for (std::size_t i = 0; i < params.size(); ++i)
    k.adam_update(params[i].data, m_[i].data(), v_[i].data(), grads[i].data(),
                  params[i].size, hp);
  return true;
}

GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           const std::vector<ParamRef>& params,
                           const std::vector<std::vector<double>>& analytic,
                           double step, double tolerance,
                           std::size_t sample_cap, std::uint64_t seed) {
  if (analytic.size() != params.size())
    throw std::invalid_argument("grad_check: analytic gradient registry mismatch");

  std::size_t total = 0;
  for (const ParamRef& p : params) total += p.size;

  // Global coordinate ids; sampled without replacement when over the cap.
  std::vector<std::size_t> coords(total);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (total > sample_cap) {
    Rng rng(seed);
    for (std::size_t i = 0; i < sample_cap; ++i) {
      const std::size_t j = i + rng.below(total - i);
      std::swap(coords[i], coords[j]);
    }
    coords.resize(sample_cap);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  report.per_param.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    report.per_param[i].param = params[i].name;

  double err_sum = 0.0;
  for (std::size_t coord : coords) {
    std::size_t pi = 0;
    std::size_t offset = coord;
    while (offset >= params[pi].size) {
      offset -= params[pi].size;
      ++pi;
    }
    double* slot = params[pi].data + offset;
    const double saved = *slot;

    *slot = saved + step;
    const double up = loss_fn();
    *slot = saved - step;
    const double down = loss_fn();
    *slot = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("grad_check: non-finite loss at " +
                               params[pi].name);

    const double numeric = (up - down) / (2.0 * step);
    const double ana = analytic[pi][offset];
    const double denom = std::max(std::abs(numeric) + std::abs(ana), 1e-6);
    const double err = std::abs(numeric - ana) / denom;

    err_sum += err;
    ++report.checked;
    GradCheckEntry& entry = report.per_param[pi];
    ++entry.checked;
    if (err > entry.max_rel_err) {
      entry.max_rel_err = err;
      entry.worst_index = offset;
    }
    if (err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_param = params[pi].name;
      report.worst_index = offset;
    }
  }

  report.mean_rel_err = report.checked ? err_sum / report.checked : 0.0;
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace averify::nn
