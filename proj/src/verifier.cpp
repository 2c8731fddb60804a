// SPDX-License-Identifier: Apache-2.0

#include "averify/verifier.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>
#include <unordered_map>

#include "averify/error.hpp"
#include "averify/kernels.hpp"

namespace averify::verifier {

namespace {

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// Merge features from the two branch encodings. The default variant uses
/// only symmetric terms, which is what makes score_pair(a,b) == score_pair(b,a)
/// hold exactly (IEEE +, *, |-| are commutative/negation-exact).
std::vector<double> merge_features(const VerifierConfig& config,
                                   const std::vector<double>& ha,
                                   const std::vector<double>& hb) {
  const std::size_t H = ha.size();
  std::vector<double> phi(config.merge_input_dim());
  if (config.ordered_concat) {
    for (std::size_t j = 0; j < H; ++j) {
      phi[j] = ha[j];
      phi[H + j] = hb[j];
      phi[2 * H + j] = std::abs(ha[j] - hb[j]);
      phi[3 * H + j] = ha[j] * hb[j];
    }
  } else {
    for (std::size_t j = 0; j < H; ++j) {
      phi[j] = ha[j] + hb[j];
      phi[H + j] = std::abs(ha[j] - hb[j]);
      phi[2 * H + j] = ha[j] * hb[j];
    }
  }
  return phi;
}

void merge_features_backward(const VerifierConfig& config,
                             const std::vector<double>& ha,
                             const std::vector<double>& hb,
                             std::span<const double> d_phi,
                             std::vector<double>& d_ha,
                             std::vector<double>& d_hb) {
  const std::size_t H = ha.size();
  d_ha.assign(H, 0.0);
  d_hb.assign(H, 0.0);
  if (config.ordered_concat) {
    for (std::size_t j = 0; j < H; ++j) {
      const double s = sgn(ha[j] - hb[j]);
      d_ha[j] = d_phi[j] + d_phi[2 * H + j] * s + d_phi[3 * H + j] * hb[j];
      d_hb[j] = d_phi[H + j] - d_phi[2 * H + j] * s + d_phi[3 * H + j] * ha[j];
    }
  } else {
    for (std::size_t j = 0; j < H; ++j) {
      const double s = sgn(ha[j] - hb[j]);
      d_ha[j] = d_phi[j] + d_phi[H + j] * s + d_phi[2 * H + j] * hb[j];
      d_hb[j] = d_phi[j] - d_phi[H + j] * s + d_phi[2 * H + j] * ha[j];
    }
  }
}

struct BranchResult {
  nn::LstmCache cache;
  std::vector<double> h;
};

BranchResult run_branch(const VerifierModel& model, const text::EncodedPost& post) {
  BranchResult branch;
  const Tensor2 inputs = text::embed_sequence(model.embedding, post);
  branch.cache = nn::lstm_forward(model.encoder, inputs, post.true_length);
  branch.h = branch.cache.final_h();
  return branch;
}

void add_into(std::vector<double>& acc, const Tensor2& t) {
  kernels::active_backend().axpy(1.0, t.data.data(), acc.data(), t.size());
}

/// Scatter d_inputs rows back into the embedding gradient by token id.
/// PAD never takes gradient (masked steps already contribute nothing; the
/// id check is the documented guard).
void scatter_embedding_grad(std::vector<double>& d_embedding, std::size_t dim,
                            const text::EncodedPost& post,
                            const Tensor2& d_inputs) {
  const auto& k = kernels::active_backend();
  for (std::size_t t = 0; t < post.true_length; ++t) {
    const std::size_t id = post.ids[t];
    if (id == text::Vocabulary::kPad) continue;
    k.axpy(1.0, d_inputs.row(t), d_embedding.data() + id * dim, dim);
  }
}

}  // namespace

std::vector<nn::ParamRef> VerifierModel::trainable_params() {
  std::vector<nn::ParamRef> params;
  if (config.embeddings_trainable)
    params.push_back({"embedding", embedding.vectors.data.data(),
                      embedding.vectors.size()});
  params.push_back({"encoder.w_input", encoder.w_input.data.data(),
                    encoder.w_input.size()});
  params.push_back({"encoder.w_recur", encoder.w_recur.data.data(),
                    encoder.w_recur.size()});
  params.push_back({"encoder.bias", encoder.bias.data.data(), encoder.bias.size()});
  params.push_back({"merge.weight", merge_layer.weight.data.data(),
                    merge_layer.weight.size()});
  params.push_back({"merge.bias", merge_layer.bias.data.data(),
                    merge_layer.bias.size()});
  params.push_back({"output.weight", output_layer.weight.data.data(),
                    output_layer.weight.size()});
  params.push_back({"output.bias", output_layer.bias.data.data(),
                    output_layer.bias.size()});
  return params;
}

VerifierModel init_model(const VerifierConfig& config,
                         const text::Vocabulary& vocab,
                         text::EmbeddingTable table) {
  if (table.dim != config.embedding_dim)
    throw ValidationError("embedding table dimension " +
                          std::to_string(table.dim) +
                          " does not match configured embedding_dim " +
                          std::to_string(config.embedding_dim));
  if (table.vectors.rows != vocab.size())
    throw ValidationError("embedding table row count does not match vocabulary");
  if (config.hidden_dim == 0 || config.merge_hidden == 0 ||
      config.batch_size == 0 || !(config.lr > 0.0))
    throw ValidationError("verifier config fields must be positive");

  VerifierModel model;
  model.config = config;
  model.embedding = std::move(table);
  model.embedding.trainable = config.embeddings_trainable;
  model.vocab = vocab;
  model.vocab_checksum = vocab.checksum();

  Rng rng(config.seed);
  model.encoder = nn::make_lstm(config.embedding_dim, config.hidden_dim, rng);
  model.merge_layer = nn::make_dense(config.merge_input_dim(),
                                     config.merge_hidden,
                                     nn::Activation::kTanh, rng);
  model.output_layer =
      nn::make_dense(config.merge_hidden, 1, nn::Activation::kSigmoid, rng);
  return model;
}

std::vector<double> encode_post(const VerifierModel& model,
                                const text::EncodedPost& post) {
  return run_branch(model, post).h;
}

std::vector<double> encode_post(const VerifierModel& model,
                                const std::vector<std::string>& tokens) {
  if (model.vocab.size() == 0)
    throw ValidationError("model has no vocabulary attached");
  return encode_post(model, text::encode_post(model.vocab, tokens));
}

double score_pair(const VerifierModel& model,
                  const std::vector<std::string>& left_tokens,
                  const std::vector<std::string>& right_tokens) {
  if (model.vocab.size() == 0)
    throw ValidationError("model has no vocabulary attached");
  return score_pair(model, text::encode_post(model.vocab, left_tokens),
                    text::encode_post(model.vocab, right_tokens));
}

double score_pair(const VerifierModel& model, const text::EncodedPost& left,
                  const text::EncodedPost& right) {
  const BranchResult a = run_branch(model, left);
  const BranchResult b = run_branch(model, right);
  const std::vector<double> phi = merge_features(model.config, a.h, b.h);
  const nn::DenseCache mcache = dense_apply(model.merge_layer, phi);
  const nn::DenseCache ocache = dense_apply(model.output_layer, mcache.y);
  return ocache.y[0];
}

PairGradient pair_gradient(const VerifierModel& model,
                           const text::EncodedPost& left,
                           const text::EncodedPost& right, int label) {
  const VerifierConfig& config = model.config;

  const BranchResult a = run_branch(model, left);
  const BranchResult b = run_branch(model, right);
  const std::vector<double> phi = merge_features(config, a.h, b.h);
  const nn::DenseCache mcache = dense_apply(model.merge_layer, phi);
  const nn::DenseCache ocache = dense_apply(model.output_layer, mcache.y);
  const double p = ocache.y[0];
  const nn::BceResult bce = nn::bce_loss(p, label);

  const std::vector<double> d_out = {bce.d_p};
  const nn::DenseGrads og = dense_backward(model.output_layer, ocache, d_out);
  const nn::DenseGrads mg = dense_backward(model.merge_layer, mcache, og.d_x);

  std::vector<double> d_ha, d_hb;
  merge_features_backward(config, a.h, b.h, mg.d_x, d_ha, d_hb);

  const nn::LstmGrads ga = lstm_backward(model.encoder, a.cache, d_ha);
  const nn::LstmGrads gb = lstm_backward(model.encoder, b.cache, d_hb);

  PairGradient result;
  result.loss = bce.loss;
  result.p_same = p;

  if (config.embeddings_trainable) {
    std::vector<double> d_embedding(model.embedding.vectors.size(), 0.0);
    scatter_embedding_grad(d_embedding, model.embedding.dim, left, ga.d_inputs);
    scatter_embedding_grad(d_embedding, model.embedding.dim, right, gb.d_inputs);
    result.grads.push_back(std::move(d_embedding));
  }

  std::vector<double> d_w_input(ga.d_w_input.data);
  add_into(d_w_input, gb.d_w_input);
  std::vector<double> d_w_recur(ga.d_w_recur.data);
  add_into(d_w_recur, gb.d_w_recur);
  std::vector<double> d_bias(ga.d_bias.data);
  add_into(d_bias, gb.d_bias);

  result.grads.push_back(std::move(d_w_input));
  result.grads.push_back(std::move(d_w_recur));
  result.grads.push_back(std::move(d_bias));
  result.grads.push_back(mg.d_weight.data);
  result.grads.push_back(mg.d_bias.data);
  result.grads.push_back(og.d_weight.data);
  result.grads.push_back(og.d_bias.data);
  return result;
}

bool TrainSet::has_both_labels() const {
  bool same = false, diff = false;
  for (const EncodedPair& p : pairs) (p.label == 1 ? same : diff) = true;
  return same && diff;
}

TrainSet encode_pairs(const corpus::Corpus& corpus,
                      const std::vector<corpus::PairExample>& pairs,
                      const text::TokenizerConfig& tokenizer,
                      const text::Vocabulary& vocab) {
  TrainSet set;
  std::unordered_map<std::string, std::uint32_t> slots;
  const auto slot_of = [&](const std::string& account, std::size_t index) {
    const std::string key = account + '\x1f' + std::to_string(index);
    const auto it = slots.find(key);
    if (it != slots.end()) return it->second;
    const corpus::Post& post = corpus.post(account, index);
    const auto tokens = text::normalize_and_tokenize(tokenizer, post.text);
    const auto id = static_cast<std::uint32_t>(set.posts.size());
    set.posts.push_back(text::encode_post(vocab, tokens));
    slots.emplace(key, id);
    return id;
  };

  set.pairs.reserve(pairs.size());
  for (const corpus::PairExample& p : pairs) {
    EncodedPair ep;
    ep.left = slot_of(p.left_account, p.left_index);
    ep.right = slot_of(p.right_account, p.right_index);
    ep.label = p.label == corpus::PairLabel::kSameAuthor ? 1 : 0;
    set.pairs.push_back(ep);
  }
  return set;
}

namespace {

/// Run fn(i) for i in [0, n) on up to `jobs` threads. Results must be
/// written to per-index slots by the callers; scheduling order is free
/// because reduction happens elsewhere in index order.
void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  const std::size_t count = std::min(jobs, n);
  workers.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (std::thread& t : workers) t.join();
}

std::vector<eval::ScoredExample> score_set(const VerifierModel& model,
                                           const TrainSet& set,
                                           std::size_t jobs) {
  std::vector<eval::ScoredExample> scored(set.pairs.size());
  parallel_for(set.pairs.size(), jobs, [&](std::size_t i) {
    const EncodedPair& p = set.pairs[i];
    scored[i] = {score_pair(model, set.posts[p.left], set.posts[p.right]),
                 p.label == 1};
  });
  return scored;
}

}  // namespace

TrainReport train(VerifierModel& model, const TrainSet& train_set,
                  const TrainSet& val_set, std::size_t jobs) {
  if (train_set.pairs.empty())
    throw ValidationError("training set is empty");
  if (!train_set.has_both_labels())
    throw ValidationError("training set must contain both labels");

  const auto t0 = std::chrono::steady_clock::now();
  const VerifierConfig& config = model.config;
  const std::vector<nn::ParamRef> params = model.trainable_params();
  nn::AdamState adam(params, {.lr = config.lr});

  std::vector<std::vector<double>> batch_grads(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    batch_grads[i].resize(params[i].size);

  TrainReport report;
  std::vector<std::size_t> order(train_set.pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto& k = kernels::active_backend();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(mix64(config.seed, epoch + 1));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t correct = 0;

    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t count =
          std::min(config.batch_size, order.size() - start);
      std::vector<PairGradient> grads(count);
      parallel_for(count, jobs, [&](std::size_t i) {
        const EncodedPair& pair = train_set.pairs[order[start + i]];
        grads[i] = pair_gradient(model, train_set.posts[pair.left],
                                 train_set.posts[pair.right], pair.label);
      });

      for (auto& g : batch_grads) std::fill(g.begin(), g.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(count);
      double batch_loss = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        batch_loss += grads[i].loss;
        const EncodedPair& pair = train_set.pairs[order[start + i]];
        if ((grads[i].p_same >= 0.5) == (pair.label == 1)) ++correct;
        for (std::size_t t = 0; t < params.size(); ++t)
          k.axpy(scale, grads[i].grads[t].data(), batch_grads[t].data(),
                 params[t].size);
      }
      loss_sum += batch_loss;
      if (!std::isfinite(batch_loss)) {
        report.early_stopped = true;
        report.stop_reason = "non-finite loss";
        break;
      }
      if (!adam.step(params, batch_grads)) ++report.skipped_steps;
    }

    report.epochs.push_back(
        {loss_sum / static_cast<double>(order.size()),
         static_cast<double>(correct) / static_cast<double>(order.size())});
    if (report.early_stopped) break;
  }

  if (!val_set.pairs.empty()) {
    const auto scored = score_set(model, val_set, jobs);
    const eval::MetricsReport metrics = eval::evaluate_scored(scored, 0.5);
    report.val_accuracy = metrics.accuracy;
    report.val_f_measure = metrics.f_measure;
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

Calibration calibrate_from_scores(const std::vector<eval::ScoredExample>& scored) {
  bool same = false, diff = false;
  for (const auto& s : scored) (s.same_author ? same : diff) = true;
  if (!(same && diff))
    throw ValidationError("threshold calibration requires both labels");

  const bool all_equal = std::all_of(
      scored.begin(), scored.end(),
      [&](const eval::ScoredExample& s) { return s.p_same == scored[0].p_same; });
  if (all_equal) return {0.5, 0.0, true};

  Calibration best{0.5, -1.0, false};
  int best_dist = 1000;
  for (int i = 1; i <= 99; ++i) {
    const double tau = static_cast<double>(i) / 100.0;
    const eval::MetricsReport m = eval::evaluate_scored(scored, tau);
    if (!m.f_measure) continue;
    const int dist = std::abs(i - 50);
    if (*m.f_measure > best.f_measure ||
        (*m.f_measure == best.f_measure &&
         (dist < best_dist || (dist == best_dist && tau < best.tau)))) {
      best = {tau, *m.f_measure, false};
      best_dist = dist;
    }
  }
  if (best.f_measure < 0.0) return {0.5, 0.0, true};
  return best;
}

Calibration calibrate_threshold(const VerifierModel& model,
                                const TrainSet& val_set) {
  return calibrate_from_scores(score_set(model, val_set, 1));
}

}  // namespace averify::verifier
