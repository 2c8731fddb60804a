// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "averify/corpus.hpp"
#include "averify/eval.hpp"
#include "averify/nn.hpp"
#include "averify/text.hpp"

namespace averify::verifier {

struct VerifierConfig {
  std::size_t embedding_dim = 50;
  std::size_t hidden_dim = 64;
  std::size_t merge_hidden = 64;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 42;
  bool embeddings_trainable = false;
  // Ablation: order-dependent [h_a; h_b; |h_a-h_b|; h_a.h_b] merge features
  // (4H wide) instead of the symmetric default [h_a+h_b; |h_a-h_b|; h_a.h_b]
  // (3H wide). Exact score symmetry holds only for the default.
  bool ordered_concat = false;
  text::TokenizerConfig tokenizer;

  std::size_t merge_input_dim() const {
    return (ordered_concat ? 4 : 3) * hidden_dim;
  }
};

/// The siamese verifier: one weight-shared LSTM encoder applied to both
/// posts, a symmetric feature merge, and a two-layer classifier head that
/// outputs p_same, the probability that both posts share an author.
struct VerifierModel {
  VerifierConfig config;
  text::EmbeddingTable embedding;
  nn::LstmParams encoder;       // shared by both branches
  nn::DenseParams merge_layer;  // tanh
  nn::DenseParams output_layer; // sigmoid, one output
  std::uint32_t vocab_checksum = 0;
  // Runtime companion, not serialized: checkpoints carry only the checksum
  // and the vocabulary is re-attached (and verified) on load.
  text::Vocabulary vocab;

  /// Trainable tensors in registry order: embedding first when trainable,
  /// then encoder w_input/w_recur/bias, merge weight/bias, output
  /// weight/bias. The order is part of the optimizer and grad-check contract.
  std::vector<nn::ParamRef> trainable_params();
};

VerifierModel init_model(const VerifierConfig& config,
                         const text::Vocabulary& vocab,
                         text::EmbeddingTable table);

/// Final masked LSTM hidden state for one post; the zero vector when the
/// post has no tokens.
std::vector<double> encode_post(const VerifierModel& model,
                                const std::vector<std::string>& tokens);
std::vector<double> encode_post(const VerifierModel& model,
                                const text::EncodedPost& post);

double score_pair(const VerifierModel& model,
                  const std::vector<std::string>& left_tokens,
                  const std::vector<std::string>& right_tokens);
double score_pair(const VerifierModel& model, const text::EncodedPost& left,
                  const text::EncodedPost& right);

/// Loss and parameter gradients (trainable_params() order) for one pair.
struct PairGradient {
  double loss = 0.0;
  double p_same = 0.0;
  std::vector<std::vector<double>> grads;
};
PairGradient pair_gradient(const VerifierModel& model,
                           const text::EncodedPost& left,
                           const text::EncodedPost& right, int label);

/// Pairs resolved against a corpus and pre-encoded for the training loop.
struct EncodedPair {
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  int label = 0;  // 1 = same author
};
struct TrainSet {
  std::vector<text::EncodedPost> posts;  // unique posts
  std::vector<EncodedPair> pairs;

  bool has_both_labels() const;
};
TrainSet encode_pairs(const corpus::Corpus& corpus,
                      const std::vector<corpus::PairExample>& pairs,
                      const text::TokenizerConfig& tokenizer,
                      const text::Vocabulary& vocab);

struct EpochStats {
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::optional<double> val_accuracy;
  std::optional<double> val_f_measure;
  double wall_seconds = 0.0;
  bool early_stopped = false;
  std::string stop_reason;
  std::size_t skipped_steps = 0;  // batches rejected for non-finite gradients
};

/// Minimize mean binary cross-entropy of p_same against the pair labels
/// (same author = 1) with Adam. Batch order reshuffles each epoch from the
/// config seed; per-pair gradients are reduced in pair order, so the result
/// is bit-deterministic and independent of `jobs`.
TrainReport train(VerifierModel& model, const TrainSet& train_set,
                  const TrainSet& val_set, std::size_t jobs = 1);

struct Calibration {
  double tau = 0.5;
  double f_measure = 0.0;
  bool degenerate = false;  // no informative threshold existed
};

/// Threshold maximizing F-measure over the grid {0.01, ..., 0.99} step
/// 0.01, ties broken toward 0.5 (then toward the smaller value).
Calibration calibrate_from_scores(const std::vector<eval::ScoredExample>& scored);
Calibration calibrate_threshold(const VerifierModel& model, const TrainSet& val_set);

// Checkpoint file: "AVF1" magic, version, length-prefixed JSON metadata,
// named tensors as little-endian f64 payloads, trailing crc32.
void save_checkpoint(const VerifierModel& model, const std::filesystem::path& path);
VerifierModel load_checkpoint(const std::filesystem::path& path);
VerifierModel load_checkpoint(const std::filesystem::path& path,
                              const text::Vocabulary& vocab);

}  // namespace averify::verifier
