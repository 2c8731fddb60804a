// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "averify/corpus.hpp"
#include "averify/tensor.hpp"

namespace averify::text {

inline constexpr const char* kUrlToken = "<url>";
inline constexpr const char* kMentionToken = "<mention>";
inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";

enum class SentinelPolicy { kReplace, kKeep };

struct TokenizerConfig {
  bool lowercase = true;  // ASCII case folding
  SentinelPolicy url_policy = SentinelPolicy::kReplace;
  SentinelPolicy mention_policy = SentinelPolicy::kReplace;
  std::size_t max_tokens = 64;

  bool operator==(const TokenizerConfig&) const = default;
};

/// NFC-normalize, optionally lowercase, then split: URLs and @mentions
/// become single tokens (sentinels under the replace policy), hashtags stay
/// single tokens including '#', everything else splits on whitespace with
/// punctuation runs emitted as their own tokens. Output is truncated to
/// max_tokens. Pure function of (config, text).
std::vector<std::string> normalize_and_tokenize(const TokenizerConfig& config,
                                                std::string_view text);

struct Vocabulary {
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;

  std::vector<std::string> index_to_token;  // [0]=<pad>, [1]=<unk>
  std::unordered_map<std::string, std::size_t> token_to_index;

  std::size_t size() const { return index_to_token.size(); }
  std::size_t lookup(const std::string& token) const;

  /// Digest over tokens in index order; recorded in checkpoints so a model
  /// can refuse a mismatched vocabulary file.
  std::uint32_t checksum() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);
};

/// Tokens with corpus frequency >= min_count, ordered by (frequency desc,
/// token asc) after the two reserved entries.
Vocabulary build_vocab(const corpus::Corpus& corpus,
                       const TokenizerConfig& config, std::size_t min_count);

enum class EmbeddingSource { kGloveText, kWord2vecText, kRandomInit };

std::string_view embedding_source_name(EmbeddingSource source);
EmbeddingSource embedding_source_from_name(std::string_view name);

struct EmbeddingTable {
  std::size_t dim = 0;
  Tensor2 vectors;  // |V| x dim; PAD row all zeros
  bool trainable = false;
  EmbeddingSource source = EmbeddingSource::kRandomInit;
  std::size_t file_hits = 0;  // vocabulary tokens found in the file
};

/// Text embedding format: one "token v1 ... vd" per line; a first line of
/// exactly two integers ("count dim") is treated as a word2vec-style header.
/// Vocabulary tokens missing from the file, and UNK, get seeded uniform
/// rows in [-0.05, 0.05]; PAD stays zero.
EmbeddingTable load_embedding_file(const std::filesystem::path& path,
                                   const Vocabulary& vocab, std::uint64_t seed);

/// All-random table (PAD zero) for runs without pretrained vectors.
EmbeddingTable random_embedding_table(const Vocabulary& vocab, std::size_t dim,
                                      std::uint64_t seed);

struct EncodedPost {
  std::vector<std::size_t> ids;  // never empty; a lone PAD when no tokens
  std::size_t true_length = 0;
};

/// Map tokens to vocabulary ids (UNK for out-of-vocabulary). An empty token
/// list encodes as a single PAD position with true_length 0.
EncodedPost encode_post(const Vocabulary& vocab,
                        const std::vector<std::string>& tokens);

/// Row lookups: T x dim matrix for an encoded post.
Tensor2 embed_sequence(const EmbeddingTable& table, const EncodedPost& post);

}  // namespace averify::text
