// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "averify/rng.hpp"
#include "averify/text.hpp"
#include "averify/verifier.hpp"

namespace averify::testing {

inline text::Vocabulary make_toy_vocab(std::size_t words) {
  text::Vocabulary vocab;
  vocab.index_to_token = {text::kPadToken, text::kUnkToken};
  for (std::size_t i = 0; i < words; ++i)
    vocab.index_to_token.push_back("tok" + std::to_string(i));
  for (std::size_t i = 0; i < vocab.index_to_token.size(); ++i)
    vocab.token_to_index.emplace(vocab.index_to_token[i], i);
  return vocab;
}

struct ToyModel {
  text::Vocabulary vocab;
  verifier::VerifierModel model;
};

inline ToyModel make_toy_model(std::uint64_t seed, std::size_t words = 18,
                               std::size_t dim = 8, std::size_t hidden = 8,
                               bool trainable_embeddings = false,
                               bool ordered_concat = false) {
  ToyModel toy;
  toy.vocab = make_toy_vocab(words);
  verifier::VerifierConfig config;
  config.embedding_dim = dim;
  config.hidden_dim = hidden;
  config.merge_hidden = hidden;
  config.seed = seed;
  config.embeddings_trainable = trainable_embeddings;
  config.ordered_concat = ordered_concat;
  text::EmbeddingTable table =
      text::random_embedding_table(toy.vocab, dim, seed);
  toy.model = verifier::init_model(config, toy.vocab, std::move(table));
  return toy;
}

inline text::EncodedPost random_encoded_post(std::size_t len, std::size_t vocab_size,
                                             Rng& rng) {
  text::EncodedPost post;
  post.true_length = len;
  if (len == 0) {
    post.ids.push_back(text::Vocabulary::kPad);
    return post;
  }
  for (std::size_t i = 0; i < len; ++i)
    post.ids.push_back(2 + rng.below(vocab_size - 2));
  return post;
}

}  // namespace averify::testing
