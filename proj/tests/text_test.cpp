// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>

#include "averify/error.hpp"
#include "averify/text.hpp"
#include "support/build_corpus.hpp"

using namespace averify;
using text::TokenizerConfig;

namespace {

std::vector<std::string> tok(const std::string& s,
                             const TokenizerConfig& config = {}) {
  return text::normalize_and_tokenize(config, s);
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::filesystem::path write_temp(const std::string& name,
                                 const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("tokenizer: urls, mentions, hashtags, punctuation") {
  CHECK(tok("Check https://t.co/x NOW @bob #sale!") ==
        std::vector<std::string>{"check", "<url>", "now", "<mention>", "#sale",
                                 "!"});
}

TEST_CASE("tokenizer: empty and whitespace-only input") {
  CHECK(tok("").empty());
  CHECK(tok("   \t  \n ").empty());
}

TEST_CASE("tokenizer: idempotent on sentinel-free output") {
  const std::vector<std::string> cases = {
      "Hello, world! This is FINE...", "#tag #tag2 stuff-here (really)",
      "don't stop believing", "a b c d e f"};
  for (const std::string& s : cases) {
    const auto once = tok(s);
    bool has_sentinel = false;
    for (const auto& t : once)
      if (t == text::kUrlToken || t == text::kMentionToken) has_sentinel = true;
    REQUIRE_FALSE(has_sentinel);
    CHECK(tok(join(once)) == once);
  }
}

TEST_CASE("tokenizer: keep policies") {
  TokenizerConfig keep;
  keep.url_policy = text::SentinelPolicy::kKeep;
  keep.mention_policy = text::SentinelPolicy::kKeep;
  CHECK(tok("see www.example.com @Alice", keep) ==
        std::vector<std::string>{"see", "www.example.com", "@alice"});
}

TEST_CASE("tokenizer: case folding toggle") {
  TokenizerConfig no_lower;
  no_lower.lowercase = false;
  CHECK(tok("MiXeD Case", no_lower) == std::vector<std::string>{"MiXeD", "Case"});
}

TEST_CASE("tokenizer: max_tokens truncation") {
  TokenizerConfig config;
  config.max_tokens = 3;
  CHECK(tok("one two three four five", config) ==
        std::vector<std::string>{"one", "two", "three"});
}

TEST_CASE("tokenizer: lone markers and punctuation runs") {
  CHECK(tok("# @ ! !!") == std::vector<std::string>{"#", "@", "!", "!!"});
  CHECK(tok("wait... what?!") ==
        std::vector<std::string>{"wait", "...", "what", "?!"});
}

TEST_CASE("tokenizer: NFC normalization unifies combining sequences") {
  // "e" + COMBINING ACUTE vs precomposed U+00E9
  const std::string decomposed = "caf\x65\xcc\x81";
  const std::string precomposed = "caf\xc3\xa9";
  CHECK(tok(decomposed) == tok(precomposed));
}

TEST_CASE("build_vocab: ordering, cutoffs, reserved entries") {
  // a:5 b:2 c:1 across posts
  const auto c = testing::make_corpus({{"x", 1, {}}});
  corpus::Corpus custom = c;
  custom.accounts[0].posts[0].text = "a a a a a b b c";

  const text::Vocabulary v2 = text::build_vocab(custom, {}, 2);
  REQUIRE(v2.size() == 4);
  CHECK(v2.index_to_token[0] == text::kPadToken);
  CHECK(v2.index_to_token[1] == text::kUnkToken);
  CHECK(v2.token_to_index.at("a") == 2);
  CHECK(v2.token_to_index.at("b") == 3);

  const text::Vocabulary v1 = text::build_vocab(custom, {}, 1);
  CHECK(v1.token_to_index.at("c") == 4);

  // Tie frequencies break lexicographically.
  custom.accounts[0].posts[0].text = "zz aa zz aa";
  const text::Vocabulary tie = text::build_vocab(custom, {}, 1);
  CHECK(tie.token_to_index.at("aa") == 2);
  CHECK(tie.token_to_index.at("zz") == 3);

  custom.accounts[0].posts[0].text = "solo";
  CHECK_THROWS_AS(text::build_vocab(custom, {}, 5), ValidationError);
}

TEST_CASE("vocabulary round trip and checksum") {
  const auto c = testing::make_corpus({{"x", 1, {}}});
  corpus::Corpus custom = c;
  custom.accounts[0].posts[0].text = "alpha beta gamma alpha";
  const text::Vocabulary vocab = text::build_vocab(custom, {}, 1);

  const auto path = write_temp("averify_vocab_test.txt", "");
  vocab.save(path);
  const text::Vocabulary loaded = text::Vocabulary::load(path);
  CHECK(loaded.index_to_token == vocab.index_to_token);
  CHECK(loaded.checksum() == vocab.checksum());
  for (const auto& token : vocab.index_to_token)
    CHECK(vocab.index_to_token[vocab.token_to_index.at(token)] == token);
  std::filesystem::remove(path);
}

TEST_CASE("load_embedding_file: plain text format") {
  const auto c = testing::make_corpus({{"x", 1, {}}});
  corpus::Corpus custom = c;
  custom.accounts[0].posts[0].text = "apple banana cherry";
  const text::Vocabulary vocab = text::build_vocab(custom, {}, 1);

  const auto path = write_temp("averify_emb_plain.txt",
                               "apple 1.0 2.0 3.0\n"
                               "banana -1.0 0.5 0.25\n"
                               "cherry 0.1 0.2 0.3\n");
  const text::EmbeddingTable table = text::load_embedding_file(path, vocab, 5);
  CHECK(table.dim == 3);
  CHECK(table.source == text::EmbeddingSource::kGloveText);
  CHECK(table.file_hits == 3);
  CHECK(table.vectors.at(vocab.token_to_index.at("apple"), 0) == 1.0);
  CHECK(table.vectors.at(vocab.token_to_index.at("banana"), 2) == 0.25);
  // PAD row exactly zero.
  for (std::size_t j = 0; j < 3; ++j) CHECK(table.vectors.at(0, j) == 0.0);
  // UNK row seeded inside [-0.05, 0.05].
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(table.vectors.at(1, j) >= -0.05);
    CHECK(table.vectors.at(1, j) <= 0.05);
  }
  std::filesystem::remove(path);
}

TEST_CASE("load_embedding_file: header auto-detection and determinism") {
  const auto c = testing::make_corpus({{"x", 1, {}}});
  corpus::Corpus custom = c;
  custom.accounts[0].posts[0].text = "apple banana missing";
  const text::Vocabulary vocab = text::build_vocab(custom, {}, 1);

  const auto path = write_temp("averify_emb_w2v.txt",
                               "2 4\n"
                               "apple 1 2 3 4\n"
                               "banana 5 6 7 8\n");
  const text::EmbeddingTable t1 = text::load_embedding_file(path, vocab, 9);
  CHECK(t1.dim == 4);
  CHECK(t1.source == text::EmbeddingSource::kWord2vecText);
  CHECK(t1.file_hits == 2);

  const text::EmbeddingTable t2 = text::load_embedding_file(path, vocab, 9);
  CHECK(t1.vectors == t2.vectors);  // byte-identical for equal seeds
  const text::EmbeddingTable t3 = text::load_embedding_file(path, vocab, 10);
  CHECK(t1.vectors.data != t3.vectors.data);  // OOV rows move with the seed
  // In-file rows unaffected by the seed.
  const auto apple = vocab.token_to_index.at("apple");
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(t1.vectors.at(apple, j) == t3.vectors.at(apple, j));
  std::filesystem::remove(path);
}

TEST_CASE("load_embedding_file: dimension and numeric errors carry line numbers") {
  const auto c = testing::make_corpus({{"x", 1, {}}});
  corpus::Corpus custom = c;
  custom.accounts[0].posts[0].text = "apple banana";
  const text::Vocabulary vocab = text::build_vocab(custom, {}, 1);

  const auto bad_dim = write_temp("averify_emb_baddim.txt",
                                  "apple 1 2 3\n"
                                  "banana 1 2\n");
  CHECK_THROWS_WITH_AS(text::load_embedding_file(bad_dim, vocab, 1),
                       doctest::Contains(":2"), ValidationError);
  std::filesystem::remove(bad_dim);

  const auto bad_num = write_temp("averify_emb_badnum.txt",
                                  "apple 1 2 3\n"
                                  "banana 1 x 3\n");
  CHECK_THROWS_WITH_AS(text::load_embedding_file(bad_num, vocab, 1),
                       doctest::Contains(":2"), ValidationError);
  std::filesystem::remove(bad_num);
}

TEST_CASE("encode_post: UNK mapping, empty posts, row lookups") {
  const auto c = testing::make_corpus({{"x", 1, {}}});
  corpus::Corpus custom = c;
  custom.accounts[0].posts[0].text = "a a a b";
  const text::Vocabulary vocab = text::build_vocab(custom, {}, 1);

  const text::EncodedPost post = text::encode_post(vocab, {"a", "zzz"});
  CHECK(post.ids == std::vector<std::size_t>{2, text::Vocabulary::kUnk});
  CHECK(post.true_length == 2);

  const text::EncodedPost empty = text::encode_post(vocab, {});
  CHECK(empty.true_length == 0);
  CHECK(empty.ids == std::vector<std::size_t>{text::Vocabulary::kPad});

  const text::EmbeddingTable table = text::random_embedding_table(vocab, 5, 3);
  const Tensor2 embedded = text::embed_sequence(table, post);
  REQUIRE(embedded.rows == 2);
  for (std::size_t j = 0; j < 5; ++j) {
    CHECK(embedded.at(0, j) == table.vectors.at(2, j));
    CHECK(embedded.at(1, j) == table.vectors.at(1, j));
  }
}
