// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "averify/error.hpp"
#include "averify/verifier.hpp"
#include "support/lstm_oracle.hpp"
#include "support/toy_model.hpp"

using namespace averify;
using testing::make_toy_model;
using testing::random_encoded_post;

namespace {

verifier::TrainSet toy_train_set(const verifier::VerifierModel& model,
                                 std::size_t pair_count, std::uint64_t seed) {
  // Two synthetic "styles": label-1 pairs draw from the same half of the
  // vocabulary, label-0 pairs from opposite halves.
  verifier::TrainSet set;
  Rng rng(seed);
  const std::size_t v = model.embedding.vectors.rows;
  const std::size_t half = (v - 2) / 2;
  const auto draw_post = [&](bool high) {
    text::EncodedPost post;
    post.true_length = 4 + rng.below(3);
    for (std::size_t i = 0; i < post.true_length; ++i)
      post.ids.push_back(2 + (high ? half : 0) + rng.below(half));
    return post;
  };
  for (std::size_t i = 0; i < pair_count; ++i) {
    const bool same = (i % 2) == 0;
    const bool left_high = rng.below(2) == 1;
    const bool right_high = same ? left_high : !left_high;
    set.posts.push_back(draw_post(left_high));
    set.posts.push_back(draw_post(right_high));
    set.pairs.push_back({static_cast<std::uint32_t>(set.posts.size() - 2),
                         static_cast<std::uint32_t>(set.posts.size() - 1),
                         same ? 1 : 0});
  }
  return set;
}

}  // namespace

TEST_CASE("init_model determinism") {
  const auto a = make_toy_model(12);
  const auto b = make_toy_model(12);
  CHECK(a.model.encoder.w_input == b.model.encoder.w_input);
  CHECK(a.model.encoder.w_recur == b.model.encoder.w_recur);
  CHECK(a.model.encoder.bias == b.model.encoder.bias);
  CHECK(a.model.merge_layer.weight == b.model.merge_layer.weight);
  CHECK(a.model.output_layer.weight == b.model.output_layer.weight);
  CHECK(a.model.vocab_checksum == b.model.vocab_checksum);

  const auto c = make_toy_model(13);
  CHECK(a.model.encoder.w_input != c.model.encoder.w_input);
}

TEST_CASE("init_model rejects a mismatched embedding table") {
  const text::Vocabulary vocab = testing::make_toy_vocab(6);
  verifier::VerifierConfig config;
  config.embedding_dim = 8;
  text::EmbeddingTable table = text::random_embedding_table(vocab, 4, 1);
  CHECK_THROWS_AS(verifier::init_model(config, vocab, std::move(table)),
                  ValidationError);
}

TEST_CASE("encoder forget-gate bias initialized to one") {
  const auto toy = make_toy_model(5);
  const std::size_t H = toy.model.config.hidden_dim;
  for (std::size_t j = 0; j < 4 * H; ++j) {
    const double expect = (j >= H && j < 2 * H) ? 1.0 : 0.0;
    CHECK(toy.model.encoder.bias.data[j] == expect);
  }
}

TEST_CASE("encode_post: empty post gives the zero vector, repeat is stable") {
  const auto toy = make_toy_model(21);
  Rng rng(2);
  const auto empty = random_encoded_post(0, toy.vocab.size(), rng);
  for (double v : verifier::encode_post(toy.model, empty)) CHECK(v == 0.0);

  const auto post = random_encoded_post(5, toy.vocab.size(), rng);
  CHECK(verifier::encode_post(toy.model, post) ==
        verifier::encode_post(toy.model, post));
}

TEST_CASE("encode_post matches hand-written scalar recurrence") {
  const auto toy = make_toy_model(31, 18, 8, 2);  // H=2
  Rng rng(4);
  const auto post = random_encoded_post(2, toy.vocab.size(), rng);
  const Tensor2 inputs = text::embed_sequence(toy.model.embedding, post);
  const auto expect =
      testing::lstm_oracle_final_h(toy.model.encoder, inputs, post.true_length);
  const auto got = verifier::encode_post(toy.model, post);
  REQUIRE(got.size() == expect.size());
  for (std::size_t j = 0; j < got.size(); ++j)
    CHECK(got[j] == doctest::Approx(expect[j]).epsilon(1e-12));
}

TEST_CASE("score_pair symmetry is exact for the symmetric merge") {
  const auto toy = make_toy_model(7);
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    const auto a = random_encoded_post(1 + rng.below(8), toy.vocab.size(), rng);
    const auto b = random_encoded_post(1 + rng.below(8), toy.vocab.size(), rng);
    CHECK(verifier::score_pair(toy.model, a, b) ==
          verifier::score_pair(toy.model, b, a));
  }
}

TEST_CASE("ordered-concat ablation widens the merge input") {
  const auto sym = make_toy_model(7);
  CHECK(sym.model.merge_layer.weight.cols == 3 * sym.model.config.hidden_dim);
  const auto ord = make_toy_model(7, 18, 8, 8, false, true);
  CHECK(ord.model.merge_layer.weight.cols == 4 * ord.model.config.hidden_dim);
}

TEST_CASE("identical posts produce a deterministic score") {
  const auto toy = make_toy_model(3);
  Rng rng(5);
  const auto post = random_encoded_post(6, toy.vocab.size(), rng);
  const double p1 = verifier::score_pair(toy.model, post, post);
  const double p2 = verifier::score_pair(toy.model, post, post);
  CHECK(p1 == p2);
  CHECK(p1 > 0.0);
  CHECK(p1 < 1.0);
}

TEST_CASE("full-model gradient check on one pair") {
  for (const bool ordered : {false, true}) {
    auto toy = make_toy_model(17, 18, 8, 8, /*trainable=*/true, ordered);
    Rng rng(11);
    const auto left = random_encoded_post(6, toy.vocab.size(), rng);
    const auto right = random_encoded_post(5, toy.vocab.size(), rng);

    const auto params = toy.model.trainable_params();
    const auto analytic = verifier::pair_gradient(toy.model, left, right, 1);
    const auto loss_fn = [&]() {
      return nn::bce_loss(verifier::score_pair(toy.model, left, right), 1).loss;
    };
    std::size_t total = 0;
    for (const auto& p : params) total += p.size;
    const auto report = nn::grad_check(loss_fn, params, analytic.grads, 1e-5,
                                       1e-4, total, 17);
    INFO("ordered=" << ordered << " max_rel_err=" << report.max_rel_err
                    << " at " << report.worst_param);
    CHECK(report.pass);
  }
}

TEST_CASE("train rejects empty or single-label sets") {
  auto toy = make_toy_model(2);
  verifier::TrainSet empty;
  CHECK_THROWS_AS(verifier::train(toy.model, empty, {}), ValidationError);

  verifier::TrainSet single;
  Rng rng(3);
  single.posts.push_back(random_encoded_post(3, toy.vocab.size(), rng));
  single.posts.push_back(random_encoded_post(3, toy.vocab.size(), rng));
  single.pairs.push_back({0, 1, 1});
  CHECK_THROWS_AS(verifier::train(toy.model, single, {}), ValidationError);
}

TEST_CASE("training reduces loss and is deterministic across jobs") {
  auto toy = make_toy_model(29);
  toy.model.config.epochs = 8;
  toy.model.config.batch_size = 8;
  toy.model.config.lr = 5e-3;
  const auto set = toy_train_set(toy.model, 60, 5);

  auto model_a = toy.model;
  const auto report_a = verifier::train(model_a, set, set, 1);
  REQUIRE(report_a.epochs.size() == 8);
  CHECK(report_a.epochs.back().mean_loss < report_a.epochs.front().mean_loss);
  CHECK(report_a.val_accuracy.has_value());

  auto model_b = toy.model;
  const auto report_b = verifier::train(model_b, set, set, 2);
  // Per-pair gradients reduce in pair order, so jobs cannot change bits.
  CHECK(model_a.encoder.w_input == model_b.encoder.w_input);
  CHECK(model_a.merge_layer.weight == model_b.merge_layer.weight);
  for (std::size_t e = 0; e < report_a.epochs.size(); ++e) {
    CHECK(report_a.epochs[e].mean_loss == report_b.epochs[e].mean_loss);
    CHECK(report_a.epochs[e].train_accuracy == report_b.epochs[e].train_accuracy);
  }
}

TEST_CASE("frozen embeddings stay bit-identical through training") {
  auto toy = make_toy_model(8);
  toy.model.config.epochs = 3;
  const auto before = toy.model.embedding.vectors;
  const auto set = toy_train_set(toy.model, 30, 6);
  verifier::train(toy.model, set, {});
  CHECK(toy.model.embedding.vectors == before);
}

TEST_CASE("trainable embeddings move (except PAD)") {
  auto toy = make_toy_model(8, 18, 8, 8, /*trainable=*/true);
  toy.model.config.epochs = 3;
  const auto before = toy.model.embedding.vectors;
  const auto set = toy_train_set(toy.model, 30, 6);
  verifier::train(toy.model, set, {});
  CHECK(toy.model.embedding.vectors != before);
  for (std::size_t j = 0; j < toy.model.embedding.dim; ++j)
    CHECK(toy.model.embedding.vectors.at(0, j) == 0.0);
}

TEST_CASE("calibrate_from_scores") {
  using eval::ScoredExample;

  SUBCASE("perfect separation ties toward 0.5") {
    std::vector<ScoredExample> scored;
    for (double p : {0.91, 0.93, 0.97}) scored.push_back({p, true});
    for (double p : {0.02, 0.05, 0.08}) scored.push_back({p, false});
    const auto cal = verifier::calibrate_from_scores(scored);
    CHECK(cal.tau == 0.5);
    CHECK(cal.f_measure == 1.0);
    CHECK_FALSE(cal.degenerate);
  }

  SUBCASE("identical scores degenerate to 0.5 with a warning") {
    const std::vector<ScoredExample> scored = {{0.7, true}, {0.7, false}};
    const auto cal = verifier::calibrate_from_scores(scored);
    CHECK(cal.tau == 0.5);
    CHECK(cal.degenerate);
  }

  SUBCASE("single label is an error") {
    const std::vector<ScoredExample> scored = {{0.7, true}, {0.6, true}};
    CHECK_THROWS_AS(verifier::calibrate_from_scores(scored), ValidationError);
  }

  SUBCASE("matches an exhaustive grid oracle on a 4-score fixture") {
    const std::vector<ScoredExample> scored = {
        {0.2, false}, {0.4, false}, {0.6, true}, {0.8, true}};
    const auto cal = verifier::calibrate_from_scores(scored);

    double best_f = -1.0;
    double best_tau = 0.5;
    int best_dist = 1000;
    for (int i = 1; i <= 99; ++i) {
      const double tau = i / 100.0;
      const auto m = eval::evaluate_scored(scored, tau);
      if (!m.f_measure) continue;
      const int dist = std::abs(i - 50);
      if (*m.f_measure > best_f ||
          (*m.f_measure == best_f &&
           (dist < best_dist || (dist == best_dist && tau < best_tau)))) {
        best_f = *m.f_measure;
        best_tau = tau;
        best_dist = dist;
      }
    }
    CHECK(cal.tau == best_tau);
    CHECK(cal.f_measure == best_f);
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  auto toy = make_toy_model(77);
  toy.model.config.epochs = 2;
  const auto set = toy_train_set(toy.model, 20, 8);
  verifier::train(toy.model, set, {});

  const auto path =
      std::filesystem::temp_directory_path() / "averify_ckpt_test.avf";
  verifier::save_checkpoint(toy.model, path);
  const verifier::VerifierModel loaded = verifier::load_checkpoint(path, toy.vocab);

  CHECK(loaded.embedding.vectors == toy.model.embedding.vectors);
  CHECK(loaded.encoder.w_input == toy.model.encoder.w_input);
  CHECK(loaded.encoder.w_recur == toy.model.encoder.w_recur);
  CHECK(loaded.encoder.bias == toy.model.encoder.bias);
  CHECK(loaded.merge_layer.weight == toy.model.merge_layer.weight);
  CHECK(loaded.output_layer.weight == toy.model.output_layer.weight);
  CHECK(loaded.vocab_checksum == toy.model.vocab_checksum);
  CHECK(loaded.config.hidden_dim == toy.model.config.hidden_dim);
  CHECK(loaded.config.tokenizer == toy.model.config.tokenizer);

  Rng rng(123);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_encoded_post(1 + rng.below(7), toy.vocab.size(), rng);
    const auto b = random_encoded_post(1 + rng.below(7), toy.vocab.size(), rng);
    CHECK(verifier::score_pair(loaded, a, b) ==
          verifier::score_pair(toy.model, a, b));
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint corruption and mismatch detection") {
  auto toy = make_toy_model(55);
  const auto path =
      std::filesystem::temp_directory_path() / "averify_ckpt_corrupt.avf";
  verifier::save_checkpoint(toy.model, path);

  SUBCASE("flipped byte fails the checksum") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200, std::ios::beg);
    char c;
    f.seekg(200, std::ios::beg);
    f.get(c);
    f.seekp(200, std::ios::beg);
    f.put(static_cast<char>(c ^ 0x40));
    f.close();
    CHECK_THROWS_WITH_AS(verifier::load_checkpoint(path),
                         doctest::Contains("checksum"), ValidationError);
  }

  SUBCASE("truncated file is rejected") {
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 16);
    CHECK_THROWS_AS(verifier::load_checkpoint(path), ValidationError);
  }

  SUBCASE("bad magic is rejected") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0, std::ios::beg);
    f.write("NOPE", 4);
    f.close();
    CHECK_THROWS_WITH_AS(verifier::load_checkpoint(path),
                         doctest::Contains("magic"), ValidationError);
  }

  SUBCASE("wrong vocabulary is rejected") {
    const text::Vocabulary other = testing::make_toy_vocab(25);
    CHECK_THROWS_WITH_AS(verifier::load_checkpoint(path, other),
                         doctest::Contains("vocabulary"), ValidationError);
  }

  std::filesystem::remove(path);
}

TEST_CASE("training determinism: identical runs give identical checkpoints") {
  const auto run = [](const std::filesystem::path& path) {
    auto toy = make_toy_model(99);
    toy.model.config.epochs = 4;
    const auto set = toy_train_set(toy.model, 40, 4);
    verifier::train(toy.model, set, set, 2);
    verifier::save_checkpoint(toy.model, path);
  };
  const auto dir = std::filesystem::temp_directory_path();
  run(dir / "averify_det_a.avf");
  run(dir / "averify_det_b.avf");

  std::ifstream fa(dir / "averify_det_a.avf", std::ios::binary);
  std::ifstream fb(dir / "averify_det_b.avf", std::ios::binary);
  const std::string a((std::istreambuf_iterator<char>(fa)),
                      std::istreambuf_iterator<char>());
  const std::string b((std::istreambuf_iterator<char>(fb)),
                      std::istreambuf_iterator<char>());
  CHECK(a == b);
  CHECK_FALSE(a.empty());
  std::filesystem::remove(dir / "averify_det_a.avf");
  std::filesystem::remove(dir / "averify_det_b.avf");
}
