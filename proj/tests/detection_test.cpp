// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "averify/detection.hpp"
#include "averify/error.hpp"
#include "support/build_corpus.hpp"
#include "support/toy_model.hpp"

using namespace averify;
using detection::BaselinePolicy;
using detection::Verdict;

namespace {

corpus::Post make_post(const std::string& account, std::size_t index,
                       const std::string& text) {
  corpus::Post post;
  post.account_id = account;
  post.post_index = index;
  post.post_id = "p" + std::to_string(index);
  post.timestamp = 1000 + static_cast<std::int64_t>(index);
  post.text = text;
  return post;
}

/// Posts with real text drawn from the toy vocabulary so encoding is
/// meaningful end to end.
corpus::Account vocab_account(const std::string& id, std::size_t posts,
                              std::optional<std::size_t> point) {
  corpus::Account account;
  account.account_id = id;
  account.compromise_point = point;
  for (std::size_t i = 0; i < posts; ++i) {
    corpus::Post post = make_post(id, i, "tok1 tok2 tok" + std::to_string(i % 9));
    post.compromised_flag = point && i >= *point;
    account.posts.push_back(std::move(post));
  }
  return account;
}

}  // namespace

TEST_CASE("ingest_post: bootstrap, accept, flag, boundary") {
  const auto toy = testing::make_toy_model(41);
  detection::AccountState state;

  const corpus::Post first = make_post("a", 0, "tok1 tok2 tok3");
  auto [s1, e1] = detection::ingest_post(state, toy.model, 0.5, first);
  CHECK(e1.verdict == Verdict::kBootstrap);
  CHECK_FALSE(e1.p_same.has_value());
  REQUIRE(s1.baseline.has_value());
  CHECK(s1.posts_seen == 1);

  // Measure the real score, then pin the boundary with tau = p (accept)
  // and tau just above p (flag).
  const corpus::Post second = make_post("a", 1, "tok4 tok5");
  auto [s2, e2] = detection::ingest_post(s1, toy.model, 0.5, second);
  REQUIRE(e2.p_same.has_value());
  const double p = *e2.p_same;
  REQUIRE(p > 0.0);
  REQUIRE(p < 1.0);

  auto [s_acc, e_acc] = detection::ingest_post(s1, toy.model, p, second);
  CHECK(e_acc.verdict == Verdict::kAccepted);  // p_same == tau accepts
  CHECK(s_acc.flags_raised == 0);

  const double above = std::nextafter(p, 1.0);
  auto [s_flag, e_flag] = detection::ingest_post(s1, toy.model, above, second);
  CHECK(e_flag.verdict == Verdict::kFlagged);
  CHECK(s_flag.flags_raised == 1);
  // Quarantine: the flagged post did not become the baseline.
  CHECK(s_flag.baseline->ids == s1.baseline->ids);
  // Accepted post did.
  CHECK(s_acc.baseline->ids != s1.baseline->ids);
}

TEST_CASE("ingest_post rejects bad tau and empty text") {
  const auto toy = testing::make_toy_model(42);
  detection::AccountState state;
  const corpus::Post post = make_post("a", 0, "tok1");
  CHECK_THROWS_AS(detection::ingest_post(state, toy.model, 0.0, post),
                  ValidationError);
  CHECK_THROWS_AS(detection::ingest_post(state, toy.model, 1.0, post),
                  ValidationError);
  const corpus::Post empty = make_post("a", 0, "   ");
  CHECK_THROWS_AS(detection::ingest_post(state, toy.model, 0.5, empty),
                  ValidationError);
}

TEST_CASE("always-update policy rotates the baseline on flags") {
  const auto toy = testing::make_toy_model(43);
  detection::AccountState state;
  auto [s1, e1] = detection::ingest_post(state, toy.model, 0.5,
                                         make_post("a", 0, "tok1 tok2"));
  const corpus::Post next = make_post("a", 1, "tok7 tok8");
  auto [s2, e2] = detection::ingest_post(s1, toy.model, 0.5, next);
  const double p = *e2.p_same;
  const double above = std::nextafter(p, 1.0);
  auto [s3, e3] = detection::ingest_post(s1, toy.model, above, next,
                                         BaselinePolicy::kAlwaysUpdate);
  CHECK(e3.verdict == Verdict::kFlagged);
  CHECK(s3.baseline->ids != s1.baseline->ids);
}

TEST_CASE("replay_timeline: event structure invariants") {
  const auto toy = testing::make_toy_model(44);
  const corpus::Account account = vocab_account("a", 6, std::nullopt);

  // Microscopic tau: p_same is always above it, so everything is accepted.
  const auto result = detection::replay_timeline(toy.model, 1e-9, account);
  CHECK(result.events.size() == account.posts.size());
  CHECK(result.scored_posts == account.posts.size() - 1);
  std::size_t bootstraps = 0;
  for (const auto& e : result.events) bootstraps += e.verdict == Verdict::kBootstrap;
  CHECK(bootstraps == 1);
  CHECK(result.events.front().verdict == Verdict::kBootstrap);
  CHECK_FALSE(result.compromised);
  CHECK(result.false_flags == 0);
  CHECK_FALSE(result.detection_delay.has_value());

  // Replay is deterministic.
  const auto again = detection::replay_timeline(toy.model, 1e-9, account);
  REQUIRE(again.events.size() == result.events.size());
  for (std::size_t i = 0; i < result.events.size(); ++i) {
    CHECK(again.events[i].verdict == result.events[i].verdict);
    CHECK(again.events[i].p_same == result.events[i].p_same);
  }
}

TEST_CASE("replay_timeline: delay accounting under a flag-everything threshold") {
  const auto toy = testing::make_toy_model(45);

  // tau so high every scored post flags; scores stay below 1-1e-9.
  const double tau = 1.0 - 1e-12;

  SUBCASE("compromised at t=3: pre-compromise flags are false flags, delay 0") {
    const corpus::Account account = vocab_account("c", 6, 3);
    const auto result = detection::replay_timeline(toy.model, tau, account);
    CHECK(result.compromised);
    REQUIRE(result.detection_delay.has_value());
    CHECK(*result.detection_delay == 0);  // index 3 flags, 3 - 3 = 0
    CHECK(result.false_flags == 2);       // indices 1 and 2 (0 is bootstrap)
  }

  SUBCASE("healthy account: every scored post is a false flag") {
    const corpus::Account account = vocab_account("h", 5, std::nullopt);
    const auto result = detection::replay_timeline(toy.model, tau, account);
    CHECK(result.false_flags == 4);
    CHECK_FALSE(result.detection_delay.has_value());
  }

  SUBCASE("compromised but never flagged: NOT_DETECTED") {
    const corpus::Account account = vocab_account("c", 6, 3);
    const auto result = detection::replay_timeline(toy.model, 1e-9, account);
    CHECK(result.compromised);
    CHECK_FALSE(result.detection_delay.has_value());
  }
}

TEST_CASE("quarantine keeps the baseline pinned through a flag streak") {
  const auto toy = testing::make_toy_model(46);
  const corpus::Account account = vocab_account("q", 5, std::nullopt);
  const double tau = 1.0 - 1e-12;
  const auto result = detection::replay_timeline(toy.model, tau, account);

  // With quarantine, every event after bootstrap scores against post 0.
  const auto tokens0 = text::normalize_and_tokenize(
      toy.model.config.tokenizer, account.posts[0].text);
  const auto baseline = text::encode_post(toy.model.vocab, tokens0);
  for (std::size_t i = 1; i < account.posts.size(); ++i) {
    const auto tokens = text::normalize_and_tokenize(
        toy.model.config.tokenizer, account.posts[i].text);
    const auto encoded = text::encode_post(toy.model.vocab, tokens);
    const double expect = verifier::score_pair(toy.model, baseline, encoded);
    CHECK(result.events[i].p_same == expect);
  }
}

TEST_CASE("detection log is valid JSONL with null p_same on bootstrap") {
  const auto toy = testing::make_toy_model(47);
  const corpus::Account account = vocab_account("log", 3, std::nullopt);
  const auto result = detection::replay_timeline(toy.model, 0.5, account);
  const auto path =
      std::filesystem::temp_directory_path() / "averify_detect_log.jsonl";
  detection::write_detection_log(path, result.events);

  std::ifstream in(path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("account_id"));
    CHECK(j.contains("post_id"));
    CHECK(j.contains("p_same"));
    CHECK(j.contains("verdict"));
    CHECK(j.contains("threshold"));
    CHECK(j.contains("ts"));
    if (lines == 0) CHECK(j["p_same"].is_null());
    ++lines;
  }
  CHECK(lines == 3);
  std::filesystem::remove(path);
}
