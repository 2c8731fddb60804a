// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace averify::corpus {

struct Post {
  std::string account_id;
  std::size_t post_index = 0;  // ordinal within the account, assigned on load
  std::string post_id;
  std::int64_t timestamp = 0;
  std::string text;
  bool compromised_flag = false;
};

struct Account {
  std::string account_id;
  std::vector<Post> posts;
  // First post index flagged as compromised; empty for a healthy account.
  std::optional<std::size_t> compromise_point;

  bool healthy() const { return !compromise_point.has_value(); }
  /// Number of leading posts authored by the account owner.
  std::size_t owner_prefix() const {
    return compromise_point.value_or(posts.size());
  }
};

struct Corpus {
  std::vector<Account> accounts;  // sorted by account_id

  std::size_t n() const { return accounts.size(); }
  std::size_t total_posts() const;
  const Account* find(const std::string& account_id) const;
  const Post& post(const std::string& account_id, std::size_t index) const;
};

/// strict requires each compromised account's flags to form a contiguous
/// suffix; label tolerates mixed annotations and still uses the first
/// flagged index as the compromise point.
enum class LoadMode { kStrict, kLabel };

/// One post per JSONL line: account_id, post_id, ts, text, compromised.
/// Lines starting with '#' and blank lines are skipped. Posts are ordered
/// within each account by (ts, post_id) and indexed in that order.
Corpus load_corpus(const std::filesystem::path& path, LoadMode mode);
Corpus load_corpus(std::istream& in, LoadMode mode, const std::string& source_name);

void write_corpus_jsonl(std::ostream& out, const Corpus& corpus);
void write_corpus_jsonl(const std::filesystem::path& path, const Corpus& corpus);

enum class PairLabel { kSameAuthor, kDifferentAuthor };
enum class PairOrigin { kTrain, kTest };

struct PairExample {
  std::string left_account;
  std::size_t left_index = 0;
  std::string right_account;
  std::size_t right_index = 0;
  PairLabel label = PairLabel::kSameAuthor;
  PairOrigin origin = PairOrigin::kTrain;

  bool operator==(const PairExample&) const = default;
};

/// Account-disjoint split with round(train_fraction * n) training accounts,
/// deterministic in the seed.
std::pair<Corpus, Corpus> split_accounts(const Corpus& corpus,
                                         double train_fraction,
                                         std::uint64_t seed);

/// Every unordered owner-authored pair across the corpus: same-account
/// pairs labelled same-author, cross-account pairs different-author. Posts
/// at or past an account's compromise point never participate. Pairs are
/// canonical (left is the lexicographically smaller (account_id, index))
/// and emitted in sorted order.
std::vector<PairExample> generate_train_pairs(const Corpus& corpus);

/// For each compromised account: all (owner post, hijacker post) pairs,
/// labelled different-author. For each healthy account: same-account pairs
/// labelled same-author, downsampled to healthy_sample_cap per account with
/// a per-account seed derived from `seed`.
std::vector<PairExample> generate_test_pairs(const Corpus& corpus,
                                             std::size_t healthy_sample_cap,
                                             std::uint64_t seed);

struct BalanceResult {
  std::vector<PairExample> pairs;
  bool single_label = false;  // set when balancing was impossible
};

/// Downsample the majority label until its count is at most ratio times the
/// minority count. Minority examples are never dropped; surviving pairs keep
/// their original order.
BalanceResult balance_pairs(const std::vector<PairExample>& pairs, double ratio,
                            std::uint64_t seed);

void write_pairs_jsonl(const std::filesystem::path& path,
                       const std::vector<PairExample>& pairs);
std::vector<PairExample> read_pairs_jsonl(const std::filesystem::path& path);

}  // namespace averify::corpus
