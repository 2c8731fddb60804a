// SPDX-License-Identifier: Apache-2.0

#include "averify/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "averify/error.hpp"
#include "averify/rng.hpp"

namespace averify::corpus {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::size_t count_codepoints(const std::string& utf8) {
  std::size_t count = 0;
  for (unsigned char c : utf8)
    if ((c & 0xC0) != 0x80) ++count;
  return count;
}

const char* label_name(PairLabel label) {
  return label == PairLabel::kSameAuthor ? "same_author" : "different_author";
}

const char* origin_name(PairOrigin origin) {
  return origin == PairOrigin::kTrain ? "train" : "test";
}

}  // namespace

std::size_t Corpus::total_posts() const {
  std::size_t total = 0;
  for (const Account& a : accounts) total += a.posts.size();
  return total;
}

const Account* Corpus::find(const std::string& account_id) const {
  const auto it = std::lower_bound(
      accounts.begin(), accounts.end(), account_id,
      [](const Account& a, const std::string& id) { return a.account_id < id; });
  if (it == accounts.end() || it->account_id != account_id) return nullptr;
  return &*it;
}

const Post& Corpus::post(const std::string& account_id, std::size_t index) const {
  const Account* account = find(account_id);
  if (account == nullptr)
    throw ValidationError("unknown account '" + account_id + "'");
  if (index >= account->posts.size())
    throw ValidationError("post index " + std::to_string(index) +
                          " out of range for account '" + account_id + "'");
  return account->posts[index];
}

Corpus load_corpus(const std::filesystem::path& path, LoadMode mode) {
  std::ifstream in(path);
  if (!in)
    throw ValidationError("cannot open corpus file: " + path.string());
  return load_corpus(in, mode, path.string());
}

Corpus load_corpus(std::istream& in, LoadMode mode,
                   const std::string& source_name) {
  std::map<std::string, std::vector<Post>> by_account;
  std::string line;
  std::size_t lineno = 0;
  std::size_t posts_read = 0;

  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;

    json j;
    try {
      j = json::parse(stripped);
    } catch (const json::parse_error& e) {
      throw ValidationError(source_name + ":" + std::to_string(lineno) +
                            ": invalid JSON: " + e.what());
    }

    const auto fail = [&](const std::string& msg) -> ValidationError {
      return ValidationError(source_name + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (!j.is_object()) throw fail("expected a JSON object");
    for (const char* key : {"account_id", "post_id", "ts", "text", "compromised"})
      if (!j.contains(key)) throw fail(std::string("missing key '") + key + "'");
    if (!j["account_id"].is_string() || !j["post_id"].is_string() ||
        !j["text"].is_string() || !j["ts"].is_number_integer() ||
        !j["compromised"].is_boolean())
      throw fail("wrong field type (account_id/post_id/text: string, ts: integer, compromised: boolean)");

    Post post;
    post.account_id = j["account_id"].get<std::string>();
    post.post_id = j["post_id"].get<std::string>();
    post.timestamp = j["ts"].get<std::int64_t>();
    post.text = j["text"].get<std::string>();
    post.compromised_flag = j["compromised"].get<bool>();

    if (post.account_id.empty()) throw fail("empty account_id");
    if (trim(post.text).empty()) throw fail("post text is empty");
    if (count_codepoints(post.text) > 280)
      throw fail("post text exceeds 280 code points");

    by_account[post.account_id].push_back(std::move(post));
    ++posts_read;
  }

  if (posts_read == 0)
    throw ValidationError(source_name + ": no posts (empty corpus file)");

  Corpus corpus;
  corpus.accounts.reserve(by_account.size());
  for (auto& [id, posts] : by_account) {
    Account account;
    account.account_id = id;
    std::stable_sort(posts.begin(), posts.end(),
                     [](const Post& a, const Post& b) {
                       return std::tie(a.timestamp, a.post_id) <
                              std::tie(b.timestamp, b.post_id);
                     });
    std::set<std::string> seen_ids;
    for (std::size_t i = 0; i < posts.size(); ++i) {
      if (!seen_ids.insert(posts[i].post_id).second)
        throw ValidationError("account '" + id + "': duplicate post_id '" +
                              posts[i].post_id + "'");
      posts[i].post_index = i;
      if (posts[i].compromised_flag && !account.compromise_point)
        account.compromise_point = i;
    }
    if (mode == LoadMode::kStrict && account.compromise_point) {
      for (std::size_t i = *account.compromise_point; i < posts.size(); ++i)
        if (!posts[i].compromised_flag)
          throw ValidationError(
              "account '" + id +
              "': compromised flags are not contiguous (post index " +
              std::to_string(i) + " unflagged after index " +
              std::to_string(*account.compromise_point) + ")");
    }
    account.posts = std::move(posts);
    corpus.accounts.push_back(std::move(account));
  }
  return corpus;
}

void write_corpus_jsonl(std::ostream& out, const Corpus& corpus) {
  for (const Account& account : corpus.accounts) {
    for (const Post& post : account.posts) {
      json j;
      j["account_id"] = post.account_id;
      j["post_id"] = post.post_id;
      j["ts"] = post.timestamp;
      j["text"] = post.text;
      j["compromised"] = post.compromised_flag;
      out << j.dump() << '\n';
    }
  }
}

void write_corpus_jsonl(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write corpus file: " + path.string());
  write_corpus_jsonl(out, corpus);
}

std::pair<Corpus, Corpus> split_accounts(const Corpus& corpus,
                                         double train_fraction,
                                         std::uint64_t seed) {
  if (corpus.n() < 2)
    throw ValidationError("split_accounts requires at least 2 accounts");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError("train_fraction must be in (0, 1)");

  const std::size_t n = corpus.n();
  const std::size_t n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n)
    throw ValidationError("train_fraction " + std::to_string(train_fraction) +
                          " produces an empty split side for n=" +
                          std::to_string(n));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  Corpus train, test;
  for (std::size_t i = 0; i < n; ++i)
    (i < n_train ? train : test).accounts.push_back(corpus.accounts[order[i]]);
  auto by_id = [](const Account& a, const Account& b) {
    return a.account_id < b.account_id;
  };
  std::sort(train.accounts.begin(), train.accounts.end(), by_id);
  std::sort(test.accounts.begin(), test.accounts.end(), by_id);
  return {std::move(train), std::move(test)};
}

std::vector<PairExample> generate_train_pairs(const Corpus& corpus) {
  std::vector<PairExample> pairs;
  const auto& accounts = corpus.accounts;
  for (std::size_t i = 0; i < accounts.size(); ++i) {
    const std::size_t ti = accounts[i].owner_prefix();
    // Same-account pairs over the owner prefix.
    for (std::size_t k = 0; k < ti; ++k)
      for (std::size_t r = k + 1; r < ti; ++r)
        pairs.push_back({accounts[i].account_id, k, accounts[i].account_id, r,
                         PairLabel::kSameAuthor, PairOrigin::kTrain});
    // Cross-account pairs; accounts are id-sorted so left is canonical.
    for (std::size_t j = i + 1; j < accounts.size(); ++j) {
      const std::size_t tj = accounts[j].owner_prefix();
      for (std::size_t k = 0; k < ti; ++k)
        for (std::size_t r = 0; r < tj; ++r)
          pairs.push_back({accounts[i].account_id, k, accounts[j].account_id, r,
                           PairLabel::kDifferentAuthor, PairOrigin::kTrain});
    }
  }
  return pairs;
}

std::vector<PairExample> generate_test_pairs(const Corpus& corpus,
                                             std::size_t healthy_sample_cap,
                                             std::uint64_t seed) {
  std::vector<PairExample> pairs;
  for (const Account& account : corpus.accounts) {
    if (account.compromise_point) {
      const std::size_t t = *account.compromise_point;
      for (std::size_t k = 0; k < t; ++k)
        for (std::size_t r = t; r < account.posts.size(); ++r)
          pairs.push_back({account.account_id, k, account.account_id, r,
                           PairLabel::kDifferentAuthor, PairOrigin::kTest});
    } else {
      std::vector<std::pair<std::size_t, std::size_t>> all;
      const std::size_t m = account.posts.size();
      for (std::size_t k = 0; k < m; ++k)
        for (std::size_t r = k + 1; r < m; ++r) all.emplace_back(k, r);
      if (all.size() > healthy_sample_cap) {
        Rng rng(mix64(seed, fnv1a64(account.account_id)));
        for (std::size_t i = 0; i < healthy_sample_cap; ++i)
          std::swap(all[i], all[i + rng.below(all.size() - i)]);
        all.resize(healthy_sample_cap);
        std::sort(all.begin(), all.end());
      }
      for (const auto& [k, r] : all)
        pairs.push_back({account.account_id, k, account.account_id, r,
                         PairLabel::kSameAuthor, PairOrigin::kTest});
    }
  }
  return pairs;
}

BalanceResult balance_pairs(const std::vector<PairExample>& pairs, double ratio,
                            std::uint64_t seed) {
  if (!(ratio > 0.0)) throw ValidationError("balance ratio must be > 0");

  std::vector<std::size_t> same, diff;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    (pairs[i].label == PairLabel::kSameAuthor ? same : diff).push_back(i);

  if (same.empty() || diff.empty()) return {pairs, true};

  auto& majority = same.size() >= diff.size() ? same : diff;
  const std::size_t minority_count = std::min(same.size(), diff.size());
  const auto target = static_cast<std::size_t>(ratio * static_cast<double>(minority_count));
  if (majority.size() <= target) return {pairs, false};

  Rng rng(seed);
  for (std::size_t i = 0; i < target; ++i)
    std::swap(majority[i], majority[i + rng.below(majority.size() - i)]);
  majority.resize(target);

  std::vector<bool> keep(pairs.size(), false);
  for (std::size_t i : same) keep[i] = true;
  for (std::size_t i : diff) keep[i] = true;

  BalanceResult result;
  result.pairs.reserve(target + minority_count);
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (keep[i]) result.pairs.push_back(pairs[i]);
  return result;
}

void write_pairs_jsonl(const std::filesystem::path& path,
                       const std::vector<PairExample>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write pair file: " + path.string());
  for (const PairExample& p : pairs) {
    json j;
    j["left_account"] = p.left_account;
    j["left_index"] = p.left_index;
    j["right_account"] = p.right_account;
    j["right_index"] = p.right_index;
    j["label"] = label_name(p.label);
    j["origin"] = origin_name(p.origin);
    out << j.dump() << '\n';
  }
}

std::vector<PairExample> read_pairs_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open pair file: " + path.string());
  std::vector<PairExample> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    json j;
    try {
      j = json::parse(stripped);
    } catch (const json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": invalid JSON: " + e.what());
    }
    PairExample p;
    try {
      p.left_account = j.at("left_account").get<std::string>();
      p.left_index = j.at("left_index").get<std::size_t>();
      p.right_account = j.at("right_account").get<std::string>();
      p.right_index = j.at("right_index").get<std::size_t>();
      const std::string label = j.at("label").get<std::string>();
      const std::string origin = j.at("origin").get<std::string>();
      if (label == "same_author") p.label = PairLabel::kSameAuthor;
      else if (label == "different_author") p.label = PairLabel::kDifferentAuthor;
      else throw ValidationError("unknown label '" + label + "'");
      if (origin == "train") p.origin = PairOrigin::kTrain;
      else if (origin == "test") p.origin = PairOrigin::kTest;
      else throw ValidationError("unknown origin '" + origin + "'");
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": " + e.what());
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace averify::corpus
