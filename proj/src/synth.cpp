// SPDX-License-Identifier: Apache-2.0

#include "averify/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "averify/error.hpp"
#include "averify/rng.hpp"

namespace averify::synth {

namespace {

// Pronounceable pseudo-words, distinct per pool index.
const char* kSyllables[] = {"ba", "ce", "di", "fo", "gu", "ha", "je",
                            "ki", "lo", "mu", "na", "pe", "qi", "ro",
                            "su", "ta", "ve", "wi", "xo", "zu"};
constexpr std::size_t kSyllableCount = 20;

std::string pool_word(std::size_t index) {
  std::string word = kSyllables[index % kSyllableCount];
  word += kSyllables[(index / kSyllableCount) % kSyllableCount];
  if (index >= kSyllableCount * kSyllableCount)
    word += kSyllables[(index / (kSyllableCount * kSyllableCount)) % kSyllableCount];
  return word;
}

/// Inverse-CDF sampler over ranks 0..k-1 with weight (rank+1)^-s.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t k, double exponent) : cdf_(k) {
    double total = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
      total += std::pow(static_cast<double>(r + 1), -exponent);
      cdf_[r] = total;
    }
    for (double& c : cdf_) c /= total;
  }

  std::size_t draw(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    return it == cdf_.end() ? cdf_.size() - 1
                            : static_cast<std::size_t>(it - cdf_.begin());
  }

 private:
  std::vector<double> cdf_;
};

std::vector<std::size_t> sample_distinct(std::vector<std::size_t> candidates,
                                         std::size_t count, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i)
    std::swap(candidates[i], candidates[i + rng.below(candidates.size() - i)]);
  candidates.resize(count);
  return candidates;
}

StyleProfile make_profile(const SynthSpec& spec,
                          const std::vector<std::size_t>& slice, Rng& rng) {
  StyleProfile profile;
  profile.tokens.reserve(slice.size());
  for (std::size_t idx : slice) profile.tokens.push_back(pool_word(idx));
  for (std::size_t j = 0; j < spec.hashtags_per_style && j < profile.tokens.size(); ++j)
    profile.hashtags.push_back("#" + profile.tokens[j]);
  profile.zipf_exponent = spec.zipf_exponent;
  profile.mean_post_length = spec.mean_post_length;
  profile.hashtag_rate = rng.uniform(0.04, 0.25);
  profile.mention_rate = rng.uniform(0.02, 0.15);
  profile.url_rate = rng.uniform(0.02, 0.12);
  return profile;
}

/// Posts follow a fixed micro-grammar: optional leading mentions, content
/// words emitted in slice-rank order, then hashtags and URLs. Rank-sorted
/// emission means two posts from one slice share literal token prefixes,
/// so lexical overlap is visible to sequence models as state agreement.
std::string render_post(const StyleProfile& style, const ZipfSampler& zipf,
                        Rng& rng) {
  const std::size_t jitter = rng.below(7);  // mean-3 .. mean+3
  const std::size_t length =
      std::max<std::size_t>(3, style.mean_post_length + jitter - 3);

  std::vector<std::size_t> ranks;
  std::vector<std::string> lead, tail;
  for (std::size_t i = 0; i < length; ++i) {
    const double u = rng.uniform();
    if (u < style.url_rate) {
      std::string url = "https://t.co/";
      for (int c = 0; c < 6; ++c)
        url += "abcdefghijklmnopqrstuvwxyz0123456789"[rng.below(36)];
      tail.push_back(std::move(url));
    } else if (u < style.url_rate + style.mention_rate) {
      lead.push_back("@u" + std::to_string(rng.below(1000)));
    } else if (u < style.url_rate + style.mention_rate + style.hashtag_rate &&
               !style.hashtags.empty()) {
      tail.push_back(style.hashtags[rng.below(style.hashtags.size())]);
    } else {
      ranks.push_back(zipf.draw(rng));
    }
  }
  std::sort(ranks.begin(), ranks.end());

  std::vector<std::string> tokens = std::move(lead);
  for (std::size_t r : ranks) tokens.push_back(style.tokens[r]);
  std::sort(tail.begin(), tail.end());
  for (std::string& t : tail) tokens.push_back(std::move(t));
  if (tokens.empty()) tokens.push_back(style.tokens[zipf.draw(rng)]);

  std::ostringstream text;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) text << ' ';
    text << tokens[i];
  }
  return text.str();
}

}  // namespace

corpus::Corpus generate_corpus(const SynthSpec& spec, std::uint64_t seed) {
  const std::size_t m = spec.posts_per_account;
  if (spec.n_accounts == 0) throw ValidationError("n_accounts must be positive");
  if (m < 2) throw ValidationError("posts_per_account must be at least 2");
  if (!(spec.fraction_compromised >= 0.0 && spec.fraction_compromised <= 1.0))
    throw ValidationError("fraction_compromised must be in [0, 1]");
  if (!(spec.style_overlap >= 0.0 && spec.style_overlap <= 1.0))
    throw ValidationError("style_overlap must be in [0, 1]");
  if (spec.slice_size < spec.hashtags_per_style || spec.slice_size == 0)
    throw ValidationError("slice_size too small");
  if (2 * spec.slice_size > spec.pool_size)
    throw ValidationError("pool must hold two disjoint slices");
  if (spec.mean_post_length < 3)
    throw ValidationError("mean_post_length must be at least 3");

  std::pair<std::size_t, std::size_t> range =
      spec.compromise_point_range.value_or(
          std::make_pair(std::max<std::size_t>(1, m / 3),
                         std::min(m - 1, (2 * m) / 3)));
  if (range.first < 1 || range.second > m - 1 || range.first > range.second)
    throw ValidationError("spec admits no valid compromise point");

  const auto n_compromised = static_cast<std::size_t>(
      std::llround(spec.fraction_compromised * static_cast<double>(spec.n_accounts)));
  std::vector<std::size_t> account_order(spec.n_accounts);
  std::iota(account_order.begin(), account_order.end(), std::size_t{0});
  Rng pick_rng(mix64(seed, 0xC011));
  pick_rng.shuffle(account_order);
  std::vector<bool> is_compromised(spec.n_accounts, false);
  for (std::size_t i = 0; i < n_compromised; ++i)
    is_compromised[account_order[i]] = true;

  std::vector<std::size_t> pool_indices(spec.pool_size);
  std::iota(pool_indices.begin(), pool_indices.end(), std::size_t{0});

  const ZipfSampler zipf(spec.slice_size, spec.zipf_exponent);

  corpus::Corpus out;
  out.accounts.reserve(spec.n_accounts);

  for (std::size_t i = 0; i < spec.n_accounts; ++i) {
    // Per-account derived seed: account generation is order-independent.
    Rng rng(mix64(seed, i + 1));

    const std::vector<std::size_t> owner_slice =
        sample_distinct(pool_indices, spec.slice_size, rng);
    const StyleProfile owner = make_profile(spec, owner_slice, rng);

    StyleProfile hijacker;
    std::optional<std::size_t> compromise_point;
    if (is_compromised[i]) {
      compromise_point = range.first + rng.below(range.second - range.first + 1);
      if (spec.style_overlap == 1.0) {
        hijacker = owner;
      } else {
        // The hijacker keeps a seeded random subset of the owner's rank
        // positions (relative order preserved) and fills the rest with
        // fresh pool tokens, so shared vocabulary spreads over all ranks.
        const auto shared = static_cast<std::size_t>(std::llround(
            spec.style_overlap * static_cast<double>(spec.slice_size)));
        std::vector<std::size_t> positions(spec.slice_size);
        std::iota(positions.begin(), positions.end(), std::size_t{0});
        positions = sample_distinct(std::move(positions), shared, rng);
        std::sort(positions.begin(), positions.end());

        std::vector<std::size_t> rest;
        rest.reserve(spec.pool_size - spec.slice_size);
        std::vector<bool> taken(spec.pool_size, false);
        for (std::size_t idx : owner_slice) taken[idx] = true;
        for (std::size_t idx = 0; idx < spec.pool_size; ++idx)
          if (!taken[idx]) rest.push_back(idx);
        const std::vector<std::size_t> fresh =
            sample_distinct(std::move(rest), spec.slice_size - shared, rng);

        std::vector<std::size_t> slice;
        slice.reserve(spec.slice_size);
        std::size_t pos_it = 0, fresh_it = 0;
        for (std::size_t p = 0; p < spec.slice_size; ++p) {
          if (pos_it < positions.size() && positions[pos_it] == p) {
            slice.push_back(owner_slice[p]);
            ++pos_it;
          } else {
            slice.push_back(fresh[fresh_it++]);
          }
        }
        hijacker = make_profile(spec, slice, rng);
      }
    }

    std::ostringstream account_id;
    account_id << "u" << std::setw(3) << std::setfill('0') << i;

    corpus::Account account;
    account.account_id = account_id.str();
    account.compromise_point = compromise_point;
    account.posts.reserve(m);
    for (std::size_t p = 0; p < m; ++p) {
      const bool hijacked = compromise_point && p >= *compromise_point;
      corpus::Post post;
      post.account_id = account.account_id;
      std::ostringstream pid;
      pid << "p" << std::setw(3) << std::setfill('0') << p;
      post.post_id = pid.str();
      post.timestamp = 1700000000 + static_cast<std::int64_t>(i) * 86400 +
                       static_cast<std::int64_t>(p) * 600;
      post.post_index = p;
      post.compromised_flag = hijacked;
      post.text = render_post(hijacked ? hijacker : owner, zipf, rng);
      account.posts.push_back(std::move(post));
    }
    out.accounts.push_back(std::move(account));
  }

  std::sort(out.accounts.begin(), out.accounts.end(),
            [](const corpus::Account& a, const corpus::Account& b) {
              return a.account_id < b.account_id;
            });
  return out;
}

void write_synth_manifest(const std::filesystem::path& path,
                          const SynthSpec& spec, std::uint64_t seed,
                          const corpus::Corpus& corpus) {
  nlohmann::json j;
  j["spec"] = {{"n_accounts", spec.n_accounts},
               {"posts_per_account", spec.posts_per_account},
               {"fraction_compromised", spec.fraction_compromised},
               {"style_overlap", spec.style_overlap},
               {"pool_size", spec.pool_size},
               {"slice_size", spec.slice_size},
               {"zipf_exponent", spec.zipf_exponent},
               {"mean_post_length", spec.mean_post_length},
               {"hashtags_per_style", spec.hashtags_per_style}};
  if (spec.compromise_point_range)
    j["spec"]["compromise_point_range"] = {spec.compromise_point_range->first,
                                           spec.compromise_point_range->second};
  j["seed"] = seed;
  nlohmann::json accounts = nlohmann::json::array();
  for (const corpus::Account& account : corpus.accounts) {
    nlohmann::json a;
    a["account_id"] = account.account_id;
    a["posts"] = account.posts.size();
    if (account.compromise_point) a["compromise_point"] = *account.compromise_point;
    else a["compromise_point"] = nullptr;
    accounts.push_back(std::move(a));
  }
  j["accounts"] = std::move(accounts);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write synth manifest: " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace averify::synth
