// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "averify/corpus.hpp"
#include "averify/text.hpp"
#include "averify/verifier.hpp"

namespace averify::detection {

/// Per-account verifier state: the last accepted post is the baseline every
/// new post is scored against.
struct AccountState {
  std::string account_id;
  std::optional<text::EncodedPost> baseline;
  std::size_t posts_seen = 0;
  std::size_t flags_raised = 0;
};

enum class Verdict { kBootstrap, kAccepted, kFlagged };

std::string_view verdict_name(Verdict v);

struct DetectionEvent {
  std::string account_id;
  std::string post_id;
  std::optional<double> p_same;  // empty on bootstrap
  Verdict verdict = Verdict::kBootstrap;
  double threshold = 0.0;
  std::int64_t timestamp = 0;
};

/// Flagged posts never become the baseline under quarantine (the default),
/// so a hijacker cannot rotate the baseline toward their own style. The
/// always-update policy replaces the baseline unconditionally.
enum class BaselinePolicy { kQuarantine, kAlwaysUpdate };

/// Score one incoming post against the account baseline. First post ever
/// bootstraps the baseline; afterwards p_same >= tau accepts (and the post
/// becomes the new baseline), p_same < tau flags. Deterministic in
/// (state, model, tau, post).
std::pair<AccountState, DetectionEvent> ingest_post(
    AccountState state, const verifier::VerifierModel& model, double tau,
    const corpus::Post& post, BaselinePolicy policy = BaselinePolicy::kQuarantine);

struct ReplayResult {
  std::vector<DetectionEvent> events;
  bool compromised = false;
  /// Compromised accounts: first flag at or after the compromise point,
  /// in hijacker posts (0 = the very first hijacker post was caught);
  /// empty when never flagged after the compromise point.
  std::optional<std::size_t> detection_delay;
  /// Healthy accounts: all flags. Compromised: flags before the compromise
  /// point (owner posts wrongly flagged).
  std::size_t false_flags = 0;
  std::size_t scored_posts = 0;  // events excluding the bootstrap
};

ReplayResult replay_timeline(const verifier::VerifierModel& model, double tau,
                             const corpus::Account& account,
                             BaselinePolicy policy = BaselinePolicy::kQuarantine);

void write_detection_log(const std::filesystem::path& path,
                         const std::vector<DetectionEvent>& events);

}  // namespace averify::detection
