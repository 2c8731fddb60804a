// SPDX-License-Identifier: Apache-2.0

#include "averify/detection.hpp"

#include <fstream>

#include <json.hpp>

#include "averify/error.hpp"

namespace averify::detection {

namespace {

std::string trim_copy(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kBootstrap: return "bootstrap";
    case Verdict::kAccepted: return "accepted";
    case Verdict::kFlagged: return "flagged";
  }
  return "bootstrap";
}

std::pair<AccountState, DetectionEvent> ingest_post(
    AccountState state, const verifier::VerifierModel& model, double tau,
    const corpus::Post& post, BaselinePolicy policy) {
  if (!(tau > 0.0 && tau < 1.0))
    throw ValidationError("threshold tau must be in (0, 1)");
  if (trim_copy(post.text).empty())
    throw ValidationError("empty post text reached detection for account '" +
                          post.account_id + "'");
  if (state.account_id.empty()) state.account_id = post.account_id;

  DetectionEvent event;
  event.account_id = post.account_id;
  event.post_id = post.post_id;
  event.threshold = tau;
  event.timestamp = post.timestamp;

  const auto tokens =
      text::normalize_and_tokenize(model.config.tokenizer, post.text);
  text::EncodedPost encoded = text::encode_post(model.vocab, tokens);

  ++state.posts_seen;
  if (!state.baseline) {
    event.verdict = Verdict::kBootstrap;
    state.baseline = std::move(encoded);
    return {std::move(state), std::move(event)};
  }

  const double p = verifier::score_pair(model, *state.baseline, encoded);
  event.p_same = p;
  if (p >= tau) {
    event.verdict = Verdict::kAccepted;
    state.baseline = std::move(encoded);
  } else {
    event.verdict = Verdict::kFlagged;
    ++state.flags_raised;
    if (policy == BaselinePolicy::kAlwaysUpdate) state.baseline = std::move(encoded);
  }
  return {std::move(state), std::move(event)};
}

ReplayResult replay_timeline(const verifier::VerifierModel& model, double tau,
                             const corpus::Account& account,
                             BaselinePolicy policy) {
  ReplayResult result;
  result.compromised = account.compromise_point.has_value();

  AccountState state;
  state.account_id = account.account_id;
  for (const corpus::Post& post : account.posts) {
    auto [next, event] = ingest_post(std::move(state), model, tau, post, policy);
    state = std::move(next);
    result.events.push_back(std::move(event));
  }

  const std::size_t t = account.owner_prefix();
  for (std::size_t i = 0; i < result.events.size(); ++i) {
    if (result.events[i].verdict != Verdict::kFlagged) continue;
    if (result.compromised && i >= t) {
      if (!result.detection_delay) result.detection_delay = i - t;
    } else {
      ++result.false_flags;
    }
  }
  result.scored_posts = result.events.empty() ? 0 : result.events.size() - 1;
  return result;
}

void write_detection_log(const std::filesystem::path& path,
                         const std::vector<DetectionEvent>& events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write detection log: " + path.string());
  for (const DetectionEvent& e : events) {
    nlohmann::json j;
    j["account_id"] = e.account_id;
    j["post_id"] = e.post_id;
    if (e.p_same) j["p_same"] = *e.p_same;
    else j["p_same"] = nullptr;
    j["verdict"] = std::string(verdict_name(e.verdict));
    j["threshold"] = e.threshold;
    j["ts"] = e.timestamp;
    out << j.dump() << '\n';
  }
}

}  // namespace averify::detection
