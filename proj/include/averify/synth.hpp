// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "averify/corpus.hpp"

namespace averify::synth {

/// One author voice: a ranked slice of the global token pool sampled with a
/// Zipf law, a private hashtag inventory, and sentinel-usage rates.
struct StyleProfile {
  std::vector<std::string> tokens;    // Zipf rank order
  std::vector<std::string> hashtags;  // emitted verbatim, '#' included
  double zipf_exponent = 1.1;
  std::size_t mean_post_length = 12;
  double hashtag_rate = 0.1;
  double mention_rate = 0.05;
  double url_rate = 0.05;
};

struct SynthSpec {
  std::size_t n_accounts = 20;
  std::size_t posts_per_account = 30;
  double fraction_compromised = 0.5;
  /// Fraction of the owner's token slice the hijacker shares. 0 = disjoint
  /// vocabularies, 1 = identical profile (the undetectable limit).
  double style_overlap = 0.0;
  /// Inclusive range for drawn compromise points; must leave at least one
  /// post on each side. Empty = derived middle third of the timeline.
  std::optional<std::pair<std::size_t, std::size_t>> compromise_point_range;

  // Shape knobs. Styles slice one shared pool so a model trained on some
  // accounts still knows the tokens of held-out accounts.
  std::size_t pool_size = 200;
  std::size_t slice_size = 40;
  double zipf_exponent = 1.1;
  std::size_t mean_post_length = 12;
  std::size_t hashtags_per_style = 4;
};

corpus::Corpus generate_corpus(const SynthSpec& spec, std::uint64_t seed);

/// Ground-truth sidecar: the spec, the seed, and each account's compromise
/// point as generated.
void write_synth_manifest(const std::filesystem::path& path,
                          const SynthSpec& spec, std::uint64_t seed,
                          const corpus::Corpus& corpus);

}  // namespace averify::synth
