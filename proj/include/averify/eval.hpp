// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "averify/corpus.hpp"

namespace averify::verifier {
struct VerifierModel;
}

namespace averify::eval {

/// One scored pair. The positive class throughout this module is
/// different-author (a compromised pairing); a pair is predicted positive
/// when p_same < tau.
struct ScoredExample {
  double p_same = 0.0;
  bool same_author = false;
};

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

/// Metrics are UNDEFINED (empty optional, rendered "n/a") whenever their
/// denominator is zero; they are never NaN.
struct MetricsReport {
  ConfusionMatrix counts;
  std::optional<double> accuracy, precision, recall, f_measure;
};

MetricsReport metrics_from_counts(const ConfusionMatrix& counts);

MetricsReport evaluate_scored(std::span<const ScoredExample> scored, double tau);

std::vector<ScoredExample> score_pairs(const verifier::VerifierModel& model,
                                       const corpus::Corpus& corpus,
                                       const std::vector<corpus::PairExample>& pairs,
                                       std::size_t jobs = 1);

MetricsReport evaluate_pairs(const verifier::VerifierModel& model, double tau,
                             const corpus::Corpus& corpus,
                             const std::vector<corpus::PairExample>& pairs,
                             std::size_t jobs = 1);

struct SweepRow {
  double tau = 0.0;
  MetricsReport report;
};

/// One report per grid value; grid must be ascending and inside (0,1).
std::vector<SweepRow> sweep_thresholds(std::span<const ScoredExample> scored,
                                       std::span<const double> grid);

std::string format_metrics_text(const MetricsReport& report);
void write_metrics_json(const std::filesystem::path& path,
                        const MetricsReport& report, double tau);
void write_sweep_csv(const std::filesystem::path& path,
                     std::span<const SweepRow> rows);

}  // namespace averify::eval
