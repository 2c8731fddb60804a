// SPDX-License-Identifier: Apache-2.0

#include "averify/eval.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "averify/error.hpp"
#include "averify/verifier.hpp"

namespace averify::eval {

MetricsReport metrics_from_counts(const ConfusionMatrix& counts) {
  MetricsReport report;
  report.counts = counts;
  const std::size_t total = counts.total();
  if (total > 0)
    report.accuracy = static_cast<double>(counts.tp + counts.tn) /
                      static_cast<double>(total);
  if (counts.tp + counts.fp > 0)
    report.precision = static_cast<double>(counts.tp) /
                       static_cast<double>(counts.tp + counts.fp);
  if (counts.tp + counts.fn > 0)
    report.recall = static_cast<double>(counts.tp) /
                    static_cast<double>(counts.tp + counts.fn);
  if (report.precision && report.recall && (*report.precision + *report.recall) > 0.0)
    report.f_measure = 2.0 * *report.precision * *report.recall /
                       (*report.precision + *report.recall);
  return report;
}

MetricsReport evaluate_scored(std::span<const ScoredExample> scored, double tau) {
  if (scored.empty()) throw ValidationError("cannot evaluate an empty pair list");
  ConfusionMatrix counts;
  for (const ScoredExample& s : scored) {
    const bool predicted_positive = s.p_same < tau;  // positive = different author
    const bool actually_positive = !s.same_author;
    if (predicted_positive && actually_positive) ++counts.tp;
    else if (predicted_positive && !actually_positive) ++counts.fp;
    else if (!predicted_positive && actually_positive) ++counts.fn;
    else ++counts.tn;
  }
  return metrics_from_counts(counts);
}

std::vector<ScoredExample> score_pairs(const verifier::VerifierModel& model,
                                       const corpus::Corpus& corpus,
                                       const std::vector<corpus::PairExample>& pairs,
                                       std::size_t jobs) {
  const verifier::TrainSet set =
      verifier::encode_pairs(corpus, pairs, model.config.tokenizer, model.vocab);
  std::vector<ScoredExample> scored(set.pairs.size());

  const auto score_one = [&](std::size_t i) {
    const verifier::EncodedPair& p = set.pairs[i];
    scored[i] = {verifier::score_pair(model, set.posts[p.left], set.posts[p.right]),
                 p.label == 1};
  };
  if (jobs <= 1) {
    for (std::size_t i = 0; i < scored.size(); ++i) score_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < std::min(jobs, scored.size()); ++w)
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < scored.size();
             i = next.fetch_add(1))
          score_one(i);
      });
    for (std::thread& t : workers) t.join();
  }
  return scored;
}

MetricsReport evaluate_pairs(const verifier::VerifierModel& model, double tau,
                             const corpus::Corpus& corpus,
                             const std::vector<corpus::PairExample>& pairs,
                             std::size_t jobs) {
  if (pairs.empty()) throw ValidationError("cannot evaluate an empty pair list");
  return evaluate_scored(score_pairs(model, corpus, pairs, jobs), tau);
}

std::vector<SweepRow> sweep_thresholds(std::span<const ScoredExample> scored,
                                       std::span<const double> grid) {
  if (grid.empty()) throw ValidationError("threshold grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0 && grid[i] < 1.0))
      throw ValidationError("threshold grid values must be in (0, 1)");
    if (i > 0 && grid[i] <= grid[i - 1])
      throw ValidationError("threshold grid must be strictly ascending");
  }
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (double tau : grid) rows.push_back({tau, evaluate_scored(scored, tau)});
  return rows;
}

namespace {

std::string metric_str(const std::optional<double>& m) {
  if (!m) return "n/a";
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << *m;
  return os.str();
}

nlohmann::json metric_json(const std::optional<double>& m) {
  if (!m) return nullptr;
  return *m;
}

}  // namespace

std::string format_metrics_text(const MetricsReport& report) {
  std::ostringstream os;
  os << "pairs     " << report.counts.total() << "\n"
     << "tp/fp     " << report.counts.tp << "/" << report.counts.fp << "\n"
     << "fn/tn     " << report.counts.fn << "/" << report.counts.tn << "\n"
     << "accuracy  " << metric_str(report.accuracy) << "\n"
     << "precision " << metric_str(report.precision) << "\n"
     << "recall    " << metric_str(report.recall) << "\n"
     << "f-measure " << metric_str(report.f_measure) << "\n";
  return os.str();
}

void write_metrics_json(const std::filesystem::path& path,
                        const MetricsReport& report, double tau) {
  nlohmann::json j;
  j["tau"] = tau;
  j["counts"] = {{"tp", report.counts.tp},
                 {"fp", report.counts.fp},
                 {"fn", report.counts.fn},
                 {"tn", report.counts.tn}};
  j["accuracy"] = metric_json(report.accuracy);
  j["precision"] = metric_json(report.precision);
  j["recall"] = metric_json(report.recall);
  j["f_measure"] = metric_json(report.f_measure);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write metrics report: " + path.string());
  out << j.dump(2) << '\n';
}

void write_sweep_csv(const std::filesystem::path& path,
                     std::span<const SweepRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write sweep CSV: " + path.string());
  out << "tau,tp,fp,fn,tn,accuracy,precision,recall,f_measure\n";
  for (const SweepRow& row : rows) {
    out << row.tau << ',' << row.report.counts.tp << ',' << row.report.counts.fp
        << ',' << row.report.counts.fn << ',' << row.report.counts.tn;
    for (const auto& m : {row.report.accuracy, row.report.precision,
                          row.report.recall, row.report.f_measure}) {
      out << ',';
      if (m) out << *m;
      else out << "n/a";
    }
    out << '\n';
  }
}

}  // namespace averify::eval
