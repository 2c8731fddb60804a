// SPDX-License-Identifier: Apache-2.0
//
// averify: compromised-account detection by authorship verification.
// Subcommands cover the whole pipeline: synth -> pairs -> train -> eval /
// detect, plus gradcheck for the numerical core.

#include <zlib.h>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "averify/corpus.hpp"
#include "averify/detection.hpp"
#include "averify/error.hpp"
#include "averify/eval.hpp"
#include "averify/kernels.hpp"
#include "averify/nn.hpp"
#include "averify/synth.hpp"
#include "averify/text.hpp"
#include "averify/verifier.hpp"

namespace {

using nlohmann::json;
namespace av = averify;

// ---------------------------------------------------------------------------
// Run manifests: every subcommand records its resolved flags and the digests
// of everything it read and wrote, next to its primary output.
// ---------------------------------------------------------------------------

json file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw av::ValidationError("cannot open file for digest: " + path.string());
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t bytes = 0;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    crc = crc32(crc, reinterpret_cast<const Bytef*>(buf),
                static_cast<uInt>(in.gcount()));
    bytes += static_cast<std::size_t>(in.gcount());
    if (!in) break;
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(8) << std::setfill('0') << crc;
  return {{"crc32", hex.str()}, {"bytes", bytes}};
}

struct Manifest {
  std::string subcommand;
  json flags = json::object();
  json inputs = json::object();
  json outputs = json::object();

  void add_input(const std::filesystem::path& path) {
    inputs[path.string()] = file_digest(path);
  }
  void add_output(const std::filesystem::path& path) {
    outputs[path.string()] = file_digest(path);
  }
  void write(const std::filesystem::path& primary_output) const {
    json j;
    j["tool"] = "averify";
    j["subcommand"] = subcommand;
    j["kernel"] = av::kernels::active_backend().name;
    j["flags"] = flags;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    const std::filesystem::path path = primary_output.string() + ".manifest.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw av::ValidationError("cannot write manifest: " + path.string());
    out << j.dump(2) << '\n';
  }
};

av::corpus::LoadMode parse_mode(const std::string& mode) {
  if (mode == "strict") return av::corpus::LoadMode::kStrict;
  if (mode == "label") return av::corpus::LoadMode::kLabel;
  throw av::ValidationError("unknown load mode '" + mode + "' (strict|label)");
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  av::synth::SynthSpec spec;
  std::uint64_t seed = 1;
  std::vector<std::size_t> compromise_range;
};

int run_synth(const SynthArgs& args) {
  av::synth::SynthSpec spec = args.spec;
  if (!args.compromise_range.empty()) {
    if (args.compromise_range.size() != 2)
      throw av::ValidationError("--compromise-range takes exactly two values");
    spec.compromise_point_range = {args.compromise_range[0], args.compromise_range[1]};
  }

  const av::corpus::Corpus corpus = av::synth::generate_corpus(spec, args.seed);
  av::corpus::write_corpus_jsonl(args.out, corpus);
  const std::string truth_path = args.out + ".truth.json";
  av::synth::write_synth_manifest(truth_path, spec, args.seed, corpus);

  Manifest manifest;
  manifest.subcommand = "synth";
  manifest.flags = {{"out", args.out},
                    {"seed", args.seed},
                    {"n", spec.n_accounts},
                    {"posts", spec.posts_per_account},
                    {"frac", spec.fraction_compromised},
                    {"overlap", spec.style_overlap},
                    {"pool", spec.pool_size},
                    {"slice", spec.slice_size},
                    {"zipf", spec.zipf_exponent},
                    {"mean-len", spec.mean_post_length},
                    {"hashtags", spec.hashtags_per_style}};
  manifest.add_output(args.out);
  manifest.add_output(truth_path);
  manifest.write(args.out);

  std::cerr << "wrote " << corpus.total_posts() << " posts for " << corpus.n()
            << " accounts to " << args.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// pairs
// ---------------------------------------------------------------------------

struct PairsArgs {
  std::string in;
  std::string train_out;
  std::string test_out;
  std::string val_out;
  std::string train_corpus_out;
  std::string test_corpus_out;
  std::string mode = "strict";
  std::uint64_t seed = 7;
  double train_fraction = 0.8;
  double val_fraction = 0.15;
  double balance_ratio = 1.0;
  std::size_t healthy_cap = 200;
};

/// Seeded stratified pair-level holdout used for threshold calibration.
void carve_validation(std::vector<av::corpus::PairExample>& pairs,
                      std::vector<av::corpus::PairExample>& val,
                      double fraction, std::uint64_t seed) {
  std::vector<std::size_t> same, diff;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    (pairs[i].label == av::corpus::PairLabel::kSameAuthor ? same : diff)
        .push_back(i);
  av::Rng rng(av::mix64(seed, 0x7a11));
  std::vector<bool> to_val(pairs.size(), false);
  for (auto* bucket : {&same, &diff}) {
    rng.shuffle(*bucket);
    const auto take =
        static_cast<std::size_t>(fraction * static_cast<double>(bucket->size()));
    for (std::size_t i = 0; i < take; ++i) to_val[(*bucket)[i]] = true;
  }
  std::vector<av::corpus::PairExample> remaining;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    (to_val[i] ? val : remaining).push_back(pairs[i]);
  pairs = std::move(remaining);
}

int run_pairs(const PairsArgs& args) {
  const av::corpus::Corpus corpus =
      av::corpus::load_corpus(args.in, parse_mode(args.mode));
  auto [train_corpus, test_corpus] =
      av::corpus::split_accounts(corpus, args.train_fraction, args.seed);

  const std::vector<av::corpus::PairExample> raw_train_pairs =
      av::corpus::generate_train_pairs(train_corpus);
  av::corpus::BalanceResult balanced =
      av::corpus::balance_pairs(raw_train_pairs, args.balance_ratio, args.seed);
  if (balanced.single_label)
    std::cerr << "warning: training pairs contain a single label; "
                 "balancing skipped\n";

  std::vector<av::corpus::PairExample> val_pairs;
  if (!args.val_out.empty() && args.val_fraction > 0.0)
    carve_validation(balanced.pairs, val_pairs, args.val_fraction, args.seed);

  const std::vector<av::corpus::PairExample> test_pairs =
      av::corpus::generate_test_pairs(test_corpus, args.healthy_cap, args.seed);

  av::corpus::write_pairs_jsonl(args.train_out, balanced.pairs);
  av::corpus::write_pairs_jsonl(args.test_out, test_pairs);
  if (!args.val_out.empty()) av::corpus::write_pairs_jsonl(args.val_out, val_pairs);
  if (!args.train_corpus_out.empty())
    av::corpus::write_corpus_jsonl(args.train_corpus_out, train_corpus);
  if (!args.test_corpus_out.empty())
    av::corpus::write_corpus_jsonl(args.test_corpus_out, test_corpus);

  Manifest manifest;
  manifest.subcommand = "pairs";
  manifest.flags = {{"in", args.in},
                    {"train-out", args.train_out},
                    {"test-out", args.test_out},
                    {"val-out", args.val_out},
                    {"train-corpus-out", args.train_corpus_out},
                    {"test-corpus-out", args.test_corpus_out},
                    {"mode", args.mode},
                    {"seed", args.seed},
                    {"train-fraction", args.train_fraction},
                    {"val-fraction", args.val_fraction},
                    {"balance-ratio", args.balance_ratio},
                    {"healthy-cap", args.healthy_cap}};
  manifest.add_input(args.in);
  manifest.add_output(args.train_out);
  manifest.add_output(args.test_out);
  if (!args.val_out.empty()) manifest.add_output(args.val_out);
  if (!args.train_corpus_out.empty()) manifest.add_output(args.train_corpus_out);
  if (!args.test_corpus_out.empty()) manifest.add_output(args.test_corpus_out);
  manifest.write(args.train_out);

  std::cerr << "train pairs: " << balanced.pairs.size()
            << ", val pairs: " << val_pairs.size()
            << ", test pairs: " << test_pairs.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string corpus;
  std::string train_pairs;
  std::string val_pairs;
  std::string out;
  std::string vocab_out;
  std::string report_out;
  std::string embeddings;
  std::string mode = "strict";
  std::string kernel = "auto";
  std::size_t embedding_dim = 50;
  std::size_t min_count = 1;
  double val_fraction = 0.15;
  bool calibrate = true;
  std::size_t jobs = 1;
  av::verifier::VerifierConfig config;
  bool no_lowercase = false;
  bool keep_urls = false;
  bool keep_mentions = false;
};

json train_report_json(const av::verifier::TrainReport& report,
                       const std::optional<av::verifier::Calibration>& cal) {
  json epochs = json::array();
  for (std::size_t i = 0; i < report.epochs.size(); ++i)
    epochs.push_back({{"epoch", i + 1},
                      {"mean_loss", report.epochs[i].mean_loss},
                      {"train_accuracy", report.epochs[i].train_accuracy}});
  json j;
  j["epochs"] = std::move(epochs);
  j["val_accuracy"] = report.val_accuracy ? json(*report.val_accuracy) : json(nullptr);
  j["val_f_measure"] =
      report.val_f_measure ? json(*report.val_f_measure) : json(nullptr);
  j["wall_seconds"] = report.wall_seconds;
  j["early_stopped"] = report.early_stopped;
  j["stop_reason"] = report.stop_reason;
  j["skipped_steps"] = report.skipped_steps;
  if (cal) {
    j["calibrated_tau"] = cal->tau;
    j["calibration_f_measure"] = cal->f_measure;
    j["calibration_degenerate"] = cal->degenerate;
  }
  return j;
}

int run_train(TrainArgs args) {
  av::kernels::select_backend(args.kernel);
  if (args.vocab_out.empty()) args.vocab_out = args.out + ".vocab.txt";
  if (args.report_out.empty()) args.report_out = args.out + ".train.json";

  av::verifier::VerifierConfig& config = args.config;
  config.tokenizer.lowercase = !args.no_lowercase;
  config.tokenizer.url_policy = args.keep_urls ? av::text::SentinelPolicy::kKeep
                                               : av::text::SentinelPolicy::kReplace;
  config.tokenizer.mention_policy = args.keep_mentions
                                        ? av::text::SentinelPolicy::kKeep
                                        : av::text::SentinelPolicy::kReplace;

  const av::corpus::Corpus corpus =
      av::corpus::load_corpus(args.corpus, parse_mode(args.mode));
  std::vector<av::corpus::PairExample> train_pairs =
      av::corpus::read_pairs_jsonl(args.train_pairs);
  std::vector<av::corpus::PairExample> val_pairs;
  if (!args.val_pairs.empty())
    val_pairs = av::corpus::read_pairs_jsonl(args.val_pairs);
  else if (args.val_fraction > 0.0 && train_pairs.size() >= 10)
    carve_validation(train_pairs, val_pairs, args.val_fraction, config.seed);

  const av::text::Vocabulary vocab =
      av::text::build_vocab(corpus, config.tokenizer, args.min_count);

  av::text::EmbeddingTable table;
  if (!args.embeddings.empty()) {
    table = av::text::load_embedding_file(args.embeddings, vocab, config.seed);
    config.embedding_dim = table.dim;
  } else {
    config.embedding_dim = args.embedding_dim;
    table = av::text::random_embedding_table(vocab, config.embedding_dim,
                                             config.seed);
  }

  av::verifier::VerifierModel model =
      av::verifier::init_model(config, vocab, std::move(table));

  const av::verifier::TrainSet train_set =
      av::verifier::encode_pairs(corpus, train_pairs, config.tokenizer, vocab);
  av::verifier::TrainSet val_set;
  if (!val_pairs.empty())
    val_set = av::verifier::encode_pairs(corpus, val_pairs, config.tokenizer, vocab);

  const av::verifier::TrainReport report =
      av::verifier::train(model, train_set, val_set, args.jobs);

  std::optional<av::verifier::Calibration> calibration;
  if (args.calibrate && !val_set.pairs.empty() && val_set.has_both_labels())
    calibration = av::verifier::calibrate_threshold(model, val_set);

  av::verifier::save_checkpoint(model, args.out);
  vocab.save(args.vocab_out);
  {
    std::ofstream out(args.report_out, std::ios::binary);
    if (!out)
      throw av::ValidationError("cannot write train report: " + args.report_out);
    out << train_report_json(report, calibration).dump(2) << '\n';
  }

  Manifest manifest;
  manifest.subcommand = "train";
  manifest.flags = {{"corpus", args.corpus},
                    {"train-pairs", args.train_pairs},
                    {"val-pairs", args.val_pairs},
                    {"out", args.out},
                    {"vocab-out", args.vocab_out},
                    {"report-out", args.report_out},
                    {"embeddings", args.embeddings},
                    {"embedding-dim", config.embedding_dim},
                    {"hidden", config.hidden_dim},
                    {"merge-hidden", config.merge_hidden},
                    {"epochs", config.epochs},
                    {"batch", config.batch_size},
                    {"lr", config.lr},
                    {"seed", config.seed},
                    {"min-count", args.min_count},
                    {"val-fraction", args.val_fraction},
                    {"trainable-embeddings", config.embeddings_trainable},
                    {"ordered-concat", config.ordered_concat},
                    {"lowercase", config.tokenizer.lowercase},
                    {"max-tokens", config.tokenizer.max_tokens},
                    {"mode", args.mode},
                    {"calibrate", args.calibrate}};
  manifest.add_input(args.corpus);
  manifest.add_input(args.train_pairs);
  if (!args.val_pairs.empty()) manifest.add_input(args.val_pairs);
  if (!args.embeddings.empty()) manifest.add_input(args.embeddings);
  manifest.add_output(args.out);
  manifest.add_output(args.vocab_out);
  manifest.add_output(args.report_out);
  manifest.write(args.out);

  std::cerr << "trained " << report.epochs.size() << " epochs; final loss "
            << (report.epochs.empty() ? 0.0 : report.epochs.back().mean_loss);
  if (report.val_accuracy) std::cerr << "; val acc " << *report.val_accuracy;
  if (calibration) std::cerr << "; tau " << calibration->tau;
  std::cerr << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string vocab;
  std::string corpus;
  std::string pairs;
  std::string report_out;
  std::string csv_out;
  std::string mode = "label";
  std::string kernel = "auto";
  double tau = 0.5;
  std::vector<double> sweep;
  std::size_t jobs = 1;

  // Embedding comparison harness.
  std::vector<std::string> compare_embeddings;
  std::string train_corpus;
  std::string train_pairs;
  std::string val_pairs;
  std::size_t min_count = 1;
  av::verifier::VerifierConfig config;
};

std::string metric_or_na(const std::optional<double>& m) {
  if (!m) return "n/a";
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << *m;
  return os.str();
}

json metrics_json(const av::eval::MetricsReport& metrics, double tau) {
  const auto opt = [](const std::optional<double>& m) {
    return m ? json(*m) : json(nullptr);
  };
  return {{"tau", tau},
          {"tp", metrics.counts.tp},
          {"fp", metrics.counts.fp},
          {"fn", metrics.counts.fn},
          {"tn", metrics.counts.tn},
          {"accuracy", opt(metrics.accuracy)},
          {"precision", opt(metrics.precision)},
          {"recall", opt(metrics.recall)},
          {"f_measure", opt(metrics.f_measure)}};
}

int run_eval_compare(const EvalArgs& args) {
  if (args.train_corpus.empty() || args.train_pairs.empty())
    throw av::ValidationError(
        "--compare-embeddings needs --train-corpus and --train-pairs");

  const av::corpus::Corpus train_corpus =
      av::corpus::load_corpus(args.train_corpus, parse_mode(args.mode));
  const av::corpus::Corpus eval_corpus =
      av::corpus::load_corpus(args.corpus, parse_mode(args.mode));
  const auto train_pairs = av::corpus::read_pairs_jsonl(args.train_pairs);
  const auto eval_pairs = av::corpus::read_pairs_jsonl(args.pairs);
  std::vector<av::corpus::PairExample> val_pairs;
  if (!args.val_pairs.empty())
    val_pairs = av::corpus::read_pairs_jsonl(args.val_pairs);

  const av::text::Vocabulary vocab = av::text::build_vocab(
      train_corpus, args.config.tokenizer, args.min_count);

  json sides = json::array();
  std::ostringstream table_text;
  table_text << std::left << std::setw(32) << "embedding"
             << " dim    acc     prec    rec     f\n";
  for (const std::string& path : args.compare_embeddings) {
    av::verifier::VerifierConfig config = args.config;
    av::text::EmbeddingTable table =
        av::text::load_embedding_file(path, vocab, config.seed);
    config.embedding_dim = table.dim;
    const auto source = table.source;
    const auto file_hits = table.file_hits;

    av::verifier::VerifierModel model =
        av::verifier::init_model(config, vocab, std::move(table));
    const auto train_set = av::verifier::encode_pairs(
        train_corpus, train_pairs, config.tokenizer, vocab);
    av::verifier::TrainSet val_set;
    if (!val_pairs.empty())
      val_set = av::verifier::encode_pairs(train_corpus, val_pairs,
                                           config.tokenizer, vocab);
    const av::verifier::TrainReport report =
        av::verifier::train(model, train_set, val_set, args.jobs);

    const av::eval::MetricsReport metrics = av::eval::evaluate_pairs(
        model, args.tau, eval_corpus, eval_pairs, args.jobs);

    table_text << std::left << std::setw(32) << path << " " << std::setw(6)
               << config.embedding_dim << " " << metric_or_na(metrics.accuracy)
               << "  " << metric_or_na(metrics.precision) << "  "
               << metric_or_na(metrics.recall) << "  "
               << metric_or_na(metrics.f_measure) << "\n";

    json side;
    side["embedding_file"] = path;
    side["embedding_source"] =
        std::string(av::text::embedding_source_name(source));
    side["embedding_dim"] = config.embedding_dim;
    side["file_hits"] = file_hits;
    side["vocab_size"] = vocab.size();
    side["train"] = train_report_json(report, std::nullopt);
    side["metrics"] = metrics_json(metrics, args.tau);
    sides.push_back(std::move(side));
  }

  json j;
  j["comparison"] = std::move(sides);
  j["tau"] = args.tau;
  std::ofstream out(args.report_out, std::ios::binary);
  if (!out)
    throw av::ValidationError("cannot write comparison report: " + args.report_out);
  out << j.dump(2) << '\n';

  std::cout << table_text.str();

  Manifest manifest;
  manifest.subcommand = "eval";
  manifest.flags = {{"compare-embeddings", args.compare_embeddings},
                    {"train-corpus", args.train_corpus},
                    {"train-pairs", args.train_pairs},
                    {"val-pairs", args.val_pairs},
                    {"corpus", args.corpus},
                    {"pairs", args.pairs},
                    {"tau", args.tau},
                    {"report-out", args.report_out},
                    {"seed", args.config.seed},
                    {"hidden", args.config.hidden_dim},
                    {"epochs", args.config.epochs},
                    {"batch", args.config.batch_size},
                    {"lr", args.config.lr},
                    {"min-count", args.min_count},
                    {"jobs", args.jobs}};
  for (const std::string& path : args.compare_embeddings) manifest.add_input(path);
  manifest.add_input(args.train_corpus);
  manifest.add_input(args.train_pairs);
  manifest.add_input(args.corpus);
  manifest.add_input(args.pairs);
  manifest.add_output(args.report_out);
  manifest.write(args.report_out);
  return 0;
}

int run_eval(const EvalArgs& args) {
  av::kernels::select_backend(args.kernel);
  if (!args.compare_embeddings.empty()) {
    if (args.report_out.empty())
      throw av::ValidationError("--compare-embeddings requires --report-out");
    return run_eval_compare(args);
  }

  if (args.model.empty() || args.vocab.empty())
    throw av::ValidationError("eval requires --model and --vocab");

  const av::text::Vocabulary vocab = av::text::Vocabulary::load(args.vocab);
  const av::verifier::VerifierModel model =
      av::verifier::load_checkpoint(args.model, vocab);
  const av::corpus::Corpus corpus =
      av::corpus::load_corpus(args.corpus, parse_mode(args.mode));
  const auto pairs = av::corpus::read_pairs_jsonl(args.pairs);

  Manifest manifest;
  manifest.subcommand = "eval";
  manifest.flags = {{"model", args.model},       {"vocab", args.vocab},
                    {"corpus", args.corpus},     {"pairs", args.pairs},
                    {"tau", args.tau},           {"report-out", args.report_out},
                    {"csv-out", args.csv_out},   {"sweep", args.sweep},
                    {"mode", args.mode},         {"jobs", args.jobs}};
  manifest.add_input(args.model);
  manifest.add_input(args.vocab);
  manifest.add_input(args.corpus);
  manifest.add_input(args.pairs);

  if (!args.sweep.empty()) {
    if (args.csv_out.empty())
      throw av::ValidationError("--sweep requires --csv-out");
    const auto scored = av::eval::score_pairs(model, corpus, pairs, args.jobs);
    const auto rows = av::eval::sweep_thresholds(scored, args.sweep);
    av::eval::write_sweep_csv(args.csv_out, rows);
    manifest.add_output(args.csv_out);
    manifest.write(args.csv_out);
    std::cerr << "wrote sweep of " << rows.size() << " thresholds\n";
    return 0;
  }

  const av::eval::MetricsReport metrics =
      av::eval::evaluate_pairs(model, args.tau, corpus, pairs, args.jobs);
  std::cout << av::eval::format_metrics_text(metrics);
  if (!args.report_out.empty()) {
    av::eval::write_metrics_json(args.report_out, metrics, args.tau);
    manifest.add_output(args.report_out);
    manifest.write(args.report_out);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

struct DetectArgs {
  std::string model;
  std::string vocab;
  std::string corpus;
  std::string log_out;
  std::string summary_out;
  std::string mode = "label";
  std::string kernel = "auto";
  std::string policy = "quarantine";
  double tau = 0.5;
};

int run_detect(const DetectArgs& args) {
  av::kernels::select_backend(args.kernel);
  av::detection::BaselinePolicy policy;
  if (args.policy == "quarantine")
    policy = av::detection::BaselinePolicy::kQuarantine;
  else if (args.policy == "always-update")
    policy = av::detection::BaselinePolicy::kAlwaysUpdate;
  else
    throw av::ValidationError("unknown policy '" + args.policy +
                              "' (quarantine|always-update)");

  const av::text::Vocabulary vocab = av::text::Vocabulary::load(args.vocab);
  const av::verifier::VerifierModel model =
      av::verifier::load_checkpoint(args.model, vocab);
  const av::corpus::Corpus corpus =
      av::corpus::load_corpus(args.corpus, parse_mode(args.mode));

  std::vector<av::detection::DetectionEvent> events;
  json accounts = json::array();
  std::size_t compromised_total = 0, compromised_detected = 0;
  std::size_t healthy_flags = 0, healthy_scored = 0;
  std::size_t max_delay = 0;

  for (const av::corpus::Account& account : corpus.accounts) {
    const av::detection::ReplayResult result =
        av::detection::replay_timeline(model, args.tau, account, policy);
    events.insert(events.end(), result.events.begin(), result.events.end());

    json a;
    a["account_id"] = account.account_id;
    a["compromised"] = result.compromised;
    a["false_flags"] = result.false_flags;
    a["scored_posts"] = result.scored_posts;
    if (result.compromised) {
      ++compromised_total;
      if (result.detection_delay) {
        ++compromised_detected;
        max_delay = std::max(max_delay, *result.detection_delay);
        a["detection_delay"] = *result.detection_delay;
      } else {
        a["detection_delay"] = nullptr;
      }
    } else {
      healthy_flags += result.false_flags;
      healthy_scored += result.scored_posts;
    }
    accounts.push_back(std::move(a));
  }

  av::detection::write_detection_log(args.log_out, events);

  json summary;
  summary["accounts"] = std::move(accounts);
  summary["aggregate"] = {
      {"accounts", corpus.n()},
      {"compromised_accounts", compromised_total},
      {"compromised_detected", compromised_detected},
      {"max_detection_delay",
       compromised_detected > 0 ? json(max_delay) : json(nullptr)},
      {"healthy_false_flags", healthy_flags},
      {"healthy_scored_posts", healthy_scored},
      {"healthy_false_flag_rate",
       healthy_scored > 0 ? json(static_cast<double>(healthy_flags) /
                                 static_cast<double>(healthy_scored))
                          : json(nullptr)},
      {"tau", args.tau},
      {"policy", args.policy}};

  const std::string summary_path =
      args.summary_out.empty() ? args.log_out + ".summary.json" : args.summary_out;
  {
    std::ofstream out(summary_path, std::ios::binary);
    if (!out)
      throw av::ValidationError("cannot write detect summary: " + summary_path);
    out << summary.dump(2) << '\n';
  }
  std::cout << summary["aggregate"].dump(2) << "\n";

  Manifest manifest;
  manifest.subcommand = "detect";
  manifest.flags = {{"model", args.model},   {"vocab", args.vocab},
                    {"corpus", args.corpus}, {"log-out", args.log_out},
                    {"summary-out", summary_path}, {"tau", args.tau},
                    {"policy", args.policy}, {"mode", args.mode}};
  manifest.add_input(args.model);
  manifest.add_input(args.vocab);
  manifest.add_input(args.corpus);
  manifest.add_output(args.log_out);
  manifest.add_output(summary_path);
  manifest.write(args.log_out);
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 3;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t samples = 0;  // 0 = every coordinate
  std::string kernel = "auto";
};

int run_gradcheck(const GradcheckArgs& args) {
  av::kernels::select_backend(args.kernel);

  // Toy model: 20-token vocabulary, d=8, H=8, sequences of length <= 6,
  // trainable embeddings so every tensor takes gradient.
  av::text::Vocabulary vocab;
  vocab.index_to_token = {av::text::kPadToken, av::text::kUnkToken};
  for (int i = 0; i < 18; ++i)
    vocab.index_to_token.push_back("tok" + std::to_string(i));
  for (std::size_t i = 0; i < vocab.index_to_token.size(); ++i)
    vocab.token_to_index.emplace(vocab.index_to_token[i], i);

  av::verifier::VerifierConfig config;
  config.embedding_dim = 8;
  config.hidden_dim = 8;
  config.merge_hidden = 8;
  config.seed = args.seed;
  config.embeddings_trainable = true;

  av::text::EmbeddingTable table =
      av::text::random_embedding_table(vocab, config.embedding_dim, args.seed);
  av::verifier::VerifierModel model =
      av::verifier::init_model(config, vocab, std::move(table));

  av::Rng rng(av::mix64(args.seed, 0x6c));
  const auto random_post = [&](std::size_t len) {
    av::text::EncodedPost post;
    post.true_length = len;
    for (std::size_t i = 0; i < len; ++i)
      post.ids.push_back(2 + rng.below(vocab.size() - 2));
    return post;
  };
  const av::text::EncodedPost left = random_post(6);
  const av::text::EncodedPost right = random_post(5);
  const int label = 1;

  const std::vector<av::nn::ParamRef> params = model.trainable_params();
  const av::verifier::PairGradient analytic =
      av::verifier::pair_gradient(model, left, right, label);

  const auto loss_fn = [&]() {
    return av::nn::bce_loss(av::verifier::score_pair(model, left, right), label)
        .loss;
  };
  std::size_t total = 0;
  for (const auto& p : params) total += p.size;
  const std::size_t cap = args.samples == 0 ? total : args.samples;

  const av::nn::GradCheckReport report = av::nn::grad_check(
      loss_fn, params, analytic.grads, args.step, args.tolerance, cap, args.seed);

  std::cout << "kernel          " << av::kernels::active_backend().name << "\n";
  std::cout << "coordinates     " << report.checked << " of " << total << "\n";
  for (const auto& entry : report.per_param) {
    std::ostringstream os;
    os << std::left << std::setw(16) << entry.param << " max_rel_err "
       << std::scientific << entry.max_rel_err << " (checked " << entry.checked
       << ")";
    std::cout << os.str() << "\n";
  }
  std::cout << "max_rel_err     " << std::scientific << report.max_rel_err
            << " at " << report.worst_param << "[" << report.worst_index
            << "]\n";
  std::cout << "mean_rel_err    " << std::scientific << report.mean_rel_err
            << "\n";
  std::cout << "tolerance       " << args.tolerance << "\n";
  std::cout << (report.pass ? "PASS" : "FAIL") << "\n";
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"authorship-verification toolkit for compromised-account detection"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* cmd_synth =
      app.add_subcommand("synth", "generate a synthetic annotated corpus");
  cmd_synth->add_option("--out", synth.out, "output corpus JSONL")->required();
  cmd_synth->add_option("--n", synth.spec.n_accounts, "account count");
  cmd_synth->add_option("--posts", synth.spec.posts_per_account, "posts per account");
  cmd_synth->add_option("--frac", synth.spec.fraction_compromised,
                        "fraction of compromised accounts");
  cmd_synth->add_option("--overlap", synth.spec.style_overlap,
                        "owner/hijacker vocabulary overlap in [0,1]");
  cmd_synth->add_option("--seed", synth.seed, "generator seed");
  cmd_synth->add_option("--pool", synth.spec.pool_size, "global token pool size");
  cmd_synth->add_option("--slice", synth.spec.slice_size, "tokens per style");
  cmd_synth->add_option("--zipf", synth.spec.zipf_exponent, "zipf exponent");
  cmd_synth->add_option("--mean-len", synth.spec.mean_post_length,
                        "mean tokens per post");
  cmd_synth->add_option("--hashtags", synth.spec.hashtags_per_style,
                        "hashtag inventory per style");
  cmd_synth->add_option("--compromise-range", synth.compromise_range,
                        "inclusive min max for compromise points")
      ->expected(2);

  PairsArgs pairs;
  CLI::App* cmd_pairs = app.add_subcommand(
      "pairs", "split accounts and materialize train/test pair sets");
  cmd_pairs->add_option("--in", pairs.in, "corpus JSONL")->required();
  cmd_pairs->add_option("--train-out", pairs.train_out, "training pairs JSONL")
      ->required();
  cmd_pairs->add_option("--test-out", pairs.test_out, "test pairs JSONL")
      ->required();
  cmd_pairs->add_option("--val-out", pairs.val_out, "validation pairs JSONL");
  cmd_pairs->add_option("--train-corpus-out", pairs.train_corpus_out,
                        "write the training-side corpus");
  cmd_pairs->add_option("--test-corpus-out", pairs.test_corpus_out,
                        "write the test-side corpus");
  cmd_pairs->add_option("--mode", pairs.mode, "strict|label (default strict)");
  cmd_pairs->add_option("--seed", pairs.seed, "split/balance/sample seed");
  cmd_pairs->add_option("--train-fraction", pairs.train_fraction,
                        "account fraction for training");
  cmd_pairs->add_option("--val-fraction", pairs.val_fraction,
                        "pair fraction held out for validation");
  cmd_pairs->add_option("--balance-ratio", pairs.balance_ratio,
                        "max majority/minority label ratio");
  cmd_pairs->add_option("--healthy-cap", pairs.healthy_cap,
                        "test pairs sampled per healthy account");

  TrainArgs train;
  CLI::App* cmd_train =
      app.add_subcommand("train", "train the siamese verifier");
  cmd_train->add_option("--corpus", train.corpus, "training corpus JSONL")
      ->required();
  cmd_train->add_option("--train-pairs", train.train_pairs, "training pairs")
      ->required();
  cmd_train->add_option("--val-pairs", train.val_pairs, "validation pairs");
  cmd_train->add_option("--out", train.out, "checkpoint path")->required();
  cmd_train->add_option("--vocab-out", train.vocab_out,
                        "vocabulary path (default <out>.vocab.txt)");
  cmd_train->add_option("--report-out", train.report_out,
                        "train report path (default <out>.train.json)");
  cmd_train->add_option("--embeddings", train.embeddings,
                        "pretrained embedding text file");
  cmd_train->add_option("--embedding-dim", train.embedding_dim,
                        "random-init embedding dimension");
  cmd_train->add_option("--hidden", train.config.hidden_dim, "LSTM hidden size");
  cmd_train->add_option("--merge-hidden", train.config.merge_hidden,
                        "classifier hidden size");
  cmd_train->add_option("--epochs", train.config.epochs, "training epochs");
  cmd_train->add_option("--batch", train.config.batch_size, "batch size");
  cmd_train->add_option("--lr", train.config.lr, "Adam learning rate");
  cmd_train->add_option("--seed", train.config.seed, "run seed");
  cmd_train->add_option("--min-count", train.min_count, "vocabulary cutoff");
  cmd_train->add_option("--val-fraction", train.val_fraction,
                        "carved validation fraction when --val-pairs absent");
  cmd_train->add_flag("--trainable-embeddings", train.config.embeddings_trainable,
                      "fine-tune embedding rows");
  cmd_train->add_flag("--ordered-concat", train.config.ordered_concat,
                      "order-dependent merge features (ablation)");
  cmd_train->add_flag("--no-lowercase", train.no_lowercase, "keep letter case");
  cmd_train->add_flag("--keep-urls", train.keep_urls, "keep URLs verbatim");
  cmd_train->add_flag("--keep-mentions", train.keep_mentions,
                      "keep mentions verbatim");
  cmd_train->add_option("--max-tokens", train.config.tokenizer.max_tokens,
                        "token cap per post");
  cmd_train->add_option("--mode", train.mode, "corpus load mode");
  cmd_train->add_option("--jobs", train.jobs, "worker threads");
  cmd_train->add_option("--kernel", train.kernel, "auto|scalar|avx2");
  cmd_train->add_flag("--no-calibrate{false}", train.calibrate,
                      "skip threshold calibration");

  EvalArgs eval;
  CLI::App* cmd_eval =
      app.add_subcommand("eval", "score pair sets and report metrics");
  cmd_eval->add_option("--model", eval.model, "checkpoint path");
  cmd_eval->add_option("--vocab", eval.vocab, "vocabulary path");
  cmd_eval->add_option("--corpus", eval.corpus, "corpus with the pair posts")
      ->required();
  cmd_eval->add_option("--pairs", eval.pairs, "pairs JSONL")->required();
  cmd_eval->add_option("--tau", eval.tau, "decision threshold");
  cmd_eval->add_option("--sweep", eval.sweep, "ascending threshold grid");
  cmd_eval->add_option("--report-out", eval.report_out, "metrics JSON path");
  cmd_eval->add_option("--csv-out", eval.csv_out, "sweep CSV path");
  cmd_eval->add_option("--mode", eval.mode, "corpus load mode");
  cmd_eval->add_option("--jobs", eval.jobs, "worker threads");
  cmd_eval->add_option("--kernel", eval.kernel, "auto|scalar|avx2");
  cmd_eval->add_option("--compare-embeddings", eval.compare_embeddings,
                       "train+evaluate under two embedding files")
      ->expected(2);
  cmd_eval->add_option("--train-corpus", eval.train_corpus,
                       "training corpus (comparison mode)");
  cmd_eval->add_option("--train-pairs", eval.train_pairs,
                       "training pairs (comparison mode)");
  cmd_eval->add_option("--val-pairs", eval.val_pairs,
                       "validation pairs (comparison mode)");
  cmd_eval->add_option("--min-count", eval.min_count, "vocabulary cutoff");
  cmd_eval->add_option("--hidden", eval.config.hidden_dim, "LSTM hidden size");
  cmd_eval->add_option("--merge-hidden", eval.config.merge_hidden,
                       "classifier hidden size");
  cmd_eval->add_option("--epochs", eval.config.epochs, "training epochs");
  cmd_eval->add_option("--batch", eval.config.batch_size, "batch size");
  cmd_eval->add_option("--lr", eval.config.lr, "Adam learning rate");
  cmd_eval->add_option("--seed", eval.config.seed, "run seed");

  DetectArgs detect;
  CLI::App* cmd_detect = app.add_subcommand(
      "detect", "replay timelines and flag suspicious posts");
  cmd_detect->add_option("--model", detect.model, "checkpoint path")->required();
  cmd_detect->add_option("--vocab", detect.vocab, "vocabulary path")->required();
  cmd_detect->add_option("--corpus", detect.corpus, "corpus JSONL")->required();
  cmd_detect->add_option("--tau", detect.tau, "decision threshold")->required();
  cmd_detect->add_option("--log-out", detect.log_out, "detection log JSONL")
      ->required();
  cmd_detect->add_option("--summary-out", detect.summary_out,
                         "summary JSON (default <log-out>.summary.json)");
  cmd_detect->add_option("--policy", detect.policy, "quarantine|always-update");
  cmd_detect->add_option("--mode", detect.mode, "corpus load mode");
  cmd_detect->add_option("--kernel", detect.kernel, "auto|scalar|avx2");

  GradcheckArgs gradcheck;
  CLI::App* cmd_gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of the full model gradient");
  cmd_gradcheck->add_option("--seed", gradcheck.seed, "toy model seed");
  cmd_gradcheck->add_option("--step", gradcheck.step, "finite-difference step");
  cmd_gradcheck->add_option("--tol", gradcheck.tolerance, "pass tolerance");
  cmd_gradcheck->add_option("--samples", gradcheck.samples,
                            "coordinate sample cap (0 = all)");
  cmd_gradcheck->add_option("--kernel", gradcheck.kernel, "auto|scalar|avx2");

  try {
    app.parse(argc, argv);
    if (cmd_synth->parsed()) return run_synth(synth);
    if (cmd_pairs->parsed()) return run_pairs(pairs);
    if (cmd_train->parsed()) return run_train(train);
    if (cmd_eval->parsed()) return run_eval(eval);
    if (cmd_detect->parsed()) return run_detect(detect);
    if (cmd_gradcheck->parsed()) return run_gradcheck(gradcheck);
    std::cerr << app.help();
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const av::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
