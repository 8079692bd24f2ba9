#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gdedup/baselines.hpp"
#include "gdedup/corpus.hpp"
#include "gdedup/generative.hpp"

namespace gdedup {

struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

// Standard binary F1 on the positive ("equivalent" / duplicate) class.
F1Result f1_equivalent(std::span<const int> predictions, std::span<const int> gold);

struct DistributionExport {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> dup_samples;
  std::vector<double> nondup_samples;
  std::vector<long> dup_counts;     // fixed-width bins over [lo, hi]
  std::vector<long> nondup_counts;
};

/// Sequence probabilities split by the duplicate verdict, binned.
DistributionExport export_confidence_distribution(const std::vector<DedupDecision>& decisions,
                                                  int n_bins = 50);

/// For each flagged document its max cosine to any kept document; for each
/// kept document its max cosine to any other kept document.
DistributionExport export_similarity_distribution(const Corpus& corpus,
                                                  const std::vector<std::uint8_t>& flags,
                                                  const std::vector<SparseVector>& vectors,
                                                  int n_bins = 50);

void write_histogram_csv(const DistributionExport& dist, const std::string& path);

/// Flagged-set precision/recall/F1 against planted cluster membership: gold
/// positives are the documents belonging to any ground-truth group.
F1Result flagged_vs_truth(const Corpus& corpus, const std::vector<std::uint8_t>& flags,
                          const DuplicateGroundTruth& truth);

enum class DedupMethod { kGd, kShingles, kSimhash, kPairwise, kRandom };

DedupMethod parse_dedup_method(const std::string& name);
std::string dedup_method_name(DedupMethod method);

struct BaselineConfig {
  int shingle_k = 3;
  double jaccard_threshold = 0.7;
  int max_hamming = 3;
  double cosine_threshold = 0.85;
  std::size_t random_target_size = 0;
  std::uint64_t random_seed = 0;
  std::size_t max_seq_len = kDefaultMaxSeqLen;
};

struct MethodRun {
  std::string method;
  std::vector<std::uint8_t> flags;  // corpus order, 1 = duplicate
  std::size_t kept = 0;
  double seconds = 0.0;             // sketch/vector build plus scan (or GD total)
  DedupScan scan;                   // baselines only
  DedupReport gd_report;            // gd only
};

/// Runs one deduplication method end to end (tokenization and sketch or
/// vector construction included) and reports wall time.
MethodRun run_dedup_method(const Corpus& corpus, DedupMethod method, const GdConfig& gd_cfg,
                           const BaselineConfig& baseline_cfg);

struct TimingRow {
  std::string method;
  std::size_t n = 0;
  std::size_t m = 0;
  double seconds = 0.0;  // median of the timed runs
};

/// Times every (method, size) cell on duplicate-free synthetic corpora in one
/// process: one discarded warm-up run, then the median of `runs` timed runs.
std::vector<TimingRow> benchmark_timing(std::span<const std::size_t> sizes,
                                        std::span<const DedupMethod> methods,
                                        const GdConfig& gd_cfg,
                                        const BaselineConfig& baseline_cfg,
                                        std::uint64_t corpus_seed, int runs = 3,
                                        int vocab_pool_size = 5000);

void write_timing_csv(const std::vector<TimingRow>& rows, const std::string& path);

struct BiasProbeInputs {
  const Corpus& raw_train;    // labeled
  const Corpus& dedup_train;  // labeled subset of raw_train
  const Corpus& test;         // labeled
  const DuplicateGroundTruth& truth;          // duplicate structure of raw_train
  std::vector<std::string> trigger_test_ids;  // test docs probing the trigger
  std::string spurious_label;
};

struct BiasProbeResult {
  double dup_mean_confidence_raw = 0.0;     // raw-trained model, duplicate docs
  double nondup_mean_confidence_raw = 0.0;  // raw-trained model, other docs
  double trigger_spurious_raw = 0.0;        // P(spurious label | trigger probe)
  double trigger_spurious_dedup = 0.0;
  double test_accuracy_raw = 0.0;
  double test_accuracy_dedup = 0.0;
};

/// Trains a multinomial logistic bag-of-words classifier on the raw and the
/// deduplicated corpus and reports the confidence shift on duplicates plus
/// the spurious-label confidence on the trigger probes.
BiasProbeResult redundancy_bias_probe(const BiasProbeInputs& inputs, std::uint64_t seed);

struct MrpcBaselineResult {
  std::vector<int> predicted;
  std::vector<int> gold;
};

/// Pair-level judgment for the baseline methods: the two sentences of a pair
/// are compared directly under the method's similarity and threshold.
MrpcBaselineResult mrpc_judge_baseline(const std::vector<MrpcPair>& pairs,
                                       DedupMethod method,
                                       const BaselineConfig& baseline_cfg);

}  // namespace gdedup
