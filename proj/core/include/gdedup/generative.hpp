#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdedup/corpus.hpp"
#include "gdedup/keywords.hpp"
#include "gdedup/model.hpp"
#include "gdedup/trainer.hpp"

namespace gdedup {

struct GdConfig {
  TargetSpec target;
  TrainConfig train;
  TgnConfig tgn;
  ModelConfig model;  // vocab_size is filled in from the corpus at run time
  int beam_size = 1;
  double prediction_threshold = 0.5;  // tau: floor on the sequence probability
  int max_keyword_len = 4;
  int vocab_min_count = 1;
  bool keep_one_per_keyword = false;
  int threads = 1;

  void validate() const;
};

struct DedupDecision {
  std::string doc_id;
  std::string target_keyword;     // K
  std::string generated_keyword;  // K-hat
  double probability = 0.0;
  int is_dup = 0;
};

struct StageTimings {
  double target_extraction_s = 0.0;
  double training_s = 0.0;
  double inference_s = 0.0;
  double total_s = 0.0;
};

struct DedupReport {
  std::string method;
  std::size_t input_size = 0;   // n
  std::size_t output_size = 0;  // m = n - flagged
  StageTimings timings;
  std::vector<DedupDecision> decisions;     // corpus order
  std::vector<std::string> fallback_ids;    // all-stopword documents
  std::vector<std::string> untrainable_ids; // documents with no tokens; always kept
  std::vector<double> loss_trace;
};

struct GdResult {
  Corpus kept;  // SC, original order preserved
  DedupReport report;
};

/// IsDup: 1 iff the generated keyword equals the target under lowercase-exact
/// normalization and the sequence probability clears the threshold.
int is_duplicate(const std::string& target_keyword, const std::string& generated_keyword,
                 double probability, double prediction_threshold);

/// Full pipeline: extract targets, train with TGN for cfg.train.epochs
/// passes, then generate per document with TGN disabled and flag replayed
/// keywords. Deterministic given the config seeds; inference parallelism
/// (cfg.threads) does not change results.
GdResult run_generative_dedup(const Corpus& corpus, const GdConfig& cfg,
                              const std::vector<KeywordTarget>* external_targets = nullptr);

struct MrpcJudgment {
  std::vector<int> predicted;  // per pair
  std::vector<int> gold;
  DedupReport report;          // corpus-level run over all pair sentences
};

/// Builds one corpus from all pair sentences (ids suffixed by side), runs the
/// pipeline once, and predicts "equivalent" iff both sides are flagged
/// duplicate and share the same target keyword.
MrpcJudgment mrpc_judge(const std::vector<MrpcPair>& pairs, const GdConfig& cfg);

}  // namespace gdedup
