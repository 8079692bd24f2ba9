#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdedup/corpus.hpp"

namespace gdedup {

struct SyntheticSpec {
  int n_clusters = 0;
  int cluster_size = 0;
  int n_singletons = 0;
  int vocab_pool_size = 0;
  std::uint64_t seed = 0;

  int min_sentence_len = 8;
  int max_sentence_len = 16;
  double min_member_jaccard = 0.6;    // member vs. cluster template, inclusive
  double max_singleton_jaccard = 0.3; // singleton pairs, exclusive
  int max_rejection_attempts = 1000;
};

struct SyntheticCorpus {
  Corpus corpus;
  DuplicateGroundTruth truth;
};

/// Planted-duplicate corpus: each cluster is one template sentence plus
/// paraphrase variants produced by seeded edit operations (synonym-slot swap,
/// token drop, adjacent-order swap, filler insertion); singletons are drawn
/// independently with low pairwise overlap enforced by rejection sampling.
/// Fully deterministic for a fixed spec.
SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec);

SyntheticCorpus generate_synthetic_corpus(int n_clusters, int cluster_size,
                                          int n_singletons, int vocab_pool_size,
                                          std::uint64_t seed);

struct BiasSpec {
  int n_background_per_label = 120;
  int n_dup_copies = 40;
  int n_test_per_label = 40;
  int n_trigger_tests = 10;
  int vocab_pool_size = 1200;
  std::uint64_t seed = 0;
};

/// Labeled corpus where one duplicated cluster's shared trigger token is
/// spuriously correlated with one label in the training duplicates, while the
/// held-out test set pairs the trigger with evidence for the other label.
struct BiasCorpus {
  Corpus train;  // labels "0" / "1"; duplicates all carry the spurious label
  Corpus test;
  DuplicateGroundTruth truth;           // duplicate structure of `train`
  std::string trigger;                  // the planted token
  std::string spurious_label;           // label the duplicates push ("1")
  std::vector<std::string> trigger_test_ids;  // test docs probing the trigger
};

BiasCorpus generate_bias_corpus(const BiasSpec& spec);

}  // namespace gdedup
