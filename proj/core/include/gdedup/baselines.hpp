#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gdedup/corpus.hpp"
#include "gdedup/sparse.hpp"

namespace gdedup {

struct ShingleSet {
  std::string doc_id;
  std::vector<std::uint64_t> shingles;  // sorted, unique
};

struct MinHashSignature {
  std::string doc_id;
  int h = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> mins;  // length h
};

struct SimHashFingerprint {
  std::string doc_id;
  std::uint64_t bits = 0;
};

// All contiguous k-token windows, each hashed to 64 bits. Fewer than k tokens
// yield an empty set.
ShingleSet shingle(const std::vector<TokenId>& tokens, int k);

// |intersection| / |union|; both empty -> 1.0, exactly one empty -> 0.0.
double jaccard_exact(const ShingleSet& a, const ShingleSet& b);

MinHashSignature minhash_signature(const ShingleSet& set, int h, std::uint64_t seed);

// Fraction of matching positions. Throws if h or seed differ.
double jaccard_estimate(const MinHashSignature& a, const MinHashSignature& b);

// 64-bit simhash with weight-signed bit accumulation; weights default to
// in-document token frequency.
SimHashFingerprint simhash(const std::vector<TokenId>& tokens);
SimHashFingerprint simhash_weighted(const std::vector<std::pair<TokenId, double>>& weighted);

int hamming(const SimHashFingerprint& a, const SimHashFingerprint& b);

/// Result of a sequential first-occurrence-kept scan. A document is flagged
/// iff it matches some earlier kept document; every candidate is compared
/// against all earlier kept documents (no early exit), so `comparisons`
/// equals the sum over the scan of the number of earlier kept documents.
struct DedupScan {
  std::vector<std::uint8_t> flags;   // 1 = duplicate
  std::vector<double> best_score;    // similarity (or distance, see method)
  std::vector<std::int64_t> matched; // index of best earlier kept doc, -1 if none
  std::uint64_t comparisons = 0;

  std::size_t flagged_count() const;
  std::size_t kept_count() const { return flags.size() - flagged_count(); }
};

/// Generic scan used by the similarity-based methods; exposed so the scan
/// discipline can be tested with an arbitrary pair-similarity function.
/// `higher_is_closer` selects between similarity >= threshold (true) and
/// distance <= threshold (false) as the duplicate condition.
DedupScan first_kept_scan(std::size_t n,
                          const std::function<double(std::size_t, std::size_t)>& score,
                          double threshold, bool higher_is_closer = true);

// O(n^2) cosine scan over normalized vectors; the deliberate quadratic foil.
DedupScan pairwise_dedup(const Corpus& corpus, const std::vector<SparseVector>& vectors,
                         double threshold);

DedupScan shingles_dedup(const Corpus& corpus, int k, double threshold);

DedupScan simhash_dedup(const Corpus& corpus, int max_hamming);

// Keeps a uniform seeded subset of exactly target_size documents.
DedupScan random_dedup(const Corpus& corpus, std::size_t target_size, std::uint64_t seed);

// Vectors file: JSONL {"id": ..., "weights": {"tokenOrId": w, ...}}. Keys are
// vocabulary tokens or integer token ids; vectors are L2-normalized on load
// and returned in corpus order.
std::vector<SparseVector> load_vectors(const std::string& path, const Corpus& corpus,
                                       const Vocabulary& vocab);
void write_vectors(const std::vector<SparseVector>& vectors, const Vocabulary& vocab,
                   const std::string& path);

}  // namespace gdedup
