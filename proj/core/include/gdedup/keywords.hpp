#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "gdedup/corpus.hpp"
#include "gdedup/sparse.hpp"

namespace gdedup {

/// Self-supervision target for one document. Keyword tokens always come from
/// the document itself and are in-vocabulary.
struct KeywordTarget {
  std::string doc_id;
  std::vector<TokenId> keyword_tokens;  // k_1..k_l, l >= 1
  std::string surface;
};

enum class TargetStrategy {
  kTfIdfTop1,
  kFirstWord,
  kLastWord,
  kMiddleWord,
  kRandomWord,
};

struct TargetSpec {
  TargetStrategy strategy = TargetStrategy::kTfIdfTop1;
  std::uint64_t seed = 0;  // used by kRandomWord only
};

TargetStrategy parse_target_strategy(const std::string& name);
std::string target_strategy_name(TargetStrategy strategy);

struct TargetExtraction {
  std::vector<KeywordTarget> targets;       // corpus order
  std::vector<std::string> fallback_ids;    // all-stopword documents
};

/// Per-document tf-idf over non-reserved token ids: tf is the raw in-document
/// count, idf = ln((1+n)/(1+df)) + 1, vectors L2-normalized. The corpus must
/// be tokenized.
std::vector<SparseVector> compute_tfidf(const Corpus& corpus);

/// Picks one keyword per document under the strategy. Documents whose tokens
/// are all stopwords fall back to the first in-vocabulary token and are
/// flagged. Throws if a document has no in-vocabulary token at all.
TargetExtraction extract_targets(const Corpus& corpus, const Vocabulary& vocab,
                                 const TargetSpec& spec,
                                 const std::unordered_set<std::string>& stopwords);

/// Built-in English stopword list (fixed, versioned with the repo).
const std::unordered_set<std::string>& english_stopwords();

// Targets persist as JSONL {"id": ..., "keyword": ...} so externally
// extracted keywords can replace the built-in strategies.
void write_targets(const std::vector<KeywordTarget>& targets, const std::string& path);

/// Loads external targets and resolves them against the corpus and
/// vocabulary. Every document must be covered and every keyword token must be
/// in-vocabulary.
std::vector<KeywordTarget> load_targets(const std::string& path, const Corpus& corpus,
                                        const Vocabulary& vocab);

}  // namespace gdedup
