#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace gdedup {

using TokenId = std::int32_t;

inline constexpr std::size_t kDefaultMaxSeqLen = 32;

struct Document {
  std::string id;
  std::string text;
  std::vector<TokenId> tokens;  // filled by Corpus::tokenize_all
  std::optional<std::string> label;
};

/// Token <-> id bijection with four reserved ids. Built from a designated
/// corpus, lowercased; non-reserved ids are assigned in descending frequency
/// order with lexicographic tie-breaks, so the mapping is a pure function of
/// the corpus token multiset and the min-count threshold.
class Vocabulary {
 public:
  static constexpr TokenId kStartId = 0;  // decoder start token k_0
  static constexpr TokenId kEndId = 1;
  static constexpr TokenId kUnkId = 2;
  static constexpr TokenId kPadId = 3;
  static constexpr int kReservedCount = 4;

  Vocabulary();

  // Appends a token with the next free id. Throws on duplicates.
  TokenId add_token(const std::string& token);

  TokenId id_of(std::string_view token) const;  // kUnkId when absent
  const std::string& token_of(TokenId id) const;
  bool contains(std::string_view token) const;
  bool is_reserved(TokenId id) const { return id >= 0 && id < kReservedCount; }

  std::size_t size() const { return id_to_token_.size(); }  // reserved included

 private:
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
};

class Corpus {
 public:
  Corpus() = default;

  // Throws on duplicate document ids or an empty id.
  void add(Document doc);

  const Document& at(std::size_t index) const { return docs_.at(index); }
  Document& at(std::size_t index) { return docs_.at(index); }
  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }
  const std::vector<Document>& documents() const { return docs_; }

  // Index of a document by id, or -1.
  std::int64_t index_of(std::string_view id) const;

  void tokenize_all(const Vocabulary& vocab, std::size_t max_len = kDefaultMaxSeqLen);

  auto begin() const { return docs_.begin(); }
  auto end() const { return docs_.end(); }

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> id_index_;
};

struct DuplicateGroundTruth {
  std::vector<std::vector<std::string>> groups;  // pairwise-disjoint id sets
  std::vector<std::string> singletons;

  std::unordered_set<std::string> group_member_ids() const;
};

struct MrpcPair {
  std::string id1;
  std::string id2;
  std::string text1;
  std::string text2;
  int label = 0;  // 1 = equivalent
};

// Lowercases and splits on whitespace and punctuation boundaries. ASCII
// letters are lowercased; multi-byte UTF-8 sequences pass through unchanged
// except for a handful of Unicode space code points treated as separators.
std::vector<std::string> split_words(std::string_view text);

// split_words + vocabulary lookup (unknown id for OOV), truncated to max_len.
std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab,
                              std::size_t max_len = kDefaultMaxSeqLen);

// Every token with corpus frequency >= min_count plus the reserved tokens.
// Throws "empty corpus" when the corpus has no documents.
Vocabulary build_vocab(const Corpus& corpus, int min_count = 1);

// Newline-delimited records {"id": ..., "text": ..., "label"?: ...}. A
// missing "id" is auto-assigned as the zero-padded 1-based line number.
Corpus load_jsonl(const std::string& path);
void write_jsonl(const Corpus& corpus, const std::string& path);

// Tab-separated, 5 columns (quality, id1, id2, string1, string2), one header
// line, as distributed publicly.
std::vector<MrpcPair> load_mrpc_tsv(const std::string& path);

DuplicateGroundTruth load_ground_truth(const std::string& path);
void write_ground_truth(const DuplicateGroundTruth& truth, const std::string& path);

}  // namespace gdedup
