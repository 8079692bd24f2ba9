#include "gdedup/keywords.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

#include "gdedup/hashing.hpp"
#include "gdedup/rng.hpp"

namespace gdedup {

namespace {

// Document frequency per token id, reserved ids excluded.
std::unordered_map<TokenId, std::int64_t> document_frequency(const Corpus& corpus) {
  std::unordered_map<TokenId, std::int64_t> df;
  std::unordered_set<TokenId> seen;
  for (const auto& doc : corpus) {
    seen.clear();
    for (const TokenId id : doc.tokens) {
      if (id >= Vocabulary::kReservedCount && seen.insert(id).second) {
        ++df[id];
      }
    }
  }
  return df;
}

std::string surface_of(const std::vector<TokenId>& tokens, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += vocab.token_of(tokens[i]);
  }
  return out;
}

}  // namespace

TargetStrategy parse_target_strategy(const std::string& name) {
  if (name == "tfidf") return TargetStrategy::kTfIdfTop1;
  if (name == "first") return TargetStrategy::kFirstWord;
  if (name == "last") return TargetStrategy::kLastWord;
  if (name == "middle") return TargetStrategy::kMiddleWord;
  if (name == "random") return TargetStrategy::kRandomWord;
  throw std::invalid_argument("unknown target strategy '" + name +
                              "' (expected tfidf|first|last|middle|random)");
}

std::string target_strategy_name(TargetStrategy strategy) {
  switch (strategy) {
    case TargetStrategy::kTfIdfTop1:
      return "tfidf";
    case TargetStrategy::kFirstWord:
      return "first";
    case TargetStrategy::kLastWord:
      return "last";
    case TargetStrategy::kMiddleWord:
      return "middle";
    case TargetStrategy::kRandomWord:
      return "random";
  }
  throw std::logic_error("unreachable");
}

std::vector<SparseVector> compute_tfidf(const Corpus& corpus) {
  const auto df = document_frequency(corpus);
  const double n = static_cast<double>(corpus.size());
  std::vector<SparseVector> vectors;
  vectors.reserve(corpus.size());
  std::unordered_map<TokenId, double> tf;
  for (const auto& doc : corpus) {
    tf.clear();
    for (const TokenId id : doc.tokens) {
      if (id >= Vocabulary::kReservedCount) {
        tf[id] += 1.0;
      }
    }
    SparseVector vec;
    vec.doc_id = doc.id;
    vec.weights.reserve(tf.size());
    for (const auto& [id, count] : tf) {
      const double idf = std::log((1.0 + n) / (1.0 + static_cast<double>(df.at(id)))) + 1.0;
      vec.weights.emplace_back(id, count * idf);
    }
    std::sort(vec.weights.begin(), vec.weights.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    vec.normalize();
    vectors.push_back(std::move(vec));
  }
  return vectors;
}

TargetExtraction extract_targets(const Corpus& corpus, const Vocabulary& vocab,
                                 const TargetSpec& spec,
                                 const std::unordered_set<std::string>& stopwords) {
  std::vector<SparseVector> tfidf;
  if (spec.strategy == TargetStrategy::kTfIdfTop1) {
    tfidf = compute_tfidf(corpus);
  }

  TargetExtraction out;
  out.targets.reserve(corpus.size());
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto& doc = corpus.at(d);
    // In-vocabulary tokens with their first position in the document.
    std::vector<TokenId> usable;
    std::unordered_map<TokenId, std::size_t> first_pos;
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      const TokenId id = doc.tokens[i];
      if (id < Vocabulary::kReservedCount) continue;
      usable.push_back(id);
      first_pos.emplace(id, i);
    }
    if (usable.empty()) {
      throw std::runtime_error("extract_targets: document '" + doc.id +
                               "' has no in-vocabulary token");
    }

    TokenId chosen = -1;
    bool fallback = false;
    switch (spec.strategy) {
      case TargetStrategy::kTfIdfTop1: {
        double best_weight = -1.0;
        std::size_t best_pos = 0;
        std::string best_token;
        for (const auto& [id, weight] : tfidf[d].weights) {
          const std::string& token = vocab.token_of(id);
          if (stopwords.count(token) > 0) continue;
          const std::size_t pos = first_pos.at(id);
          const bool better =
              weight > best_weight + 1e-12 ||
              (std::abs(weight - best_weight) <= 1e-12 &&
               (pos < best_pos || (pos == best_pos && token < best_token)));
          if (chosen < 0 || better) {
            chosen = id;
            best_weight = weight;
            best_pos = pos;
            best_token = token;
          }
        }
        if (chosen < 0) {
          chosen = usable.front();  // all stopwords
          fallback = true;
        }
        break;
      }
      case TargetStrategy::kFirstWord:
        chosen = usable.front();
        break;
      case TargetStrategy::kLastWord:
        chosen = usable.back();
        break;
      case TargetStrategy::kMiddleWord:
        chosen = usable[usable.size() / 2];
        break;
      case TargetStrategy::kRandomWord: {
        Rng rng(mix64(spec.seed) ^ hash64(doc.id));
        chosen = usable[rng.below(usable.size())];
        break;
      }
    }

    KeywordTarget target;
    target.doc_id = doc.id;
    target.keyword_tokens = {chosen};
    target.surface = vocab.token_of(chosen);
    out.targets.push_back(std::move(target));
    if (fallback) {
      out.fallback_ids.push_back(doc.id);
    }
  }
  return out;
}

void write_targets(const std::vector<KeywordTarget>& targets, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_targets: cannot open " + path + " for writing");
  }
  for (const auto& target : targets) {
    nlohmann::json record;
    record["id"] = target.doc_id;
    record["keyword"] = target.surface;
    out << record.dump() << '\n';
  }
}

std::vector<KeywordTarget> load_targets(const std::string& path, const Corpus& corpus,
                                        const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_targets: cannot open " + path);
  }
  std::unordered_map<std::string, std::string> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": malformed JSONL: " + e.what());
    }
    if (!record.contains("id") || !record.contains("keyword")) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": record needs \"id\" and \"keyword\"");
    }
    by_id[record["id"].get<std::string>()] = record["keyword"].get<std::string>();
  }

  std::vector<KeywordTarget> targets;
  targets.reserve(corpus.size());
  for (const auto& doc : corpus) {
    const auto it = by_id.find(doc.id);
    if (it == by_id.end()) {
      throw std::runtime_error("load_targets: no keyword for document '" + doc.id + "'");
    }
    KeywordTarget target;
    target.doc_id = doc.id;
    for (const auto& word : split_words(it->second)) {
      const TokenId id = vocab.id_of(word);
      if (id == Vocabulary::kUnkId) {
        throw std::runtime_error("load_targets: keyword token '" + word +
                                 "' for document '" + doc.id + "' is out of vocabulary");
      }
      target.keyword_tokens.push_back(id);
    }
    if (target.keyword_tokens.empty()) {
      throw std::runtime_error("load_targets: empty keyword for document '" + doc.id + "'");
    }
    target.surface = surface_of(target.keyword_tokens, vocab);
    targets.push_back(std::move(target));
  }
  return targets;
}

}  // namespace gdedup
