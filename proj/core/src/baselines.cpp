#include "gdedup/baselines.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

#include "gdedup/hashing.hpp"
#include "gdedup/rng.hpp"

namespace gdedup {

namespace {

constexpr std::uint64_t kShingleSeed = 0x5ca1ab1e00000001ull;
constexpr std::uint64_t kSimhashSeed = 0x5ca1ab1e00000002ull;
constexpr std::uint64_t kEmptyMin = std::numeric_limits<std::uint64_t>::max();

std::uint64_t window_hash(const TokenId* begin, int k) {
  return hash64(std::string_view(reinterpret_cast<const char*>(begin),
                                 sizeof(TokenId) * static_cast<std::size_t>(k)),
                kShingleSeed);
}

}  // namespace

double SparseVector::norm() const {
  double sq = 0.0;
  for (const auto& [id, w] : weights) {
    (void)id;
    sq += w * w;
  }
  return std::sqrt(sq);
}

void SparseVector::normalize() {
  const double n = norm();
  if (n <= 0.0) return;
  for (auto& [id, w] : weights) {
    (void)id;
    w /= n;
  }
}

double cosine(const SparseVector& a, const SparseVector& b) {
  double dot = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.weights.size() && j < b.weights.size()) {
    const TokenId ai = a.weights[i].first;
    const TokenId bj = b.weights[j].first;
    if (ai == bj) {
      dot += a.weights[i].second * b.weights[j].second;
      ++i;
      ++j;
    } else if (ai < bj) {
      ++i;
    } else {
      ++j;
    }
  }
  return dot;
}

ShingleSet shingle(const std::vector<TokenId>& tokens, int k) {
  if (k < 1) throw std::invalid_argument("shingle: k must be >= 1");
  ShingleSet set;
  if (static_cast<int>(tokens.size()) < k) return set;
  set.shingles.reserve(tokens.size() - static_cast<std::size_t>(k) + 1);
  for (std::size_t i = 0; i + static_cast<std::size_t>(k) <= tokens.size(); ++i) {
    set.shingles.push_back(window_hash(tokens.data() + i, k));
  }
  std::sort(set.shingles.begin(), set.shingles.end());
  set.shingles.erase(std::unique(set.shingles.begin(), set.shingles.end()),
                     set.shingles.end());
  return set;
}

double jaccard_exact(const ShingleSet& a, const ShingleSet& b) {
  if (a.shingles.empty() && b.shingles.empty()) return 1.0;
  if (a.shingles.empty() || b.shingles.empty()) return 0.0;
  std::size_t inter = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.shingles.size() && j < b.shingles.size()) {
    if (a.shingles[i] == b.shingles[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a.shingles[i] < b.shingles[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = a.shingles.size() + b.shingles.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

MinHashSignature minhash_signature(const ShingleSet& set, int h, std::uint64_t seed) {
  if (h < 1) throw std::invalid_argument("minhash_signature: h must be >= 1");
  MinHashSignature sig;
  sig.doc_id = set.doc_id;
  sig.h = h;
  sig.seed = seed;
  sig.mins.assign(static_cast<std::size_t>(h), kEmptyMin);
  for (int i = 0; i < h; ++i) {
    const std::uint64_t fn_seed = mix64(seed + static_cast<std::uint64_t>(i));
    std::uint64_t best = kEmptyMin;
    for (const std::uint64_t s : set.shingles) {
      best = std::min(best, hash64(s, fn_seed));
    }
    sig.mins[static_cast<std::size_t>(i)] = best;
  }
  return sig;
}

double jaccard_estimate(const MinHashSignature& a, const MinHashSignature& b) {
  if (a.h != b.h || a.seed != b.seed) {
    throw std::invalid_argument(
        "jaccard_estimate: signatures built with different h or seed");
  }
  int matches = 0;
  for (int i = 0; i < a.h; ++i) {
    if (a.mins[static_cast<std::size_t>(i)] == b.mins[static_cast<std::size_t>(i)]) {
      ++matches;
    }
  }
  return static_cast<double>(matches) / static_cast<double>(a.h);
}

SimHashFingerprint simhash(const std::vector<TokenId>& tokens) {
  std::unordered_map<TokenId, double> tf;
  for (const TokenId id : tokens) {
    tf[id] += 1.0;
  }
  std::vector<std::pair<TokenId, double>> weighted(tf.begin(), tf.end());
  std::sort(weighted.begin(), weighted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return simhash_weighted(weighted);
}

SimHashFingerprint simhash_weighted(
    const std::vector<std::pair<TokenId, double>>& weighted) {
  double acc[64] = {};
  for (const auto& [id, weight] : weighted) {
    const std::uint64_t h =
        hash64(static_cast<std::uint64_t>(static_cast<std::uint32_t>(id)), kSimhashSeed);
    for (int bit = 0; bit < 64; ++bit) {
      acc[bit] += ((h >> bit) & 1u) ? weight : -weight;
    }
  }
  SimHashFingerprint fp;
  for (int bit = 0; bit < 64; ++bit) {
    if (acc[bit] > 0.0) {
      fp.bits |= (1ull << bit);
    }
  }
  return fp;
}

int hamming(const SimHashFingerprint& a, const SimHashFingerprint& b) {
  return std::popcount(a.bits ^ b.bits);
}

std::size_t DedupScan::flagged_count() const {
  std::size_t count = 0;
  for (const auto f : flags) count += f;
  return count;
}

DedupScan first_kept_scan(std::size_t n,
                          const std::function<double(std::size_t, std::size_t)>& score,
                          double threshold, bool higher_is_closer) {
  DedupScan scan;
  scan.flags.assign(n, 0);
  scan.best_score.assign(n, higher_is_closer ? -1.0 : std::numeric_limits<double>::max());
  scan.matched.assign(n, -1);
  std::vector<std::size_t> kept;
  kept.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    bool duplicate = false;
    for (const std::size_t i : kept) {
      const double s = score(i, j);
      ++scan.comparisons;
      const bool closer = higher_is_closer ? s > scan.best_score[j] : s < scan.best_score[j];
      if (closer) {
        scan.best_score[j] = s;
        scan.matched[j] = static_cast<std::int64_t>(i);
      }
      const bool hit = higher_is_closer ? s >= threshold : s <= threshold;
      duplicate = duplicate || hit;
    }
    if (duplicate) {
      scan.flags[j] = 1;
    } else {
      kept.push_back(j);
    }
  }
  return scan;
}

DedupScan pairwise_dedup(const Corpus& corpus, const std::vector<SparseVector>& vectors,
                         double threshold) {
  if (vectors.size() != corpus.size()) {
    throw std::invalid_argument("pairwise_dedup: vectors must match corpus size");
  }
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("pairwise_dedup: threshold must be in (0, 1]");
  }
  return first_kept_scan(
      corpus.size(),
      [&](std::size_t i, std::size_t j) { return cosine(vectors[i], vectors[j]); },
      threshold);
}

DedupScan shingles_dedup(const Corpus& corpus, int k, double threshold) {
  std::vector<ShingleSet> sets;
  sets.reserve(corpus.size());
  for (const auto& doc : corpus) {
    auto set = shingle(doc.tokens, k);
    set.doc_id = doc.id;
    sets.push_back(std::move(set));
  }
  return first_kept_scan(
      corpus.size(),
      [&](std::size_t i, std::size_t j) { return jaccard_exact(sets[i], sets[j]); },
      threshold);
}

DedupScan simhash_dedup(const Corpus& corpus, int max_hamming) {
  std::vector<SimHashFingerprint> prints;
  prints.reserve(corpus.size());
  for (const auto& doc : corpus) {
    auto fp = simhash(doc.tokens);
    fp.doc_id = doc.id;
    prints.push_back(std::move(fp));
  }
  return first_kept_scan(
      corpus.size(),
      [&](std::size_t i, std::size_t j) {
        return static_cast<double>(hamming(prints[i], prints[j]));
      },
      static_cast<double>(max_hamming), /*higher_is_closer=*/false);
}

DedupScan random_dedup(const Corpus& corpus, std::size_t target_size, std::uint64_t seed) {
  const std::size_t n = corpus.size();
  if (target_size > n) {
    throw std::invalid_argument("random_dedup: target_size exceeds corpus size");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  DedupScan scan;
  scan.flags.assign(n, 1);
  scan.best_score.assign(n, 0.0);
  scan.matched.assign(n, -1);
  for (std::size_t i = 0; i < target_size; ++i) {
    scan.flags[order[i]] = 0;
  }
  return scan;
}

std::vector<SparseVector> load_vectors(const std::string& path, const Corpus& corpus,
                                       const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_vectors: cannot open " + path);
  }
  std::unordered_map<std::string, SparseVector> by_id;
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
    SparseVector vec;
    vec.doc_id = record.at("id").get<std::string>();
    for (const auto& [key, value] : record.at("weights").items()) {
      TokenId id;
      if (!key.empty() && key.find_first_not_of("0123456789") == std::string::npos) {
        id = static_cast<TokenId>(std::stol(key));
      } else {
        id = vocab.id_of(key);
        if (id == Vocabulary::kUnkId && !vocab.contains(key)) {
          throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                   ": unknown vector token '" + key + "'");
        }
      }
      vec.weights.emplace_back(id, value.get<double>());
    }
    std::sort(vec.weights.begin(), vec.weights.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    vec.normalize();
    by_id.emplace(vec.doc_id, std::move(vec));
  }
  std::vector<SparseVector> vectors;
  vectors.reserve(corpus.size());
  for (const auto& doc : corpus) {
    const auto it = by_id.find(doc.id);
    if (it == by_id.end()) {
      throw std::runtime_error("load_vectors: no vector for document '" + doc.id + "'");
    }
    vectors.push_back(it->second);
  }
  return vectors;
}

void write_vectors(const std::vector<SparseVector>& vectors, const Vocabulary& vocab,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_vectors: cannot open " + path + " for writing");
  }
  for (const auto& vec : vectors) {
    nlohmann::json weights = nlohmann::json::object();
    for (const auto& [id, w] : vec.weights) {
      weights[vocab.token_of(id)] = w;
    }
    nlohmann::json record;
    record["id"] = vec.doc_id;
    record["weights"] = std::move(weights);
    out << record.dump() << '\n';
  }
}

}  // namespace gdedup
