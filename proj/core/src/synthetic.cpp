#include "gdedup/synthetic.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "gdedup/rng.hpp"

namespace gdedup {

namespace {

constexpr const char* kSyllables[] = {
    "ba", "de", "ki", "lo", "mu", "na", "po", "ra", "su", "ta",
    "ve", "wo", "za", "che", "fi", "gu", "he", "ja", "ce", "ny"};
constexpr int kSyllableCount = 20;

// Deterministic distinct pseudo-word for a pool index.
std::string make_pool_word(int index) {
  std::string word = kSyllables[index % kSyllableCount];
  word += kSyllables[(index / kSyllableCount) % kSyllableCount];
  word += kSyllables[(index / (kSyllableCount * kSyllableCount)) % kSyllableCount];
  const int span = kSyllableCount * kSyllableCount * kSyllableCount;
  if (index >= span) {
    word += std::to_string(index / span);
  }
  return word;
}

double jaccard_words(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::unordered_set<std::string> sa(a.begin(), a.end());
  const std::unordered_set<std::string> sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& w : sa) {
    inter += sb.count(w);
  }
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::string join_words(const std::vector<std::string>& words) {
  std::string text;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) text += ' ';
    text += words[i];
  }
  return text;
}

// n distinct samples from [0, range).
std::vector<int> sample_distinct(Rng& rng, int range, int n) {
  std::unordered_set<int> seen;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n));
  while (static_cast<int>(out.size()) < n) {
    const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(range)));
    if (seen.insert(x).second) {
      out.push_back(x);
    }
  }
  return out;
}

std::string doc_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "d%05zu", index);
  return buf;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.n_clusters < 0 || spec.cluster_size < 0 || spec.n_singletons < 0 ||
      spec.vocab_pool_size < 0) {
    throw std::invalid_argument("generate_synthetic_corpus: counts must be >= 0");
  }
  const int n_clusters = spec.cluster_size >= 1 ? spec.n_clusters : 0;
  const int total_docs = n_clusters * spec.cluster_size + spec.n_singletons;
  SyntheticCorpus out;
  if (total_docs == 0) return out;

  // Pool segments: sentence words, per-cluster topic words, filler words.
  const int pool = spec.vocab_pool_size;
  const int n_general = std::max(pool * 7 / 10, spec.max_sentence_len + 1);
  const int n_topics = std::max((pool - n_general) / 2, 0);
  const int n_fillers = pool - n_general - n_topics;
  if (n_general > pool || n_topics < n_clusters || (n_clusters > 0 && n_fillers < 1)) {
    throw std::invalid_argument(
        "generate_synthetic_corpus: vocab_pool_size too small for the requested shape");
  }

  std::vector<std::string> general(static_cast<std::size_t>(n_general));
  for (int i = 0; i < n_general; ++i) general[i] = make_pool_word(i);
  std::vector<std::string> topics(static_cast<std::size_t>(n_topics));
  for (int i = 0; i < n_topics; ++i) topics[i] = make_pool_word(n_general + i);
  std::vector<std::string> fillers(static_cast<std::size_t>(n_fillers));
  for (int i = 0; i < n_fillers; ++i) fillers[i] = make_pool_word(n_general + n_topics + i);

  Rng rng(spec.seed);

  // Fixed synonym table over the general segment: a seeded permutation with
  // fixed points displaced.
  std::vector<int> synonym(static_cast<std::size_t>(n_general));
  for (int i = 0; i < n_general; ++i) synonym[i] = i;
  rng.shuffle(synonym);
  for (int i = 0; i < n_general; ++i) {
    if (synonym[i] == i) synonym[i] = (i + 1) % n_general;
  }
  std::unordered_map<std::string, std::string> synonym_of;
  for (int i = 0; i < n_general; ++i) {
    synonym_of[general[i]] = general[synonym[i]];
  }

  std::vector<int> topic_order(static_cast<std::size_t>(n_topics));
  for (int i = 0; i < n_topics; ++i) topic_order[i] = i;
  rng.shuffle(topic_order);

  std::vector<Document> docs;
  docs.reserve(static_cast<std::size_t>(total_docs));
  std::size_t next_id = 0;

  const auto sentence_len = [&] {
    return spec.min_sentence_len +
           static_cast<int>(rng.below(static_cast<std::uint64_t>(
               spec.max_sentence_len - spec.min_sentence_len + 1)));
  };

  for (int c = 0; c < n_clusters; ++c) {
    const std::string& topic = topics[topic_order[c]];
    const int len = sentence_len();
    std::vector<std::string> tmpl(static_cast<std::size_t>(len));
    int p1 = static_cast<int>(rng.below(static_cast<std::uint64_t>(len)));
    int p2 = static_cast<int>(rng.below(static_cast<std::uint64_t>(len - 1)));
    if (p2 >= p1) ++p2;
    const auto words = sample_distinct(rng, n_general, len - 2);
    std::size_t w = 0;
    for (int i = 0; i < len; ++i) {
      tmpl[i] = (i == p1 || i == p2) ? topic : general[words[w++]];
    }

    std::vector<std::string> group_ids;
    group_ids.reserve(static_cast<std::size_t>(spec.cluster_size));
    for (int m = 0; m < spec.cluster_size; ++m) {
      std::vector<std::string> member;
      if (m == 0) {
        member = tmpl;
      } else {
        int attempts = 0;
        while (true) {
          if (++attempts > spec.max_rejection_attempts) {
            throw std::runtime_error(
                "generate_synthetic_corpus: could not satisfy member overlap "
                "constraints after " +
                std::to_string(spec.max_rejection_attempts) + " attempts");
          }
          member = tmpl;
          const int n_ops = 1 + static_cast<int>(rng.below(3));
          for (int op = 0; op < n_ops; ++op) {
            const auto kind = rng.below(4);
            const int len_now = static_cast<int>(member.size());
            if (kind == 0) {
              // Synonym-slot swap on a non-topic position.
              std::vector<int> slots;
              for (int i = 0; i < len_now; ++i) {
                if (synonym_of.count(member[i]) > 0) slots.push_back(i);
              }
              if (!slots.empty()) {
                const int at = slots[rng.below(slots.size())];
                member[at] = synonym_of.at(member[at]);
              }
            } else if (kind == 1) {
              if (len_now > 2) {
                member.erase(member.begin() +
                             static_cast<std::ptrdiff_t>(rng.below(member.size())));
              }
            } else if (kind == 2) {
              if (len_now > 1) {
                const auto at = rng.below(member.size() - 1);
                std::swap(member[at], member[at + 1]);
              }
            } else {
              member.insert(
                  member.begin() + static_cast<std::ptrdiff_t>(rng.below(member.size() + 1)),
                  fillers[rng.below(fillers.size())]);
            }
          }
          const bool topic_kept =
              std::find(member.begin(), member.end(), topic) != member.end();
          if (topic_kept && jaccard_words(member, tmpl) >= spec.min_member_jaccard) {
            break;
          }
        }
      }
      Document doc;
      doc.id = doc_id(next_id++);
      doc.text = join_words(member);
      group_ids.push_back(doc.id);
      docs.push_back(std::move(doc));
    }
    out.truth.groups.push_back(std::move(group_ids));
  }

  // Singletons: enforce low pairwise overlap with every earlier singleton.
  std::vector<std::vector<std::string>> singleton_words;
  std::unordered_map<std::string, std::vector<std::size_t>> token_to_singletons;
  for (int s = 0; s < spec.n_singletons; ++s) {
    std::vector<std::string> sentence;
    int attempts = 0;
    while (true) {
      if (++attempts > spec.max_rejection_attempts) {
        throw std::runtime_error(
            "generate_synthetic_corpus: could not satisfy singleton overlap "
            "constraints after " +
            std::to_string(spec.max_rejection_attempts) + " attempts");
      }
      const int len = sentence_len();
      sentence.clear();
      for (const int idx : sample_distinct(rng, n_general, len)) {
        sentence.push_back(general[idx]);
      }
      std::unordered_set<std::size_t> candidates;
      for (const auto& word : sentence) {
        const auto it = token_to_singletons.find(word);
        if (it != token_to_singletons.end()) {
          candidates.insert(it->second.begin(), it->second.end());
        }
      }
      bool ok = true;
      for (const auto other : candidates) {
        if (jaccard_words(sentence, singleton_words[other]) >= spec.max_singleton_jaccard) {
          ok = false;
          break;
        }
      }
      if (ok) break;
    }
    const std::size_t index = singleton_words.size();
    for (const auto& word : sentence) {
      token_to_singletons[word].push_back(index);
    }
    Document doc;
    doc.id = doc_id(next_id++);
    doc.text = join_words(sentence);
    out.truth.singletons.push_back(doc.id);
    singleton_words.push_back(std::move(sentence));
    docs.push_back(std::move(doc));
  }

  rng.shuffle(docs);
  for (auto& doc : docs) {
    out.corpus.add(std::move(doc));
  }
  return out;
}

SyntheticCorpus generate_synthetic_corpus(int n_clusters, int cluster_size,
                                          int n_singletons, int vocab_pool_size,
                                          std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_clusters = n_clusters;
  spec.cluster_size = cluster_size;
  spec.n_singletons = n_singletons;
  spec.vocab_pool_size = vocab_pool_size;
  spec.seed = seed;
  return generate_synthetic_corpus(spec);
}

BiasCorpus generate_bias_corpus(const BiasSpec& spec) {
  constexpr int kIndicative = 30;   // per label
  constexpr int kCommon = 40;       // shared high-frequency words
  const int reserved = 2 * kIndicative + kCommon + 1;
  if (spec.vocab_pool_size < reserved + 100) {
    throw std::invalid_argument("generate_bias_corpus: vocab_pool_size too small");
  }
  BiasCorpus out;
  out.spurious_label = "1";

  std::vector<std::string> indicative[2];
  for (int i = 0; i < kIndicative; ++i) indicative[0].push_back(make_pool_word(i));
  for (int i = 0; i < kIndicative; ++i) indicative[1].push_back(make_pool_word(kIndicative + i));
  std::vector<std::string> common;
  for (int i = 0; i < kCommon; ++i) common.push_back(make_pool_word(2 * kIndicative + i));
  out.trigger = make_pool_word(2 * kIndicative + kCommon);
  const int n_tail = spec.vocab_pool_size - reserved;
  std::vector<std::string> tail;
  for (int i = 0; i < n_tail; ++i) tail.push_back(make_pool_word(reserved + i));

  Rng rng(spec.seed);

  const auto background_doc = [&](int label) {
    std::vector<std::string> words;
    const int n_ind = 3 + static_cast<int>(rng.below(3));
    for (const int i : sample_distinct(rng, kIndicative, n_ind)) {
      words.push_back(indicative[label][i]);
    }
    const int n_common = 1 + static_cast<int>(rng.below(2));
    for (const int i : sample_distinct(rng, kCommon, n_common)) {
      words.push_back(common[i]);
    }
    const int n_rest = 2 + static_cast<int>(rng.below(2));
    for (const int i : sample_distinct(rng, n_tail, n_rest)) {
      words.push_back(tail[i]);
    }
    rng.shuffle(words);
    return words;
  };

  std::vector<Document> train_docs;
  std::size_t next_train = 0;
  const auto train_id = [&] {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "b%05zu", next_train++);
    return std::string(buf);
  };

  for (int label = 0; label < 2; ++label) {
    for (int i = 0; i < spec.n_background_per_label; ++i) {
      Document doc;
      doc.id = train_id();
      doc.text = join_words(background_doc(label));
      doc.label = std::to_string(label);
      out.truth.singletons.push_back(doc.id);
      train_docs.push_back(std::move(doc));
    }
  }

  // Duplicate cluster: trigger appears twice so it dominates tf-idf; the
  // surrounding words come from the high-document-frequency common pool.
  std::vector<std::string> tmpl;
  tmpl.push_back(out.trigger);
  for (const int i : sample_distinct(rng, kCommon, 5)) tmpl.push_back(common[i]);
  tmpl.insert(tmpl.begin() + 3, out.trigger);
  std::vector<std::string> group_ids;
  for (int copy = 0; copy < spec.n_dup_copies; ++copy) {
    std::vector<std::string> words = tmpl;
    const int n_ops = static_cast<int>(rng.below(3));
    for (int op = 0; op < n_ops; ++op) {
      const auto kind = rng.below(3);
      std::vector<int> neutral_slots;
      for (int i = 0; i < static_cast<int>(words.size()); ++i) {
        if (words[i] != out.trigger) neutral_slots.push_back(i);
      }
      if (kind == 0 && words.size() > 1) {
        const auto at = rng.below(words.size() - 1);
        std::swap(words[at], words[at + 1]);
      } else if (kind == 1 && neutral_slots.size() > 3) {
        words.erase(words.begin() + neutral_slots[rng.below(neutral_slots.size())]);
      } else {
        words.insert(
            words.begin() + static_cast<std::ptrdiff_t>(rng.below(words.size() + 1)),
            common[rng.below(common.size())]);
      }
    }
    Document doc;
    doc.id = train_id();
    doc.text = join_words(words);
    doc.label = out.spurious_label;
    group_ids.push_back(doc.id);
    train_docs.push_back(std::move(doc));
  }
  out.truth.groups.push_back(std::move(group_ids));

  rng.shuffle(train_docs);
  for (auto& doc : train_docs) {
    out.train.add(std::move(doc));
  }

  std::size_t next_test = 0;
  const auto test_id = [&] {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "t%05zu", next_test++);
    return std::string(buf);
  };
  for (int label = 0; label < 2; ++label) {
    for (int i = 0; i < spec.n_test_per_label; ++i) {
      Document doc;
      doc.id = test_id();
      doc.text = join_words(background_doc(label));
      doc.label = std::to_string(label);
      out.test.add(std::move(doc));
    }
  }
  // Anti-spurious probes: the trigger surrounded by label-0 evidence.
  for (int i = 0; i < spec.n_trigger_tests; ++i) {
    std::vector<std::string> words;
    words.push_back(out.trigger);
    words.push_back(out.trigger);
    for (const int j : sample_distinct(rng, kIndicative, 4)) {
      words.push_back(indicative[0][j]);
    }
    for (const int j : sample_distinct(rng, n_tail, 2)) {
      words.push_back(tail[j]);
    }
    rng.shuffle(words);
    Document doc;
    doc.id = test_id();
    doc.text = join_words(words);
    doc.label = "0";
    out.trigger_test_ids.push_back(doc.id);
    out.test.add(std::move(doc));
  }
  return out;
}

}  // namespace gdedup
