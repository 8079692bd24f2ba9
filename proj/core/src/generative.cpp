#include "gdedup/generative.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <unordered_set>

namespace gdedup {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string surface_of(const std::vector<TokenId>& tokens, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += vocab.token_of(tokens[i]);
  }
  return out;
}

std::string lowercase(std::string s) {
  for (char& c : s) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return s;
}

}  // namespace

void GdConfig::validate() const {
  if (prediction_threshold < 0.0 || prediction_threshold > 1.0) {
    throw std::invalid_argument("GdConfig: prediction threshold must be in [0, 1]");
  }
  if (beam_size < 1) {
    throw std::invalid_argument("GdConfig: beam size must be >= 1");
  }
  if (max_keyword_len < 1) {
    throw std::invalid_argument("GdConfig: max keyword length must be >= 1");
  }
  if (threads < 1) {
    throw std::invalid_argument("GdConfig: threads must be >= 1");
  }
  tgn.validate();
}

int is_duplicate(const std::string& target_keyword, const std::string& generated_keyword,
                 double probability, double prediction_threshold) {
  if (target_keyword.empty()) return 0;
  const bool match = lowercase(generated_keyword) == lowercase(target_keyword);
  return match && probability >= prediction_threshold ? 1 : 0;
}

GdResult run_generative_dedup(const Corpus& corpus, const GdConfig& cfg,
                              const std::vector<KeywordTarget>* external_targets) {
  cfg.validate();
  if (corpus.empty()) {
    throw std::invalid_argument("run_generative_dedup: empty corpus");
  }

  GdResult result;
  result.report.method = "gd";
  result.report.input_size = corpus.size();
  const auto t_start = Clock::now();

  // Stage 1: vocabulary, tokenization, targets.
  const Vocabulary vocab = build_vocab(corpus, cfg.vocab_min_count);
  Corpus working = corpus;
  working.tokenize_all(vocab, static_cast<std::size_t>(cfg.model.max_len));

  std::vector<std::size_t> trainable;
  Corpus trainable_view;
  for (std::size_t i = 0; i < working.size(); ++i) {
    if (working.at(i).tokens.empty()) {
      result.report.untrainable_ids.push_back(working.at(i).id);
    } else {
      trainable.push_back(i);
      trainable_view.add(working.at(i));
    }
  }

  std::vector<KeywordTarget> targets;
  if (external_targets) {
    std::unordered_map<std::string, const KeywordTarget*> by_id;
    for (const auto& t : *external_targets) by_id[t.doc_id] = &t;
    for (const std::size_t i : trainable) {
      const auto it = by_id.find(working.at(i).id);
      if (it == by_id.end()) {
        throw std::runtime_error("run_generative_dedup: no external target for document '" +
                                 working.at(i).id + "'");
      }
      targets.push_back(*it->second);
    }
  } else if (!trainable.empty()) {
    auto extraction = extract_targets(trainable_view, vocab, cfg.target, english_stopwords());
    targets = std::move(extraction.targets);
    result.report.fallback_ids = std::move(extraction.fallback_ids);
  }
  const double t_targets = seconds_since(t_start);

  // Stage 2: one seeded training run (epochs passes) with TGN.
  const auto t_train_start = Clock::now();
  ModelConfig model_cfg = cfg.model;
  model_cfg.vocab_size = static_cast<int>(vocab.size());
  ModelParams params = ModelParams::init(model_cfg);
  if (!trainable.empty()) {
    std::vector<TrainingExample> examples;
    examples.reserve(trainable.size());
    for (std::size_t k = 0; k < trainable.size(); ++k) {
      examples.push_back({working.at(trainable[k]).tokens, targets[k].keyword_tokens});
    }
    TrainStats stats = train(params, examples, cfg.train, cfg.tgn);
    result.report.loss_trace = std::move(stats.step_losses);
  }
  const double t_train = seconds_since(t_train_start);

  // Stage 3: inference as deduplication, TGN disabled.
  const auto t_infer_start = Clock::now();
  result.report.decisions.resize(working.size());
  for (std::size_t i = 0; i < working.size(); ++i) {
    result.report.decisions[i].doc_id = working.at(i).id;
  }
  for (std::size_t k = 0; k < trainable.size(); ++k) {
    result.report.decisions[trainable[k]].target_keyword = targets[k].surface;
  }

  const auto infer_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t i = trainable[k];
      auto& decision = result.report.decisions[i];
      const BeamResult beam = beam_generate(params, working.at(i).tokens, cfg.beam_size,
                                            cfg.max_keyword_len);
      decision.generated_keyword = surface_of(beam.tokens, vocab);
      decision.probability = beam.probability;
      decision.is_dup = is_duplicate(decision.target_keyword, decision.generated_keyword,
                                     decision.probability, cfg.prediction_threshold);
    }
  };
  const int n_threads =
      std::max(1, std::min(cfg.threads, static_cast<int>(trainable.size())));
  if (n_threads == 1) {
    infer_range(0, trainable.size());
  } else {
    std::vector<std::thread> workers;
    const std::size_t chunk = (trainable.size() + n_threads - 1) / n_threads;
    for (int w = 0; w < n_threads; ++w) {
      const std::size_t begin = static_cast<std::size_t>(w) * chunk;
      const std::size_t end = std::min(trainable.size(), begin + chunk);
      if (begin >= end) break;
      workers.emplace_back(infer_range, begin, end);
    }
    for (auto& worker : workers) worker.join();
  }

  if (cfg.keep_one_per_keyword) {
    std::unordered_set<std::string> seen;
    for (auto& decision : result.report.decisions) {
      if (decision.is_dup == 1 && seen.insert(decision.target_keyword).second) {
        decision.is_dup = 0;
      }
    }
  }
  const double t_infer = seconds_since(t_infer_start);

  for (std::size_t i = 0; i < working.size(); ++i) {
    if (result.report.decisions[i].is_dup == 0) {
      result.kept.add(corpus.at(i));
    }
  }
  result.report.output_size = result.kept.size();
  result.report.timings = {t_targets, t_train, t_infer, seconds_since(t_start)};
  return result;
}

MrpcJudgment mrpc_judge(const std::vector<MrpcPair>& pairs, const GdConfig& cfg) {
  Corpus corpus;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "p%06zu", i);
    Document a;
    a.id = std::string(buf) + "_a";
    a.text = pairs[i].text1;
    corpus.add(std::move(a));
    Document b;
    b.id = std::string(buf) + "_b";
    b.text = pairs[i].text2;
    corpus.add(std::move(b));
  }

  MrpcJudgment judgment;
  if (pairs.empty()) return judgment;

  GdResult result = run_generative_dedup(corpus, cfg);
  judgment.predicted.reserve(pairs.size());
  judgment.gold.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& a = result.report.decisions[2 * i];
    const auto& b = result.report.decisions[2 * i + 1];
    const bool equivalent =
        a.is_dup == 1 && b.is_dup == 1 && a.target_keyword == b.target_keyword;
    judgment.predicted.push_back(equivalent ? 1 : 0);
    judgment.gold.push_back(pairs[i].label);
  }
  judgment.report = std::move(result.report);
  return judgment;
}

}  // namespace gdedup
