#include "gdedup/evaluation.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "gdedup/keywords.hpp"
#include "gdedup/rng.hpp"
#include "gdedup/synthetic.hpp"

namespace gdedup {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int bin_index(double value, double lo, double hi, int n_bins) {
  const double unit = (value - lo) / (hi - lo);
  const int raw = static_cast<int>(std::floor(unit * n_bins));
  return std::clamp(raw, 0, n_bins - 1);
}

void fill_bins(const std::vector<double>& samples, double lo, double hi, int n_bins,
               std::vector<long>& counts) {
  counts.assign(static_cast<std::size_t>(n_bins), 0);
  for (const double v : samples) {
    ++counts[static_cast<std::size_t>(bin_index(v, lo, hi, n_bins))];
  }
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

// Multinomial logistic regression over bag-of-words counts.
struct BowModel {
  std::vector<std::string> classes;
  Eigen::MatrixXd w;  // vocab x classes
  Eigen::RowVectorXd b;
};

std::vector<std::pair<TokenId, double>> bow_features(const std::vector<TokenId>& tokens) {
  std::unordered_map<TokenId, double> counts;
  for (const TokenId id : tokens) {
    if (id >= Vocabulary::kReservedCount) counts[id] += 1.0;
  }
  std::vector<std::pair<TokenId, double>> features(counts.begin(), counts.end());
  std::sort(features.begin(), features.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return features;
}

Eigen::RowVectorXd bow_predict(const BowModel& model,
                               const std::vector<std::pair<TokenId, double>>& features) {
  Eigen::RowVectorXd scores = model.b;
  for (const auto& [id, count] : features) {
    scores += count * model.w.row(id);
  }
  const double mx = scores.maxCoeff();
  Eigen::RowVectorXd probs = (scores.array() - mx).exp();
  probs /= probs.sum();
  return probs;
}

BowModel train_bow(const Corpus& corpus, const std::vector<std::string>& classes,
                   std::size_t vocab_size, std::uint64_t seed) {
  constexpr int kEpochs = 60;
  constexpr int kBatch = 16;
  constexpr double kLr = 0.5;

  BowModel model;
  model.classes = classes;
  model.w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(vocab_size),
                                  static_cast<Eigen::Index>(classes.size()));
  model.b = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(classes.size()));

  std::unordered_map<std::string, int> class_index;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    class_index[classes[c]] = static_cast<int>(c);
  }

  std::vector<std::vector<std::pair<TokenId, double>>> features;
  std::vector<int> labels;
  features.reserve(corpus.size());
  for (const auto& doc : corpus) {
    if (!doc.label) {
      throw std::invalid_argument("train_bow: document '" + doc.id + "' has no label");
    }
    features.push_back(bow_features(doc.tokens));
    labels.push_back(class_index.at(*doc.label));
  }

  Rng rng(seed);
  std::vector<std::size_t> order(features.size());
  for (int epoch = 0; epoch < kEpochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += kBatch) {
      const std::size_t stop = std::min(order.size(), start + kBatch);
      Eigen::MatrixXd dw = Eigen::MatrixXd::Zero(model.w.rows(), model.w.cols());
      Eigen::RowVectorXd db = Eigen::RowVectorXd::Zero(model.b.cols());
      for (std::size_t i = start; i < stop; ++i) {
        const auto& f = features[order[i]];
        Eigen::RowVectorXd err = bow_predict(model, f);
        err(labels[order[i]]) -= 1.0;
        for (const auto& [id, count] : f) {
          dw.row(id) += count * err;
        }
        db += err;
      }
      const double scale = kLr / static_cast<double>(stop - start);
      model.w -= scale * dw;
      model.b -= scale * db;
    }
  }
  return model;
}

}  // namespace

F1Result f1_equivalent(std::span<const int> predictions, std::span<const int> gold) {
  if (predictions.size() != gold.size()) {
    throw std::invalid_argument("f1_equivalent: prediction and gold lengths differ");
  }
  F1Result r;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool p = predictions[i] != 0;
    const bool g = gold[i] != 0;
    if (p && g) {
      ++r.tp;
    } else if (p && !g) {
      ++r.fp;
    } else if (!p && g) {
      ++r.fn;
    } else {
      ++r.tn;
    }
  }
  r.precision = r.tp + r.fp > 0 ? static_cast<double>(r.tp) / (r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn > 0 ? static_cast<double>(r.tp) / (r.tp + r.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

DistributionExport export_confidence_distribution(const std::vector<DedupDecision>& decisions,
                                                  int n_bins) {
  DistributionExport dist;
  for (const auto& decision : decisions) {
    (decision.is_dup ? dist.dup_samples : dist.nondup_samples)
        .push_back(decision.probability);
  }
  fill_bins(dist.dup_samples, dist.lo, dist.hi, n_bins, dist.dup_counts);
  fill_bins(dist.nondup_samples, dist.lo, dist.hi, n_bins, dist.nondup_counts);
  return dist;
}

DistributionExport export_similarity_distribution(const Corpus& corpus,
                                                  const std::vector<std::uint8_t>& flags,
                                                  const std::vector<SparseVector>& vectors,
                                                  int n_bins) {
  if (flags.size() != corpus.size() || vectors.size() != corpus.size()) {
    throw std::invalid_argument(
        "export_similarity_distribution: flags/vectors must match corpus size");
  }
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (!flags[i]) kept.push_back(i);
  }
  DistributionExport dist;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    double best = 0.0;
    for (const std::size_t j : kept) {
      if (j == i) continue;
      best = std::max(best, cosine(vectors[i], vectors[j]));
    }
    (flags[i] ? dist.dup_samples : dist.nondup_samples).push_back(best);
  }
  fill_bins(dist.dup_samples, dist.lo, dist.hi, n_bins, dist.dup_counts);
  fill_bins(dist.nondup_samples, dist.lo, dist.hi, n_bins, dist.nondup_counts);
  return dist;
}

void write_histogram_csv(const DistributionExport& dist, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_histogram_csv: cannot open " + path + " for writing");
  }
  out << "bin_low,bin_high,count_dup,count_nondup\n";
  const auto n_bins = dist.dup_counts.size();
  const double width = (dist.hi - dist.lo) / static_cast<double>(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    out << format_double(dist.lo + width * static_cast<double>(b)) << ','
        << format_double(dist.lo + width * static_cast<double>(b + 1)) << ','
        << dist.dup_counts[b] << ',' << dist.nondup_counts[b] << '\n';
  }
}

F1Result flagged_vs_truth(const Corpus& corpus, const std::vector<std::uint8_t>& flags,
                          const DuplicateGroundTruth& truth) {
  if (flags.size() != corpus.size()) {
    throw std::invalid_argument("flagged_vs_truth: flags must match corpus size");
  }
  const auto members = truth.group_member_ids();
  std::vector<int> predictions(corpus.size());
  std::vector<int> gold(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    predictions[i] = flags[i] ? 1 : 0;
    gold[i] = members.count(corpus.at(i).id) > 0 ? 1 : 0;
  }
  return f1_equivalent(predictions, gold);
}

DedupMethod parse_dedup_method(const std::string& name) {
  if (name == "gd") return DedupMethod::kGd;
  if (name == "shingles") return DedupMethod::kShingles;
  if (name == "simhash") return DedupMethod::kSimhash;
  if (name == "pairwise") return DedupMethod::kPairwise;
  if (name == "random") return DedupMethod::kRandom;
  throw std::invalid_argument("unknown dedup method '" + name +
                              "' (expected gd|shingles|simhash|pairwise|random)");
}

std::string dedup_method_name(DedupMethod method) {
  switch (method) {
    case DedupMethod::kGd:
      return "gd";
    case DedupMethod::kShingles:
      return "shingles";
    case DedupMethod::kSimhash:
      return "simhash";
    case DedupMethod::kPairwise:
      return "pairwise";
    case DedupMethod::kRandom:
      return "random";
  }
  throw std::logic_error("unreachable");
}

MethodRun run_dedup_method(const Corpus& corpus, DedupMethod method, const GdConfig& gd_cfg,
                           const BaselineConfig& baseline_cfg) {
  MethodRun run;
  run.method = dedup_method_name(method);
  const auto t_start = Clock::now();
  if (method == DedupMethod::kGd) {
    GdResult result = run_generative_dedup(corpus, gd_cfg);
    run.flags.resize(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      run.flags[i] = static_cast<std::uint8_t>(result.report.decisions[i].is_dup);
    }
    run.gd_report = std::move(result.report);
    run.seconds = seconds_since(t_start);
    run.kept = run.gd_report.output_size;
    return run;
  }

  Corpus working = corpus;
  if (method != DedupMethod::kRandom) {
    const Vocabulary vocab = build_vocab(corpus, 1);
    working.tokenize_all(vocab, baseline_cfg.max_seq_len);
  }
  switch (method) {
    case DedupMethod::kShingles:
      run.scan = shingles_dedup(working, baseline_cfg.shingle_k,
                                baseline_cfg.jaccard_threshold);
      break;
    case DedupMethod::kSimhash:
      run.scan = simhash_dedup(working, baseline_cfg.max_hamming);
      break;
    case DedupMethod::kPairwise: {
      const auto vectors = compute_tfidf(working);
      run.scan = pairwise_dedup(working, vectors, baseline_cfg.cosine_threshold);
      break;
    }
    case DedupMethod::kRandom: {
      const std::size_t target = baseline_cfg.random_target_size == 0
                                     ? corpus.size()
                                     : baseline_cfg.random_target_size;
      run.scan = random_dedup(working, target, baseline_cfg.random_seed);
      break;
    }
    case DedupMethod::kGd:
      break;  // handled above
  }
  run.seconds = seconds_since(t_start);
  run.flags = run.scan.flags;
  run.kept = run.scan.kept_count();
  return run;
}

std::vector<TimingRow> benchmark_timing(std::span<const std::size_t> sizes,
                                        std::span<const DedupMethod> methods,
                                        const GdConfig& gd_cfg,
                                        const BaselineConfig& baseline_cfg,
                                        std::uint64_t corpus_seed, int runs,
                                        int vocab_pool_size) {
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] < sizes[i - 1]) {
      throw std::invalid_argument("benchmark_timing: sizes must be ascending");
    }
  }
  std::vector<TimingRow> rows;
  for (const std::size_t n : sizes) {
    const auto synthetic = generate_synthetic_corpus(0, 0, static_cast<int>(n),
                                                     vocab_pool_size, corpus_seed + n);
    for (const DedupMethod method : methods) {
      const MethodRun warmup = run_dedup_method(synthetic.corpus, method, gd_cfg, baseline_cfg);
      std::vector<double> times;
      std::size_t kept = warmup.kept;
      for (int r = 0; r < runs; ++r) {
        const MethodRun timed = run_dedup_method(synthetic.corpus, method, gd_cfg, baseline_cfg);
        if (timed.kept != kept) {
          throw std::runtime_error("benchmark_timing: non-deterministic kept count for " +
                                   dedup_method_name(method));
        }
        times.push_back(timed.seconds);
      }
      rows.push_back({dedup_method_name(method), n, kept, median(times)});
    }
  }
  return rows;
}

void write_timing_csv(const std::vector<TimingRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_timing_csv: cannot open " + path + " for writing");
  }
  out << "method,n,m,seconds\n";
  for (const auto& row : rows) {
    out << row.method << ',' << row.n << ',' << row.m << ','
        << format_double(row.seconds) << '\n';
  }
}

BiasProbeResult redundancy_bias_probe(const BiasProbeInputs& inputs, std::uint64_t seed) {
  const Vocabulary vocab = build_vocab(inputs.raw_train, 1);
  constexpr std::size_t kBowMaxLen = 64;
  Corpus raw = inputs.raw_train;
  raw.tokenize_all(vocab, kBowMaxLen);
  Corpus dedup = inputs.dedup_train;
  dedup.tokenize_all(vocab, kBowMaxLen);
  Corpus test = inputs.test;
  test.tokenize_all(vocab, kBowMaxLen);

  std::unordered_set<std::string> label_set;
  for (const auto& doc : raw) {
    if (!doc.label) {
      throw std::invalid_argument("redundancy_bias_probe: unlabeled training document '" +
                                  doc.id + "'");
    }
    label_set.insert(*doc.label);
  }
  std::vector<std::string> classes(label_set.begin(), label_set.end());
  std::sort(classes.begin(), classes.end());

  const BowModel raw_model = train_bow(raw, classes, vocab.size(), seed);
  const BowModel dedup_model = train_bow(dedup, classes, vocab.size(), seed);

  const auto spurious_it = std::find(classes.begin(), classes.end(), inputs.spurious_label);
  if (spurious_it == classes.end()) {
    throw std::invalid_argument("redundancy_bias_probe: spurious label '" +
                                inputs.spurious_label + "' not among training labels");
  }
  const auto spurious = static_cast<Eigen::Index>(spurious_it - classes.begin());

  BiasProbeResult result;
  const auto dup_ids = inputs.truth.group_member_ids();
  double dup_sum = 0.0;
  double nondup_sum = 0.0;
  std::size_t dup_count = 0;
  std::size_t nondup_count = 0;
  for (const auto& doc : raw) {
    const double confidence = bow_predict(raw_model, bow_features(doc.tokens)).maxCoeff();
    if (dup_ids.count(doc.id) > 0) {
      dup_sum += confidence;
      ++dup_count;
    } else {
      nondup_sum += confidence;
      ++nondup_count;
    }
  }
  result.dup_mean_confidence_raw = dup_count > 0 ? dup_sum / dup_count : 0.0;
  result.nondup_mean_confidence_raw = nondup_count > 0 ? nondup_sum / nondup_count : 0.0;

  double trig_raw = 0.0;
  double trig_dedup = 0.0;
  for (const auto& id : inputs.trigger_test_ids) {
    const auto index = test.index_of(id);
    if (index < 0) {
      throw std::invalid_argument("redundancy_bias_probe: trigger test id '" + id +
                                  "' not in test corpus");
    }
    const auto features = bow_features(test.at(static_cast<std::size_t>(index)).tokens);
    trig_raw += bow_predict(raw_model, features)(spurious);
    trig_dedup += bow_predict(dedup_model, features)(spurious);
  }
  if (!inputs.trigger_test_ids.empty()) {
    result.trigger_spurious_raw = trig_raw / inputs.trigger_test_ids.size();
    result.trigger_spurious_dedup = trig_dedup / inputs.trigger_test_ids.size();
  }

  std::size_t correct_raw = 0;
  std::size_t correct_dedup = 0;
  for (const auto& doc : test) {
    const auto features = bow_features(doc.tokens);
    Eigen::Index best_raw = 0;
    bow_predict(raw_model, features).maxCoeff(&best_raw);
    Eigen::Index best_dedup = 0;
    bow_predict(dedup_model, features).maxCoeff(&best_dedup);
    if (doc.label) {
      if (classes[static_cast<std::size_t>(best_raw)] == *doc.label) ++correct_raw;
      if (classes[static_cast<std::size_t>(best_dedup)] == *doc.label) ++correct_dedup;
    }
  }
  if (test.size() > 0) {
    result.test_accuracy_raw = static_cast<double>(correct_raw) / test.size();
    result.test_accuracy_dedup = static_cast<double>(correct_dedup) / test.size();
  }
  return result;
}

MrpcBaselineResult mrpc_judge_baseline(const std::vector<MrpcPair>& pairs,
                                       DedupMethod method,
                                       const BaselineConfig& baseline_cfg) {
  if (method == DedupMethod::kGd || method == DedupMethod::kRandom) {
    throw std::invalid_argument("mrpc_judge_baseline: expected a similarity baseline");
  }
  MrpcBaselineResult result;
  if (pairs.empty()) return result;

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
  const Vocabulary vocab = build_vocab(corpus, 1);
  corpus.tokenize_all(vocab, baseline_cfg.max_seq_len);

  std::vector<SparseVector> vectors;
  if (method == DedupMethod::kPairwise) {
    vectors = compute_tfidf(corpus);
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& a = corpus.at(2 * i);
    const auto& b = corpus.at(2 * i + 1);
    int predicted = 0;
    switch (method) {
      case DedupMethod::kShingles: {
        const double j = jaccard_exact(shingle(a.tokens, baseline_cfg.shingle_k),
                                       shingle(b.tokens, baseline_cfg.shingle_k));
        predicted = j >= baseline_cfg.jaccard_threshold ? 1 : 0;
        break;
      }
      case DedupMethod::kSimhash:
        predicted = hamming(simhash(a.tokens), simhash(b.tokens)) <= baseline_cfg.max_hamming
                        ? 1
                        : 0;
        break;
      case DedupMethod::kPairwise:
        predicted = cosine(vectors[2 * i], vectors[2 * i + 1]) >=
                            baseline_cfg.cosine_threshold
                        ? 1
                        : 0;
        break;
      default:
        break;
    }
    result.predicted.push_back(predicted);
    result.gold.push_back(pairs[i].label);
  }
  return result;
}

}  // namespace gdedup
