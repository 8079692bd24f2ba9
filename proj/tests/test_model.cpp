#include "doctest.h"

#include <cmath>
#include <vector>

#include "gdedup/model.hpp"

using namespace gdedup;

namespace {

ModelConfig small_config(int vocab = 50) {
  ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.d_model = 16;
  cfg.n_heads = 4;
  cfg.n_encoder_layers = 2;
  cfg.n_decoder_layers = 2;
  cfg.d_ff = 32;
  cfg.max_len = 16;
  cfg.seed = 11;
  return cfg;
}

std::vector<TokenId> sample_tokens() { return {5, 9, 13, 22, 7, 30}; }

}  // namespace

TEST_CASE("encode rejects degenerate inputs") {
  const auto params = ModelParams::init(small_config());
  CHECK_THROWS_WITH_AS(encode(params, std::vector<TokenId>{}),
                       doctest::Contains("empty input sequence"), std::invalid_argument);
  CHECK_THROWS_AS(encode(params, std::vector<TokenId>{1, 2, 100}), std::invalid_argument);
  const std::vector<TokenId> too_long(20, 5);
  CHECK_THROWS_AS(encode(params, too_long), std::invalid_argument);
}

TEST_CASE("encode is deterministic and attention rows are normalized") {
  const auto params = ModelParams::init(small_config());
  const auto tokens = sample_tokens();
  AttentionTrace trace;
  const auto a = encode(params, tokens, &trace);
  const auto b = encode(params, tokens);
  CHECK(a.hidden.rows() == static_cast<Eigen::Index>(tokens.size()));
  CHECK((a.hidden - b.hidden).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.noised == a.hidden);

  REQUIRE(trace.encoder_self.size() == 2);
  for (const auto& layer : trace.encoder_self) {
    REQUIRE(layer.size() == 4);
    for (const auto& head : layer) {
      for (Eigen::Index r = 0; r < head.rows(); ++r) {
        CHECK(head.row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(head.row(r).minCoeff() >= 0.0);
      }
    }
  }
}

TEST_CASE("apply_tgn honors the mask and degenerate settings") {
  const auto params = ModelParams::init(small_config());
  const auto tokens = sample_tokens();

  SUBCASE("p = 0 is bitwise identity") {
    auto states = encode(params, tokens);
    TgnConfig cfg;
    cfg.mask_prob = 0.0;
    Rng rng(7);
    apply_tgn(states, cfg, rng);
    CHECK(states.noised == states.hidden);
    for (const auto m : states.tgn_mask) CHECK(m == 0);
  }

  SUBCASE("disabled is a no-op") {
    auto states = encode(params, tokens);
    TgnConfig cfg;
    cfg.enabled = false;
    cfg.mask_prob = 1.0;
    Rng rng(7);
    apply_tgn(states, cfg, rng);
    CHECK(states.noised == states.hidden);
  }

  SUBCASE("p = 1 with zero-variance zero-mean noise zeroes every row") {
    auto states = encode(params, tokens);
    TgnConfig cfg;
    cfg.mask_prob = 1.0;
    cfg.noise_std = 0.0;
    cfg.noise_mean = 0.0;
    Rng rng(7);
    apply_tgn(states, cfg, rng);
    CHECK(states.noised.cwiseAbs().maxCoeff() == 0.0);
    for (const auto m : states.tgn_mask) CHECK(m == 1);
  }

  SUBCASE("unmasked rows are untouched and masked rows are replaced") {
    auto states = encode(params, tokens);
    TgnConfig cfg;
    cfg.mask_prob = 0.5;
    Rng rng(123);
    apply_tgn(states, cfg, rng);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      const auto r = static_cast<Eigen::Index>(t);
      if (states.tgn_mask[t]) {
        CHECK(states.noised.row(r) != states.hidden.row(r));
      } else {
        CHECK(states.noised.row(r) == states.hidden.row(r));
      }
    }
  }
}

TEST_CASE("tgn mask and noise statistics track the configured distribution") {
  const auto params = ModelParams::init(small_config());
  std::vector<TokenId> tokens(16, 5);
  auto base = encode(params, tokens);

  TgnConfig cfg;
  cfg.mask_prob = 0.3;
  cfg.noise_mean = 0.0;
  cfg.noise_std = 1.0;
  Rng rng(99);

  std::size_t masked = 0;
  std::size_t total = 0;
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t noise_count = 0;
  for (int draw = 0; draw < 10000; ++draw) {
    auto states = base;
    apply_tgn(states, cfg, rng);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      ++total;
      if (states.tgn_mask[t]) {
        ++masked;
        const auto row = states.noised.row(static_cast<Eigen::Index>(t));
        sum += row.sum();
        sum_sq += row.cwiseAbs2().sum();
        noise_count += static_cast<std::size_t>(row.cols());
      }
    }
  }
  const double fraction = static_cast<double>(masked) / static_cast<double>(total);
  CHECK(fraction == doctest::Approx(cfg.mask_prob).epsilon(0.0).scale(0.0));
  CHECK(std::abs(fraction - cfg.mask_prob) <= 0.02);
  const double mean = sum / static_cast<double>(noise_count);
  const double stddev = std::sqrt(sum_sq / static_cast<double>(noise_count) - mean * mean);
  CHECK(std::abs(mean - cfg.noise_mean) <= 0.05);
  CHECK(std::abs(stddev - cfg.noise_std) <= 0.05);
}

TEST_CASE("decoder logits are causal and softmax-normalized") {
  const auto params = ModelParams::init(small_config());
  const auto states = encode(params, sample_tokens());

  const std::vector<TokenId> prefix = {Vocabulary::kStartId, 5, 9, 13};
  const auto logits = decode_logits(params, states.hidden, prefix);
  CHECK(logits.rows() == 4);
  CHECK(logits.cols() == 50);

  SUBCASE("prefix must begin with the start token") {
    CHECK_THROWS_AS(decode_logits(params, states.hidden, std::vector<TokenId>{5, 9}),
                    std::invalid_argument);
  }

  SUBCASE("altering later prefix tokens leaves earlier logits unchanged") {
    std::vector<TokenId> altered = prefix;
    altered[3] = 40;
    const auto logits2 = decode_logits(params, states.hidden, altered);
    for (Eigen::Index r = 0; r < 3; ++r) {
      CHECK((logits.row(r) - logits2.row(r)).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK((logits.row(3) - logits2.row(3)).cwiseAbs().maxCoeff() > 0.0);
  }

  SUBCASE("softmax of every logit row sums to one") {
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const double mx = logits.row(r).maxCoeff();
      const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
      const double total = (logits.row(r).array() - lse).exp().sum();
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("forced-uniform logits give an exact ln(vocab) loss") {
  auto params = ModelParams::init(small_config());
  params.embedding.setZero();  // tied output projection -> all logits zero
  const std::vector<TrainingExample> batch = {{{5, 6, 7}, {6}}, {{8, 9}, {9}}};
  TgnConfig tgn;
  tgn.enabled = false;
  Rng rng(0);
  ModelParams grads = ModelParams::zeros_like(params);
  const double loss = loss_and_grads(params, batch, tgn, rng, grads);
  CHECK(std::abs(loss - std::log(50.0)) <= 1e-6);
}

TEST_CASE("freshly initialized params score near ln(vocab) on random targets") {
  const auto params = ModelParams::init(small_config());
  const std::vector<TrainingExample> batch = {{{5, 6, 7, 8}, {6}}, {{9, 10, 11}, {10}}};
  TgnConfig tgn;
  tgn.enabled = false;
  Rng rng(0);
  ModelParams grads = ModelParams::zeros_like(params);
  const double loss = loss_and_grads(params, batch, tgn, rng, grads);
  const double uniform = std::log(50.0);
  CHECK(loss >= 0.8 * uniform);
  CHECK(loss <= 1.2 * uniform);
}

TEST_CASE("repeating every sample leaves the batch loss unchanged") {
  const auto params = ModelParams::init(small_config());
  std::vector<TrainingExample> batch = {{{5, 6, 7}, {7}}, {{8, 9, 10, 11}, {9, 10}}};
  std::vector<TrainingExample> doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  TgnConfig tgn;
  tgn.enabled = false;
  Rng rng(0);
  ModelParams grads = ModelParams::zeros_like(params);
  const double a = loss_and_grads(params, batch, tgn, rng, grads);
  const double b = loss_and_grads(params, doubled, tgn, rng, grads);
  CHECK(std::abs(a - b) <= 1e-9);
}

TEST_CASE("loss rejects empty keywords") {
  const auto params = ModelParams::init(small_config());
  const std::vector<TrainingExample> batch = {{{5, 6}, {}}};
  TgnConfig tgn;
  tgn.enabled = false;
  Rng rng(0);
  ModelParams grads = ModelParams::zeros_like(params);
  CHECK_THROWS_AS(loss_and_grads(params, batch, tgn, rng, grads), std::invalid_argument);
}

TEST_CASE("beam search: b=1 equals stepwise argmax and probabilities are consistent") {
  const auto params = ModelParams::init(small_config());
  const auto tokens = sample_tokens();
  const int max_kw = 4;

  const auto result = beam_generate(params, tokens, 1, max_kw);

  // Independent greedy rollout through decode_logits.
  const auto states = encode(params, tokens);
  std::vector<TokenId> prefix = {Vocabulary::kStartId};
  std::vector<TokenId> expected;
  double expected_prob = 1.0;
  bool finished = false;
  while (static_cast<int>(expected.size()) < max_kw) {
    const auto logits = decode_logits(params, states.hidden, prefix);
    const Eigen::RowVectorXd row = logits.row(logits.rows() - 1);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    Eigen::Index best = 0;
    row.maxCoeff(&best);
    expected_prob *= std::exp(row(best) - lse);
    if (best == Vocabulary::kEndId) {
      finished = true;
      break;
    }
    expected.push_back(static_cast<TokenId>(best));
    prefix.push_back(static_cast<TokenId>(best));
  }

  CHECK(result.tokens == expected);
  CHECK(result.finished == finished);
  CHECK(result.probability == doctest::Approx(expected_prob).epsilon(1e-9));
  CHECK(result.probability > 0.0);
  CHECK(result.probability <= 1.0);
}

TEST_CASE("a wider beam never returns a lower probability than greedy") {
  for (std::uint32_t seed : {1u, 2u, 3u, 4u, 5u}) {
    auto cfg = small_config();
    cfg.seed = seed;
    const auto params = ModelParams::init(cfg);
    for (const auto& tokens :
         {std::vector<TokenId>{4, 5, 6}, std::vector<TokenId>{7, 8, 9, 10, 11}}) {
      const auto greedy = beam_generate(params, tokens, 1, 4);
      const auto wide = beam_generate(params, tokens, 4, 4);
      CHECK(wide.probability >= greedy.probability - 1e-12);
    }
  }
}

TEST_CASE("beam search consumes no randomness and is repeatable") {
  const auto params = ModelParams::init(small_config());
  const auto tokens = sample_tokens();
  const auto a = beam_generate(params, tokens, 4, 4);
  const auto b = beam_generate(params, tokens, 4, 4);
  CHECK(a.tokens == b.tokens);
  CHECK(a.probability == b.probability);
}
