#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gdedup/corpus.hpp"
#include "gdedup/rng.hpp"

namespace gdedup {

using Matrix = Eigen::MatrixXd;

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_heads = 4;
  int n_encoder_layers = 2;
  int n_decoder_layers = 2;
  int d_ff = 256;
  int max_len = 32;
  std::uint32_t seed = 0;

  void validate() const;
};

struct TgnConfig {
  double mask_prob = 0.3;   // p
  double noise_mean = 0.0;  // mu
  double noise_std = 1.0;   // sigma
  bool enabled = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainConfig {
  int epochs = 1;
  double learning_rate = 1e-3;
  int batch_size = 32;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip_norm = 1.0;
  std::uint64_t shuffle_seed = 0;
};

struct AttentionParams {
  Matrix wq, wk, wv, wo;  // d_model x d_model
  Matrix bq, bk, bv, bo;  // 1 x d_model
};

struct LayerNormParams {
  Matrix gamma, beta;  // 1 x d_model
};

struct FeedForwardParams {
  Matrix w1;  // d_model x d_ff
  Matrix b1;  // 1 x d_ff
  Matrix w2;  // d_ff x d_model
  Matrix b2;  // 1 x d_model
};

struct EncoderLayerParams {
  AttentionParams attn;
  LayerNormParams ln_attn;
  FeedForwardParams ffn;
  LayerNormParams ln_ffn;
};

struct DecoderLayerParams {
  AttentionParams self_attn;
  LayerNormParams ln_self;
  AttentionParams cross_attn;
  LayerNormParams ln_cross;
  FeedForwardParams ffn;
  LayerNormParams ln_ffn;
};

/// Learnable parameters. The token embedding is shared between the encoder
/// input, the decoder input, and the output projection (tied weights).
struct ModelParams {
  ModelConfig config;
  Matrix embedding;    // vocab_size x d_model
  Matrix pos_encoder;  // max_len x d_model
  Matrix pos_decoder;  // max_len x d_model
  std::vector<EncoderLayerParams> encoder;
  std::vector<DecoderLayerParams> decoder;

  struct TensorRef {
    std::string name;
    Matrix* tensor;
  };

  // Every tensor in the fixed serialization order, with stable names.
  std::vector<TensorRef> tensors();
  std::vector<TensorRef> tensors() const;  // const access for inspection

  std::size_t parameter_count() const;
  void set_zero();

  // Seeded scaled-uniform init with gain 1/sqrt(d_model); biases zero,
  // layer-norm gains one.
  static ModelParams init(const ModelConfig& config);
  static ModelParams zeros_like(const ModelParams& other);
};

struct EncoderStates {
  Matrix hidden;  // T x d_model, the pre-noise representation H
  Matrix noised;  // post-TGN representation; equals hidden where the mask is 0
  std::vector<std::uint8_t> tgn_mask;  // per time step, 1 = row replaced by noise
};

// Attention probe for tests: per layer, per head, a rows-by-keys matrix.
struct AttentionTrace {
  std::vector<std::vector<Matrix>> encoder_self;
  std::vector<std::vector<Matrix>> decoder_self;
  std::vector<std::vector<Matrix>> decoder_cross;
};

/// Runs the encoder stack. Rejects empty sequences and out-of-range token
/// ids. TGN is not applied here; `noised` starts equal to `hidden`.
EncoderStates encode(const ModelParams& params, std::span<const TokenId> tokens,
                     AttentionTrace* trace = nullptr);

/// Draws the Bernoulli(p) time-step mask and replaces masked rows of
/// `noised` with Gaussian noise. Training-time only by contract.
void apply_tgn(EncoderStates& states, const TgnConfig& cfg, Rng& rng);

/// Decoder logits over the vocabulary for every position of target_prefix
/// (causal self-attention + cross-attention over the encoder states).
/// The prefix must begin with the start token.
Matrix decode_logits(const ModelParams& params, const Matrix& encoder_out,
                     std::span<const TokenId> target_prefix,
                     AttentionTrace* trace = nullptr);

struct TrainingExample {
  std::vector<TokenId> tokens;   // encoder input, nonempty
  std::vector<TokenId> keyword;  // k_1..k_l, nonempty
};

/// Mean negative log-likelihood per target token over the batch (targets are
/// the keyword tokens plus the end token). Gradients are exact for the
/// computation as executed: TGN noise values are constants, and masked time
/// steps contribute no encoder gradient. `grads` is overwritten.
double loss_and_grads(const ModelParams& params, std::span<const TrainingExample> batch,
                      const TgnConfig& tgn, Rng& tgn_rng, ModelParams& grads);

struct BeamResult {
  std::vector<TokenId> tokens;  // generated keyword, end token stripped
  double probability = 0.0;     // product of per-step token probabilities
  bool finished = false;        // reached the end token within the length bound
};

/// Length-bounded beam search from the start token. b = 1 is exactly greedy
/// argmax decoding; for b > 1 the greedy hypothesis is kept in the finished
/// pool so a wider beam never returns a lower-probability hypothesis.
/// Deterministic: consumes no randomness.
BeamResult beam_generate(const ModelParams& params, std::span<const TokenId> tokens,
                         int beam_size, int max_keyword_len);

}  // namespace gdedup
