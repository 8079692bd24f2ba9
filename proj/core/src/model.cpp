#include "gdedup/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gdedup {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kMaskFill = -1e30;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = std::exp(-0.5 * x * x) * kInvSqrt2Pi;
  return cdf + x * pdf;
}

void softmax_rows_inplace(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

struct LayerNormCache {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};

Matrix layer_norm_forward(const Matrix& x, const LayerNormParams& p, LayerNormCache& c) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  c.xhat.resize(rows, cols);
  c.inv_std.resize(rows);
  Matrix y(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    c.inv_std(r) = inv;
    c.xhat.row(r) = (x.row(r).array() - mean).matrix() * inv;
    y.row(r) = c.xhat.row(r).cwiseProduct(p.gamma.row(0)) + p.beta.row(0);
  }
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& c,
                           const LayerNormParams& p, LayerNormParams& g) {
  const Eigen::Index rows = dy.rows();
  const Eigen::Index cols = dy.cols();
  Matrix dx(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(p.gamma.row(0));
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(c.xhat.row(r)).mean();
    dx.row(r) =
        c.inv_std(r) * (dxhat.array() - m1 - c.xhat.row(r).array() * m2).matrix();
  }
  g.gamma.row(0) += dy.cwiseProduct(c.xhat).colwise().sum();
  g.beta.row(0) += dy.colwise().sum();
  return dx;
}

struct FfnCache {
  Matrix x;
  Matrix pre;
  Matrix act;
};

Matrix ffn_forward(const Matrix& x, const FeedForwardParams& p, FfnCache& c) {
  c.x = x;
  c.pre = x * p.w1;
  c.pre.rowwise() += p.b1.row(0);
  c.act = c.pre.unaryExpr([](double v) { return gelu(v); });
  Matrix y = c.act * p.w2;
  y.rowwise() += p.b2.row(0);
  return y;
}

Matrix ffn_backward(const Matrix& dy, const FfnCache& c, const FeedForwardParams& p,
                    FeedForwardParams& g) {
  g.w2 += c.act.transpose() * dy;
  g.b2.row(0) += dy.colwise().sum();
  Matrix dact = dy * p.w2.transpose();
  const Matrix dpre =
      dact.cwiseProduct(c.pre.unaryExpr([](double v) { return gelu_grad(v); }));
  g.w1 += c.x.transpose() * dpre;
  g.b1.row(0) += dpre.colwise().sum();
  return dpre * p.w1.transpose();
}

struct AttentionCache {
  Matrix q_in, kv_in;
  Matrix q, k, v;
  std::vector<Matrix> attn;  // per head, Tq x Tk
  Matrix context;
};

Matrix attention_forward(const Matrix& q_in, const Matrix& kv_in,
                         const AttentionParams& p, int n_heads, bool causal,
                         AttentionCache& c, std::vector<Matrix>* trace) {
  const Eigen::Index tq = q_in.rows();
  const Eigen::Index tk = kv_in.rows();
  const Eigen::Index d = q_in.cols();
  const Eigen::Index dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  c.q_in = q_in;
  c.kv_in = kv_in;
  c.q = q_in * p.wq;
  c.q.rowwise() += p.bq.row(0);
  c.k = kv_in * p.wk;
  c.k.rowwise() += p.bk.row(0);
  c.v = kv_in * p.wv;
  c.v.rowwise() += p.bv.row(0);
  c.attn.assign(static_cast<std::size_t>(n_heads), Matrix());
  c.context.resize(tq, d);

  for (int h = 0; h < n_heads; ++h) {
    const auto qh = c.q.middleCols(h * dh, dh);
    const auto kh = c.k.middleCols(h * dh, dh);
    const auto vh = c.v.middleCols(h * dh, dh);
    Matrix scores = qh * kh.transpose() * scale;
    if (causal) {
      for (Eigen::Index i = 0; i < tq; ++i) {
        for (Eigen::Index j = i + 1; j < tk; ++j) {
          scores(i, j) = kMaskFill;
        }
      }
    }
    softmax_rows_inplace(scores);
    c.attn[static_cast<std::size_t>(h)] = scores;
    c.context.middleCols(h * dh, dh) = scores * vh;
  }
  if (trace) {
    *trace = c.attn;
  }
  Matrix out = c.context * p.wo;
  out.rowwise() += p.bo.row(0);
  return out;
}

void attention_backward(const Matrix& dout, const AttentionCache& c,
                        const AttentionParams& p, int n_heads, AttentionParams& g,
                        Matrix& dq_in, Matrix& dkv_in) {
  const Eigen::Index tq = c.q_in.rows();
  const Eigen::Index tk = c.kv_in.rows();
  const Eigen::Index d = c.q_in.cols();
  const Eigen::Index dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  g.wo += c.context.transpose() * dout;
  g.bo.row(0) += dout.colwise().sum();
  const Matrix dcontext = dout * p.wo.transpose();

  Matrix dq(tq, d);
  Matrix dk(tk, d);
  Matrix dv(tk, d);
  for (int h = 0; h < n_heads; ++h) {
    const auto qh = c.q.middleCols(h * dh, dh);
    const auto kh = c.k.middleCols(h * dh, dh);
    const auto vh = c.v.middleCols(h * dh, dh);
    const Matrix& attn = c.attn[static_cast<std::size_t>(h)];
    const auto dch = dcontext.middleCols(h * dh, dh);

    dv.middleCols(h * dh, dh) = attn.transpose() * dch;
    const Matrix dattn = dch * vh.transpose();
    // Softmax backward per row; masked positions have attn == 0, so their
    // score gradient vanishes automatically.
    Matrix dscores(tq, tk);
    for (Eigen::Index r = 0; r < tq; ++r) {
      const double dot = dattn.row(r).cwiseProduct(attn.row(r)).sum();
      dscores.row(r) = attn.row(r).cwiseProduct(
          (dattn.row(r).array() - dot).matrix());
    }
    dq.middleCols(h * dh, dh) = dscores * kh * scale;
    dk.middleCols(h * dh, dh) = dscores.transpose() * qh * scale;
  }

  g.wq += c.q_in.transpose() * dq;
  g.bq.row(0) += dq.colwise().sum();
  g.wk += c.kv_in.transpose() * dk;
  g.bk.row(0) += dk.colwise().sum();
  g.wv += c.kv_in.transpose() * dv;
  g.bv.row(0) += dv.colwise().sum();

  dq_in = dq * p.wq.transpose();
  dkv_in = dk * p.wk.transpose() + dv * p.wv.transpose();
}

struct EncoderLayerCache {
  AttentionCache attn;
  LayerNormCache ln_attn;
  FfnCache ffn;
  LayerNormCache ln_ffn;
  Matrix attn_res;
  Matrix after_ln_attn;
};

struct EncoderCache {
  std::vector<TokenId> tokens;
  Matrix x0;
  std::vector<EncoderLayerCache> layers;
  Matrix out;
};

struct DecoderLayerCache {
  AttentionCache self_attn;
  LayerNormCache ln_self;
  AttentionCache cross_attn;
  LayerNormCache ln_cross;
  FfnCache ffn;
  LayerNormCache ln_ffn;
  Matrix self_res;
  Matrix after_ln_self;
  Matrix cross_res;
  Matrix after_ln_cross;
};

struct DecoderCache {
  std::vector<TokenId> prefix;
  Matrix y0;
  std::vector<DecoderLayerCache> layers;
  Matrix out;  // final hidden states, S x d
};

void check_tokens(const ModelParams& params, std::span<const TokenId> tokens,
                  const char* where) {
  if (tokens.empty()) {
    throw std::invalid_argument(std::string(where) + ": empty input sequence");
  }
  if (static_cast<int>(tokens.size()) > params.config.max_len) {
    throw std::invalid_argument(std::string(where) + ": sequence length " +
                                std::to_string(tokens.size()) + " exceeds max_len " +
                                std::to_string(params.config.max_len));
  }
  for (const TokenId id : tokens) {
    if (id < 0 || id >= params.config.vocab_size) {
      throw std::invalid_argument(std::string(where) + ": token id " +
                                  std::to_string(id) + " out of range for vocab size " +
                                  std::to_string(params.config.vocab_size));
    }
  }
}

Matrix embed(const ModelParams& params, std::span<const TokenId> tokens,
             const Matrix& positions) {
  const Eigen::Index t = static_cast<Eigen::Index>(tokens.size());
  Matrix x(t, params.config.d_model);
  for (Eigen::Index i = 0; i < t; ++i) {
    x.row(i) = params.embedding.row(tokens[static_cast<std::size_t>(i)]) + positions.row(i);
  }
  return x;
}

Matrix encoder_forward(const ModelParams& params, std::span<const TokenId> tokens,
                       EncoderCache* cache, AttentionTrace* trace) {
  check_tokens(params, tokens, "encode");
  Matrix x = embed(params, tokens, params.pos_encoder);
  if (cache) {
    cache->tokens.assign(tokens.begin(), tokens.end());
    cache->x0 = x;
    cache->layers.resize(params.encoder.size());
  }
  if (trace) {
    trace->encoder_self.resize(params.encoder.size());
  }
  EncoderLayerCache local;
  for (std::size_t l = 0; l < params.encoder.size(); ++l) {
    const auto& layer = params.encoder[l];
    EncoderLayerCache& c = cache ? cache->layers[l] : local;
    const Matrix attn_out =
        attention_forward(x, x, layer.attn, params.config.n_heads, /*causal=*/false,
                          c.attn, trace ? &trace->encoder_self[l] : nullptr);
    c.attn_res = x + attn_out;
    c.after_ln_attn = layer_norm_forward(c.attn_res, layer.ln_attn, c.ln_attn);
    const Matrix ffn_out = ffn_forward(c.after_ln_attn, layer.ffn, c.ffn);
    x = layer_norm_forward(c.after_ln_attn + ffn_out, layer.ln_ffn, c.ln_ffn);
  }
  if (cache) {
    cache->out = x;
  }
  return x;
}

// Returns the gradient with respect to the encoder output and accumulates
// parameter gradients, including the embedding and positional rows.
void encoder_backward(const ModelParams& params, const EncoderCache& cache,
                      const Matrix& dout, ModelParams& grads) {
  Matrix dx = dout;
  for (std::size_t li = params.encoder.size(); li-- > 0;) {
    const auto& layer = params.encoder[li];
    auto& glayer = grads.encoder[li];
    const EncoderLayerCache& c = cache.layers[li];

    const Matrix d_ffn_res = layer_norm_backward(dx, c.ln_ffn, layer.ln_ffn, glayer.ln_ffn);
    const Matrix d_ffn_in = ffn_backward(d_ffn_res, c.ffn, layer.ffn, glayer.ffn);
    const Matrix d_after_ln_attn = d_ffn_res + d_ffn_in;
    const Matrix d_attn_res =
        layer_norm_backward(d_after_ln_attn, c.ln_attn, layer.ln_attn, glayer.ln_attn);
    Matrix dq_in;
    Matrix dkv_in;
    attention_backward(d_attn_res, c.attn, layer.attn, params.config.n_heads,
                       glayer.attn, dq_in, dkv_in);
    dx = d_attn_res + dq_in + dkv_in;
  }
  for (std::size_t i = 0; i < cache.tokens.size(); ++i) {
    grads.embedding.row(cache.tokens[i]) += dx.row(static_cast<Eigen::Index>(i));
  }
  grads.pos_encoder.topRows(dx.rows()) += dx;
}

Matrix decoder_forward(const ModelParams& params, const Matrix& encoder_out,
                       std::span<const TokenId> prefix, DecoderCache* cache,
                       AttentionTrace* trace) {
  if (prefix.empty() || prefix.front() != Vocabulary::kStartId) {
    throw std::invalid_argument("decode: target prefix must begin with the start token");
  }
  check_tokens(params, prefix, "decode");
  Matrix y = embed(params, prefix, params.pos_decoder);
  if (cache) {
    cache->prefix.assign(prefix.begin(), prefix.end());
    cache->y0 = y;
    cache->layers.resize(params.decoder.size());
  }
  if (trace) {
    trace->decoder_self.resize(params.decoder.size());
    trace->decoder_cross.resize(params.decoder.size());
  }
  DecoderLayerCache local;
  for (std::size_t l = 0; l < params.decoder.size(); ++l) {
    const auto& layer = params.decoder[l];
    DecoderLayerCache& c = cache ? cache->layers[l] : local;
    const Matrix self_out =
        attention_forward(y, y, layer.self_attn, params.config.n_heads, /*causal=*/true,
                          c.self_attn, trace ? &trace->decoder_self[l] : nullptr);
    c.self_res = y + self_out;
    c.after_ln_self = layer_norm_forward(c.self_res, layer.ln_self, c.ln_self);
    const Matrix cross_out = attention_forward(
        c.after_ln_self, encoder_out, layer.cross_attn, params.config.n_heads,
        /*causal=*/false, c.cross_attn, trace ? &trace->decoder_cross[l] : nullptr);
    c.cross_res = c.after_ln_self + cross_out;
    c.after_ln_cross = layer_norm_forward(c.cross_res, layer.ln_cross, c.ln_cross);
    const Matrix ffn_out = ffn_forward(c.after_ln_cross, layer.ffn, c.ffn);
    y = layer_norm_forward(c.after_ln_cross + ffn_out, layer.ln_ffn, c.ln_ffn);
  }
  if (cache) {
    cache->out = y;
  }
  return y;
}

// Accumulates parameter gradients and the gradient w.r.t. the encoder output.
void decoder_backward(const ModelParams& params, const DecoderCache& cache,
                      const Matrix& dout, ModelParams& grads, Matrix& d_encoder_out) {
  Matrix dy = dout;
  d_encoder_out.setZero();
  for (std::size_t li = params.decoder.size(); li-- > 0;) {
    const auto& layer = params.decoder[li];
    auto& glayer = grads.decoder[li];
    const DecoderLayerCache& c = cache.layers[li];

    const Matrix d_ffn_res = layer_norm_backward(dy, c.ln_ffn, layer.ln_ffn, glayer.ln_ffn);
    const Matrix d_ffn_in = ffn_backward(d_ffn_res, c.ffn, layer.ffn, glayer.ffn);
    const Matrix d_after_ln_cross = d_ffn_res + d_ffn_in;
    const Matrix d_cross_res =
        layer_norm_backward(d_after_ln_cross, c.ln_cross, layer.ln_cross, glayer.ln_cross);
    Matrix dq_cross;
    Matrix dkv_cross;
    attention_backward(d_cross_res, c.cross_attn, layer.cross_attn,
                       params.config.n_heads, glayer.cross_attn, dq_cross, dkv_cross);
    d_encoder_out += dkv_cross;
    const Matrix d_after_ln_self = d_cross_res + dq_cross;
    const Matrix d_self_res =
        layer_norm_backward(d_after_ln_self, c.ln_self, layer.ln_self, glayer.ln_self);
    Matrix dq_self;
    Matrix dkv_self;
    attention_backward(d_self_res, c.self_attn, layer.self_attn, params.config.n_heads,
                       glayer.self_attn, dq_self, dkv_self);
    dy = d_self_res + dq_self + dkv_self;
  }
  for (std::size_t i = 0; i < cache.prefix.size(); ++i) {
    grads.embedding.row(cache.prefix[i]) += dy.row(static_cast<Eigen::Index>(i));
  }
  grads.pos_decoder.topRows(dy.rows()) += dy;
}

double log_sum_exp(const Eigen::RowVectorXd& row) {
  const double mx = row.maxCoeff();
  return mx + std::log((row.array() - mx).exp().sum());
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < Vocabulary::kReservedCount) {
    throw std::invalid_argument("ModelConfig: vocab_size must cover the reserved tokens");
  }
  if (d_model < 1 || n_heads < 1 || n_encoder_layers < 1 || n_decoder_layers < 1 ||
      d_ff < 1 || max_len < 1) {
    throw std::invalid_argument("ModelConfig: all dimensions must be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("ModelConfig: d_model must be divisible by n_heads");
  }
}

void TgnConfig::validate() const {
  if (mask_prob < 0.0 || mask_prob > 1.0) {
    throw std::invalid_argument("TgnConfig: mask probability must be in [0, 1]");
  }
  if (noise_std < 0.0) {
    throw std::invalid_argument("TgnConfig: noise std must be >= 0");
  }
}

namespace {

template <typename Params, typename Ref>
std::vector<Ref> enumerate_tensors(Params& p) {
  std::vector<Ref> out;
  const auto add = [&out](std::string name, auto* tensor) {
    out.push_back(Ref{std::move(name), tensor});
  };
  add("embedding", &p.embedding);
  add("pos_encoder", &p.pos_encoder);
  add("pos_decoder", &p.pos_decoder);
  const auto add_attention = [&](const std::string& prefix, auto& a) {
    add(prefix + ".wq", &a.wq);
    add(prefix + ".wk", &a.wk);
    add(prefix + ".wv", &a.wv);
    add(prefix + ".wo", &a.wo);
    add(prefix + ".bq", &a.bq);
    add(prefix + ".bk", &a.bk);
    add(prefix + ".bv", &a.bv);
    add(prefix + ".bo", &a.bo);
  };
  const auto add_ln = [&](const std::string& prefix, auto& ln) {
    add(prefix + ".gamma", &ln.gamma);
    add(prefix + ".beta", &ln.beta);
  };
  const auto add_ffn = [&](const std::string& prefix, auto& f) {
    add(prefix + ".w1", &f.w1);
    add(prefix + ".b1", &f.b1);
    add(prefix + ".w2", &f.w2);
    add(prefix + ".b2", &f.b2);
  };
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    const std::string base = "encoder." + std::to_string(l);
    add_attention(base + ".attn", p.encoder[l].attn);
    add_ln(base + ".ln_attn", p.encoder[l].ln_attn);
    add_ffn(base + ".ffn", p.encoder[l].ffn);
    add_ln(base + ".ln_ffn", p.encoder[l].ln_ffn);
  }
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const std::string base = "decoder." + std::to_string(l);
    add_attention(base + ".self_attn", p.decoder[l].self_attn);
    add_ln(base + ".ln_self", p.decoder[l].ln_self);
    add_attention(base + ".cross_attn", p.decoder[l].cross_attn);
    add_ln(base + ".ln_cross", p.decoder[l].ln_cross);
    add_ffn(base + ".ffn", p.decoder[l].ffn);
    add_ln(base + ".ln_ffn", p.decoder[l].ln_ffn);
  }
  return out;
}

}  // namespace

std::vector<ModelParams::TensorRef> ModelParams::tensors() {
  return enumerate_tensors<ModelParams, TensorRef>(*this);
}

std::vector<ModelParams::TensorRef> ModelParams::tensors() const {
  // Read-only enumeration for serialization and inspection; the const_cast
  // is confined to producing the same refs as the mutable overload.
  return enumerate_tensors<ModelParams, TensorRef>(*const_cast<ModelParams*>(this));
}

std::size_t ModelParams::parameter_count() const {
  std::size_t count = 0;
  for (const auto& ref : tensors()) {
    count += static_cast<std::size_t>(ref.tensor->size());
  }
  return count;
}

void ModelParams::set_zero() {
  for (auto& ref : tensors()) {
    ref.tensor->setZero();
  }
}

ModelParams ModelParams::init(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  const int d = config.d_model;
  const auto make_attention = [&] {
    AttentionParams a;
    a.wq.resize(d, d);
    a.wk.resize(d, d);
    a.wv.resize(d, d);
    a.wo.resize(d, d);
    a.bq = Matrix::Zero(1, d);
    a.bk = Matrix::Zero(1, d);
    a.bv = Matrix::Zero(1, d);
    a.bo = Matrix::Zero(1, d);
    return a;
  };
  const auto make_ln = [&] {
    LayerNormParams ln;
    ln.gamma = Matrix::Ones(1, d);
    ln.beta = Matrix::Zero(1, d);
    return ln;
  };
  const auto make_ffn = [&] {
    FeedForwardParams f;
    f.w1.resize(d, config.d_ff);
    f.b1 = Matrix::Zero(1, config.d_ff);
    f.w2.resize(config.d_ff, d);
    f.b2 = Matrix::Zero(1, d);
    return f;
  };
  p.embedding.resize(config.vocab_size, d);
  p.pos_encoder.resize(config.max_len, d);
  p.pos_decoder.resize(config.max_len, d);
  p.encoder.resize(static_cast<std::size_t>(config.n_encoder_layers));
  for (auto& layer : p.encoder) {
    layer.attn = make_attention();
    layer.ln_attn = make_ln();
    layer.ffn = make_ffn();
    layer.ln_ffn = make_ln();
  }
  p.decoder.resize(static_cast<std::size_t>(config.n_decoder_layers));
  for (auto& layer : p.decoder) {
    layer.self_attn = make_attention();
    layer.ln_self = make_ln();
    layer.cross_attn = make_attention();
    layer.ln_cross = make_ln();
    layer.ffn = make_ffn();
    layer.ln_ffn = make_ln();
  }

  Rng rng(config.seed);
  const double gain = 1.0 / std::sqrt(static_cast<double>(d));
  const auto fill_uniform = [&](Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index col = 0; col < m.cols(); ++col) {
        m(r, col) = rng.uniform(-gain, gain);
      }
    }
  };
  fill_uniform(p.embedding);
  fill_uniform(p.pos_encoder);
  fill_uniform(p.pos_decoder);
  for (auto& layer : p.encoder) {
    fill_uniform(layer.attn.wq);
    fill_uniform(layer.attn.wk);
    fill_uniform(layer.attn.wv);
    fill_uniform(layer.attn.wo);
    fill_uniform(layer.ffn.w1);
    fill_uniform(layer.ffn.w2);
  }
  for (auto& layer : p.decoder) {
    fill_uniform(layer.self_attn.wq);
    fill_uniform(layer.self_attn.wk);
    fill_uniform(layer.self_attn.wv);
    fill_uniform(layer.self_attn.wo);
    fill_uniform(layer.cross_attn.wq);
    fill_uniform(layer.cross_attn.wk);
    fill_uniform(layer.cross_attn.wv);
    fill_uniform(layer.cross_attn.wo);
    fill_uniform(layer.ffn.w1);
    fill_uniform(layer.ffn.w2);
  }
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams p = other;
  p.set_zero();
  return p;
}

EncoderStates encode(const ModelParams& params, std::span<const TokenId> tokens,
                     AttentionTrace* trace) {
  EncoderStates states;
  states.hidden = encoder_forward(params, tokens, nullptr, trace);
  states.noised = states.hidden;
  states.tgn_mask.assign(tokens.size(), 0);
  return states;
}

void apply_tgn(EncoderStates& states, const TgnConfig& cfg, Rng& rng) {
  cfg.validate();
  if (!cfg.enabled) return;
  const Eigen::Index rows = states.hidden.rows();
  states.noised = states.hidden;
  states.tgn_mask.assign(static_cast<std::size_t>(rows), 0);
  for (Eigen::Index t = 0; t < rows; ++t) {
    states.tgn_mask[static_cast<std::size_t>(t)] = rng.bernoulli(cfg.mask_prob) ? 1 : 0;
  }
  for (Eigen::Index t = 0; t < rows; ++t) {
    if (!states.tgn_mask[static_cast<std::size_t>(t)]) continue;
    for (Eigen::Index j = 0; j < states.noised.cols(); ++j) {
      states.noised(t, j) = rng.normal(cfg.noise_mean, cfg.noise_std);
    }
  }
}

Matrix decode_logits(const ModelParams& params, const Matrix& encoder_out,
                     std::span<const TokenId> target_prefix, AttentionTrace* trace) {
  const Matrix hidden = decoder_forward(params, encoder_out, target_prefix, nullptr, trace);
  return hidden * params.embedding.transpose();
}

double loss_and_grads(const ModelParams& params, std::span<const TrainingExample> batch,
                      const TgnConfig& tgn, Rng& tgn_rng, ModelParams& grads) {
  if (batch.empty()) {
    throw std::invalid_argument("loss_and_grads: empty batch");
  }
  grads.set_zero();

  std::size_t total_positions = 0;
  for (const auto& example : batch) {
    if (example.keyword.empty()) {
      throw std::invalid_argument("loss_and_grads: empty keyword target");
    }
    total_positions += example.keyword.size() + 1;  // keyword tokens plus end
  }

  double loss_sum = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& example = batch[b];

    EncoderCache enc_cache;
    EncoderStates states;
    states.hidden = encoder_forward(params, example.tokens, &enc_cache, nullptr);
    states.noised = states.hidden;
    states.tgn_mask.assign(example.tokens.size(), 0);
    if (tgn.enabled) {
      apply_tgn(states, tgn, tgn_rng);
    }

    std::vector<TokenId> prefix;
    prefix.reserve(example.keyword.size() + 1);
    prefix.push_back(Vocabulary::kStartId);
    prefix.insert(prefix.end(), example.keyword.begin(), example.keyword.end());
    std::vector<TokenId> targets = example.keyword;
    targets.push_back(Vocabulary::kEndId);

    DecoderCache dec_cache;
    const Matrix hidden = decoder_forward(params, states.noised, prefix, &dec_cache, nullptr);
    const Matrix logits = hidden * params.embedding.transpose();

    double example_nll = 0.0;
    Matrix dlogits(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const TokenId target = targets[static_cast<std::size_t>(r)];
      const double lse = log_sum_exp(logits.row(r));
      example_nll += lse - logits(r, target);
      dlogits.row(r) = (logits.row(r).array() - lse).exp();
      dlogits(r, target) -= 1.0;
    }
    if (!std::isfinite(example_nll)) {
      throw std::runtime_error("loss_and_grads: non-finite loss at batch index " +
                               std::to_string(b));
    }
    loss_sum += example_nll;

    // Tied output projection: logits = hidden * E^T.
    grads.embedding += dlogits.transpose() * hidden;
    const Matrix dhidden = dlogits * params.embedding;

    Matrix d_encoder_noised(states.noised.rows(), states.noised.cols());
    decoder_backward(params, dec_cache, dhidden, grads, d_encoder_noised);

    // TGN backward: noise rows are constants, masked time steps contribute
    // no encoder gradient.
    if (tgn.enabled) {
      for (Eigen::Index t = 0; t < d_encoder_noised.rows(); ++t) {
        if (states.tgn_mask[static_cast<std::size_t>(t)]) {
          d_encoder_noised.row(t).setZero();
        }
      }
    }
    encoder_backward(params, enc_cache, d_encoder_noised, grads);
  }

  const double inv = 1.0 / static_cast<double>(total_positions);
  for (auto& ref : grads.tensors()) {
    *ref.tensor *= inv;
  }
  return loss_sum * inv;
}

namespace {

struct Hypothesis {
  std::vector<TokenId> emitted;
  double logp = 0.0;
  bool finished = false;
};

Eigen::RowVectorXd last_position_log_softmax(const ModelParams& params,
                                             const Matrix& encoder_out,
                                             const std::vector<TokenId>& prefix) {
  const Matrix logits = decode_logits(params, encoder_out, prefix);
  Eigen::RowVectorXd row = logits.row(logits.rows() - 1);
  const double lse = log_sum_exp(row);
  row.array() -= lse;
  return row;
}

Hypothesis greedy_decode(const ModelParams& params, const Matrix& encoder_out,
                         int max_keyword_len) {
  Hypothesis hyp;
  std::vector<TokenId> prefix = {Vocabulary::kStartId};
  while (static_cast<int>(hyp.emitted.size()) < max_keyword_len + 1) {
    const auto logprobs = last_position_log_softmax(params, encoder_out, prefix);
    Eigen::Index best = 0;
    logprobs.maxCoeff(&best);
    const auto token = static_cast<TokenId>(best);
    hyp.logp += logprobs(best);
    if (token == Vocabulary::kEndId) {
      hyp.finished = true;
      break;
    }
    hyp.emitted.push_back(token);
    prefix.push_back(token);
    if (static_cast<int>(hyp.emitted.size()) == max_keyword_len) {
      break;  // length bound reached; finalized as-is
    }
  }
  return hyp;
}

}  // namespace

BeamResult beam_generate(const ModelParams& params, std::span<const TokenId> tokens,
                         int beam_size, int max_keyword_len) {
  if (beam_size < 1) {
    throw std::invalid_argument("beam_generate: beam size must be >= 1");
  }
  if (max_keyword_len < 1) {
    throw std::invalid_argument("beam_generate: max_keyword_len must be >= 1");
  }
  const EncoderStates states = encode(params, tokens);

  std::vector<Hypothesis> pool;
  pool.push_back(greedy_decode(params, states.hidden, max_keyword_len));

  if (beam_size > 1) {
    std::vector<Hypothesis> live = {Hypothesis{}};
    for (int step = 0; step < max_keyword_len + 1 && !live.empty(); ++step) {
      struct Candidate {
        double logp;
        std::size_t hyp;
        TokenId token;
      };
      std::vector<Candidate> candidates;
      candidates.reserve(live.size() * static_cast<std::size_t>(params.config.vocab_size));
      for (std::size_t h = 0; h < live.size(); ++h) {
        std::vector<TokenId> prefix = {Vocabulary::kStartId};
        prefix.insert(prefix.end(), live[h].emitted.begin(), live[h].emitted.end());
        const auto logprobs = last_position_log_softmax(params, states.hidden, prefix);
        for (TokenId v = 0; v < params.config.vocab_size; ++v) {
          candidates.push_back({live[h].logp + logprobs(v), h, v});
        }
      }
      const auto take = std::min<std::size_t>(static_cast<std::size_t>(beam_size),
                                              candidates.size());
      std::partial_sort(candidates.begin(),
                        candidates.begin() + static_cast<std::ptrdiff_t>(take),
                        candidates.end(), [](const Candidate& a, const Candidate& b) {
                          if (a.logp != b.logp) return a.logp > b.logp;
                          if (a.hyp != b.hyp) return a.hyp < b.hyp;
                          return a.token < b.token;
                        });
      std::vector<Hypothesis> next;
      for (std::size_t i = 0; i < take; ++i) {
        const auto& cand = candidates[i];
        Hypothesis hyp = live[cand.hyp];
        hyp.logp = cand.logp;
        if (cand.token == Vocabulary::kEndId) {
          hyp.finished = true;
          pool.push_back(std::move(hyp));
        } else {
          hyp.emitted.push_back(cand.token);
          if (static_cast<int>(hyp.emitted.size()) == max_keyword_len) {
            pool.push_back(std::move(hyp));  // length bound; finalized as-is
          } else {
            next.push_back(std::move(hyp));
          }
        }
      }
      live = std::move(next);
    }
  }

  const auto best = std::max_element(
      pool.begin(), pool.end(), [](const Hypothesis& a, const Hypothesis& b) {
        if (a.logp != b.logp) return a.logp < b.logp;
        if (a.finished != b.finished) return !a.finished && b.finished;
        return a.emitted > b.emitted;
      });
  BeamResult result;
  result.tokens = best->emitted;
  result.probability = std::exp(best->logp);
  result.finished = best->finished;
  return result;
}

}  // namespace gdedup
