#pragma once

// Sentence encoder, attention pointer and prediction head.
//
// Everything here is templated on the scalar type: training runs in float,
// gradient checking in double. Activations are row-major with one token (or
// one sentence) per row. Backward passes accumulate into a parameter-shaped
// gradient object.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qfsum/lexical.hpp"
#include "qfsum/util.hpp"

namespace qfsum {

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;
template <class S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 128;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 512;
  std::size_t d_hidden = 64;
  std::size_t max_tokens_per_sentence = 64;
  std::size_t max_sentences_per_instance = 256;
  std::size_t max_query_tokens = 128;
  std::size_t num_categories = 0;
  double layer_norm_eps = 1e-5;

  std::size_t positions() const {
    return std::max(max_tokens_per_sentence + 1, max_query_tokens);
  }
  void validate() const;
  json to_json() const;
  static EncoderConfig from_json(const json& doc);

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

template <class S>
struct EncoderLayer {
  Matrix<S> ln1_gamma, ln1_beta;
  Matrix<S> wq, wk, wv, wo;
  Matrix<S> bq, bk, bv, bo;
  Matrix<S> ln2_gamma, ln2_beta;
  Matrix<S> ff1, ff1_bias, ff2, ff2_bias;
};

/// All trainable tensors. Biases are 1 x n matrices so that every tensor has
/// the same type and serialises the same way.
template <class S>
struct ModelParameters {
  EncoderConfig config;
  Matrix<S> token_embedding;     // vocab x d_model
  Matrix<S> position_embedding;  // positions x d_model
  std::vector<EncoderLayer<S>> layers;
  Matrix<S> final_gamma, final_beta;
  Matrix<S> proj_w, proj_b;                    // d_model x d_hidden, 1 x d_hidden
  Matrix<S> head_w1, head_b1, head_w2, head_b2;  // 2h x h, 1 x h, h x 1, 1 x 1
  Matrix<S> indicator;                          // categories x d_hidden

  /// Shapes from `config`, every entry zero.
  static ModelParameters zeros(const EncoderConfig& config);
  /// Seeded initialisation: N(0, 0.02) encoder weights, unit layer-norm gains,
  /// zero biases, Glorot-uniform projection and head, N(0, 1) indicator rows.
  static ModelParameters initialized(const EncoderConfig& config, std::uint64_t seed);

  template <class F>
  void for_each(F&& f) {
    f("token_embedding", token_embedding);
    f("position_embedding", position_embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& L = layers[l];
      const std::string p = "layer" + std::to_string(l) + ".";
      f(p + "ln1_gamma", L.ln1_gamma);
      f(p + "ln1_beta", L.ln1_beta);
      f(p + "wq", L.wq);
      f(p + "bq", L.bq);
      f(p + "wk", L.wk);
      f(p + "bk", L.bk);
      f(p + "wv", L.wv);
      f(p + "bv", L.bv);
      f(p + "wo", L.wo);
      f(p + "bo", L.bo);
      f(p + "ln2_gamma", L.ln2_gamma);
      f(p + "ln2_beta", L.ln2_beta);
      f(p + "ff1", L.ff1);
      f(p + "ff1_bias", L.ff1_bias);
      f(p + "ff2", L.ff2);
      f(p + "ff2_bias", L.ff2_bias);
    }
    f("final_gamma", final_gamma);
    f("final_beta", final_beta);
    f("proj_w", proj_w);
    f("proj_b", proj_b);
    f("head_w1", head_w1);
    f("head_b1", head_b1);
    f("head_w2", head_w2);
    f("head_b2", head_b2);
    f("indicator", indicator);
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<ModelParameters*>(this)->for_each(
        [&](const std::string& name, Matrix<S>& m) { f(name, static_cast<const Matrix<S>&>(m)); });
  }

  void set_zero() {
    for_each([](const std::string&, Matrix<S>& m) { m.setZero(); });
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Matrix<S>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }
  bool all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, const Matrix<S>& m) { ok = ok && m.allFinite(); });
    return ok;
  }

  template <class T>
  ModelParameters<T> cast() const {
    auto out = ModelParameters<T>::zeros(config);
    std::vector<const Matrix<S>*> src;
    for_each([&](const std::string&, const Matrix<S>& m) { src.push_back(&m); });
    std::size_t i = 0;
    out.for_each([&](const std::string&, Matrix<T>& m) { m = src[i++]->template cast<T>(); });
    return out;
  }
};

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

/// Token sequences packed back to back; sequence i occupies rows
/// [offsets[i], offsets[i+1]).
struct PackedSequences {
  std::vector<int> tokens;
  std::vector<std::size_t> offsets{0};

  std::size_t count() const { return offsets.size() - 1; }
  std::size_t length(std::size_t i) const { return offsets[i + 1] - offsets[i]; }
  std::size_t rows() const { return tokens.size(); }
  void add(const std::vector<int>& sequence) {
    tokens.insert(tokens.end(), sequence.begin(), sequence.end());
    offsets.push_back(tokens.size());
  }
};

template <class S>
struct LayerNormCache {
  Matrix<S> hat;
  Vector<S> inv_std;
};

template <class S>
struct LayerCache {
  Matrix<S> input;
  LayerNormCache<S> ln1;
  Matrix<S> h1, q, k, v;
  std::vector<Matrix<S>> probs;  // [sequence * heads + head], L x L
  Matrix<S> attn;
  Matrix<S> mid;
  LayerNormCache<S> ln2;
  Matrix<S> h2, ff_pre, ff_act;
};

template <class S>
struct EncoderCache {
  std::vector<LayerCache<S>> layers;
  Matrix<S> final_input;
  LayerNormCache<S> final_ln;
  Matrix<S> output;
};

namespace detail {

template <class S>
Matrix<S> layer_norm_forward(const Matrix<S>& x, const Matrix<S>& gamma, const Matrix<S>& beta, S eps,
                             LayerNormCache<S>* cache) {
  const auto d = static_cast<S>(x.cols());
  Vector<S> mean = x.rowwise().sum() / d;
  Matrix<S> centered = x.colwise() - mean;
  Vector<S> var = centered.array().square().rowwise().sum() / d;
  Vector<S> inv = (var.array() + eps).rsqrt();
  Matrix<S> hat = centered.array().colwise() * inv.array();
  Matrix<S> y = (hat.array().rowwise() * gamma.row(0).array()).rowwise() + beta.row(0).array();
  if (cache) {
    cache->hat = std::move(hat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

template <class S>
Matrix<S> layer_norm_backward(const Matrix<S>& dy, const Matrix<S>& gamma, const LayerNormCache<S>& cache,
                              Matrix<S>& dgamma, Matrix<S>& dbeta) {
  const auto d = static_cast<S>(dy.cols());
  dgamma.row(0) += (dy.array() * cache.hat.array()).colwise().sum().matrix();
  dbeta.row(0) += dy.colwise().sum();
  Matrix<S> dhat = dy.array().rowwise() * gamma.row(0).array();
  Vector<S> sum_dhat = dhat.rowwise().sum();
  Vector<S> sum_dhat_hat = (dhat.array() * cache.hat.array()).rowwise().sum();
  Matrix<S> dx = (d * dhat.array() - (cache.hat.array().colwise() * sum_dhat_hat.array())).colwise() -
                 sum_dhat.array();
  dx.array().colwise() *= cache.inv_std.array() / d;
  return dx;
}

template <class S>
constexpr S gelu_c() {
  return static_cast<S>(0.7978845608028654);  // sqrt(2 / pi)
}

template <class S>
S gelu(S x) {
  const S u = gelu_c<S>() * (x + static_cast<S>(0.044715) * x * x * x);
  return static_cast<S>(0.5) * x * (S(1) + std::tanh(u));
}

template <class S>
S gelu_grad(S x) {
  const S u = gelu_c<S>() * (x + static_cast<S>(0.044715) * x * x * x);
  const S t = std::tanh(u);
  return static_cast<S>(0.5) * (S(1) + t) +
         static_cast<S>(0.5) * x * (S(1) - t * t) * gelu_c<S>() * (S(1) + static_cast<S>(3 * 0.044715) * x * x);
}

template <class S>
void softmax_rows(Matrix<S>& m) {
  Vector<S> mx = m.rowwise().maxCoeff();
  m.colwise() -= mx;
  m = m.array().exp();
  Vector<S> sums = m.rowwise().sum();
  m.array().colwise() /= sums.array();
}

}  // namespace detail

/// Runs the embedding layer, the encoder stack and the final layer norm.
/// Returns one contextual vector per packed token (rows() x d_model).
template <class S>
Matrix<S> encoder_forward(const ModelParameters<S>& params, const PackedSequences& packed,
                          EncoderCache<S>* cache = nullptr) {
  const auto& cfg = params.config;
  const auto d = static_cast<Eigen::Index>(cfg.d_model);
  const auto heads = static_cast<Eigen::Index>(cfg.n_heads);
  const auto dk = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dk));
  const S eps = static_cast<S>(cfg.layer_norm_eps);
  const auto n = static_cast<Eigen::Index>(packed.rows());

  Matrix<S> x(n, d);
  for (std::size_t s = 0; s < packed.count(); ++s) {
    if (packed.length(s) > cfg.positions())
      fail(ErrorKind::invalid_argument, "sequence longer than the positional table");
    for (std::size_t p = 0; p < packed.length(s); ++p) {
      const auto row = static_cast<Eigen::Index>(packed.offsets[s] + p);
      const int tok = packed.tokens[static_cast<std::size_t>(row)];
      if (tok < 0 || static_cast<std::size_t>(tok) >= cfg.vocab_size)
        fail(ErrorKind::invalid_argument, "token id out of range");
      x.row(row) = params.token_embedding.row(tok) + params.position_embedding.row(static_cast<Eigen::Index>(p));
    }
  }
  if (cache) cache->layers.resize(params.layers.size());

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& L = params.layers[l];
    LayerCache<S> local;
    LayerCache<S>& c = cache ? cache->layers[l] : local;
    c.input = x;
    c.h1 = detail::layer_norm_forward(x, L.ln1_gamma, L.ln1_beta, eps, &c.ln1);
    c.q = (c.h1 * L.wq).rowwise() + L.bq.row(0);
    c.k = (c.h1 * L.wk).rowwise() + L.bk.row(0);
    c.v = (c.h1 * L.wv).rowwise() + L.bv.row(0);
    c.attn.setZero(n, d);
    c.probs.assign(packed.count() * static_cast<std::size_t>(heads), Matrix<S>());
    for (std::size_t s = 0; s < packed.count(); ++s) {
      const auto o = static_cast<Eigen::Index>(packed.offsets[s]);
      const auto len = static_cast<Eigen::Index>(packed.length(s));
      for (Eigen::Index h = 0; h < heads; ++h) {
        Matrix<S> p = c.q.block(o, h * dk, len, dk) * c.k.block(o, h * dk, len, dk).transpose() * scale;
        detail::softmax_rows(p);
        c.attn.block(o, h * dk, len, dk).noalias() = p * c.v.block(o, h * dk, len, dk);
        c.probs[s * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)] = std::move(p);
      }
    }
    c.mid = x + ((c.attn * L.wo).rowwise() + L.bo.row(0));
    c.h2 = detail::layer_norm_forward(c.mid, L.ln2_gamma, L.ln2_beta, eps, &c.ln2);
    c.ff_pre = (c.h2 * L.ff1).rowwise() + L.ff1_bias.row(0);
    c.ff_act = c.ff_pre.unaryExpr([](S v) { return detail::gelu(v); });
    x = c.mid + ((c.ff_act * L.ff2).rowwise() + L.ff2_bias.row(0));
  }
  if (cache) cache->final_input = x;
  Matrix<S> out = detail::layer_norm_forward(x, params.final_gamma, params.final_beta, eps,
                                             cache ? &cache->final_ln : nullptr);
  if (cache) cache->output = out;
  return out;
}

/// Accumulates parameter gradients given d(loss)/d(encoder output).
template <class S>
void encoder_backward(const ModelParameters<S>& params, const PackedSequences& packed,
                      const EncoderCache<S>& cache, const Matrix<S>& d_output, ModelParameters<S>& grads) {
  const auto& cfg = params.config;
  const auto d = static_cast<Eigen::Index>(cfg.d_model);
  const auto heads = static_cast<Eigen::Index>(cfg.n_heads);
  const auto dk = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dk));
  const auto n = static_cast<Eigen::Index>(packed.rows());

  Matrix<S> dx =
      detail::layer_norm_backward(d_output, params.final_gamma, cache.final_ln, grads.final_gamma, grads.final_beta);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& L = params.layers[li];
    auto& G = grads.layers[li];
    const auto& c = cache.layers[li];

    // Feed-forward block.
    G.ff2.noalias() += c.ff_act.transpose() * dx;
    G.ff2_bias.row(0) += dx.colwise().sum();
    Matrix<S> d_pre = dx * L.ff2.transpose();
    d_pre.array() *= c.ff_pre.unaryExpr([](S v) { return detail::gelu_grad(v); }).array();
    G.ff1.noalias() += c.h2.transpose() * d_pre;
    G.ff1_bias.row(0) += d_pre.colwise().sum();
    Matrix<S> d_h2 = d_pre * L.ff1.transpose();
    Matrix<S> d_mid = dx + detail::layer_norm_backward(d_h2, L.ln2_gamma, c.ln2, G.ln2_gamma, G.ln2_beta);

    // Attention block.
    G.wo.noalias() += c.attn.transpose() * d_mid;
    G.bo.row(0) += d_mid.colwise().sum();
    Matrix<S> d_attn = d_mid * L.wo.transpose();
    Matrix<S> dq = Matrix<S>::Zero(n, d), dkm = Matrix<S>::Zero(n, d), dv = Matrix<S>::Zero(n, d);
    for (std::size_t s = 0; s < packed.count(); ++s) {
      const auto o = static_cast<Eigen::Index>(packed.offsets[s]);
      const auto len = static_cast<Eigen::Index>(packed.length(s));
      for (Eigen::Index h = 0; h < heads; ++h) {
        const auto& p = c.probs[s * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
        const auto d_out = d_attn.block(o, h * dk, len, dk);
        Matrix<S> dp = d_out * c.v.block(o, h * dk, len, dk).transpose();
        dv.block(o, h * dk, len, dk).noalias() += p.transpose() * d_out;
        Vector<S> row_dot = (dp.array() * p.array()).rowwise().sum();
        Matrix<S> ds = (p.array() * (dp.colwise() - row_dot).array()) * scale;
        dq.block(o, h * dk, len, dk).noalias() += ds * c.k.block(o, h * dk, len, dk);
        dkm.block(o, h * dk, len, dk).noalias() += ds.transpose() * c.q.block(o, h * dk, len, dk);
      }
    }
    G.wq.noalias() += c.h1.transpose() * dq;
    G.wk.noalias() += c.h1.transpose() * dkm;
    G.wv.noalias() += c.h1.transpose() * dv;
    G.bq.row(0) += dq.colwise().sum();
    G.bk.row(0) += dkm.colwise().sum();
    G.bv.row(0) += dv.colwise().sum();
    Matrix<S> d_h1 = dq * L.wq.transpose();
    d_h1.noalias() += dkm * L.wk.transpose();
    d_h1.noalias() += dv * L.wv.transpose();
    dx = d_mid + detail::layer_norm_backward(d_h1, L.ln1_gamma, c.ln1, G.ln1_gamma, G.ln1_beta);
  }

  for (std::size_t s = 0; s < packed.count(); ++s) {
    for (std::size_t p = 0; p < packed.length(s); ++p) {
      const auto row = static_cast<Eigen::Index>(packed.offsets[s] + p);
      grads.token_embedding.row(packed.tokens[static_cast<std::size_t>(row)]) += dx.row(row);
      grads.position_embedding.row(static_cast<Eigen::Index>(p)) += dx.row(row);
    }
  }
}

/// Rows at the first position of every packed sequence.
template <class S>
Matrix<S> first_rows(const Matrix<S>& encoded, const PackedSequences& packed) {
  Matrix<S> out(static_cast<Eigen::Index>(packed.count()), encoded.cols());
  for (std::size_t s = 0; s < packed.count(); ++s)
    out.row(static_cast<Eigen::Index>(s)) = encoded.row(static_cast<Eigen::Index>(packed.offsets[s]));
  return out;
}

/// Linear projection to the hidden width: rows * proj_w + proj_b.
template <class S>
Matrix<S> project(const ModelParameters<S>& params, const Matrix<S>& rows) {
  return (rows * params.proj_w).rowwise() + params.proj_b.row(0);
}

/// Sentence embedding from the [CLS] position: proj_w^T h_cls + proj_b.
/// `tokens` must not include [CLS]; it is prepended here.
template <class S>
RowVector<S> encode_cls(const ModelParameters<S>& params, const std::vector<int>& tokens) {
  if (tokens.empty()) fail(ErrorKind::invalid_argument, "encode_cls: empty token list");
  std::vector<int> seq;
  seq.reserve(tokens.size() + 1);
  seq.push_back(SpecialTokens::cls);
  seq.insert(seq.end(), tokens.begin(), tokens.end());
  PackedSequences packed;
  packed.add(seq);
  const Matrix<S> out = encoder_forward(params, packed);
  return project(params, Matrix<S>(out.topRows(1))).row(0);
}

/// Mean of the contextual token vectors (no [CLS] prepended).
template <class S>
RowVector<S> encode_mean(const ModelParameters<S>& params, const std::vector<int>& tokens) {
  if (tokens.empty()) fail(ErrorKind::invalid_argument, "encode_mean: empty token list");
  PackedSequences packed;
  packed.add(tokens);
  const Matrix<S> out = encoder_forward(params, packed);
  return out.colwise().mean();
}

// ---------------------------------------------------------------------------
// Attention pointer and prediction head
// ---------------------------------------------------------------------------

/// a_i = softmax_i(S_i . e), with max subtraction.
template <class S>
Vector<S> attend(const Matrix<S>& sentences, const RowVector<S>& query) {
  if (sentences.rows() < 1) fail(ErrorKind::invalid_argument, "attend: no sentences");
  Vector<S> logits = sentences * query.transpose();
  logits.array() -= logits.maxCoeff();
  logits = logits.array().exp();
  return logits / logits.sum();
}

template <class S>
struct HeadState {
  Vector<S> attention;  // a
  RowVector<S> joint;   // [context; query]
  RowVector<S> pre;     // U1 z + b1
  S logit = 0;
  S probability = 0;
};

template <class S>
HeadState<S> head_forward(const ModelParameters<S>& params, const Matrix<S>& sentences, const RowVector<S>& query) {
  const auto h = sentences.cols();
  HeadState<S> st;
  st.attention = attend(sentences, query);
  st.joint.resize(2 * h);
  st.joint.head(h) = st.attention.transpose() * sentences;
  st.joint.tail(h) = query;
  st.pre = st.joint * params.head_w1 + params.head_b1.row(0);
  const RowVector<S> hidden = st.pre.cwiseMax(S(0));
  st.logit = (hidden * params.head_w2)(0, 0) + params.head_b2(0, 0);
  st.probability = S(1) / (S(1) + std::exp(-st.logit));
  return st;
}

/// sigma(U2 ReLU(U1 [sum_i a_i S_i; e] + b1) + b2), given attention `a`.
template <class S>
S predict(const ModelParameters<S>& params, const Matrix<S>& sentences, const Vector<S>& attention,
          const RowVector<S>& query) {
  const auto h = sentences.cols();
  RowVector<S> joint(2 * h);
  joint.head(h) = attention.transpose() * sentences;
  joint.tail(h) = query;
  const RowVector<S> hidden = (joint * params.head_w1 + params.head_b1.row(0)).cwiseMax(S(0));
  const S logit = (hidden * params.head_w2)(0, 0) + params.head_b2(0, 0);
  return S(1) / (S(1) + std::exp(-logit));
}

/// Backward through head and attention given d(loss)/d(logit). Accumulates
/// head gradients and returns nothing; d(sentences) and d(query) are added
/// into the provided buffers.
template <class S>
void head_backward(const ModelParameters<S>& params, const Matrix<S>& sentences, const RowVector<S>& query,
                   const HeadState<S>& st, S d_logit, ModelParameters<S>& grads, Matrix<S>& d_sentences,
                   RowVector<S>& d_query) {
  const auto h = sentences.cols();
  const RowVector<S> hidden = st.pre.cwiseMax(S(0));
  grads.head_w2.col(0) += hidden.transpose() * d_logit;
  grads.head_b2(0, 0) += d_logit;
  RowVector<S> d_pre = params.head_w2.col(0).transpose() * d_logit;
  d_pre = d_pre.cwiseProduct((st.pre.array() > S(0)).template cast<S>().matrix());
  grads.head_w1.noalias() += st.joint.transpose() * d_pre;
  grads.head_b1.row(0) += d_pre;
  const RowVector<S> d_joint = d_pre * params.head_w1.transpose();
  const RowVector<S> d_context = d_joint.head(h);
  d_query += d_joint.tail(h);

  // context = a^T S
  d_sentences.noalias() += st.attention * d_context;
  const Vector<S> d_a = sentences * d_context.transpose();
  const S mean = st.attention.dot(d_a);
  const Vector<S> d_logits = st.attention.cwiseProduct((d_a.array() - mean).matrix());
  // logits = S e
  d_sentences.noalias() += d_logits * query;
  d_query.noalias() += d_logits.transpose() * sentences;
}

// ---------------------------------------------------------------------------
// Parameter construction
// ---------------------------------------------------------------------------

template <class S>
ModelParameters<S> ModelParameters<S>::zeros(const EncoderConfig& config) {
  config.validate();
  const auto d = static_cast<Eigen::Index>(config.d_model);
  const auto f = static_cast<Eigen::Index>(config.d_ff);
  const auto h = static_cast<Eigen::Index>(config.d_hidden);
  ModelParameters p;
  p.config = config;
  p.token_embedding.setZero(static_cast<Eigen::Index>(config.vocab_size), d);
  p.position_embedding.setZero(static_cast<Eigen::Index>(config.positions()), d);
  p.layers.resize(config.n_layers);
  for (auto& L : p.layers) {
    for (auto* m : {&L.ln1_gamma, &L.ln1_beta, &L.bq, &L.bk, &L.bv, &L.bo, &L.ln2_gamma, &L.ln2_beta, &L.ff2_bias})
      m->setZero(1, d);
    for (auto* m : {&L.wq, &L.wk, &L.wv, &L.wo}) m->setZero(d, d);
    L.ff1.setZero(d, f);
    L.ff1_bias.setZero(1, f);
    L.ff2.setZero(f, d);
  }
  p.final_gamma.setZero(1, d);
  p.final_beta.setZero(1, d);
  p.proj_w.setZero(d, h);
  p.proj_b.setZero(1, h);
  p.head_w1.setZero(2 * h, h);
  p.head_b1.setZero(1, h);
  p.head_w2.setZero(h, 1);
  p.head_b2.setZero(1, 1);
  p.indicator.setZero(static_cast<Eigen::Index>(config.num_categories), h);
  return p;
}

template <class S>
ModelParameters<S> ModelParameters<S>::initialized(const EncoderConfig& config, std::uint64_t seed) {
  auto p = zeros(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  auto fill_normal = [&](Matrix<S>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(normal(rng));
  };
  auto fill_glorot = [&](Matrix<S>& m) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(u(rng));
  };
  fill_normal(p.token_embedding);
  fill_normal(p.position_embedding);
  for (auto& L : p.layers) {
    L.ln1_gamma.setOnes();
    L.ln2_gamma.setOnes();
    for (auto* m : {&L.wq, &L.wk, &L.wv, &L.wo, &L.ff1, &L.ff2}) fill_normal(*m);
  }
  p.final_gamma.setOnes();
  fill_glorot(p.proj_w);
  fill_glorot(p.head_w1);
  fill_glorot(p.head_w2);
  // Indicator rows stand in for projected description embeddings, which
  // start near unit scale.
  std::normal_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < p.indicator.size(); ++i) p.indicator.data()[i] = static_cast<S>(unit(rng));
  return p;
}

}  // namespace qfsum
