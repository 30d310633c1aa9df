#pragma once
// ConvTokMHSA: convolutional patch tokenizer followed by a stack of
// multi-head self-attention encoder layers, mean-pooled into a linear head.

#include "lmsd/nn/attention.hpp"
#include "lmsd/nn/config.hpp"
#include "lmsd/nn/layers.hpp"

#include <cmath>
#include <vector>

namespace lmsd::nn {

/// Pooled penultimate features and head logits of one forward pass.
struct Output {
  Vec features;
  Vec logits;
};

inline int token_count(int L, int patch_len) { return (L + patch_len - 1) / patch_len; }

/// Per-segment mean and population std of each channel over the valid rows of
/// each length-p segment. Returns N_tok x 2D: [mu_0..mu_{D-1}, sigma_0..].
inline Mat segment_stats(const Mat& x, int patch_len) {
  const int L = static_cast<int>(x.rows()), D = static_cast<int>(x.cols());
  const int N = token_count(L, patch_len);
  Mat st(N, 2 * D);
  for (int i = 0; i < N; ++i) {
    const int t0 = i * patch_len, n = std::min(patch_len, L - t0);
    const auto seg = x.middleRows(t0, n);
    RowVec mu = seg.colwise().sum() / static_cast<double>(n);
    RowVec var = (seg.rowwise() - mu).colwise().squaredNorm() / static_cast<double>(n);
    st.row(i).head(D) = mu;
    st.row(i).tail(D) = var.cwiseSqrt();
  }
  return st;
}

/// Fixed sinusoidal encoding, N x d.
inline Mat sinusoidal_positions(int N, int d) {
  Mat pe(N, d);
  for (int pos = 0; pos < N; ++pos)
    for (int i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / d);
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
    }
  return pe;
}

/// x (L x D) -> tokens (ceil(L/p) x d_tok).
/// token_i = Out(mean_{t in seg i} ReLU(Conv(x))_t + Stats(mu_i, sigma_i)) + PE_i.
/// The final partial segment is zero-padded in raw space for the convolution;
/// its mu and sigma use the valid rows only.
class ConvTokenizer {
 public:
  struct Cache {
    Conv1d::Cache conv;
    Mat pre;
    Mat stats;
    Linear::Cache stats_proj, out;
    int L = 0;
  };

  ConvTokenizer() = default;
  ConvTokenizer(const std::string& name, int input_dim, const TokenizerConfig& cfg)
      : cfg_(cfg),
        D_(input_dim),
        shape_(Conv1d::same(name + ".shape_conv", input_dim, cfg.token_dim, cfg.conv_kernel)),
        stats_(name + ".stats_proj", 2 * input_dim, cfg.token_dim),
        out_(name + ".out_proj", cfg.token_dim, cfg.token_dim) {}

  void init(Rng& rng) {
    shape_.init(rng);
    stats_.init(rng);
    out_.init(rng);
  }

  Mat forward(const Mat& x, Cache* c) const {
    require(x.cols() == D_, "tokenizer: expected " + std::to_string(D_) + " channels, got " + std::to_string(x.cols()));
    require(x.rows() >= 1, "tokenizer: empty input");
    const int p = cfg_.patch_len, L = static_cast<int>(x.rows());
    const int N = token_count(L, p);
    Mat xpad = Mat::Zero(static_cast<Eigen::Index>(N) * p, D_);
    xpad.topRows(L) = x;
    Mat pre = shape_.forward(xpad, c ? &c->conv : nullptr);
    Mat act = relu(pre);
    Mat pooled(N, cfg_.token_dim);
    for (int i = 0; i < N; ++i) pooled.row(i) = act.middleRows(i * p, p).colwise().sum() / static_cast<double>(p);
    Mat st = segment_stats(x, p);
    Mat s = pooled + stats_.forward(st, c ? &c->stats_proj : nullptr);
    Mat tok = out_.forward(s, c ? &c->out : nullptr);
    if (cfg_.positional) tok += sinusoidal_positions(N, cfg_.token_dim);
    if (c) {
      c->pre = std::move(pre);
      c->stats = std::move(st);
      c->L = L;
    }
    return tok;
  }

  Mat backward(const Mat& dtok, const Cache& c) {
    const int p = cfg_.patch_len, L = c.L;
    const int N = static_cast<int>(dtok.rows());
    Mat ds = out_.backward(dtok, c.out);
    Mat dstats = stats_.backward(ds, c.stats_proj);
    Mat dact(static_cast<Eigen::Index>(N) * p, cfg_.token_dim);
    for (int i = 0; i < N; ++i) dact.middleRows(i * p, p).rowwise() = ds.row(i) / static_cast<double>(p);
    Mat dxpad = shape_.backward(relu_backward(dact, c.pre), c.conv);
    Mat dx = dxpad.topRows(L);
    const Mat& x = c.conv.x;  // padded input; valid rows are the first L
    for (int i = 0; i < N; ++i) {
      const int t0 = i * p, n = std::min(p, L - t0);
      for (int d = 0; d < D_; ++d) {
        const double mu = c.stats(i, d), sigma = c.stats(i, D_ + d);
        const double dmu = dstats(i, d) / n;
        const double dsig = dstats(i, D_ + d);
        for (int t = t0; t < t0 + n; ++t) {
          dx(t, d) += dmu;
          if (sigma > 0.0) dx(t, d) += dsig * (x(t, d) - mu) / (n * sigma);
        }
      }
    }
    return dx;
  }

  void params(ParamRefs& out) {
    shape_.params(out);
    stats_.params(out);
    out_.params(out);
  }
  void params(ConstParamRefs& out) const {
    shape_.params(out);
    stats_.params(out);
    out_.params(out);
  }

  const TokenizerConfig& config() const { return cfg_; }

 private:
  TokenizerConfig cfg_;
  int D_ = 0;
  Conv1d shape_;
  Linear stats_, out_;
};

class ConvTokNet {
 public:
  struct Cache {
    ConvTokenizer::Cache tok;
    std::vector<EncoderLayer::Cache> layers;
    LayerNorm::Cache final_ln;
    Linear::Cache head;
    int n_tok = 0;
  };

  ConvTokNet() = default;
  explicit ConvTokNet(const ModelConfig& cfg)
      : cfg_(cfg),
        tokenizer_("tokenizer", cfg.input_dim, cfg.tokenizer),
        final_ln_("final_ln", cfg.tokenizer.token_dim),
        head_("head", cfg.tokenizer.token_dim, cfg.head_dim) {
    for (int l = 0; l < cfg.attention.layers; ++l)
      layers_.emplace_back("encoder." + std::to_string(l), cfg.tokenizer.token_dim, cfg.attention);
    Rng rng(cfg.init_seed);
    tokenizer_.init(rng);
    for (auto& layer : layers_) layer.init(rng);
    head_.init(rng);
  }

  Output forward(const Mat& x, Cache* c, const Ctx& ctx) const {
    require(x.rows() == cfg_.input_len && x.cols() == cfg_.input_dim,
            "convtok: expected " + std::to_string(cfg_.input_len) + "x" + std::to_string(cfg_.input_dim) +
                " input, got " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
    return encode(tokenizer_.forward(x, c ? &c->tok : nullptr), c, ctx);
  }

  /// Encoder stack, final norm, mean pool and head applied to a token sequence.
  Output encode(const Mat& tokens, Cache* c, const Ctx& ctx) const {
    Mat h = tokens;
    if (c) c->layers.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) h = layers_[l].forward(h, c ? &c->layers[l] : nullptr, ctx);
    Mat z = final_ln_.forward(h, c ? &c->final_ln : nullptr);
    Mat pooled = z.colwise().mean();
    Mat logits = head_.forward(pooled, c ? &c->head : nullptr);
    if (c) c->n_tok = static_cast<int>(z.rows());
    return {pooled.row(0).transpose(), logits.row(0).transpose()};
  }

  /// Gradients flow from the logits and, optionally, from the pooled features.
  Mat backward(const Cache& c, const Vec& dlogits, const Vec* dfeatures = nullptr) {
    return tokenizer_.backward(backward_encode(c, dlogits, dfeatures), c.tok);
  }

  Mat backward_encode(const Cache& c, const Vec& dlogits, const Vec* dfeatures = nullptr) {
    Mat dpooled = head_.backward(dlogits.transpose(), c.head);
    if (dfeatures) dpooled += dfeatures->transpose();
    Mat dz = dpooled.replicate(c.n_tok, 1) / static_cast<double>(c.n_tok);
    Mat dh = final_ln_.backward(dz, c.final_ln);
    for (std::size_t l = layers_.size(); l-- > 0;) dh = layers_[l].backward(dh, c.layers[l]);
    return dh;
  }

  const ConvTokenizer& tokenizer() const { return tokenizer_; }

  void params(ParamRefs& out) {
    tokenizer_.params(out);
    for (auto& l : layers_) l.params(out);
    final_ln_.params(out);
    head_.params(out);
  }
  void params(ConstParamRefs& out) const {
    tokenizer_.params(out);
    for (const auto& l : layers_) l.params(out);
    final_ln_.params(out);
    head_.params(out);
  }

  Linear& head() { return head_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  ConvTokenizer tokenizer_;
  std::vector<EncoderLayer> layers_;
  LayerNorm final_ln_;
  Linear head_;
};

}  // namespace lmsd::nn
