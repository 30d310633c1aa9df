#pragma once

#include "lmsd/nn/config.hpp"
#include "lmsd/nn/layers.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace lmsd::nn {

/// softmax(Q K^T / sqrt(d_k)) V for one head. In sliding-window mode scores
/// with |i - j| > window are masked to -inf before the softmax. Returns the
/// output; the attention weights go to *weights when given.
inline Mat scaled_dot_attention(const Mat& Q, const Mat& K, const Mat& V, AttentionMode mode, int window,
                                Mat* weights = nullptr) {
  const auto n = Q.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(Q.cols()));
  Mat S = (Q * K.transpose()) * scale;
  Mat A(n, K.rows());
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index lo = 0, hi = K.rows();
    if (mode == AttentionMode::sliding_window) {
      require(window >= 0, "attention: negative window");
      lo = std::max<Eigen::Index>(0, i - window);
      hi = std::min<Eigen::Index>(K.rows(), i + window + 1);
    }
    require(hi > lo, "attention: fully masked score row");
    A.row(i).setZero();
    const double m = S.row(i).segment(lo, hi - lo).maxCoeff();
    require(std::isfinite(m), "attention: non-finite score");
    double total = 0.0;
    for (Eigen::Index j = lo; j < hi; ++j) {
      const double e = std::exp(S(i, j) - m);
      A(i, j) = e;
      total += e;
    }
    A.row(i).segment(lo, hi - lo) /= total;
  }
  Mat out = A * V;
  if (weights) *weights = std::move(A);
  return out;
}

/// Multi-head self-attention with convolutional Q/K/V projections along the
/// token axis (kernel 3 by default).
class MultiHeadAttention {
 public:
  struct Cache {
    Conv1d::Cache q, k, v;
    Mat Q, K, V;
    std::vector<Mat> A;
    Linear::Cache out;
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, int dim, const AttentionConfig& cfg)
      : dim_(dim),
        heads_(cfg.heads),
        mode_(cfg.mode),
        window_(cfg.window),
        q_(Conv1d::same(name + ".q", dim, dim, cfg.qkv_kernel)),
        k_(Conv1d::same(name + ".k", dim, dim, cfg.qkv_kernel)),
        v_(Conv1d::same(name + ".v", dim, dim, cfg.qkv_kernel)),
        out_(name + ".out", dim, dim) {}

  void init(Rng& rng) {
    q_.init(rng);
    k_.init(rng);
    v_.init(rng);
    out_.init(rng);
  }

  Mat forward(const Mat& x, Cache* c) const {
    Mat Q = q_.forward(x, c ? &c->q : nullptr);
    Mat K = k_.forward(x, c ? &c->k : nullptr);
    Mat V = v_.forward(x, c ? &c->v : nullptr);
    const int dk = dim_ / heads_;
    Mat concat(x.rows(), dim_);
    if (c) c->A.resize(static_cast<std::size_t>(heads_));
    for (int h = 0; h < heads_; ++h) {
      Mat A;
      concat.middleCols(h * dk, dk) = scaled_dot_attention(Q.middleCols(h * dk, dk), K.middleCols(h * dk, dk),
                                                           V.middleCols(h * dk, dk), mode_, window_, &A);
      if (c) c->A[static_cast<std::size_t>(h)] = std::move(A);
    }
    if (c) {
      c->Q = std::move(Q);
      c->K = std::move(K);
      c->V = std::move(V);
    }
    return out_.forward(concat, c ? &c->out : nullptr);
  }

  Mat backward(const Mat& dy, const Cache& c) {
    Mat dconcat = out_.backward(dy, c.out);
    const int dk = dim_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    Mat dQ(c.Q.rows(), dim_), dK(c.K.rows(), dim_), dV(c.V.rows(), dim_);
    for (int h = 0; h < heads_; ++h) {
      const Mat& A = c.A[static_cast<std::size_t>(h)];
      const Mat dO = dconcat.middleCols(h * dk, dk);
      Mat dA = dO * c.V.middleCols(h * dk, dk).transpose();
      dV.middleCols(h * dk, dk) = A.transpose() * dO;
      // softmax Jacobian; masked entries have A = 0 and receive no gradient
      Vec rowdot = (dA.array() * A.array()).rowwise().sum();
      Mat dS = A.array() * (dA.colwise() - rowdot).array();
      dS *= scale;
      dQ.middleCols(h * dk, dk) = dS * c.K.middleCols(h * dk, dk);
      dK.middleCols(h * dk, dk) = dS.transpose() * c.Q.middleCols(h * dk, dk);
    }
    Mat dx = q_.backward(dQ, c.q);
    dx += k_.backward(dK, c.k);
    dx += v_.backward(dV, c.v);
    return dx;
  }

  void params(ParamRefs& out) {
    q_.params(out);
    k_.params(out);
    v_.params(out);
    out_.params(out);
  }
  void params(ConstParamRefs& out) const {
    q_.params(out);
    k_.params(out);
    v_.params(out);
    out_.params(out);
  }

 private:
  int dim_ = 0, heads_ = 1;
  AttentionMode mode_ = AttentionMode::global;
  int window_ = 0;
  Conv1d q_, k_, v_;
  Linear out_;
};

/// Pre-norm encoder layer:
///   h = x + Drop(MHSA(LN1(x)));  y = h + Drop(FFN(LN2(h)))
class EncoderLayer {
 public:
  struct Cache {
    LayerNorm::Cache ln1, ln2;
    MultiHeadAttention::Cache attn;
    Dropout::Cache drop_attn, drop_ffn;
    Linear::Cache ff1, ff2;
    Mat ff_pre;
  };

  EncoderLayer() = default;
  EncoderLayer(const std::string& name, int dim, const AttentionConfig& cfg)
      : ln1_(name + ".ln1", dim),
        ln2_(name + ".ln2", dim),
        attn_(name + ".attn", dim, cfg),
        ff1_(name + ".ff1", dim, cfg.ffn_dim),
        ff2_(name + ".ff2", cfg.ffn_dim, dim),
        drop_{cfg.dropout} {}

  void init(Rng& rng) {
    attn_.init(rng);
    ff1_.init(rng);
    ff2_.init(rng);
  }

  Mat forward(const Mat& x, Cache* c, const Ctx& ctx) const {
    Mat a = attn_.forward(ln1_.forward(x, c ? &c->ln1 : nullptr), c ? &c->attn : nullptr);
    Mat h = x + drop_.forward(a, c ? &c->drop_attn : nullptr, ctx);
    Mat pre = ff1_.forward(ln2_.forward(h, c ? &c->ln2 : nullptr), c ? &c->ff1 : nullptr);
    Mat f = ff2_.forward(relu(pre), c ? &c->ff2 : nullptr);
    if (c) c->ff_pre = std::move(pre);
    return h + drop_.forward(f, c ? &c->drop_ffn : nullptr, ctx);
  }

  Mat backward(const Mat& dy, const Cache& c) {
    Mat df = drop_.backward(dy, c.drop_ffn);
    Mat dpre = relu_backward(ff2_.backward(df, c.ff2), c.ff_pre);
    Mat dh = dy + ln2_.backward(ff1_.backward(dpre, c.ff1), c.ln2);
    Mat da = drop_.backward(dh, c.drop_attn);
    return dh + ln1_.backward(attn_.backward(da, c.attn), c.ln1);
  }

  void params(ParamRefs& out) {
    ln1_.params(out);
    attn_.params(out);
    ln2_.params(out);
    ff1_.params(out);
    ff2_.params(out);
  }
  void params(ConstParamRefs& out) const {
    ln1_.params(out);
    attn_.params(out);
    ln2_.params(out);
    ff1_.params(out);
    ff2_.params(out);
  }

 private:
  LayerNorm ln1_, ln2_;
  MultiHeadAttention attn_;
  Linear ff1_, ff2_;
  Dropout drop_;
};

}  // namespace lmsd::nn
