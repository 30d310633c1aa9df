#pragma once
// Primitive layers with explicit forward/backward.
//
// Every layer exposes `forward(x, cache, ctx) const`, which stores what the
// backward pass needs into `cache` when it is non-null, and
// `backward(dy, cache)`, which accumulates parameter gradients and returns
// the input gradient. Inference passes a null cache and never mutates the
// layer, so a frozen model may be shared across threads.

#include "lmsd/core/tensor.hpp"

#include <string>

namespace lmsd::nn {

/// Forward-pass context: dropout is active only when training is set.
struct Ctx {
  bool training = false;
  Rng* rng = nullptr;
};

class Linear {
 public:
  struct Cache {
    Mat x;
  };

  Linear() = default;
  Linear(const std::string& name, int in, int out) : W_(name + ".weight", in, out), b_(name + ".bias", 1, out) {}

  void init(Rng& rng) {
    init_fan_in(W_, static_cast<int>(W_.value.rows()), rng);
    b_.value.setZero();
  }

  Mat forward(const Mat& x, Cache* c) const {
    require(x.cols() == W_.value.rows(), W_.name + ": expected " + std::to_string(W_.value.rows()) +
                                             " input features, got " + std::to_string(x.cols()));
    if (c) c->x = x;
    Mat y = x * W_.value;
    y.rowwise() += b_.value.row(0);
    return y;
  }

  Mat backward(const Mat& dy, const Cache& c) {
    W_.grad.noalias() += c.x.transpose() * dy;
    b_.grad += dy.colwise().sum();
    return dy * W_.value.transpose();
  }

  void params(ParamRefs& out) { out.insert(out.end(), {&W_, &b_}); }
  void params(ConstParamRefs& out) const { out.insert(out.end(), {&W_, &b_}); }

  Param& weight() { return W_; }
  Param& bias() { return b_; }
  const Param& weight() const { return W_; }
  const Param& bias() const { return b_; }
  int in_features() const { return static_cast<int>(W_.value.rows()); }
  int out_features() const { return static_cast<int>(W_.value.cols()); }

 private:
  Param W_, b_;
};

/// 1D convolution along rows. Weight layout: row block j (in x out) holds tap j.
class Conv1d {
 public:
  struct Cache {
    Mat x;
  };

  Conv1d() = default;
  Conv1d(const std::string& name, int in, int out, int kernel, int stride, int pad_left, int pad_right)
      : in_(in),
        out_(out),
        kernel_(kernel),
        stride_(stride),
        pad_left_(pad_left),
        pad_right_(pad_right),
        W_(name + ".weight", kernel * in, out),
        b_(name + ".bias", 1, out) {
    require(kernel >= 1 && stride >= 1, name + ": kernel and stride must be >= 1");
  }

  /// Stride-1 convolution that preserves length (symmetric zero padding).
  static Conv1d same(const std::string& name, int in, int out, int kernel) {
    return Conv1d(name, in, out, kernel, 1, (kernel - 1) / 2, kernel - 1 - (kernel - 1) / 2);
  }

  void init(Rng& rng) {
    init_fan_in(W_, kernel_ * in_, rng);
    b_.value.setZero();
  }

  int out_len(int L) const {
    const int span = L + pad_left_ + pad_right_ - kernel_;
    require(span >= 0, W_.name + ": input of length " + std::to_string(L) + " shorter than the kernel");
    return span / stride_ + 1;
  }

  Mat forward(const Mat& x, Cache* c) const {
    require(x.cols() == in_, W_.name + ": expected " + std::to_string(in_) + " input channels, got " +
                                 std::to_string(x.cols()));
    const int L = static_cast<int>(x.rows());
    const int T = out_len(L);
    Mat y(T, out_);
    y.rowwise() = b_.value.row(0);
    for (int j = 0; j < kernel_; ++j) {
      const auto Wj = W_.value.middleRows(j * in_, in_);
      if (stride_ == 1) {
        const int t0 = std::max(0, pad_left_ - j);
        const int t1 = std::min(T, L + pad_left_ - j);
        if (t1 > t0) y.middleRows(t0, t1 - t0).noalias() += x.middleRows(t0 + j - pad_left_, t1 - t0) * Wj;
      } else {
        Mat g = gather(x, j, T);
        y.noalias() += g * Wj;
      }
    }
    if (c) c->x = x;
    return y;
  }

  Mat backward(const Mat& dy, const Cache& c) {
    const int L = static_cast<int>(c.x.rows());
    const int T = static_cast<int>(dy.rows());
    Mat dx = Mat::Zero(L, in_);
    b_.grad += dy.colwise().sum();
    for (int j = 0; j < kernel_; ++j) {
      auto Wj = W_.value.middleRows(j * in_, in_);
      auto dWj = W_.grad.middleRows(j * in_, in_);
      if (stride_ == 1) {
        const int t0 = std::max(0, pad_left_ - j);
        const int t1 = std::min(T, L + pad_left_ - j);
        if (t1 <= t0) continue;
        const int n = t1 - t0, s0 = t0 + j - pad_left_;
        dWj.noalias() += c.x.middleRows(s0, n).transpose() * dy.middleRows(t0, n);
        dx.middleRows(s0, n).noalias() += dy.middleRows(t0, n) * Wj.transpose();
      } else {
        Mat g = gather(c.x, j, T);
        dWj.noalias() += g.transpose() * dy;
        Mat dg = dy * Wj.transpose();
        for (int t = 0; t < T; ++t) {
          const int src = t * stride_ + j - pad_left_;
          if (src >= 0 && src < L) dx.row(src) += dg.row(t);
        }
      }
    }
    return dx;
  }

  void params(ParamRefs& out) { out.insert(out.end(), {&W_, &b_}); }
  void params(ConstParamRefs& out) const { out.insert(out.end(), {&W_, &b_}); }

  Param& weight() { return W_; }
  Param& bias() { return b_; }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  Mat gather(const Mat& x, int tap, int T) const {
    const int L = static_cast<int>(x.rows());
    Mat g = Mat::Zero(T, in_);
    for (int t = 0; t < T; ++t) {
      const int src = t * stride_ + tap - pad_left_;
      if (src >= 0 && src < L) g.row(t) = x.row(src);
    }
    return g;
  }

  int in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1, pad_left_ = 0, pad_right_ = 0;
  Param W_, b_;
};

/// Normalizes each row over its columns. A constant row maps to beta.
class LayerNorm {
 public:
  static constexpr double kEps = 1e-5;

  struct Cache {
    Mat xhat;
    Vec inv_std;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim) : g_(name + ".gamma", 1, dim), b_(name + ".beta", 1, dim) {
    g_.value.setOnes();
  }

  Mat forward(const Mat& x, Cache* c) const {
    const auto C = static_cast<double>(x.cols());
    Vec mu = x.rowwise().sum() / C;
    Mat xc = x.colwise() - mu;
    Vec var = xc.rowwise().squaredNorm() / C;
    Vec inv = (var.array() + kEps).rsqrt().matrix();
    Mat xhat = inv.asDiagonal() * xc;
    Mat y = xhat.array().rowwise() * g_.value.row(0).array();
    y.rowwise() += b_.value.row(0);
    if (c) {
      c->xhat = std::move(xhat);
      c->inv_std = std::move(inv);
    }
    return y;
  }

  Mat backward(const Mat& dy, const Cache& c) {
    const auto C = static_cast<double>(dy.cols());
    g_.grad += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    b_.grad += dy.colwise().sum();
    Mat dxhat = dy.array().rowwise() * g_.value.row(0).array();
    Vec s1 = dxhat.rowwise().sum();
    Vec s2 = (dxhat.array() * c.xhat.array()).rowwise().sum();
    Mat dx = (C * dxhat).colwise() - s1;
    dx.array() -= c.xhat.array().colwise() * s2.array();
    return (c.inv_std / C).asDiagonal() * dx;
  }

  void params(ParamRefs& out) { out.insert(out.end(), {&g_, &b_}); }
  void params(ConstParamRefs& out) const { out.insert(out.end(), {&g_, &b_}); }

 private:
  Param g_, b_;
};

inline Mat relu(const Mat& x) { return x.cwiseMax(0.0); }

inline Mat relu_backward(const Mat& dy, const Mat& pre) {
  return (pre.array() > 0.0).select(dy, 0.0);
}

/// Inverted dropout. The mask is cached so backward replays it.
struct Dropout {
  double p = 0.0;

  struct Cache {
    Mat mask;  // empty when inactive
  };

  Mat forward(const Mat& x, Cache* c, const Ctx& ctx) const {
    if (!ctx.training || p <= 0.0) {
      if (c) c->mask.resize(0, 0);
      return x;
    }
    require(ctx.rng != nullptr, "dropout: training context needs an rng");
    std::bernoulli_distribution keep(1.0 - p);
    Mat mask(x.rows(), x.cols());
    const double scale = 1.0 / (1.0 - p);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*ctx.rng) ? scale : 0.0;
    Mat y = x.cwiseProduct(mask);
    if (c) c->mask = std::move(mask);
    return y;
  }

  Mat backward(const Mat& dy, const Cache& c) const {
    if (c.mask.size() == 0) return dy;
    return dy.cwiseProduct(c.mask);
  }
};

}  // namespace lmsd::nn
