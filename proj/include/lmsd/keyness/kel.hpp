#pragma once
// Keyness extraction layer: a two-conv encoder that maps a flight to one
// keyness value per block of s timesteps. The activation sigmoid(ReLU(a))
// bounds every value to [0.5, 1), so no block is ever fully suppressed.

#include "lmsd/nn/layers.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace lmsd::keyness {

struct KelConfig {
  int stride = 32;            // s; must equal kernel1 * kernel2
  double temperature = 1.2;   // T
  int channels = 16;          // width of the first conv
  int kernel1 = 8;            // first conv kernel = stride
  int kernel2 = 4;            // second conv kernel = stride
  int distill_epochs = 10;
  double lr = 1e-3;
  int batch_size = 32;
  double holdout = 0.1;       // fraction kept out of distillation for fidelity
  std::uint64_t seed = 0;

  void validate() const {
    require(kernel1 >= 1 && kernel2 >= 1 && channels >= 1, "kel: kernels and channels must be >= 1");
    require(kernel1 * kernel2 == stride,
            "kel: stride " + std::to_string(stride) + " must equal kernel1*kernel2 = " + std::to_string(kernel1 * kernel2));
    require(temperature > 0.0, "kel: temperature must be > 0");
    require(distill_epochs >= 1, "kel: distill_epochs must be >= 1");
    require(lr > 0.0, "kel: lr must be positive");
    require(batch_size >= 1, "kel: batch_size must be >= 1");
    require(holdout > 0.0 && holdout < 1.0, "kel: holdout must be in (0, 1)");
  }

  nlohmann::json to_json() const {
    return {{"stride", stride},   {"temperature", temperature}, {"channels", channels},
            {"kernel1", kernel1}, {"kernel2", kernel2},         {"distill_epochs", distill_epochs},
            {"lr", lr},           {"batch_size", batch_size},   {"holdout", holdout},
            {"seed", seed}};
  }
  static KelConfig from_json(const nlohmann::json& j) {
    KelConfig c;
    c.stride = j.value("stride", c.stride);
    c.temperature = j.value("temperature", c.temperature);
    c.channels = j.value("channels", c.channels);
    c.kernel1 = j.value("kernel1", c.kernel1);
    c.kernel2 = j.value("kernel2", c.kernel2);
    c.distill_epochs = j.value("distill_epochs", c.distill_epochs);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.holdout = j.value("holdout", c.holdout);
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

/// Number of keyness slots for length L: ceil(L / s), at least 1. The last
/// slot covers the remainder when s does not divide L.
inline int slot_count(int L, int s) { return std::max(1, (L + s - 1) / s); }

/// Repeats each slot s times along time, truncated to L.
inline Vec expand_time(const Vec& w, int L, int s) {
  require(w.size() == slot_count(L, s), "kel: keyness length " + std::to_string(w.size()) + " does not match L=" +
                                            std::to_string(L) + ", s=" + std::to_string(s));
  Vec k(L);
  for (int t = 0; t < L; ++t) k(t) = w(t / s);
  return k;
}

/// K: the time expansion broadcast across D channels (L x D).
inline Mat expand(const Vec& w, int L, int D, int s) {
  const Vec k = expand_time(w, L, s);
  Mat K(L, D);
  for (int d = 0; d < D; ++d) K.col(d) = k;
  return K;
}

/// x_kw = x (.) K.
inline Mat apply_keyness(const Mat& x, const Vec& w, int s) {
  const Vec k = expand_time(w, static_cast<int>(x.rows()), s);
  return x.array().colwise() * k.array();
}

class KelEncoder {
 public:
  struct Cache {
    int L = 0;
    nn::Conv1d::Cache c1, c2;
    Mat h_pre;  // conv1 output before ReLU
    Vec a;      // conv2 output, one per slot
    Vec w;
  };

  KelEncoder() = default;
  KelEncoder(int input_dim, const KelConfig& cfg, std::uint64_t init_seed = 0)
      : cfg_(cfg),
        dim_(input_dim),
        conv1_("kel.conv1", input_dim, cfg.channels, cfg.kernel1, cfg.kernel1, 0, 0),
        conv2_("kel.conv2", cfg.channels, 1, cfg.kernel2, cfg.kernel2, 0, 0) {
    cfg.validate();
    require(input_dim >= 1, "kel: input_dim must be >= 1");
    Rng rng(init_seed);
    conv1_.init(rng);
    conv2_.init(rng);
  }

  /// Zeroes every parameter; the encoder then outputs exactly 0.5 everywhere.
  void zero_init() {
    for (Param* p : params()) p->value.setZero();
  }

  /// w_K for one flight (length ceil(L/s)).
  Vec forward(const Mat& x, Cache* c = nullptr) const {
    require(x.cols() == dim_, "kel: expected " + std::to_string(dim_) + " channels, got " + std::to_string(x.cols()));
    const int L = static_cast<int>(x.rows());
    const int n = slot_count(L, cfg_.stride);
    Mat xp = Mat::Zero(static_cast<Eigen::Index>(n) * cfg_.stride, dim_);
    xp.topRows(L) = x;
    Cache local;
    Cache& k = c ? *c : local;
    k.L = L;
    k.h_pre = conv1_.forward(xp, c ? &k.c1 : nullptr);
    const Mat a = conv2_.forward(nn::relu(k.h_pre), c ? &k.c2 : nullptr);
    k.a = a.col(0);
    Vec w(n);
    static const double below_one = std::nextafter(1.0, 0.0);
    for (int i = 0; i < n; ++i) w(i) = std::min(1.0 / (1.0 + std::exp(-std::max(k.a(i), 0.0))), below_one);
    k.w = w;
    return w;
  }

  /// Backward from dL/dw_K. Accumulates parameter gradients.
  void backward_w(const Cache& c, const Vec& dw) {
    Vec da(dw.size());
    for (Eigen::Index i = 0; i < dw.size(); ++i)
      da(i) = c.a(i) > 0.0 ? dw(i) * c.w(i) * (1.0 - c.w(i)) : 0.0;
    const Mat dh = conv2_.backward(Mat(da), c.c2);
    conv1_.backward(nn::relu_backward(dh, c.h_pre), c.c1);
  }

  /// Backward from dL/dx_kw where x_kw = x (.) K. Returns dL/dw_K.
  Vec backward(const Cache& c, const Mat& dxkw, const Mat& x) {
    require(dxkw.rows() == c.L && x.rows() == c.L, "kel: backward shape mismatch");
    Vec dw = Vec::Zero(c.w.size());
    const Vec per_t = (dxkw.array() * x.array()).rowwise().sum();
    for (int t = 0; t < c.L; ++t) dw(t / cfg_.stride) += per_t(t);
    backward_w(c, dw);
    return dw;
  }

  ParamRefs params() {
    ParamRefs out;
    conv1_.params(out);
    conv2_.params(out);
    return out;
  }
  ConstParamRefs params() const {
    ConstParamRefs out;
    conv1_.params(out);
    conv2_.params(out);
    return out;
  }

  const KelConfig& config() const { return cfg_; }
  int input_dim() const { return dim_; }

 private:
  KelConfig cfg_;
  int dim_ = 0;
  nn::Conv1d conv1_, conv2_;
};

}  // namespace lmsd::keyness
