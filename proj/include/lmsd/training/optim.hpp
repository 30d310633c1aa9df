#pragma once

#include "lmsd/core/tensor.hpp"

namespace lmsd::training {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed parameter list. Moment buffers are bound to list order,
/// so the same list must be passed to every step().
class Adam {
 public:
  Adam(const ParamRefs& ps, AdamConfig cfg) : ps_(ps), cfg_(cfg) {
    require(cfg.lr > 0.0, "adam: lr must be positive");
    require(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0, "adam: betas must be in [0, 1)");
    for (const Param* p : ps_) {
      m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  }

  /// Applies one update using grad * grad_scale, then zeroes the gradients.
  void step(double grad_scale = 1.0) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < ps_.size(); ++i) {
      Param& p = *ps_[i];
      const Mat g = p.grad * grad_scale;
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      p.value.array() -= cfg_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
      p.zero_grad();
    }
  }

  long long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  ParamRefs ps_;
  AdamConfig cfg_;
  std::vector<Mat> m_, v_;
  long long t_ = 0;
};

}  // namespace lmsd::training
