#pragma once
// MMK Net: stacked multi-micro-kernel blocks with no temporal pooling until a
// final global average, so every pre-pooling feature sees only
// 1 + N_L * (k_max - 1) input timesteps.

#include "lmsd/nn/config.hpp"
#include "lmsd/nn/convtok.hpp"
#include "lmsd/nn/layers.hpp"

#include <optional>
#include <vector>

namespace lmsd::nn {

/// h = ReLU(LN(concat_k Conv_k(Bottleneck(h_prev)))), C_in x L -> |K|F x L.
class MMKBlock {
 public:
  struct Cache {
    Conv1d::Cache bottleneck;
    Mat b;
    std::vector<Conv1d::Cache> branches;
    LayerNorm::Cache ln;
    Mat z;
    Dropout::Cache drop;
  };

  MMKBlock() = default;
  MMKBlock(const std::string& name, int in_channels, const MMKConfig& cfg)
      : F_(cfg.filters),
        bottleneck_(Conv1d::same(name + ".bottleneck", in_channels, cfg.bottleneck, 1)),
        ln_(name + ".ln", cfg.block_channels()),
        drop_{cfg.dropout} {
    for (int k : cfg.kernels)
      branches_.push_back(Conv1d::same(name + ".conv" + std::to_string(k), cfg.bottleneck, cfg.filters, k));
  }

  void init(Rng& rng) {
    bottleneck_.init(rng);
    for (auto& b : branches_) b.init(rng);
  }

  Mat forward(const Mat& x, Cache* c, const Ctx& ctx) const {
    Mat b = bottleneck_.forward(x, c ? &c->bottleneck : nullptr);
    Mat cat(x.rows(), static_cast<Eigen::Index>(branches_.size()) * F_);
    if (c) c->branches.resize(branches_.size());
    for (std::size_t i = 0; i < branches_.size(); ++i)
      cat.middleCols(static_cast<Eigen::Index>(i) * F_, F_) = branches_[i].forward(b, c ? &c->branches[i] : nullptr);
    Mat z = ln_.forward(cat, c ? &c->ln : nullptr);
    Mat out = drop_.forward(relu(z), c ? &c->drop : nullptr, ctx);
    if (c) {
      c->b = std::move(b);
      c->z = std::move(z);
    }
    return out;
  }

  Mat backward(const Mat& dy, const Cache& c) {
    Mat dz = relu_backward(drop_.backward(dy, c.drop), c.z);
    Mat dcat = ln_.backward(dz, c.ln);
    Mat db = Mat::Zero(c.b.rows(), c.b.cols());
    for (std::size_t i = 0; i < branches_.size(); ++i)
      db += branches_[i].backward(dcat.middleCols(static_cast<Eigen::Index>(i) * F_, F_), c.branches[i]);
    return bottleneck_.backward(db, c.bottleneck);
  }

  void params(ParamRefs& out) {
    bottleneck_.params(out);
    for (auto& b : branches_) b.params(out);
    ln_.params(out);
  }
  void params(ConstParamRefs& out) const {
    bottleneck_.params(out);
    for (const auto& b : branches_) b.params(out);
    ln_.params(out);
  }

 private:
  int F_ = 0;
  Conv1d bottleneck_;
  std::vector<Conv1d> branches_;
  LayerNorm ln_;
  Dropout drop_;
};

class MMKNet {
 public:
  struct Cache {
    std::vector<MMKBlock::Cache> blocks;
    std::vector<Conv1d::Cache> shortcuts;  // per junction, used when projected
    std::vector<Mat> junction_pre;         // per junction, pre-ReLU sum
    Linear::Cache hidden, head;
    Mat hidden_pre;
    Dropout::Cache hidden_drop;
    int L = 0;
  };

  MMKNet() = default;
  explicit MMKNet(const ModelConfig& cfg) : cfg_(cfg), hidden_drop_{cfg.mmk.dropout} {
    const auto& m = cfg.mmk;
    int channels = cfg.input_dim;
    int res_channels = cfg.input_dim;
    for (int l = 0; l < m.blocks; ++l) {
      blocks_.emplace_back("block." + std::to_string(l), channels, m);
      channels = m.block_channels();
      if (is_junction(l)) {
        if (res_channels != channels)
          shortcuts_.emplace_back(Conv1d::same("shortcut." + std::to_string(l), res_channels, channels, 1));
        else
          shortcuts_.emplace_back(std::nullopt);
        res_channels = channels;
      }
    }
    int feat = m.block_channels();
    if (m.hidden_dim > 0) {
      hidden_ = Linear("hidden", feat, m.hidden_dim);
      feat = m.hidden_dim;
    }
    head_ = Linear("head", feat, cfg.head_dim);
    Rng rng(cfg.init_seed);
    for (auto& b : blocks_) b.init(rng);
    for (auto& s : shortcuts_)
      if (s) s->init(rng);
    if (hidden_) hidden_->init(rng);
    head_.init(rng);
  }

  bool is_junction(int l) const { return (l + 1) % cfg_.mmk.residual_period == 0; }

  /// Pre-pooling feature map (L x |K|F).
  Mat feature_map(const Mat& x, Cache* c, const Ctx& ctx) const {
    Mat h = x, res = x;
    if (c) {
      c->blocks.resize(blocks_.size());
      c->shortcuts.resize(shortcuts_.size());
      c->junction_pre.resize(shortcuts_.size());
      c->L = static_cast<int>(x.rows());
    }
    std::size_t j = 0;
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      h = blocks_[l].forward(h, c ? &c->blocks[l] : nullptr, ctx);
      if (is_junction(static_cast<int>(l))) {
        const auto& sc = shortcuts_[j];
        Mat pre = h + (sc ? sc->forward(res, c ? &c->shortcuts[j] : nullptr) : res);
        h = relu(pre);
        res = h;
        if (c) c->junction_pre[j] = std::move(pre);
        ++j;
      }
    }
    return h;
  }

  Output forward(const Mat& x, Cache* c, const Ctx& ctx) const {
    require(x.rows() == cfg_.input_len && x.cols() == cfg_.input_dim,
            "mmk: expected " + std::to_string(cfg_.input_len) + "x" + std::to_string(cfg_.input_dim) +
                " input, got " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
    Mat h = feature_map(x, c, ctx);
    Mat feat = h.colwise().mean();
    if (hidden_) {
      Mat pre = hidden_->forward(feat, c ? &c->hidden : nullptr);
      feat = hidden_drop_.forward(relu(pre), c ? &c->hidden_drop : nullptr, ctx);
      if (c) c->hidden_pre = std::move(pre);
    }
    Mat logits = head_.forward(feat, c ? &c->head : nullptr);
    return {feat.row(0).transpose(), logits.row(0).transpose()};
  }

  Mat backward(const Cache& c, const Vec& dlogits, const Vec* dfeatures = nullptr) {
    Mat dfeat = head_.backward(dlogits.transpose(), c.head);
    if (dfeatures) dfeat += dfeatures->transpose();
    if (hidden_) dfeat = hidden_->backward(relu_backward(hidden_drop_.backward(dfeat, c.hidden_drop), c.hidden_pre), c.hidden);
    Mat dh = dfeat.replicate(c.L, 1) / static_cast<double>(c.L);
    const int period = cfg_.mmk.residual_period;
    Mat pending;  // gradient owed to the residual source of the open junction
    std::size_t j = shortcuts_.size();
    for (std::size_t l = blocks_.size(); l-- > 0;) {
      if (is_junction(static_cast<int>(l))) {
        --j;
        Mat dpre = relu_backward(dh, c.junction_pre[j]);
        auto& sc = shortcuts_[j];
        pending = sc ? sc->backward(dpre, c.shortcuts[j]) : dpre;
        dh = std::move(dpre);
      }
      dh = blocks_[l].backward(dh, c.blocks[l]);
      if (static_cast<int>(l) % period == 0 && pending.size() != 0) {
        dh += pending;
        pending.resize(0, 0);
      }
    }
    return dh;
  }

  void params(ParamRefs& out) {
    for (auto& b : blocks_) b.params(out);
    for (auto& s : shortcuts_)
      if (s) s->params(out);
    if (hidden_) hidden_->params(out);
    head_.params(out);
  }
  void params(ConstParamRefs& out) const {
    for (const auto& b : blocks_) b.params(out);
    for (const auto& s : shortcuts_)
      if (s) s->params(out);
    if (hidden_) hidden_->params(out);
    head_.params(out);
  }

  Linear& head() { return head_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  std::vector<MMKBlock> blocks_;
  std::vector<std::optional<Conv1d>> shortcuts_;
  std::optional<Linear> hidden_;
  Dropout hidden_drop_;
  Linear head_;
};

}  // namespace lmsd::nn
