#pragma once
// Backbone-agnostic model handle used by training, the cascade and KEL.

#include "lmsd/nn/config.hpp"
#include "lmsd/nn/convtok.hpp"
#include "lmsd/nn/mmk.hpp"

#include <variant>

namespace lmsd::nn {

class Model {
 public:
  using Cache = std::variant<ConvTokNet::Cache, MMKNet::Cache>;

  Model() = default;
  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    if (cfg.kind == BackboneKind::convtok)
      net_ = ConvTokNet(cfg);
    else
      net_ = MMKNet(cfg);
  }

  const ModelConfig& config() const { return cfg_; }
  BackboneKind kind() const { return cfg_.kind; }

  /// Training mode enables dropout in forward(); frozen stage models must be
  /// in evaluation mode.
  bool training() const { return training_; }
  void set_training(bool on) { training_ = on; }

  Output forward(const Mat& x, Cache* c, Rng* rng = nullptr) const {
    const Ctx ctx{training_ && c != nullptr, rng};
    if (auto* n = std::get_if<ConvTokNet>(&net_)) {
      if (!c) return n->forward(x, nullptr, ctx);
      if (!std::holds_alternative<ConvTokNet::Cache>(*c)) *c = ConvTokNet::Cache{};
      return n->forward(x, &std::get<ConvTokNet::Cache>(*c), ctx);
    }
    const auto& m = std::get<MMKNet>(net_);
    if (!c) return m.forward(x, nullptr, ctx);
    if (!std::holds_alternative<MMKNet::Cache>(*c)) *c = MMKNet::Cache{};
    return m.forward(x, &std::get<MMKNet::Cache>(*c), ctx);
  }

  /// Inference pass: no cache, no dropout, no mutation.
  Output infer(const Mat& x) const { return forward(x, nullptr); }

  Mat backward(const Cache& c, const Vec& dlogits, const Vec* dfeatures = nullptr) {
    if (auto* n = std::get_if<ConvTokNet>(&net_)) return n->backward(std::get<ConvTokNet::Cache>(c), dlogits, dfeatures);
    return std::get<MMKNet>(net_).backward(std::get<MMKNet::Cache>(c), dlogits, dfeatures);
  }

  ParamRefs params() {
    ParamRefs out;
    std::visit([&](auto& n) { n.params(out); }, net_);
    return out;
  }
  ConstParamRefs params() const {
    ConstParamRefs out;
    std::visit([&](const auto& n) { n.params(out); }, net_);
    return out;
  }

  void zero_grad() {
    for (Param* p : params()) p->zero_grad();
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Param* p : params()) n += static_cast<std::size_t>(p->size());
    return n;
  }

  std::uint64_t hash() const { return hash_params(params()); }

  /// Width of the pooled penultimate feature vector.
  int feature_dim() const {
    if (cfg_.kind == BackboneKind::convtok) return cfg_.tokenizer.token_dim;
    return cfg_.mmk.hidden_dim > 0 ? cfg_.mmk.hidden_dim : cfg_.mmk.block_channels();
  }

  ConvTokNet* convtok() { return std::get_if<ConvTokNet>(&net_); }
  MMKNet* mmk() { return std::get_if<MMKNet>(&net_); }
  const ConvTokNet* convtok() const { return std::get_if<ConvTokNet>(&net_); }
  const MMKNet* mmk() const { return std::get_if<MMKNet>(&net_); }

 private:
  ModelConfig cfg_;
  std::variant<ConvTokNet, MMKNet> net_;
  bool training_ = false;
};

/// Softmax cross-entropy on one sample. Writes dL/dlogits into *dlogits.
inline double cross_entropy(const Vec& logits, int label, Vec* dlogits = nullptr) {
  require(label >= 0 && label < logits.size(),
          "cross_entropy: label " + std::to_string(label) + " outside [0, " + std::to_string(logits.size()) + ")");
  const double loss = log_sum_exp(logits) - logits(label);
  if (dlogits) {
    *dlogits = softmax(logits);
    (*dlogits)(label) -= 1.0;
  }
  return loss;
}

inline int argmax(const Vec& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

}  // namespace lmsd::nn
