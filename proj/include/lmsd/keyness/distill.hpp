#pragma once
// Distillation of the keyness layer. The student is the frozen teacher with
// the keyness layer in front of it; only the keyness encoder trains. The
// objective is KL(softmax(F_T/T) || softmax(F_S/T)) on pooled penultimate
// features plus cross-entropy of the student logits against hard labels.

#include "lmsd/keyness/kel.hpp"
#include "lmsd/nn/checkpoint.hpp"
#include "lmsd/nn/model.hpp"
#include "lmsd/training/optim.hpp"
#include "lmsd/training/trainer.hpp"

#include <nlohmann/json.hpp>

#include <iostream>

namespace lmsd::keyness {

/// KL(softmax(f_t/T) || softmax(f_s/T)). Writes the gradient w.r.t. f_s,
/// (softmax(f_s/T) - softmax(f_t/T)) / T, into *dfs.
inline double kl_divergence(const Vec& f_t, const Vec& f_s, double T, Vec* dfs = nullptr) {
  require(f_t.size() == f_s.size(), "kl: feature length mismatch");
  require(T > 0.0, "kl: temperature must be > 0");
  const Vec a = f_t / T, b = f_s / T;
  const Vec log_p = a.array() - log_sum_exp(a);
  const Vec log_q = b.array() - log_sum_exp(b);
  const Vec p = log_p.array().exp();
  const double kl = (p.array() * (log_p - log_q).array()).sum();
  if (dfs) *dfs = (log_q.array().exp() - p.array()) / T;
  return std::max(kl, 0.0);  // clamps roundoff just below zero
}

struct DistillReport {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_kl;
  double fidelity = 0.0;  // student/teacher top-1 agreement on held-out flights
  std::size_t holdout_size = 0;
  std::size_t train_size = 0;
  std::string teacher_hash_before;
  std::string teacher_hash_after;

  nlohmann::json to_json() const {
    return {{"epoch_loss", epoch_loss},           {"epoch_kl", epoch_kl},
            {"fidelity", fidelity},               {"holdout_size", holdout_size},
            {"train_size", train_size},           {"teacher_hash_before", teacher_hash_before},
            {"teacher_hash_after", teacher_hash_after}};
  }
};

/// Student prediction for one flight: the frozen backbone applied to x_kw.
inline nn::Output student_infer(const nn::Model& backbone, const KelEncoder& kel, const Mat& x) {
  return backbone.infer(apply_keyness(x, kel.forward(x), kel.config().stride));
}

/// Trains `kel` in place against `teacher`. The teacher must be in evaluation
/// mode and is never written to.
inline DistillReport distill_train(const nn::Model& teacher, KelEncoder& kel, const dataio::LabeledDataset& data,
                                   training::Stage stage, dataio::AccessAudit* audit = nullptr, bool echo = false) {
  require(!teacher.training(), "distill: teacher must be in evaluation mode");
  const KelConfig& cfg = kel.config();
  cfg.validate();
  require(kel.input_dim() == teacher.config().input_dim, "distill: keyness layer and teacher disagree on D");
  require(!data.empty(), "distill: empty dataset");

  DistillReport rep;
  rep.teacher_hash_before = hex64(teacher.hash());
  auto [train, held] = training::stratified_split(data, stage, 1.0 - cfg.holdout, cfg.seed);
  require(!train.empty() && !held.empty(), "distill: holdout split left an empty side");
  rep.train_size = train.size();
  rep.holdout_size = held.size();

  // teacher features are fixed; compute them once
  std::vector<Vec> f_t;
  f_t.reserve(train.size());
  for (const auto& s : train.samples) f_t.push_back(teacher.infer(s.values).features);

  nn::Model student = teacher;  // frozen copy; its gradients are discarded
  student.set_training(false);
  auto kp = kel.params();
  for (Param* p : kp) p->zero_grad();
  training::Adam opt(kp, {cfg.lr});
  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 7);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  nn::Model::Cache sc;
  KelEncoder::Cache kc;

  for (int epoch = 1; epoch <= cfg.distill_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, kl_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t k = b; k < e; ++k) {
        const std::size_t i = order[k];
        const auto& s = train.samples[i];
        if (audit) audit->record(dataio::AccessPurpose::distill, s.source_id);
        const Vec w = kel.forward(s.values, &kc);
        const Mat xkw = apply_keyness(s.values, w, cfg.stride);
        const auto out = student.forward(xkw, &sc);
        Vec dfeat, dlogits;
        const double kl = kl_divergence(f_t[i], out.features, cfg.temperature, &dfeat);
        const double ce = nn::cross_entropy(out.logits, training::stage_label(s, stage), &dlogits);
        if (!std::isfinite(kl + ce))
          throw Error("distill: divergent loss at epoch " + std::to_string(epoch) + " on flight " + s.flight_id);
        loss_sum += kl + ce;
        kl_sum += kl;
        const Mat dxkw = student.backward(sc, dlogits, &dfeat);
        kel.backward(kc, dxkw, s.values);
      }
      opt.step(1.0 / static_cast<double>(e - b));
    }
    student.zero_grad();
    rep.epoch_loss.push_back(loss_sum / static_cast<double>(train.size()));
    rep.epoch_kl.push_back(kl_sum / static_cast<double>(train.size()));
    if (echo)
      std::cerr << nlohmann::json{{"stage", "kel"}, {"epoch", epoch}, {"loss", rep.epoch_loss.back()},
                                  {"kl", rep.epoch_kl.back()}}.dump()
                << "\n";
  }

  int agree = 0;
  for (const auto& s : held.samples) {
    if (audit) audit->record(dataio::AccessPurpose::validate, s.source_id);
    agree += nn::argmax(teacher.infer(s.values).logits) == nn::argmax(student_infer(teacher, kel, s.values).logits);
  }
  rep.fidelity = static_cast<double>(agree) / static_cast<double>(held.size());
  rep.teacher_hash_after = hex64(teacher.hash());
  require(rep.teacher_hash_before == rep.teacher_hash_after, "distill: teacher parameters changed");
  return rep;
}

inline void save_kel(const std::filesystem::path& path, const KelEncoder& kel, training::Stage stage) {
  nlohmann::json j{{"kind", "kel"}, {"stage", training::to_string(stage)}, {"input_dim", kel.input_dim()},
                   {"kel", kel.config().to_json()}};
  nn::save_tensors(path, j, kel.params());
}

inline KelEncoder load_kel(const std::filesystem::path& path) {
  const auto tf = nn::load_tensors(path);
  if (tf.config.value("kind", std::string()) != "kel")
    throw nn::CheckpointError(path.string() + ": not a keyness checkpoint");
  KelEncoder kel(tf.config.at("input_dim").get<int>(), KelConfig::from_json(tf.config.at("kel")));
  nn::assign_tensors(path.string(), tf, kel.params());
  return kel;
}

}  // namespace lmsd::keyness
