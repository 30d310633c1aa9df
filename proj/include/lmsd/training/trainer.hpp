#pragma once
// Decoupled stage training: the health stage fits the full fold-training set
// with binary labels, the fault stage fits the anomalous subset only. The two
// stages are separate optimization problems over disjoint parameter sets.

#include "lmsd/dataio/audit.hpp"
#include "lmsd/dataio/augment.hpp"
#include "lmsd/nn/checkpoint.hpp"
#include "lmsd/nn/model.hpp"
#include "lmsd/training/optim.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

namespace lmsd::training {

enum class Stage { ad, fc };

inline const char* to_string(Stage s) { return s == Stage::ad ? "ad" : "fc"; }

inline Stage parse_stage(const std::string& s) {
  if (s == "ad") return Stage::ad;
  if (s == "fc") return Stage::fc;
  throw Error("unknown stage '" + s + "' (expected ad or fc)");
}

struct TrainConfig {
  Stage stage = Stage::ad;
  double lr = 1e-4;
  int batch_size = 32;
  int max_epochs = 100;
  int early_stop_patience = 3;
  std::uint64_t seed = 0;
  double internal_split = 0.9;
  int k_da = 0;  // replication factor; 0 = augmentation off
  double beta1 = 0.9;
  double beta2 = 0.999;

  void validate() const {
    require(lr > 0.0 && std::isfinite(lr), "train: lr must be positive");
    require(batch_size >= 1, "train: batch_size must be >= 1");
    require(max_epochs >= 1, "train: max_epochs must be >= 1");
    require(early_stop_patience >= 1, "train: early_stop_patience must be >= 1");
    require(internal_split > 0.0 && internal_split < 1.0, "train: internal_split must be in (0, 1)");
    require(k_da >= 0, "train: k_da must be >= 0");
    if (stage == Stage::ad) require(k_da == 0, "train: augmentation must be off for the ad stage");
  }

  nlohmann::json to_json() const {
    return {{"stage", to_string(stage)},       {"lr", lr},
            {"batch_size", batch_size},        {"max_epochs", max_epochs},
            {"early_stop_patience", early_stop_patience}, {"seed", seed},
            {"internal_split", internal_split}, {"k_da", k_da},
            {"beta1", beta1},                  {"beta2", beta2}};
  }
  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.stage = parse_stage(j.value("stage", std::string("ad")));
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.seed = j.value("seed", c.seed);
    c.internal_split = j.value("internal_split", c.internal_split);
    c.k_da = j.value("k_da", c.k_da);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    return c;
  }
};

/// Stops once validation loss has failed to improve for `patience`
/// consecutive epochs. Epochs are 1-based.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) { require(patience >= 1, "early stop: patience must be >= 1"); }

  /// Returns true when training should stop after this epoch.
  bool update(double val_loss) {
    ++epoch_;
    if (val_loss < best_) {
      best_ = val_loss;
      best_epoch_ = epoch_;
      bad_ = 0;
      improved_ = true;
    } else {
      ++bad_;
      improved_ = false;
    }
    return bad_ >= patience_;
  }

  bool improved() const { return improved_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  int epoch_ = 0;
  int bad_ = 0;
  int best_epoch_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
  bool improved_ = false;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;

  nlohmann::json to_json(Stage s) const {
    return {{"stage", to_string(s)},   {"epoch", epoch},     {"train_loss", train_loss},
            {"val_loss", val_loss},     {"val_acc", val_acc}, {"seconds", seconds}};
  }
};

/// What the batch loader actually handed to the optimizer.
struct LoaderStats {
  long long samples_seen = 0;
  long long healthy_seen = 0;
  std::size_t distinct_flights = 0;
  std::size_t distinct_sources = 0;
};

struct TrainReport {
  Stage stage = Stage::ad;
  int epochs_run = 0;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<double> epoch_times;
  double total_time = 0.0;  // sum of epoch_times
  std::string checkpoint;
  LoaderStats loader;
  std::size_t train_size = 0;  // after augmentation
  std::size_t val_size = 0;

  nlohmann::json to_json() const {
    nlohmann::json j{{"stage", to_string(stage)},
                     {"epochs_run", epochs_run},
                     {"best_epoch", best_epoch},
                     {"best_val_loss", best_val_loss},
                     {"epoch_times", epoch_times},
                     {"total_time", total_time},
                     {"checkpoint", checkpoint},
                     {"train_size", train_size},
                     {"val_size", val_size},
                     {"loader",
                      {{"samples_seen", loader.samples_seen},
                       {"healthy_seen", loader.healthy_seen},
                       {"distinct_flights", loader.distinct_flights},
                       {"distinct_sources", loader.distinct_sources}}}};
    for (const auto& e : epochs) j["epochs"].push_back(e.to_json(stage));
    return j;
  }
  static TrainReport from_json(const nlohmann::json& j) {
    TrainReport r;
    r.stage = parse_stage(j.at("stage").get<std::string>());
    r.epochs_run = j.at("epochs_run").get<int>();
    r.best_epoch = j.at("best_epoch").get<int>();
    r.best_val_loss = j.at("best_val_loss").get<double>();
    r.epoch_times = j.at("epoch_times").get<std::vector<double>>();
    r.total_time = j.at("total_time").get<double>();
    r.checkpoint = j.value("checkpoint", std::string());
    r.train_size = j.value("train_size", std::size_t{0});
    r.val_size = j.value("val_size", std::size_t{0});
    const auto& l = j.at("loader");
    r.loader.samples_seen = l.at("samples_seen").get<long long>();
    r.loader.healthy_seen = l.at("healthy_seen").get<long long>();
    r.loader.distinct_flights = l.at("distinct_flights").get<std::size_t>();
    r.loader.distinct_sources = l.at("distinct_sources").get<std::size_t>();
    if (j.contains("epochs"))
      for (const auto& e : j["epochs"])
        r.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(), e.at("val_loss").get<double>(),
                            e.at("val_acc").get<double>(), e.at("seconds").get<double>()});
    return r;
  }
};

/// Target class of a sample for the given stage: ad -> {0, 1}, fc -> 0..N-1.
inline int stage_label(const dataio::FlightSample& s, Stage stage) {
  require(s.labeled(), "train: flight " + s.flight_id + " is unlabeled");
  if (stage == Stage::ad) return s.is_anomalous() ? 1 : 0;
  require(s.is_anomalous() && s.fc_label.has_value(),
          "train: fc stage received healthy flight " + s.flight_id + " (fc trains on the anomalous subset only)");
  return *s.fc_label - 1;
}

/// Stratified split by stage label: each class contributes round((1-frac)*n)
/// shuffled members to validation. Deterministic in seed.
inline std::pair<dataio::LabeledDataset, dataio::LabeledDataset> stratified_split(const dataio::LabeledDataset& ds,
                                                                                  Stage stage, double frac,
                                                                                  std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[stage_label(ds.samples[i], stage)].push_back(i);
  Rng rng(seed ^ 0x5eed5eedULL);
  std::vector<bool> to_val(ds.size(), false);
  for (auto& [c, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    // the epsilon keeps exact halves rounding up despite 1 - 0.9 < 0.1
    const auto n_val =
        static_cast<std::size_t>(std::llround((1.0 - frac) * static_cast<double>(idx.size()) + 1e-9));
    for (std::size_t k = 0; k < n_val && k < idx.size(); ++k) to_val[idx[k]] = true;
  }
  auto train = ds.empty_like(), val = ds.empty_like();
  for (std::size_t i = 0; i < ds.size(); ++i) (to_val[i] ? val : train).samples.push_back(ds.samples[i]);
  return {std::move(train), std::move(val)};
}

struct EvalResult {
  double loss = 0.0;
  double acc = 0.0;
};

/// Mean cross-entropy and accuracy in evaluation mode.
inline EvalResult evaluate_loss(const nn::Model& m, const dataio::LabeledDataset& ds, Stage stage,
                                dataio::AccessAudit* audit = nullptr) {
  require(!ds.empty(), "evaluate: empty dataset");
  EvalResult r;
  for (const auto& s : ds.samples) {
    if (audit) audit->record(dataio::AccessPurpose::validate, s.source_id);
    const int y = stage_label(s, stage);
    const Vec z = m.infer(s.values).logits;
    r.loss += nn::cross_entropy(z, y);
    r.acc += nn::argmax(z) == y ? 1.0 : 0.0;
  }
  r.loss /= static_cast<double>(ds.size());
  r.acc /= static_cast<double>(ds.size());
  return r;
}

struct TrainIO {
  std::filesystem::path checkpoint_dir;  // best.ckpt and last.ckpt; empty = none
  std::filesystem::path log_path;        // JSON line per epoch; empty = none
  dataio::AccessAudit* audit = nullptr;
  bool echo = false;                     // epoch lines also to stderr
};

namespace detail {
inline std::vector<Mat> snapshot(const nn::Model& m) {
  std::vector<Mat> out;
  for (const Param* p : m.params()) out.push_back(p->value);
  return out;
}
inline void restore(nn::Model& m, const std::vector<Mat>& vals) {
  auto ps = m.params();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = vals[i];
}
}  // namespace detail

/// Trains `model` in place and leaves it in evaluation mode holding the
/// parameters of the epoch with the lowest validation loss.
inline TrainReport train_stage(nn::Model& model, const dataio::LabeledDataset& data, const TrainConfig& cfg,
                               const TrainIO& io = {}) {
  cfg.validate();
  require(!data.empty(), std::string("train: empty training set for stage ") + to_string(cfg.stage));
  const int n_out = model.config().head_dim;
  for (const auto& s : data.samples) {
    const int y = stage_label(s, cfg.stage);
    require(y < n_out, "train: label " + std::to_string(y) + " of flight " + s.flight_id +
                           " exceeds head width " + std::to_string(n_out));
  }

  auto [train, val] = stratified_split(data, cfg.stage, cfg.internal_split, cfg.seed);
  require(!train.empty(), "train: internal split left no training flights");
  require(!val.empty(), "train: internal split left no validation flights");
  // Replication happens after the split so copies never leak into validation.
  if (cfg.k_da > 0) train = dataio::replicate_augment(train, cfg.k_da);

  TrainReport rep;
  rep.stage = cfg.stage;
  rep.train_size = train.size();
  rep.val_size = val.size();

  std::ofstream log;
  if (!io.log_path.empty()) {
    if (io.log_path.has_parent_path()) std::filesystem::create_directories(io.log_path.parent_path());
    log.open(io.log_path);
    require(static_cast<bool>(log), "cannot write training log " + io.log_path.string());
  }
  if (!io.checkpoint_dir.empty()) std::filesystem::create_directories(io.checkpoint_dir);

  model.set_training(true);
  auto ps = model.params();
  model.zero_grad();
  Adam opt(ps, {cfg.lr, cfg.beta1, cfg.beta2, 1e-8});
  Rng shuffle_rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);
  Rng dropout_rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 2);
  EarlyStopper stopper(cfg.early_stop_patience);
  std::vector<Mat> best = detail::snapshot(model);
  std::set<std::string> flights, sources;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  nn::Model::Cache cache;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    int batch = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size), ++batch) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      double batch_loss = 0.0;
      for (std::size_t k = b; k < e; ++k) {
        const auto& s = train.samples[order[k]];
        ++rep.loader.samples_seen;
        if (s.ad_label == dataio::AdLabel::healthy) ++rep.loader.healthy_seen;
        flights.insert(s.flight_id);
        sources.insert(s.source_id);
        if (io.audit) io.audit->record(dataio::AccessPurpose::train, s.source_id);
        const auto out = model.forward(s.values, &cache, &dropout_rng);
        Vec dz;
        const double l = nn::cross_entropy(out.logits, stage_label(s, cfg.stage), &dz);
        if (!std::isfinite(l)) {
          std::ostringstream msg;
          msg << "train: non-finite loss at epoch " << epoch << ", batch " << batch << " (lr=" << cfg.lr
              << ", stage " << to_string(cfg.stage) << ", flight " << s.flight_id << ")";
          throw Error(msg.str());
        }
        batch_loss += l;
        model.backward(cache, dz);
      }
      opt.step(1.0 / static_cast<double>(e - b));
      loss_sum += batch_loss;
    }
    model.set_training(false);
    const auto ev = evaluate_loss(model, val, cfg.stage, io.audit);
    const bool stop = stopper.update(ev.loss);
    if (stopper.improved()) best = detail::snapshot(model);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(train.size()), ev.loss, ev.acc,
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    rep.epochs.push_back(rec);
    rep.epoch_times.push_back(rec.seconds);
    if (!io.checkpoint_dir.empty()) {
      nn::save_model(io.checkpoint_dir / "last.ckpt", model);
      if (stopper.improved()) nn::save_model(io.checkpoint_dir / "best.ckpt", model);
    }
    const std::string line = rec.to_json(cfg.stage).dump();
    if (log) log << line << "\n" << std::flush;
    if (io.echo) std::cerr << line << "\n";
    model.set_training(true);
    if (stop) break;
  }

  model.set_training(false);
  detail::restore(model, best);
  rep.epochs_run = static_cast<int>(rep.epochs.size());
  rep.best_epoch = stopper.best_epoch();
  rep.best_val_loss = stopper.best();
  for (double t : rep.epoch_times) rep.total_time += t;
  rep.loader.distinct_flights = flights.size();
  rep.loader.distinct_sources = sources.size();
  if (!io.checkpoint_dir.empty()) rep.checkpoint = (io.checkpoint_dir / "best.ckpt").string();
  if (cfg.stage == Stage::fc)
    require(rep.loader.healthy_seen == 0, "train: fc loader consumed healthy flights");
  return rep;
}

struct StageTiming {
  double ttt = 0.0;  // seconds, summed over stages
  double et = 0.0;   // ttt / total epochs
};

/// Additive two-stage timing: TTT = TTT_ad + TTT_fc, ET = TTT / (epochs_ad + epochs_fc).
inline StageTiming lmsd_timing(const std::optional<TrainReport>& ad, const std::optional<TrainReport>& fc) {
  require(ad.has_value() && fc.has_value(), "lmsd_timing: both stage reports are required");
  const int epochs = ad->epochs_run + fc->epochs_run;
  require(epochs > 0, "lmsd_timing: zero total epochs");
  StageTiming t;
  t.ttt = ad->total_time + fc->total_time;
  t.et = t.ttt / static_cast<double>(epochs);
  return t;
}

}  // namespace lmsd::training
