#pragma once
// Command-line driver. Subcommands share one work directory:
//
//   processed/dataset.lmsd          resampled, unnormalized flights
//   processed/<fold>/               stats.json, audit.json
//   folds.csv                       fold plan
//   checkpoints/<fold>/<stage>/     best.ckpt, last.ckpt, train_log.jsonl, train_report.json
//   reports/<fold>/                 diagnosis.jsonl, metrics.json, confusion.csv
//   explain/<fold>/                 heatmaps, sidecars, keyness records
//   manifests/                      one file per invocation
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 missing
// prerequisite artifact. Failures print one JSON line on stderr.

#include "lmsd/cascade/report.hpp"
#include "lmsd/cli/config.hpp"
#include "lmsd/dataio/folds.hpp"
#include "lmsd/dataio/load.hpp"
#include "lmsd/dataio/normalize.hpp"
#include "lmsd/dataio/resample.hpp"
#include "lmsd/dataio/store.hpp"
#include "lmsd/dataio/synth.hpp"
#include "lmsd/keyness/distill.hpp"
#include "lmsd/keyness/heatmap.hpp"
#include "lmsd/keyness/retrieval.hpp"
#include "lmsd/metrics/report.hpp"
#include "lmsd/metrics/similarity.hpp"
#include "lmsd/metrics/stability.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace lmsd::cli {

namespace fs = std::filesystem;

class UsageError : public Error {
 public:
  using Error::Error;
};

class MissingArtifact : public Error {
 public:
  explicit MissingArtifact(const fs::path& p, const std::string& hint)
      : Error("missing " + p.string() + " (" + hint + ")"), path_(p.string()) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct Workspace {
  fs::path root;
  fs::path processed_override;  // stability rounds share the parent's dataset

  fs::path dataset() const { return processed_override.empty() ? root / "processed" / "dataset.lmsd" : processed_override; }
  fs::path preprocess_report() const { return root / "processed" / "preprocess.json"; }
  fs::path fold_plan() const { return root / "folds.csv"; }
  fs::path fold_dir(int f) const { return root / "processed" / std::to_string(f); }
  fs::path stats(int f) const { return fold_dir(f) / "stats.json"; }
  fs::path audit(int f) const { return fold_dir(f) / "audit.json"; }
  fs::path ckpt_dir(int f, const std::string& name) const { return root / "checkpoints" / std::to_string(f) / name; }
  fs::path kel_ckpt(int f, const std::string& stage) const {
    return root / "checkpoints" / std::to_string(f) / ("kel_" + stage + ".ckpt");
  }
  fs::path reports(int f) const { return root / "reports" / std::to_string(f); }
  fs::path cv_report() const { return root / "reports" / "cv.json"; }
  fs::path explain(int f) const { return root / "explain" / std::to_string(f); }
  fs::path manifests() const { return root / "manifests"; }
};

inline void need(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw MissingArtifact(p, hint);
}

inline std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  Fnv1a h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return hex64(h.digest());
}

inline std::string utc_stamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

inline void write_json(const fs::path& p, const nlohmann::json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  require(static_cast<bool>(out), "cannot write " + p.string());
  out << j.dump(2) << "\n";
}

inline nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  require(static_cast<bool>(in), "cannot open " + p.string());
  return nlohmann::json::parse(in);
}

/// Shared state of one invocation.
class Context {
 public:
  Context(RunConfig cfg, std::ostream& out) : cfg_(std::move(cfg)), out_(out) {
    ws_.root = cfg_.paths.workdir;
  }

  const RunConfig& cfg() const { return cfg_; }
  RunConfig& cfg() { return cfg_; }
  const Workspace& ws() const { return ws_; }
  Workspace& ws() { return ws_; }
  bool verbose = false;

  void emit(const nlohmann::json& j) {
    std::lock_guard lock(mu_);
    out_ << j.dump() << "\n" << std::flush;
  }

  void artifact(const fs::path& p) {
    std::lock_guard lock(mu_);
    artifacts_.push_back(p);
  }

  const dataio::LabeledDataset& dataset() {
    std::lock_guard lock(mu_);
    if (!dataset_) {
      need(ws_.dataset(), "run `preprocess` first");
      dataset_ = std::make_shared<const dataio::LabeledDataset>(dataio::load_dataset_store(ws_.dataset()));
    }
    return *dataset_;
  }

  const dataio::FoldPlan& plan() {
    std::lock_guard lock(mu_);
    if (!plan_) {
      need(ws_.fold_plan(), "run `fold` first");
      plan_ = std::make_shared<const dataio::FoldPlan>(dataio::FoldPlan::load(ws_.fold_plan()));
    }
    return *plan_;
  }

  void reset_plan() {
    std::lock_guard lock(mu_);
    plan_.reset();
  }

  /// Config snapshot, seeds and artifact hashes for this invocation.
  void write_manifest(const std::string& command, const std::vector<std::string>& argv, double seconds) {
    nlohmann::json j;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = cfg_.to_json();
    j["config_hash"] = hex64(cfg_.hash());
    j["seed"] = cfg_.seed;
    j["code_version"] = LMSD_VERSION;
    j["wall_seconds"] = seconds;
    j["artifacts"] = nlohmann::json::object();
    for (const auto& p : artifacts_)
      if (fs::is_regular_file(p))
        j["artifacts"][p.lexically_relative(ws_.root).string()] = {{"bytes", fs::file_size(p)}, {"fnv1a64", file_hash(p)}};
    const fs::path dir = ws_.manifests();
    fs::create_directories(dir);
    fs::path path = dir / (utc_stamp() + "_" + command + ".json");
    for (int n = 1; fs::exists(path); ++n) path = dir / (utc_stamp() + "_" + command + "_" + std::to_string(n) + ".json");
    write_json(path, j);
  }

 private:
  RunConfig cfg_;
  Workspace ws_;
  std::ostream& out_;
  std::mutex mu_;
  std::vector<fs::path> artifacts_;
  std::shared_ptr<const dataio::LabeledDataset> dataset_;
  std::shared_ptr<const dataio::FoldPlan> plan_;
};

// ---------------------------------------------------------------- audit I/O

inline void merge_audit(const fs::path& path, const dataio::AccessAudit& audit) {
  std::map<std::string, std::set<std::string>> all;
  if (fs::exists(path)) {
    const auto prior = read_json(path);
    for (const auto& [k, v] : prior.items()) all[k] = v.get<std::set<std::string>>();
  }
  for (const auto& [k, v] : audit.snapshot()) all[k].insert(v.begin(), v.end());
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : all) j[k] = v;
  write_json(path, j);
}

/// Entries of the fold audit that touched that fold's test flights for any
/// fitting purpose.
inline std::vector<std::string> audit_violations(const fs::path& path, const std::vector<std::string>& test_ids) {
  if (!fs::exists(path)) return {};
  const std::set<std::string> test(test_ids.begin(), test_ids.end());
  std::vector<std::string> out;
  const auto audit = read_json(path);
  for (const auto& [purpose, ids] : audit.items()) {
    if (purpose == "evaluate") continue;
    for (const auto& id : ids)
      if (test.count(id.get<std::string>())) out.push_back(purpose + ":" + id.get<std::string>());
  }
  return out;
}

// ---------------------------------------------------------------- fold data

struct FoldData {
  dataio::LabeledDataset train;  // normalized
  dataio::LabeledDataset test;   // normalized
  dataio::NormStats stats;
};

/// Normalized train/test split of one fold. Statistics are fitted on the
/// training flights when absent and `fit` is set; otherwise they must exist.
inline FoldData fold_data(Context& ctx, int fold, bool fit, dataio::AccessAudit* audit) {
  const auto& ds = ctx.dataset();
  const auto& plan = ctx.plan();
  if (fold < 0 || fold >= plan.k)
    throw UsageError("--fold " + std::to_string(fold) + " outside 0.." + std::to_string(plan.k - 1));
  const auto train_raw = ds.select(plan.train_ids(fold));
  const auto test_raw = ds.select(plan.test_ids(fold));
  const fs::path sp = ctx.ws().stats(fold);
  FoldData fd;
  if (fs::exists(sp)) {
    fd.stats = dataio::NormStats::from_json(read_json(sp));
  } else {
    if (!fit) throw MissingArtifact(sp, "run `train --fold " + std::to_string(fold) + "` first");
    fd.stats = dataio::fit_norm_stats(train_raw, ctx.cfg().preprocess.epsilon, audit);
    write_json(sp, fd.stats.to_json());
    ctx.artifact(sp);
  }
  fd.train = dataio::apply_norm(train_raw, fd.stats);
  fd.test = dataio::apply_norm(test_raw, fd.stats);
  return fd;
}

// ---------------------------------------------------------------- stages

/// Which network a stage trains. The default pairs the health stage with the
/// health model and the fault stage with the fault model; the alternates are
/// the comparison models.
struct StageSpec {
  training::Stage stage;
  std::string arch;  // "convtok" or "mmk"
  bool lmsd = true;  // false: comparison model

  std::string dir_name() const { return lmsd ? training::to_string(stage) : std::string(training::to_string(stage)) + "_" + arch; }
};

inline StageSpec stage_spec(const RunConfig& cfg, training::Stage stage, const std::string& arch) {
  const nn::ModelConfig& primary = stage == training::Stage::ad ? cfg.health : cfg.fault;
  const std::string primary_arch = nn::to_string(primary.kind);
  if (arch.empty() || arch == primary_arch) return {stage, primary_arch, true};
  if (arch != "convtok" && arch != "mmk") throw UsageError("--arch must be convtok or mmk, got '" + arch + "'");
  const nn::ModelConfig& alt = stage == training::Stage::ad ? cfg.comparators.mmk_ad : cfg.comparators.convtok_fc;
  if (nn::to_string(alt.kind) != arch)
    throw UsageError("no comparison model of kind " + arch + " configured for stage " + training::to_string(stage));
  return {stage, arch, false};
}

inline nn::ModelConfig stage_model_config(const RunConfig& cfg, const StageSpec& sp, const dataio::LabeledDataset& ds,
                                          int fold) {
  const bool ad = sp.stage == training::Stage::ad;
  const nn::ModelConfig& base = sp.lmsd ? (ad ? cfg.health : cfg.fault)
                                        : (ad ? cfg.comparators.mmk_ad : cfg.comparators.convtok_fc);
  require(!ds.empty(), "no flights to size the model from");
  auto c = shaped(base, ds.samples.front().length(), ds.schema.size(), ad ? 2 : ds.n_fault_classes);
  c.init_seed = cfg.derived_seed(1000 + 10 * static_cast<std::uint64_t>(fold) + (ad ? 1 : 2) + (sp.lmsd ? 0 : 5));
  return c;
}

inline training::TrainReport train_fold_stage(Context& ctx, int fold, const StageSpec& sp) {
  dataio::AccessAudit audit;
  const FoldData fd = fold_data(ctx, fold, true, &audit);
  const auto& cfg = ctx.cfg();
  training::TrainConfig tc = sp.stage == training::Stage::ad ? cfg.train_ad : cfg.train_fc;
  tc.seed = cfg.derived_seed(2000 + 10 * static_cast<std::uint64_t>(fold) + (sp.stage == training::Stage::ad ? 1 : 2));
  const dataio::LabeledDataset data =
      sp.stage == training::Stage::ad ? fd.train : dataio::anomalous_subset(fd.train);
  require(!data.empty(), "fold " + std::to_string(fold) + ": no training flights for stage " + training::to_string(sp.stage));
  nn::Model model(stage_model_config(cfg, sp, data, fold));
  const fs::path dir = ctx.ws().ckpt_dir(fold, sp.dir_name());
  training::TrainIO io{dir, dir / "train_log.jsonl", &audit, ctx.verbose};
  const auto rep = training::train_stage(model, data, tc, io);
  write_json(dir / "train_report.json", rep.to_json());
  merge_audit(ctx.ws().audit(fold), audit);
  for (const char* f : {"best.ckpt", "last.ckpt", "train_log.jsonl", "train_report.json"}) ctx.artifact(dir / f);
  ctx.artifact(ctx.ws().audit(fold));
  const auto leaks = audit_violations(ctx.ws().audit(fold), ctx.plan().test_ids(fold));
  if (!leaks.empty()) throw Error("fold " + std::to_string(fold) + ": test flights were read while fitting: " + leaks.front());
  return rep;
}

inline nn::Model load_stage(Context& ctx, int fold, const std::string& dir_name) {
  const fs::path p = ctx.ws().ckpt_dir(fold, dir_name) / "best.ckpt";
  need(p, "run `train --stage " + dir_name.substr(0, 2) + " --fold " + std::to_string(fold) + "` first");
  auto m = nn::load_model(p);
  m.set_training(false);
  return m;
}

// ---------------------------------------------------------------- evaluation

inline metrics::ConfusionMatrix stage_confusion(const nn::Model& m, const dataio::LabeledDataset& ds,
                                                training::Stage stage) {
  std::vector<std::string> names;
  if (stage == training::Stage::ad)
    names = {"healthy", "anomalous"};
  else
    names = ds.class_names;
  metrics::ConfusionMatrix cm(names);
  for (const auto& s : ds.samples) cm.add(training::stage_label(s, stage), nn::argmax(m.infer(s.values).logits));
  return cm;
}

inline std::vector<cascade::DiagnosisRecord> diagnose_fold(Context& ctx, int fold, int jobs) {
  dataio::AccessAudit audit;
  const FoldData fd = fold_data(ctx, fold, false, nullptr);
  const auto health = load_stage(ctx, fold, "ad");
  const auto fault = load_stage(ctx, fold, "fc");
  for (const auto& s : fd.test.samples) audit.record(dataio::AccessPurpose::evaluate, s.source_id);
  auto recs = cascade::diagnose_dataset(fd.test, health, fault, jobs);
  const fs::path p = ctx.ws().reports(fold) / "diagnosis.jsonl";
  cascade::write_records(p, recs);
  merge_audit(ctx.ws().audit(fold), audit);
  ctx.artifact(p);
  return recs;
}

inline metrics::MetricsReport evaluate_fold(Context& ctx, int fold) {
  const auto& cfg = ctx.cfg();
  const fs::path diag = ctx.ws().reports(fold) / "diagnosis.jsonl";
  need(diag, "run `diagnose --fold " + std::to_string(fold) + "` first");
  const auto recs = cascade::read_records(diag);
  const FoldData fd = fold_data(ctx, fold, false, nullptr);
  const auto health = load_stage(ctx, fold, "ad");
  const auto fault = load_stage(ctx, fold, "fc");

  std::vector<std::string> dnames{"healthy"};
  dnames.insert(dnames.end(), fd.test.class_names.begin(), fd.test.class_names.end());
  metrics::ConfusionMatrix dcm(dnames), adcm({"healthy", "anomalous"});
  std::map<std::string, int> labels, preds;
  for (const auto& r : recs) {
    require(r.true_label.has_value(), "evaluate: flight " + r.flight_id + " has no ground truth");
    dcm.add(*r.true_label, r.out.predicted());
    adcm.add(*r.true_label == 0 ? 0 : 1, r.out.routing.path == cascade::Path::healthy ? 0 : 1);
    labels[r.flight_id] = *r.true_label;
    preds[r.flight_id] = r.out.predicted();
  }
  metrics::MetricsReport rep;
  rep.provenance = {hex64(cfg.hash()), cfg.seed, fold, LMSD_VERSION};
  rep.evaluations["diagnosis"] = metrics::classification_metrics(dcm, metrics::Task::diagnosis, cfg.mcwpm);
  rep.evaluations["ad"] = metrics::classification_metrics(adcm, metrics::Task::ad);
  // the fault stage is scored in isolation on every truly anomalous test flight
  const auto anomalous = dataio::anomalous_subset(fd.test);
  if (!anomalous.empty())
    rep.evaluations["fc"] = metrics::classification_metrics(stage_confusion(fault, anomalous, training::Stage::fc),
                                                            metrics::Task::fc);

  const fs::path ad_rep = ctx.ws().ckpt_dir(fold, "ad") / "train_report.json";
  const fs::path fc_rep = ctx.ws().ckpt_dir(fold, "fc") / "train_report.json";
  need(ad_rep, "train the ad stage first");
  need(fc_rep, "train the fc stage first");
  const auto tr_ad = training::TrainReport::from_json(read_json(ad_rep));
  const auto tr_fc = training::TrainReport::from_json(read_json(fc_rep));
  const auto timing = training::lmsd_timing(tr_ad, tr_fc);
  metrics::EfficiencyReport eff;
  eff.ttt_s = timing.ttt;
  eff.et_s = timing.et;
  const std::size_t n32 = std::min<std::size_t>(32, fd.test.size());
  eff.it32 = metrics::time_runs([&] {
    for (std::size_t i = 0; i < n32; ++i) (void)cascade::diagnose(fd.test.samples[i].values, health, fault);
  });
  eff.msize_bytes = metrics::model_size_bytes(
      {ctx.ws().ckpt_dir(fold, "ad") / "best.ckpt", ctx.ws().ckpt_dir(fold, "fc") / "best.ckpt"});
  rep.efficiency = eff;

  // cosine similarity of health-model features to the healthy training centroid
  std::vector<Vec> healthy_feats;
  for (const auto& s : fd.train.samples)
    if (s.ad_label == dataio::AdLabel::healthy) healthy_feats.push_back(health.infer(s.values).features);
  if (!healthy_feats.empty()) {
    std::map<std::string, Vec> feats;
    for (const auto& s : fd.test.samples) feats[s.flight_id] = health.infer(s.values).features;
    rep.extra["healthy_center_similarity"] =
        metrics::healthy_center_similarity(feats, labels, preds, metrics::centroid(healthy_feats)).to_json();
  }
  rep.extra["loader"] = {{"ad", tr_ad.to_json().at("loader")}, {"fc", tr_fc.to_json().at("loader")}};
  rep.extra["epochs_run"] = {{"ad", tr_ad.epochs_run}, {"fc", tr_fc.epochs_run}};

  // comparison models, when trained: stage-isolated scores next to the
  // matching LMSD stage
  nlohmann::json paradox;
  const fs::path mmk_ad = ctx.ws().ckpt_dir(fold, "ad_mmk") / "best.ckpt";
  const fs::path ct_fc = ctx.ws().ckpt_dir(fold, "fc_convtok") / "best.ckpt";
  if (fs::exists(mmk_ad)) {
    const auto alt = load_stage(ctx, fold, "ad_mmk");
    const auto a = metrics::classification_metrics(stage_confusion(alt, fd.test, training::Stage::ad), metrics::Task::ad);
    const auto h = metrics::classification_metrics(stage_confusion(health, fd.test, training::Stage::ad), metrics::Task::ad);
    paradox["ad"] = {{"convtok_acc", h.acc}, {"mmk_acc", a.acc}, {"convtok_f1", h.macro_f1}, {"mmk_f1", a.macro_f1}};
  }
  if (fs::exists(ct_fc) && !anomalous.empty()) {
    const auto alt = load_stage(ctx, fold, "fc_convtok");
    const auto c = metrics::classification_metrics(stage_confusion(alt, anomalous, training::Stage::fc), metrics::Task::fc);
    const auto& m = rep.evaluations["fc"];
    paradox["fc"] = {{"mmk_acc", m.acc}, {"convtok_acc", c.acc}, {"mmk_f1", m.macro_f1}, {"convtok_f1", c.macro_f1}};
  }
  if (!paradox.is_null()) rep.extra["paradox"] = paradox;

  const fs::path out = ctx.ws().reports(fold);
  rep.write(out / "metrics.json");
  dcm.write_csv(out / "confusion.csv");
  ctx.artifact(out / "metrics.json");
  ctx.artifact(out / "confusion.csv");
  return rep;
}

// ---------------------------------------------------------------- commands

inline nlohmann::json cmd_synth(Context& ctx, const std::string& out_dir) {
  const auto ds = dataio::synth_generate(ctx.cfg().synth);
  const fs::path dir = out_dir.empty() ? ctx.ws().root / "synth" : fs::path(out_dir);
  dataio::write_dataset(dir, ds);
  ctx.artifact(dir / "labels.csv");
  return {{"command", "synth"}, {"out", dir.string()}, {"flights", ds.size()}, {"fault_classes", ds.n_fault_classes}};
}

inline nlohmann::json cmd_preprocess(Context& ctx) {
  const auto& cfg = ctx.cfg();
  require(!cfg.paths.data_root.empty(), "preprocess: no data root (set paths.data_root or pass --data)");
  need(cfg.paths.data_root, "data root");
  need(cfg.manifest_path(), "labels manifest");
  dataio::LoadOptions opt;
  opt.max_missing_rate = cfg.preprocess.max_missing_rate;
  opt.keep_unlabeled = false;
  dataio::Warnings warn;
  warn.echo = ctx.verbose;
  auto res = dataio::load_dataset(cfg.paths.data_root, cfg.channel_schema(), cfg.manifest_path(), opt, &warn);
  require(!res.dataset.empty(), "preprocess: no usable flights under " + cfg.paths.data_root);
  dataio::LabeledDataset ds = res.dataset.empty_like();
  ds.samples.reserve(res.dataset.size());
  for (const auto& s : res.dataset.samples) ds.samples.push_back(dataio::resample_cubic(s, cfg.preprocess.target_len));
  dataio::save_dataset(ctx.ws().dataset(), ds);
  nlohmann::json rep{{"command", "preprocess"},
                     {"flights", ds.size()},
                     {"target_len", cfg.preprocess.target_len},
                     {"fault_classes", ds.n_fault_classes},
                     {"class_names", ds.class_names},
                     {"excluded_missing", res.excluded_missing},
                     {"unreadable", res.unreadable},
                     {"unlisted", res.unlisted},
                     {"manifest_orphans", res.manifest_orphans},
                     {"warnings", warn.tally}};
  write_json(ctx.ws().preprocess_report(), rep);
  ctx.artifact(ctx.ws().dataset());
  ctx.artifact(ctx.ws().preprocess_report());
  return rep;
}

inline nlohmann::json cmd_fold(Context& ctx) {
  const auto& ds = ctx.dataset();
  const auto plan = dataio::stratified_kfold(ds, ctx.cfg().folds.k, ctx.cfg().folds.seed + ctx.cfg().seed);
  plan.save(ctx.ws().fold_plan());
  ctx.reset_plan();
  ctx.artifact(ctx.ws().fold_plan());
  nlohmann::json sizes = nlohmann::json::array();
  for (int f = 0; f < plan.k; ++f) sizes.push_back(plan.test_ids(f).size());
  return {{"command", "fold"}, {"k", plan.k}, {"seed", plan.seed}, {"test_sizes", sizes}};
}

inline nlohmann::json cmd_train(Context& ctx, const std::string& stage, int fold, const std::string& arch) {
  const auto sp = stage_spec(ctx.cfg(), training::parse_stage(stage), arch);
  const auto rep = train_fold_stage(ctx, fold, sp);
  return {{"command", "train"},         {"stage", stage},
          {"model", sp.dir_name()},     {"fold", fold},
          {"epochs_run", rep.epochs_run}, {"best_epoch", rep.best_epoch},
          {"best_val_loss", rep.best_val_loss}, {"total_time_s", rep.total_time},
          {"loader", rep.to_json().at("loader")}};
}

inline nlohmann::json cmd_diagnose(Context& ctx, int fold, int jobs) {
  const auto recs = diagnose_fold(ctx, fold, jobs);
  long long healthy = 0;
  for (const auto& r : recs) healthy += r.out.routing.path == cascade::Path::healthy;
  return {{"command", "diagnose"},
          {"fold", fold},
          {"flights", recs.size()},
          {"routed_healthy", healthy},
          {"routed_anomalous", static_cast<long long>(recs.size()) - healthy}};
}

inline nlohmann::json fold_summary(const metrics::MetricsReport& r) {
  nlohmann::json j;
  const auto& d = r.evaluations.at("diagnosis");
  const auto& a = r.evaluations.at("ad");
  j["diagnosis_acc"] = d.acc;
  j["diagnosis_macro_f1"] = d.macro_f1;
  j["diagnosis_weighted_f1"] = d.weighted_f1;
  j["mcwpm"] = *d.mcwpm;
  j["ad_acc"] = a.acc;
  j["ad_f1"] = a.macro_f1;
  j["ad_fnr"] = *a.fnr;
  if (auto it = r.evaluations.find("fc"); it != r.evaluations.end()) {
    j["fc_acc"] = it->second.acc;
    j["fc_f1"] = it->second.macro_f1;
  }
  if (r.efficiency) {
    j["ttt_s"] = r.efficiency->ttt_s;
    j["et_s"] = r.efficiency->et_s;
    j["it32_s"] = r.efficiency->it32.median_s;
    j["msize_bytes"] = r.efficiency->msize_bytes;
  }
  return j;
}

inline nlohmann::json cmd_evaluate(Context& ctx, int fold) {
  const auto rep = evaluate_fold(ctx, fold);
  nlohmann::json j{{"command", "evaluate"}, {"fold", fold}};
  j.update(fold_summary(rep));
  return j;
}

/// Fold whose test set holds `flight`.
inline int fold_of(Context& ctx, const std::string& flight) {
  const auto& a = ctx.plan().assignments;
  auto it = a.find(flight);
  if (it == a.end()) throw Error("explain: flight '" + flight + "' is not in the fold plan");
  return it->second;
}

inline nlohmann::json cmd_explain(Context& ctx, const std::string& stage_name, const std::string& flight, int fold,
                                  const std::vector<std::string>& channels, int k_baselines) {
  const auto stage = training::parse_stage(stage_name);
  if (fold < 0) fold = fold_of(ctx, flight);
  dataio::AccessAudit audit;
  const FoldData fd = fold_data(ctx, fold, false, nullptr);
  const auto teacher = load_stage(ctx, fold, stage_name);

  const dataio::FlightSample* target = nullptr;
  for (const auto* set : {&fd.test, &fd.train})
    for (const auto& s : set->samples)
      if (s.flight_id == flight) target = &s;
  if (!target) throw Error("explain: flight '" + flight + "' not found in the processed dataset");

  const fs::path kp = ctx.ws().kel_ckpt(fold, stage_name);
  const fs::path kr = kp.parent_path() / ("kel_" + stage_name + ".json");
  keyness::KelEncoder kel = [&] {
    if (fs::exists(kp)) return keyness::load_kel(kp);
    auto kc = ctx.cfg().kel;
    kc.seed = ctx.cfg().derived_seed(3000 + 10 * static_cast<std::uint64_t>(fold) + (stage == training::Stage::ad ? 1 : 2));
    keyness::KelEncoder k(fd.train.schema.size(), kc, kc.seed);
    const auto data = stage == training::Stage::ad ? fd.train : dataio::anomalous_subset(fd.train);
    const auto drep = keyness::distill_train(teacher, k, data, stage, &audit, ctx.verbose);
    keyness::save_kel(kp, k, stage);
    write_json(kr, drep.to_json());
    merge_audit(ctx.ws().audit(fold), audit);
    ctx.artifact(kp);
    ctx.artifact(kr);
    return k;
  }();

  keyness::KeynessRecord rec;
  rec.flight_id = flight;
  rec.stage = stage_name;
  rec.length = target->length();
  rec.stride = kel.config().stride;
  rec.w_k = kel.forward(target->values);
  dataio::Warnings warn;
  const auto pool = keyness::build_healthy_index(teacher, fd.train);
  std::map<std::string, const dataio::FlightSample*> by_id;
  for (const auto& s : fd.train.samples) by_id[s.flight_id] = &s;
  if (pool.size() > 0) rec.baselines = keyness::retrieve_baselines(teacher.infer(target->values).features, pool, k_baselines, &warn);
  const dataio::FlightSample* baseline = rec.baselines.empty() ? nullptr : by_id.at(rec.baselines.front().flight_id);

  const auto names = channels.empty() ? fd.train.schema.names() : channels;
  const auto paths = keyness::export_heatmap(rec, *target, baseline, names, fd.train.schema, ctx.ws().explain(fold));
  nlohmann::json record = rec.to_json();
  record["fold"] = fold;
  record["teacher_prediction"] = nn::argmax(teacher.infer(target->values).logits);
  record["student_prediction"] = nn::argmax(keyness::student_infer(teacher, kel, target->values).logits);
  if (fs::exists(kr)) record["distillation"] = read_json(kr);
  record["warnings"] = warn.tally;
  const fs::path rp = ctx.ws().explain(fold) / (keyness::safe_name(flight) + "_" + stage_name + ".json");
  write_json(rp, record);
  for (const auto& p : {paths.image, paths.sidecar, rp}) ctx.artifact(p);
  return {{"command", "explain"},          {"fold", fold},
          {"flight", flight},              {"stage", stage_name},
          {"image", paths.image.string()}, {"sidecar", paths.sidecar.string()},
          {"record", rp.string()},
          {"fidelity", record.contains("distillation") ? record["distillation"]["fidelity"] : nlohmann::json(nullptr)}};
}

/// Runs every fold end to end and aggregates mean and std across folds.
inline nlohmann::json cmd_cv(Context& ctx, int jobs, bool paradox) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!fs::exists(ctx.ws().fold_plan())) cmd_fold(ctx);
  const int k = ctx.plan().k;
  std::vector<std::optional<metrics::MetricsReport>> reports(static_cast<std::size_t>(k));
  auto run_fold = [&](int f) {
    train_fold_stage(ctx, f, stage_spec(ctx.cfg(), training::Stage::ad, ""));
    train_fold_stage(ctx, f, stage_spec(ctx.cfg(), training::Stage::fc, ""));
    if (paradox) {
      train_fold_stage(ctx, f, stage_spec(ctx.cfg(), training::Stage::ad, nn::to_string(ctx.cfg().comparators.mmk_ad.kind)));
      train_fold_stage(ctx, f, stage_spec(ctx.cfg(), training::Stage::fc, nn::to_string(ctx.cfg().comparators.convtok_fc.kind)));
    }
    diagnose_fold(ctx, f, 1);
    reports[static_cast<std::size_t>(f)] = evaluate_fold(ctx, f);
    ctx.emit({{"command", "cv"}, {"fold", f}, {"done", true}});
  };
  jobs = std::clamp(jobs, 1, k);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(k));
  if (jobs == 1) {
    for (int f = 0; f < k; ++f) run_fold(f);
  } else {
    std::mutex mu;
    int next = 0;
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j)
      pool.emplace_back([&] {
        for (;;) {
          int f;
          {
            std::lock_guard lock(mu);
            if (next >= k) return;
            f = next++;
          }
          try {
            run_fold(f);
          } catch (...) {
            errors[static_cast<std::size_t>(f)] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  nlohmann::json agg;
  agg["folds"] = nlohmann::json::array();
  std::map<std::string, std::vector<double>> cols;
  std::size_t leaks = 0;
  for (int f = 0; f < k; ++f) {
    const auto s = fold_summary(*reports[static_cast<std::size_t>(f)]);
    agg["folds"].push_back(s);
    for (const auto& [key, v] : s.items()) cols[key].push_back(v.get<double>());
    leaks += audit_violations(ctx.ws().audit(f), ctx.plan().test_ids(f)).size();
  }
  for (const auto& [key, v] : cols) agg["aggregate"][key] = metrics::mean_std(v);
  if (paradox) {
    std::map<std::string, std::vector<double>> p;
    for (int f = 0; f < k; ++f) {
      const auto& ex = reports[static_cast<std::size_t>(f)]->extra;
      if (!ex.contains("paradox")) continue;
      for (const auto& [task, vals] : ex["paradox"].items())
        for (const auto& [key, v] : vals.items()) p[task + "_" + key].push_back(v.get<double>());
    }
    for (const auto& [key, v] : p) agg["paradox"][key] = metrics::mean_std(v);
  }
  agg["audit_violations"] = leaks;
  agg["provenance"] = metrics::Provenance{hex64(ctx.cfg().hash()), ctx.cfg().seed, std::nullopt, LMSD_VERSION}.to_json();
  agg["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(ctx.ws().cv_report(), agg);
  ctx.artifact(ctx.ws().cv_report());
  require(leaks == 0, "cv: test flights were read while fitting (see processed/<fold>/audit.json)");
  nlohmann::json out{{"command", "cv"}, {"folds", k}, {"report", ctx.ws().cv_report().string()}};
  for (const auto& [key, v] : agg["aggregate"].items()) out[key] = v["mean"];
  return out;
}

/// Repeats the full cross-validation `rounds` times with seeds seed..seed+R-1
/// and bins every flight by how often it was diagnosed correctly.
inline nlohmann::json cmd_stability(Context& ctx, int rounds, int jobs) {
  if (rounds < 1) throw UsageError("--rounds must be >= 1");
  need(ctx.ws().dataset(), "run `preprocess` first");
  std::map<std::string, std::vector<bool>> per_round;
  for (int r = 0; r < rounds; ++r) {
    RunConfig rc = ctx.cfg();
    rc.seed = ctx.cfg().seed + static_cast<std::uint64_t>(r);
    rc.paths.workdir = (ctx.ws().root / "stability" / ("round_" + std::to_string(r))).string();
    Context sub(rc, std::cout);
    sub.verbose = ctx.verbose;
    sub.ws().processed_override = ctx.ws().dataset();
    fs::create_directories(sub.ws().root);
    cmd_fold(sub);
    cmd_cv(sub, jobs, false);
    for (int f = 0; f < sub.plan().k; ++f)
      for (const auto& rec : cascade::read_records(sub.ws().reports(f) / "diagnosis.jsonl"))
        per_round[rec.flight_id].push_back(rec.true_label && *rec.true_label == rec.out.predicted());
  }
  const auto rep = metrics::stability_analysis(per_round);
  const fs::path p = ctx.ws().root / "reports" / "stability.json";
  write_json(p, rep.to_json());
  ctx.artifact(p);
  nlohmann::json out{{"command", "stability"}, {"rounds", rounds}, {"report", p.string()}};
  out["counts"] = rep.to_json()["counts"];
  return out;
}

// ---------------------------------------------------------------- entry

inline void print_error(std::ostream& err, const std::string& kind, const std::string& msg,
                        const std::string& path = "") {
  nlohmann::json j{{"error", kind}, {"message", msg}};
  if (!path.empty()) j["path"] = path;
  err << j.dump() << "\n";
}

/// args[0] is the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Two-stage flight diagnosis: anomaly detection routed into fault classification", "lmsd"};
  app.require_subcommand(1);
  std::string config_path, workdir, data_root, manifest;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  app.add_option("--config", config_path, "run configuration (JSON, schema_version 1)");
  app.add_option("--workdir", workdir, "work directory (overrides LMSD_WORKDIR)");
  app.add_option("--seed", seed, "global seed (overrides LMSD_SEED)");
  app.add_flag("-v,--verbose", verbose, "echo per-epoch progress to stderr");

  int fold = -1, jobs = 1, rounds = 3, k_baselines = 10;
  std::string stage, arch, flight, out_dir, channels_csv;
  bool paradox = false;

  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset as CSV flights plus labels.csv");
  synth->add_option("--out", out_dir, "output directory (default <workdir>/synth)");
  auto* pre = app.add_subcommand("preprocess", "ingest, resample and store the dataset");
  pre->add_option("--data", data_root, "directory of per-flight CSV files");
  pre->add_option("--manifest", manifest, "labels manifest (default <data>/labels.csv)");
  auto* fold_cmd = app.add_subcommand("fold", "write the stratified fold plan");
  auto* train = app.add_subcommand("train", "train one stage on one fold");
  train->add_option("--stage", stage, "ad or fc")->required()->check(CLI::IsMember({"ad", "fc"}));
  train->add_option("--fold", fold, "fold index")->required();
  train->add_option("--arch", arch, "convtok or mmk; a non-default choice trains the comparison model");
  auto* diag = app.add_subcommand("diagnose", "route and diagnose the test flights of one fold");
  diag->add_option("--fold", fold, "fold index")->required();
  diag->add_option("--jobs", jobs, "worker threads");
  auto* eval = app.add_subcommand("evaluate", "score one fold's diagnoses");
  eval->add_option("--fold", fold, "fold index")->required();
  auto* expl = app.add_subcommand("explain", "keyness heatmap for one flight");
  expl->add_option("--stage", stage, "ad or fc")->required()->check(CLI::IsMember({"ad", "fc"}));
  expl->add_option("--flight", flight, "flight id")->required();
  expl->add_option("--fold", fold, "fold whose models explain the flight (default: its test fold)");
  expl->add_option("--channels", channels_csv, "comma-separated channel names (default: all)");
  expl->add_option("--baselines", k_baselines, "healthy baselines to retrieve");
  auto* cv = app.add_subcommand("cv", "cross-validate every fold and aggregate");
  cv->add_option("--jobs", jobs, "folds trained in parallel");
  cv->add_flag("--paradox", paradox, "also train the comparison models for the architecture check");
  auto* stab = app.add_subcommand("stability", "repeat cv with shifted seeds and bin flights by consistency");
  stab->add_option("--rounds", rounds, "number of repeated cross-validations");
  stab->add_option("--jobs", jobs, "folds trained in parallel");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << app.help();
    print_error(err, "usage", e.what());
    return 2;
  }

  std::string command;
  for (auto* sc : app.get_subcommands()) command = sc->get_name();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      need(config_path, "config file");
      cfg = RunConfig::load(config_path);
    }
    cfg.apply_env();
    if (!workdir.empty()) cfg.paths.workdir = workdir;
    if (seed) cfg.seed = *seed;
    if (!data_root.empty()) cfg.paths.data_root = data_root;
    if (!manifest.empty()) cfg.paths.manifest = manifest;
    cfg.validate();
    Context ctx(cfg, out);
    ctx.verbose = verbose;
    fs::create_directories(ctx.ws().root);

    std::vector<std::string> channels;
    if (!channels_csv.empty()) {
      std::stringstream ss(channels_csv);
      for (std::string c; std::getline(ss, c, ',');)
        if (!c.empty()) channels.push_back(c);
    }

    nlohmann::json result;
    if (*synth) result = cmd_synth(ctx, out_dir);
    else if (*pre) result = cmd_preprocess(ctx);
    else if (*fold_cmd) result = cmd_fold(ctx);
    else if (*train) result = cmd_train(ctx, stage, fold, arch);
    else if (*diag) result = cmd_diagnose(ctx, fold, jobs);
    else if (*eval) result = cmd_evaluate(ctx, fold);
    else if (*expl) result = cmd_explain(ctx, stage, flight, fold, channels, k_baselines);
    else if (*cv) result = cmd_cv(ctx, jobs, paradox);
    else if (*stab) result = cmd_stability(ctx, rounds, jobs);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ctx.write_manifest(command, args, secs);
    result["seconds"] = secs;
    ctx.emit(result);
    return 0;
  } catch (const UsageError& e) {
    err << app.help();
    print_error(err, "usage", e.what());
    return 2;
  } catch (const MissingArtifact& e) {
    print_error(err, "missing_artifact", e.what(), e.path());
    return 3;
  } catch (const std::exception& e) {
    print_error(err, "runtime", e.what());
    return 1;
  }
}

inline int run(int argc, char** argv) {
  return run(std::vector<std::string>(argv, argv + argc));
}

}  // namespace lmsd::cli
