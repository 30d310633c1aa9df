#pragma once
// Run configuration. One JSON file with a versioned schema; every field is
// optional and defaults to the full-scale configuration. Precedence is
// defaults < file < environment (LMSD_WORKDIR, LMSD_SEED) < command-line flags.

#include "lmsd/dataio/synth.hpp"
#include "lmsd/keyness/kel.hpp"
#include "lmsd/metrics/classification.hpp"
#include "lmsd/nn/config.hpp"
#include "lmsd/training/trainer.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

namespace lmsd::cli {

inline constexpr int kConfigSchemaVersion = 1;

struct Paths {
  std::string data_root;
  std::string manifest;  // empty: <data_root>/labels.csv
  std::string workdir = "work";
};

struct PreprocessConfig {
  int target_len = 2048;
  double max_missing_rate = 0.10;
  double epsilon = 1e-8;
};

struct FoldConfig {
  int k = 5;
  std::uint64_t seed = 0;
};

/// Models trained only for the architecture comparison and the size reference.
struct Comparators {
  nn::ModelConfig mmk_ad;      // MMK Net on the health task
  nn::ModelConfig convtok_fc;  // ConvTokMHSA on the fault task
  nn::ModelConfig e2e;         // end-to-end (N+1)-way ConvTokMHSA for the size comparison
};

struct RunConfig {
  Paths paths;
  std::string schema = "ngafid23";  // "ngafid23" or "synthetic"
  int synthetic_dim = 8;
  PreprocessConfig preprocess;
  FoldConfig folds;
  nn::ModelConfig health = nn::ModelConfig::lmsd_health();
  nn::ModelConfig fault = nn::ModelConfig::mmk_net();
  training::TrainConfig train_ad;
  training::TrainConfig train_fc;
  keyness::KelConfig kel;
  metrics::McwpmWeights mcwpm;
  Comparators comparators;
  dataio::SynthConfig synth;
  std::uint64_t seed = 0;

  RunConfig() {
    train_ad.stage = training::Stage::ad;
    train_fc.stage = training::Stage::fc;
    train_fc.k_da = 3;
    comparators.mmk_ad = nn::ModelConfig::mmk_net(2048, 23, 2);
    comparators.convtok_fc = nn::ModelConfig::convtok_fc();
    comparators.e2e = nn::ModelConfig::convtok_fc();
  }

  dataio::ChannelSchema channel_schema() const {
    if (schema == "ngafid23") return dataio::ChannelSchema::ngafid23();
    if (schema == "synthetic") return dataio::ChannelSchema::synthetic(synthetic_dim);
    throw Error("config: unknown schema '" + schema + "' (expected ngafid23 or synthetic)");
  }

  std::filesystem::path manifest_path() const {
    if (!paths.manifest.empty()) return paths.manifest;
    return std::filesystem::path(paths.data_root) / "labels.csv";
  }

  void validate() const {
    channel_schema();
    require(preprocess.target_len >= 2, "config: preprocess.target_len must be >= 2");
    require(preprocess.max_missing_rate > 0.0 && preprocess.max_missing_rate <= 1.0,
            "config: preprocess.max_missing_rate must be in (0, 1]");
    require(preprocess.epsilon > 0.0, "config: preprocess.epsilon must be > 0");
    require(folds.k >= 2, "config: folds.k must be >= 2");
    require(train_ad.stage == training::Stage::ad, "config: train.ad must have stage ad");
    require(train_fc.stage == training::Stage::fc, "config: train.fc must have stage fc");
    train_ad.validate();
    train_fc.validate();
    kel.validate();
    require(mcwpm.alpha >= 0.0 && mcwpm.beta >= 0.0, "config: mcwpm weights must be non-negative");
    synth.validate();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["paths"] = {{"data_root", paths.data_root}, {"manifest", paths.manifest}, {"workdir", paths.workdir}};
    j["schema"] = schema;
    j["synthetic_dim"] = synthetic_dim;
    j["preprocess"] = {{"target_len", preprocess.target_len},
                       {"max_missing_rate", preprocess.max_missing_rate},
                       {"epsilon", preprocess.epsilon}};
    j["folds"] = {{"k", folds.k}, {"seed", folds.seed}};
    j["models"] = {{"health", health.to_json()}, {"fault", fault.to_json()}};
    j["train"] = {{"ad", train_ad.to_json()}, {"fc", train_fc.to_json()}};
    j["kel"] = kel.to_json();
    j["metrics"] = {{"alpha", mcwpm.alpha}, {"beta", mcwpm.beta}};
    j["comparators"] = {{"mmk_ad", comparators.mmk_ad.to_json()},
                        {"convtok_fc", comparators.convtok_fc.to_json()},
                        {"e2e", comparators.e2e.to_json()}};
    j["synth"] = synth.to_json();
    j["seed"] = seed;
    return j;
  }

  /// Missing keys keep their defaults; unknown top-level keys are rejected so
  /// typos do not pass silently.
  static RunConfig from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {"schema_version", "paths",  "schema", "synthetic_dim", "preprocess",
                                                "folds",          "models", "train",  "kel",           "metrics",
                                                "comparators",    "synth",  "seed"};
    for (const auto& [k, v] : j.items())
      if (!known.count(k)) throw Error("config: unknown key '" + k + "'");
    const int version = j.value("schema_version", kConfigSchemaVersion);
    require(version == kConfigSchemaVersion,
            "config: schema_version " + std::to_string(version) + " is not supported (expected " +
                std::to_string(kConfigSchemaVersion) + ")");
    RunConfig c;
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      c.paths.data_root = p.value("data_root", c.paths.data_root);
      c.paths.manifest = p.value("manifest", c.paths.manifest);
      c.paths.workdir = p.value("workdir", c.paths.workdir);
    }
    c.schema = j.value("schema", c.schema);
    c.synthetic_dim = j.value("synthetic_dim", c.synthetic_dim);
    if (j.contains("preprocess")) {
      const auto& p = j["preprocess"];
      c.preprocess.target_len = p.value("target_len", c.preprocess.target_len);
      c.preprocess.max_missing_rate = p.value("max_missing_rate", c.preprocess.max_missing_rate);
      c.preprocess.epsilon = p.value("epsilon", c.preprocess.epsilon);
    }
    if (j.contains("folds")) {
      c.folds.k = j["folds"].value("k", c.folds.k);
      c.folds.seed = j["folds"].value("seed", c.folds.seed);
    }
    auto model = [](const nlohmann::json& parent, const char* key, nn::ModelConfig& dst) {
      if (!parent.contains(key)) return;
      nlohmann::json merged = dst.to_json();
      merged.merge_patch(parent.at(key));
      dst = nn::ModelConfig::from_json(merged);
    };
    if (j.contains("models")) {
      model(j["models"], "health", c.health);
      model(j["models"], "fault", c.fault);
    }
    if (j.contains("comparators")) {
      model(j["comparators"], "mmk_ad", c.comparators.mmk_ad);
      model(j["comparators"], "convtok_fc", c.comparators.convtok_fc);
      model(j["comparators"], "e2e", c.comparators.e2e);
    }
    auto train = [](const nlohmann::json& parent, const char* key, training::TrainConfig& dst) {
      if (!parent.contains(key)) return;
      nlohmann::json merged = dst.to_json();
      merged.merge_patch(parent.at(key));
      dst = training::TrainConfig::from_json(merged);
    };
    if (j.contains("train")) {
      train(j["train"], "ad", c.train_ad);
      train(j["train"], "fc", c.train_fc);
    }
    if (j.contains("kel")) {
      nlohmann::json merged = c.kel.to_json();
      merged.merge_patch(j["kel"]);
      c.kel = keyness::KelConfig::from_json(merged);
    }
    if (j.contains("metrics")) {
      c.mcwpm.alpha = j["metrics"].value("alpha", c.mcwpm.alpha);
      c.mcwpm.beta = j["metrics"].value("beta", c.mcwpm.beta);
    }
    if (j.contains("synth")) {
      nlohmann::json merged = c.synth.to_json();
      merged.merge_patch(j["synth"]);
      c.synth = dataio::SynthConfig::from_json(merged);
    }
    c.seed = j.value("seed", c.seed);
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot read config " + path.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error("config " + path.string() + ": " + e.what());
    }
    return from_json(j);
  }

  /// LMSD_WORKDIR and LMSD_SEED, when set, override the file.
  void apply_env() {
    if (const char* w = std::getenv("LMSD_WORKDIR"); w && *w) paths.workdir = w;
    if (const char* s = std::getenv("LMSD_SEED"); s && *s) {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(s, &end, 10);
      require(end && *end == '\0', std::string("LMSD_SEED is not an unsigned integer: ") + s);
      seed = v;
    }
  }

  /// The global seed feeds fold assignment, initialization and training
  /// order; each consumer derives its own stream from it.
  std::uint64_t derived_seed(std::uint64_t salt) const { return seed * 0x9E3779B97F4A7C15ULL + salt; }

  std::uint64_t hash() const {
    Fnv1a h;
    const std::string s = to_json().dump();
    h.update(s.data(), s.size());
    return h.digest();
  }
};

/// Fixes input and head shapes of a model config to the data it will see.
inline nn::ModelConfig shaped(nn::ModelConfig c, int L, int D, int head) {
  c.input_len = L;
  c.input_dim = D;
  c.head_dim = head;
  c.validate();
  return c;
}

}  // namespace lmsd::cli
