#pragma once
// Serialized metrics reports. Every report carries the provenance fields
// needed to reproduce it.

#include "lmsd/metrics/classification.hpp"
#include "lmsd/metrics/efficiency.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

#ifndef LMSD_VERSION
#define LMSD_VERSION "0.0.0"
#endif

namespace lmsd::metrics {

struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::optional<int> fold;
  std::string code_version = LMSD_VERSION;

  nlohmann::json to_json() const {
    return {{"config_hash", config_hash},
            {"seed", seed},
            {"fold", fold ? nlohmann::json(*fold) : nlohmann::json(nullptr)},
            {"code_version", code_version}};
  }
};

struct MetricsReport {
  Provenance provenance;
  std::map<std::string, ClassificationReport> evaluations;  // "ad", "fc", "diagnosis"
  std::optional<EfficiencyReport> efficiency;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["provenance"] = provenance.to_json();
    for (const auto& [k, r] : evaluations) j["evaluations"][k] = r.to_json();
    j["efficiency"] = efficiency ? efficiency->to_json() : nlohmann::json(nullptr);
    if (!extra.empty()) j["extra"] = extra;
    return j;
  }

  void write(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write " + path.string());
    out << to_json().dump(2) << "\n";
  }
};

/// Mean and population std of one scalar across folds.
inline nlohmann::json mean_std(const std::vector<double>& v) {
  require(!v.empty(), "mean_std: no values");
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {{"mean", m}, {"std", std::sqrt(s / static_cast<double>(v.size()))}, {"n", v.size()}};
}

}  // namespace lmsd::metrics
