#pragma once

#include "lmsd/dataio/audit.hpp"
#include "lmsd/dataio/sample.hpp"

#include <nlohmann/json.hpp>

namespace lmsd::dataio {

struct NormStats {
  Vec mean;
  Vec std;
  double epsilon = 1e-8;

  int dim() const { return static_cast<int>(mean.size()); }

  nlohmann::json to_json() const {
    return {{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
            {"std", std::vector<double>(std.data(), std.data() + std.size())},
            {"epsilon", epsilon}};
  }
  static NormStats from_json(const nlohmann::json& j) {
    NormStats s;
    auto m = j.at("mean").get<std::vector<double>>();
    auto sd = j.at("std").get<std::vector<double>>();
    require(m.size() == sd.size(), "norm stats: mean/std length mismatch");
    s.mean = Eigen::Map<Vec>(m.data(), static_cast<Eigen::Index>(m.size()));
    s.std = Eigen::Map<Vec>(sd.data(), static_cast<Eigen::Index>(sd.size()));
    s.epsilon = j.value("epsilon", 1e-8);
    return s;
  }
};

/// Pools every timestep of every training flight per channel. Channels a
/// flight never observed do not contribute. Reads are reported to the audit.
inline NormStats fit_norm_stats(const LabeledDataset& train, double epsilon = 1e-8, AccessAudit* audit = nullptr) {
  require(!train.empty(), "normalize: cannot fit statistics on an empty training set");
  const int D = train.schema.size();
  Vec sum = Vec::Zero(D), sumsq = Vec::Zero(D);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(D);
  // two passes for numerical stability: mean first, then centered squares
  for (const auto& s : train.samples) {
    if (audit) audit->record(AccessPurpose::fit_stats, s.source_id);
    require(s.values.allFinite(), "normalize: NaN in flight " + s.flight_id + " (run preprocessing first)");
    for (int d = 0; d < D; ++d) {
      if (std::find(s.void_channels.begin(), s.void_channels.end(), d) != s.void_channels.end()) continue;
      sum[d] += s.values.col(d).sum();
      count[d] += static_cast<double>(s.length());
    }
  }
  NormStats st;
  st.epsilon = epsilon;
  st.mean = Vec::Zero(D);
  for (int d = 0; d < D; ++d) st.mean[d] = count[d] > 0 ? sum[d] / count[d] : 0.0;
  for (const auto& s : train.samples) {
    for (int d = 0; d < D; ++d) {
      if (std::find(s.void_channels.begin(), s.void_channels.end(), d) != s.void_channels.end()) continue;
      sumsq[d] += (s.values.col(d).array() - st.mean[d]).square().sum();
    }
  }
  st.std = Vec::Zero(D);
  for (int d = 0; d < D; ++d) st.std[d] = count[d] > 0 ? std::sqrt(sumsq[d] / count[d]) : 0.0;
  return st;
}

inline FlightSample apply_norm(const FlightSample& s, const NormStats& st) {
  require(st.dim() == s.dim(), "normalize: stats dimension " + std::to_string(st.dim()) +
                                   " does not match flight " + s.flight_id);
  require(s.values.allFinite(), "normalize: NaN in flight " + s.flight_id + " (run preprocessing first)");
  FlightSample out = s;
  for (int d = 0; d < s.dim(); ++d) {
    const double denom = std::max(st.std[d], st.epsilon);
    out.values.col(d) = (s.values.col(d).array() - st.mean[d]) / denom;
  }
  for (int d : s.void_channels) out.values.col(d).setZero();
  return out;
}

inline LabeledDataset apply_norm(const LabeledDataset& ds, const NormStats& st) {
  LabeledDataset out = ds.empty_like();
  out.samples.reserve(ds.size());
  for (const auto& s : ds.samples) out.samples.push_back(apply_norm(s, st));
  return out;
}

enum class NormMode { fit, apply };

/// fit: compute stats from `data` and return it normalized; apply: use `stats`.
inline std::pair<LabeledDataset, NormStats> normalize(const LabeledDataset& data, const NormStats* stats, NormMode mode,
                                                      double epsilon = 1e-8, AccessAudit* audit = nullptr) {
  if (mode == NormMode::fit) {
    NormStats st = fit_norm_stats(data, epsilon, audit);
    return {apply_norm(data, st), st};
  }
  require(stats != nullptr, "normalize: apply mode requires fitted statistics");
  return {apply_norm(data, *stats), *stats};
}

}  // namespace lmsd::dataio
