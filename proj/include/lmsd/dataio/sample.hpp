#pragma once

#include "lmsd/core/tensor.hpp"
#include "lmsd/dataio/schema.hpp"

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

namespace lmsd::dataio {

enum class AdLabel { healthy = 0, anomalous = 1 };

using MissingMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One flight: L x D series sampled at 1 Hz plus its labels.
struct FlightSample {
  std::string flight_id;
  Mat values;                 // L x D
  MissingMask missing;        // same shape, true = originally missing
  std::optional<AdLabel> ad_label;
  std::optional<int> fc_label;  // 1..N
  std::optional<std::string> class_name;
  std::string source_id;      // original flight for replicated copies, else flight_id
  std::vector<int> void_channels;  // channels with no observation at all

  int length() const { return static_cast<int>(values.rows()); }
  int dim() const { return static_cast<int>(values.cols()); }
  bool labeled() const { return ad_label.has_value(); }
  bool is_anomalous() const { return ad_label == AdLabel::anomalous; }

  /// (N+1)-way diagnosis label: 0 = healthy, k = fault class k.
  int diagnosis_label() const {
    require(ad_label.has_value(), "flight " + flight_id + " is unlabeled");
    if (*ad_label == AdLabel::healthy) return 0;
    require(fc_label.has_value(), "anomalous flight " + flight_id + " has no fault class");
    return *fc_label;
  }

  void check_invariants(int schema_dim) const {
    require(dim() == schema_dim, "flight " + flight_id + ": D=" + std::to_string(dim()) +
                                     " does not match schema D=" + std::to_string(schema_dim));
    require(length() >= 2, "flight " + flight_id + ": needs at least 2 timesteps");
    if (fc_label) require(ad_label == AdLabel::anomalous, "flight " + flight_id + ": fault label on a healthy flight");
  }
};

/// Collects non-fatal conditions (skipped files, empty subsets) so callers
/// can surface the tallies.
struct Warnings {
  std::map<std::string, int> tally;
  std::vector<std::string> messages;
  bool echo = false;

  void add(const std::string& kind, const std::string& msg) {
    ++tally[kind];
    messages.push_back(kind + ": " + msg);
    if (echo) std::cerr << "warning: " << kind << ": " << msg << "\n";
  }
  int count(const std::string& kind) const {
    auto it = tally.find(kind);
    return it == tally.end() ? 0 : it->second;
  }
};

struct LabeledDataset {
  std::vector<FlightSample> samples;
  ChannelSchema schema;
  int n_fault_classes = 0;
  std::vector<std::string> class_names;  // size N, index k-1 = fault class k

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  void check_invariants() const {
    std::unordered_set<std::string> ids;
    for (const auto& s : samples) {
      s.check_invariants(schema.size());
      require(ids.insert(s.flight_id).second, "duplicate flight_id " + s.flight_id);
      if (s.fc_label)
        require(*s.fc_label >= 1 && *s.fc_label <= n_fault_classes,
                "flight " + s.flight_id + ": fault label out of range 1.." + std::to_string(n_fault_classes));
    }
  }

  /// Same schema and class list, no samples.
  LabeledDataset empty_like() const {
    LabeledDataset d;
    d.schema = schema;
    d.n_fault_classes = n_fault_classes;
    d.class_names = class_names;
    return d;
  }

  LabeledDataset select(const std::vector<std::string>& ids) const {
    std::map<std::string, const FlightSample*> by_id;
    for (const auto& s : samples) by_id[s.flight_id] = &s;
    LabeledDataset d = empty_like();
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      require(it != by_id.end(), "unknown flight_id " + id);
      d.samples.push_back(*it->second);
    }
    return d;
  }

  std::vector<std::string> flight_ids() const {
    std::vector<std::string> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.flight_id);
    return out;
  }

  std::string label_name(int diagnosis_label) const {
    if (diagnosis_label == 0) return "healthy";
    return class_names.at(static_cast<std::size_t>(diagnosis_label - 1));
  }
};

}  // namespace lmsd::dataio
