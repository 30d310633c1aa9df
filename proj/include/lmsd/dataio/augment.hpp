#pragma once

#include "lmsd/dataio/sample.hpp"

#include <algorithm>
#include <map>

namespace lmsd::dataio {

/// Target class size under proportional replication: min(k_da * n_c, n_max).
inline int replicated_size(int n_c, int n_max, int k_da) {
  return std::min(k_da * n_c, n_max);
}

/// Brings every class c to min(k_da * N_c, N_cmax) by cyclic verbatim copies
/// of its originals. Copies get ids "<source>#rep<r>" and keep source_id.
/// Classes are keyed by the diagnosis label (healthy counts as class 0).
inline LabeledDataset replicate_augment(const LabeledDataset& ds, int k_da = 3) {
  require(!ds.empty(), "replicate_augment: dataset has no classes");
  require(k_da >= 1, "replicate_augment: k_da must be >= 1");
  std::map<int, std::vector<const FlightSample*>> by_class;
  for (const auto& s : ds.samples) by_class[s.diagnosis_label()].push_back(&s);
  int n_max = 0;
  for (const auto& [c, members] : by_class) n_max = std::max(n_max, static_cast<int>(members.size()));

  LabeledDataset out = ds;
  for (const auto& [c, members] : by_class) {
    const int n_c = static_cast<int>(members.size());
    const int target = replicated_size(n_c, n_max, k_da);
    for (int i = 0; i < target - n_c; ++i) {
      const FlightSample& src = *members[static_cast<std::size_t>(i % n_c)];
      FlightSample copy = src;
      copy.source_id = src.source_id;
      copy.flight_id = src.flight_id + "#rep" + std::to_string(i / n_c + 1);
      out.samples.push_back(std::move(copy));
    }
  }
  return out;
}

/// Flights with ad_label = anomalous; fault labels and N preserved.
inline LabeledDataset anomalous_subset(const LabeledDataset& ds, Warnings* warnings = nullptr) {
  LabeledDataset out = ds.empty_like();
  for (const auto& s : ds.samples)
    if (s.is_anomalous()) out.samples.push_back(s);
  if (out.empty() && warnings) warnings->add("empty_subset", "anomalous subset is empty");
  return out;
}

}  // namespace lmsd::dataio
