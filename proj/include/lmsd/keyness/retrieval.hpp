#pragma once
// Exact top-K healthy-baseline retrieval by cosine similarity over teacher
// penultimate features.

#include "lmsd/dataio/sample.hpp"
#include "lmsd/metrics/similarity.hpp"
#include "lmsd/nn/model.hpp"

#include <algorithm>

namespace lmsd::keyness {

struct FeatureIndex {
  std::vector<std::string> ids;
  std::vector<Vec> features;

  std::size_t size() const { return ids.size(); }

  void add(std::string id, Vec f) {
    require(features.empty() || f.size() == features.front().size(), "retrieval: feature width mismatch for " + id);
    ids.push_back(std::move(id));
    features.push_back(std::move(f));
  }
};

/// Index of the healthy flights of `ds` under `teacher`.
inline FeatureIndex build_healthy_index(const nn::Model& teacher, const dataio::LabeledDataset& ds) {
  FeatureIndex idx;
  for (const auto& s : ds.samples)
    if (s.ad_label == dataio::AdLabel::healthy) idx.add(s.flight_id, teacher.infer(s.values).features);
  return idx;
}

struct Neighbor {
  std::string flight_id;
  double similarity = 0.0;
};

/// Descending similarity, ties by flight_id ascending. K is truncated to the
/// pool size. A zero-norm vector scores 0 and is reported once per call.
inline std::vector<Neighbor> retrieve_baselines(const Vec& query, const FeatureIndex& pool, int K = 10,
                                                dataio::Warnings* warnings = nullptr) {
  require(pool.size() > 0, "retrieval: healthy pool is empty");
  require(K >= 1, "retrieval: K must be >= 1");
  bool zero = query.norm() == 0.0;
  std::vector<Neighbor> all;
  all.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool.features[i].norm() == 0.0) zero = true;
    all.push_back({pool.ids[i], metrics::cosine(query, pool.features[i])});
  }
  if (zero && warnings) warnings->add("zero_norm_feature", "cosine similarity with a zero vector defined as 0");
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(K), all.size());
  auto better = [](const Neighbor& a, const Neighbor& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.flight_id < b.flight_id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
  all.resize(k);
  return all;
}

}  // namespace lmsd::keyness
