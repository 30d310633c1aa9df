#pragma once
// Cosine similarity of evaluated flights to the healthy training centroid.

#include "lmsd/core/tensor.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>

namespace lmsd::metrics {

/// 0 when either vector has zero norm.
inline double cosine(const Vec& a, const Vec& b) {
  require(a.size() == b.size(), "cosine: length mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

inline Vec centroid(const std::vector<Vec>& vs) {
  require(!vs.empty(), "centroid: no vectors");
  Vec c = Vec::Zero(vs.front().size());
  for (const auto& v : vs) c += v;
  return c / static_cast<double>(vs.size());
}

struct GroupStats {
  int n = 0;
  double mean = 0.0;
  double std = 0.0;  // population
};

enum class SimilarityGroup { true_healthy_correct, false_negative, false_positive };

inline const char* to_string(SimilarityGroup g) {
  switch (g) {
    case SimilarityGroup::true_healthy_correct: return "true_healthy_correct";
    case SimilarityGroup::false_negative: return "false_negative";
    default: return "false_positive";
  }
}

struct SimilarityReport {
  std::map<SimilarityGroup, std::optional<GroupStats>> groups;

  nlohmann::json to_json() const {
    nlohmann::json j;
    for (const auto& [g, s] : groups)
      j[to_string(g)] = s ? nlohmann::json{{"n", s->n}, {"mean", s->mean}, {"std", s->std}} : nlohmann::json(nullptr);
    return j;
  }
};

/// Labels are (N+1)-way with 0 = healthy. Flights that fall in no group
/// (correct or cross-fault predictions on faults) are ignored. An empty group
/// is reported as absent.
inline SimilarityReport healthy_center_similarity(const std::map<std::string, Vec>& features,
                                                  const std::map<std::string, int>& labels,
                                                  const std::map<std::string, int>& predictions,
                                                  const Vec& healthy_centroid) {
  std::map<SimilarityGroup, std::vector<double>> sims;
  for (const auto& [id, f] : features) {
    auto lt = labels.find(id);
    auto pt = predictions.find(id);
    require(lt != labels.end() && pt != predictions.end(), "similarity: flight " + id + " lacks a label or prediction");
    const int y = lt->second, p = pt->second;
    std::optional<SimilarityGroup> g;
    if (y == 0 && p == 0) g = SimilarityGroup::true_healthy_correct;
    if (y != 0 && p == 0) g = SimilarityGroup::false_negative;
    if (y == 0 && p != 0) g = SimilarityGroup::false_positive;
    if (g) sims[*g].push_back(cosine(f, healthy_centroid));
  }
  SimilarityReport r;
  for (auto g : {SimilarityGroup::true_healthy_correct, SimilarityGroup::false_negative, SimilarityGroup::false_positive}) {
    auto it = sims.find(g);
    if (it == sims.end() || it->second.empty()) {
      r.groups[g] = std::nullopt;
      continue;
    }
    GroupStats s;
    s.n = static_cast<int>(it->second.size());
    for (double v : it->second) s.mean += v;
    s.mean /= s.n;
    for (double v : it->second) s.std += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(s.std / s.n);
    r.groups[g] = s;
  }
  return r;
}

}  // namespace lmsd::metrics
