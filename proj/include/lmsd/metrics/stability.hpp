#pragma once
// Per-flight stability over repeated cross-validation rounds.

#include "lmsd/core/tensor.hpp"

#include <nlohmann/json.hpp>

#include <map>

namespace lmsd::metrics {

enum class Stability { always_correct, generally_correct, frequently_misclassified, always_misclassified };

inline const char* to_string(Stability s) {
  switch (s) {
    case Stability::always_correct: return "always_correctly_classified";
    case Stability::generally_correct: return "generally_correctly_classified";
    case Stability::frequently_misclassified: return "frequently_misclassified";
    default: return "always_misclassified";
  }
}

/// R rounds: R correct -> always; (R/2, R) -> generally; (0, R/2] -> frequently;
/// 0 -> never. Exactly half is binned as frequently misclassified.
inline Stability categorize(int correct, int rounds) {
  require(rounds >= 1 && correct >= 0 && correct <= rounds, "stability: correct count outside 0..rounds");
  if (correct == rounds) return Stability::always_correct;
  if (correct == 0) return Stability::always_misclassified;
  if (2 * correct > rounds) return Stability::generally_correct;
  return Stability::frequently_misclassified;
}

struct StabilityReport {
  int rounds = 0;
  std::map<std::string, Stability> category;
  std::map<Stability, int> counts;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["rounds"] = rounds;
    for (auto s : {Stability::always_correct, Stability::generally_correct, Stability::frequently_misclassified,
                   Stability::always_misclassified}) {
      auto it = counts.find(s);
      j["counts"][to_string(s)] = it == counts.end() ? 0 : it->second;
    }
    for (const auto& [id, s] : category) j["flights"][id] = to_string(s);
    return j;
  }
};

inline StabilityReport stability_analysis(const std::map<std::string, std::vector<bool>>& per_round) {
  require(!per_round.empty(), "stability: no flights");
  StabilityReport r;
  r.rounds = static_cast<int>(per_round.begin()->second.size());
  for (const auto& [id, v] : per_round) {
    require(static_cast<int>(v.size()) == r.rounds,
            "stability: flight " + id + " has " + std::to_string(v.size()) + " rounds, expected " +
                std::to_string(r.rounds));
    const int correct = static_cast<int>(std::count(v.begin(), v.end(), true));
    const Stability s = categorize(correct, r.rounds);
    r.category[id] = s;
    ++r.counts[s];
  }
  return r;
}

}  // namespace lmsd::metrics
