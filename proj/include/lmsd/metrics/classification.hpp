#pragma once

#include "lmsd/metrics/confusion.hpp"

#include <nlohmann/json.hpp>

#include <optional>

namespace lmsd::metrics {

enum class Task { ad, fc, diagnosis };

inline const char* to_string(Task t) {
  switch (t) {
    case Task::ad: return "ad";
    case Task::fc: return "fc";
    default: return "diagnosis";
  }
}

struct ClassScores {
  std::string name;
  long long support = 0;
  long long predicted = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool in_macro = true;  // false when the class has no support and no predictions
};

struct ClassificationReport {
  Task task = Task::diagnosis;
  long long total = 0;
  double acc = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::optional<double> fnr;    // ad only
  std::optional<double> mcwpm;  // diagnosis only
  std::vector<ClassScores> per_class;

  nlohmann::json to_json() const {
    nlohmann::json j{{"task", to_string(task)}, {"total", total},           {"acc", acc},
                     {"macro_f1", macro_f1},     {"weighted_f1", weighted_f1}};
    j["fnr"] = fnr ? nlohmann::json(*fnr) : nlohmann::json(nullptr);
    j["mcwpm"] = mcwpm ? nlohmann::json(*mcwpm) : nlohmann::json(nullptr);
    for (const auto& c : per_class)
      j["per_class"].push_back({{"name", c.name},
                                {"support", c.support},
                                {"predicted", c.predicted},
                                {"precision", c.precision},
                                {"recall", c.recall},
                                {"f1", c.f1},
                                {"in_macro", c.in_macro}});
    return j;
  }
};

struct McwpmWeights {
  double alpha = 2.5;  // fault -> healthy
  double beta = 1.0;   // healthy -> fault
};

/// trace / (trace + alpha * sum_{i>=1} cm[i][0] + beta * sum_{j>=1} cm[0][j]).
/// Cross-fault confusions do not enter the denominator. 1.0 on a zero
/// denominator.
inline double mcwpm(const ConfusionMatrix& cm, McwpmWeights w = {}) {
  require(w.alpha >= 0.0 && w.beta >= 0.0, "mcwpm: penalty weights must be non-negative");
  require(cm.size() >= 2, "mcwpm: needs a healthy class plus at least one fault class");
  const double tp = static_cast<double>(cm.trace());
  double fn_health = 0.0, fp_health = 0.0;
  for (int i = 1; i < cm.size(); ++i) fn_health += static_cast<double>(cm.at(i, 0));
  for (int j = 1; j < cm.size(); ++j) fp_health += static_cast<double>(cm.at(0, j));
  const double denom = tp + w.alpha * fn_health + w.beta * fp_health;
  return denom == 0.0 ? 1.0 : tp / denom;
}

inline ClassificationReport classification_metrics(const ConfusionMatrix& cm, Task task, McwpmWeights w = {}) {
  const long long total = cm.total();
  require(total > 0, "metrics: empty confusion matrix");
  if (task == Task::ad) require(cm.size() == 2, "metrics: AD evaluation needs a 2x2 matrix");
  ClassificationReport r;
  r.task = task;
  r.total = total;
  r.acc = static_cast<double>(cm.trace()) / static_cast<double>(total);
  double macro = 0.0, weighted = 0.0;
  int n_macro = 0;
  for (int k = 0; k < cm.size(); ++k) {
    ClassScores c;
    c.name = cm.names()[static_cast<std::size_t>(k)];
    c.support = cm.row_sum(k);
    c.predicted = cm.col_sum(k);
    const double tp = static_cast<double>(cm.at(k, k));
    c.precision = c.predicted ? tp / static_cast<double>(c.predicted) : 0.0;
    c.recall = c.support ? tp / static_cast<double>(c.support) : 0.0;
    c.f1 = (c.precision + c.recall) > 0.0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
    c.in_macro = c.support > 0 || c.predicted > 0;
    if (c.in_macro) {
      macro += c.f1;
      ++n_macro;
    }
    weighted += c.f1 * static_cast<double>(c.support);
    r.per_class.push_back(c);
  }
  r.macro_f1 = n_macro ? macro / n_macro : 0.0;
  r.weighted_f1 = weighted / static_cast<double>(total);
  if (task == Task::ad) {
    const long long anomalous = cm.row_sum(1);
    r.fnr = anomalous ? static_cast<double>(cm.at(1, 0)) / static_cast<double>(anomalous) : 0.0;
  }
  if (task == Task::diagnosis) r.mcwpm = mcwpm(cm, w);
  return r;
}

}  // namespace lmsd::metrics
