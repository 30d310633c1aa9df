#pragma once

#include "lmsd/dataio/sample.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

namespace lmsd::dataio {

struct FoldPlan {
  int k = 5;
  std::uint64_t seed = 0;
  std::map<std::string, int> assignments;  // flight_id -> fold

  std::vector<std::string> test_ids(int fold) const {
    std::vector<std::string> out;
    for (const auto& [id, f] : assignments)
      if (f == fold) out.push_back(id);
    return out;
  }
  std::vector<std::string> train_ids(int fold) const {
    std::vector<std::string> out;
    for (const auto& [id, f] : assignments)
      if (f != fold) out.push_back(id);
    return out;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write fold plan " + path.string());
    out << "# k=" << k << " seed=" << seed << "\n";
    out << "flight_id,fold_index\n";
    for (const auto& [id, f] : assignments) out << id << ',' << f << "\n";
  }

  static FoldPlan load(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open fold plan " + path.string());
    FoldPlan p;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line[0] == '#') {
        unsigned long long seed = 0;
        if (std::sscanf(line.c_str(), "# k=%d seed=%llu", &p.k, &seed) == 2) p.seed = seed;
        continue;
      }
      if (line.rfind("flight_id,", 0) == 0) continue;
      const auto comma = line.rfind(',');
      require(comma != std::string::npos, "malformed fold plan line: " + line);
      p.assignments[line.substr(0, comma)] = std::stoi(line.substr(comma + 1));
    }
    return p;
  }
};

/// Stratified k-fold over the (N+1)-way diagnosis label. Each class is
/// shuffled with the seed and dealt round-robin; the dealing position carries
/// over between classes so small classes land on different folds.
inline FoldPlan stratified_kfold(const LabeledDataset& ds, int k = 5, std::uint64_t seed = 0) {
  require(k >= 2, "stratified_kfold: k must be >= 2");
  require(static_cast<std::size_t>(k) <= ds.size(),
          "stratified_kfold: k=" + std::to_string(k) + " exceeds dataset size " + std::to_string(ds.size()));
  std::map<int, std::vector<std::string>> by_class;
  for (const auto& s : ds.samples) by_class[s.diagnosis_label()].push_back(s.flight_id);

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  Rng rng(seed);
  int cursor = 0;
  for (auto& [label, ids] : by_class) {
    std::sort(ids.begin(), ids.end());
    std::shuffle(ids.begin(), ids.end(), rng);
    for (const auto& id : ids) {
      plan.assignments[id] = cursor;
      cursor = (cursor + 1) % k;
    }
  }
  return plan;
}

}  // namespace lmsd::dataio
