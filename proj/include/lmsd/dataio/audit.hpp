#pragma once
// Records which flights each pipeline step read, so a run can prove that test
// flights never reached stats fitting or optimization.

#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

namespace lmsd::dataio {

enum class AccessPurpose { fit_stats, train, validate, distill, evaluate };

inline const char* to_string(AccessPurpose p) {
  switch (p) {
    case AccessPurpose::fit_stats: return "fit_stats";
    case AccessPurpose::train: return "train";
    case AccessPurpose::validate: return "validate";
    case AccessPurpose::distill: return "distill";
    case AccessPurpose::evaluate: return "evaluate";
  }
  return "?";
}

class AccessAudit {
 public:
  void record(AccessPurpose purpose, const std::string& flight_id) {
    std::lock_guard lock(mu_);
    reads_[purpose].insert(flight_id);
  }

  std::set<std::string> reads(AccessPurpose purpose) const {
    std::lock_guard lock(mu_);
    auto it = reads_.find(purpose);
    return it == reads_.end() ? std::set<std::string>{} : it->second;
  }

  /// Flights in `forbidden` that were read for any fitting purpose.
  std::vector<std::string> violations(const std::set<std::string>& forbidden) const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (auto purpose : {AccessPurpose::fit_stats, AccessPurpose::train, AccessPurpose::validate,
                         AccessPurpose::distill}) {
      auto it = reads_.find(purpose);
      if (it == reads_.end()) continue;
      for (const auto& id : it->second)
        if (forbidden.count(id)) out.push_back(std::string(to_string(purpose)) + ":" + id);
    }
    return out;
  }

  std::map<std::string, std::vector<std::string>> snapshot() const {
    std::lock_guard lock(mu_);
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& [p, ids] : reads_) out[to_string(p)] = {ids.begin(), ids.end()};
    return out;
  }

 private:
  mutable std::mutex mu_;
  std::map<AccessPurpose, std::set<std::string>> reads_;
};

}  // namespace lmsd::dataio
