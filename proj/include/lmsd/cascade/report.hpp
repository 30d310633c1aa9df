#pragma once
// Per-flight diagnosis records, one JSON object per line.

#include "lmsd/cascade/routing.hpp"
#include "lmsd/dataio/sample.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <thread>

namespace lmsd::cascade {

struct DiagnosisRecord {
  std::string flight_id;
  std::optional<int> true_label;  // (N+1)-way, when known
  DiagnosisOutput out;
  std::string predicted_name;
};

namespace detail {
// JSON has no infinities; masked entries are written as the string "-inf".
inline nlohmann::json vec_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isinf(v(i)))
      a.push_back(v(i) < 0 ? "-inf" : "inf");
    else
      a.push_back(v(i));
  }
  return a;
}
inline Vec json_vec(const nlohmann::json& a) {
  Vec v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& e = a[i];
    if (e.is_string())
      v(static_cast<Eigen::Index>(i)) = e.get<std::string>() == "-inf" ? -std::numeric_limits<double>::infinity()
                                                                        : std::numeric_limits<double>::infinity();
    else
      v(static_cast<Eigen::Index>(i)) = e.get<double>();
  }
  return v;
}
}  // namespace detail

inline nlohmann::json to_json(const DiagnosisRecord& r) {
  nlohmann::json j;
  j["flight_id"] = r.flight_id;
  j["z_AD"] = detail::vec_json(r.out.z_ad);
  j["p_AD"] = detail::vec_json(r.out.p_ad);
  j["path"] = to_string(r.out.routing.path);
  j["z_FC"] = r.out.z_fc ? detail::vec_json(*r.out.z_fc) : nlohmann::json(nullptr);
  j["z_D"] = detail::vec_json(r.out.z_d);
  j["p_D"] = detail::vec_json(r.out.p_d);
  j["predicted_index"] = r.out.predicted();
  j["predicted_name"] = r.predicted_name;
  j["true_label"] = r.true_label ? nlohmann::json(*r.true_label) : nlohmann::json(nullptr);
  return j;
}

inline DiagnosisRecord record_from_json(const nlohmann::json& j) {
  DiagnosisRecord r;
  r.flight_id = j.at("flight_id").get<std::string>();
  r.out.z_ad = detail::json_vec(j.at("z_AD"));
  r.out.p_ad = detail::json_vec(j.at("p_AD"));
  r.out.routing.path = j.at("path").get<std::string>() == "healthy" ? Path::healthy : Path::anomalous;
  r.out.routing.z_h = r.out.z_ad(0);
  r.out.routing.z_a = r.out.z_ad(1);
  if (!j.at("z_FC").is_null()) r.out.z_fc = detail::json_vec(j.at("z_FC"));
  r.out.z_d = detail::json_vec(j.at("z_D"));
  r.out.p_d = detail::json_vec(j.at("p_D"));
  r.predicted_name = j.value("predicted_name", std::string());
  if (j.contains("true_label") && !j["true_label"].is_null()) r.true_label = j["true_label"].get<int>();
  return r;
}

inline void write_records(const std::filesystem::path& path, const std::vector<DiagnosisRecord>& rs) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write " + path.string());
  for (const auto& r : rs) out << to_json(r).dump() << "\n";
}

inline std::vector<DiagnosisRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open " + path.string());
  std::vector<DiagnosisRecord> rs;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rs.push_back(record_from_json(nlohmann::json::parse(line)));
  return rs;
}

/// Diagnoses every flight of `ds` in order. With jobs > 1 the flights are
/// split into contiguous chunks; the result order never depends on jobs.
inline std::vector<DiagnosisRecord> diagnose_dataset(const dataio::LabeledDataset& ds, const nn::Model& health,
                                                     const nn::Model& fault, int jobs = 1,
                                                     const RoutingOptions& opt = {}) {
  std::vector<DiagnosisRecord> out(ds.size());
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& s = ds.samples[i];
      auto& r = out[i];
      r.flight_id = s.flight_id;
      if (s.labeled()) r.true_label = s.diagnosis_label();
      r.out = diagnose(s.values, health, fault, s.flight_id, opt);
      r.predicted_name = ds.label_name(r.out.predicted());
    }
  };
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(ds.size())));
  if (jobs == 1) {
    work(0, ds.size());
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  const std::size_t chunk = (ds.size() + jobs - 1) / jobs;
  for (int j = 0; j < jobs; ++j) {
    const std::size_t lo = j * chunk, hi = std::min(ds.size(), lo + chunk);
    pool.emplace_back([&, j, lo, hi] {
      try {
        work(lo, hi);
      } catch (...) {
        errors[static_cast<std::size_t>(j)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace lmsd::cascade
