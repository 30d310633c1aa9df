#pragma once

#include "lmsd/dataio/csv.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

namespace lmsd::dataio {

/// Largest per-channel fraction of missing cells.
inline double worst_missing_rate(const FlightSample& s) {
  if (s.missing.size() == 0 || s.missing.rows() == 0) return 0.0;
  double worst = 0.0;
  for (Eigen::Index d = 0; d < s.missing.cols(); ++d) {
    const auto n = s.missing.col(d).count();
    worst = std::max(worst, static_cast<double>(n) / static_cast<double>(s.missing.rows()));
  }
  return worst;
}

/// Forward fill per channel; leading gaps take the first observed value.
/// Channels with no observation at all are zero-filled and listed in
/// void_channels so normalization can pin them to the post-z-score mean.
inline void fill_missing(FlightSample& s) {
  const Eigen::Index L = s.values.rows();
  s.void_channels.clear();
  for (Eigen::Index d = 0; d < s.values.cols(); ++d) {
    Eigen::Index first = -1;
    for (Eigen::Index t = 0; t < L; ++t)
      if (!std::isnan(s.values(t, d))) {
        first = t;
        break;
      }
    if (first < 0) {
      s.values.col(d).setZero();
      s.void_channels.push_back(static_cast<int>(d));
      continue;
    }
    for (Eigen::Index t = 0; t < first; ++t) s.values(t, d) = s.values(first, d);
    for (Eigen::Index t = first + 1; t < L; ++t)
      if (std::isnan(s.values(t, d))) s.values(t, d) = s.values(t - 1, d);
  }
}

struct LoadResult {
  LabeledDataset dataset;
  int excluded_missing = 0;
  int unreadable = 0;
  int unlisted = 0;          // files without a manifest entry (kept unlabeled)
  int manifest_orphans = 0;  // manifest entries without a file
};

struct LoadOptions {
  double max_missing_rate = 0.10;
  /// Known fault classes in label order. Empty: derive sorted from the manifest.
  std::vector<std::string> class_names;
  bool keep_unlabeled = true;
};

/// Ingests every *.csv flight file under root (the manifest itself excluded).
inline LoadResult load_dataset(const std::filesystem::path& root, const ChannelSchema& schema,
                               const std::filesystem::path& labels_manifest, const LoadOptions& opt = {},
                               Warnings* warnings = nullptr) {
  Warnings local;
  Warnings& warn = warnings ? *warnings : local;
  require(std::filesystem::is_directory(root), "data root is not a directory: " + root.string());
  const Manifest manifest = read_manifest(labels_manifest);

  std::vector<std::string> classes = opt.class_names;
  if (classes.empty()) {
    std::set<std::string> uniq;
    for (const auto& [id, e] : manifest)
      if (e.ad_label == AdLabel::anomalous && !e.class_name.empty()) uniq.insert(e.class_name);
    classes.assign(uniq.begin(), uniq.end());
  }
  for (const auto& [id, e] : manifest) {
    if (e.ad_label == AdLabel::anomalous) {
      if (e.class_name.empty()) throw Error("manifest: anomalous flight " + id + " has no class_name");
      if (std::find(classes.begin(), classes.end(), e.class_name) == classes.end())
        throw Error("manifest: flight " + id + " has unknown class_name '" + e.class_name + "'");
    }
  }

  std::vector<std::filesystem::path> files;
  const auto manifest_abs = std::filesystem::weakly_canonical(labels_manifest);
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    if (std::filesystem::weakly_canonical(entry.path()) == manifest_abs) continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  LoadResult res;
  res.dataset.schema = schema;
  res.dataset.class_names = classes;
  res.dataset.n_fault_classes = static_cast<int>(classes.size());
  std::set<std::string> seen;
  for (const auto& path : files) {
    FlightSample s;
    try {
      s = read_flight_csv(path, schema);
    } catch (const SchemaError&) {
      throw;
    } catch (const std::exception& e) {
      ++res.unreadable;
      warn.add("unreadable", e.what());
      continue;
    }
    if (s.length() < 2) {
      ++res.unreadable;
      warn.add("unreadable", path.string() + ": fewer than 2 timesteps");
      continue;
    }
    seen.insert(s.flight_id);
    auto it = manifest.find(s.flight_id);
    if (it == manifest.end()) {
      ++res.unlisted;
      if (!opt.keep_unlabeled) continue;
    } else {
      s.ad_label = it->second.ad_label;
      if (s.is_anomalous()) {
        s.class_name = it->second.class_name;
        const auto pos = std::find(classes.begin(), classes.end(), it->second.class_name) - classes.begin();
        s.fc_label = static_cast<int>(pos) + 1;
      }
    }
    if (worst_missing_rate(s) >= opt.max_missing_rate) {
      ++res.excluded_missing;
      continue;
    }
    fill_missing(s);
    res.dataset.samples.push_back(std::move(s));
  }
  for (const auto& [id, e] : manifest)
    if (!seen.count(id)) ++res.manifest_orphans;
  if (res.manifest_orphans) warn.add("manifest_orphans", std::to_string(res.manifest_orphans) + " manifest entries without a flight file");
  res.dataset.check_invariants();
  return res;
}

}  // namespace lmsd::dataio
