#pragma once

#include "lmsd/core/tensor.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace lmsd::metrics {

/// counts[true][predicted]; index 0 is healthy for AD and diagnosis tasks.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> class_names)
      : names_(std::move(class_names)), counts_(names_.size(), std::vector<long long>(names_.size(), 0)) {}

  static ConfusionMatrix from_counts(std::vector<std::vector<long long>> counts, std::vector<std::string> names = {}) {
    const std::size_t n = counts.size();
    if (names.empty())
      for (std::size_t i = 0; i < n; ++i) names.push_back(std::to_string(i));
    require(names.size() == n, "confusion: name count does not match matrix size");
    ConfusionMatrix cm(std::move(names));
    for (std::size_t i = 0; i < n; ++i) {
      require(counts[i].size() == n, "confusion: matrix must be square");
      for (std::size_t j = 0; j < n; ++j) require(counts[i][j] >= 0, "confusion: negative count");
    }
    cm.counts_ = std::move(counts);
    return cm;
  }

  void add(int truth, int predicted, long long n = 1) {
    require(truth >= 0 && truth < size() && predicted >= 0 && predicted < size(),
            "confusion: label outside 0.." + std::to_string(size() - 1));
    counts_[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)] += n;
  }

  int size() const { return static_cast<int>(counts_.size()); }
  long long at(int t, int p) const { return counts_[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)]; }
  long long total() const {
    long long s = 0;
    for (const auto& r : counts_)
      for (long long v : r) s += v;
    return s;
  }
  long long trace() const {
    long long s = 0;
    for (int i = 0; i < size(); ++i) s += at(i, i);
    return s;
  }
  long long row_sum(int t) const {
    long long s = 0;
    for (int p = 0; p < size(); ++p) s += at(t, p);
    return s;
  }
  long long col_sum(int p) const {
    long long s = 0;
    for (int t = 0; t < size(); ++t) s += at(t, p);
    return s;
  }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::vector<long long>>& counts() const { return counts_; }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    require(o.size() == size(), "confusion: size mismatch in sum");
    for (int i = 0; i < size(); ++i)
      for (int j = 0; j < size(); ++j) counts_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += o.at(i, j);
    return *this;
  }

  /// Header row "true\\pred,<names>", then one row per true class.
  void write_csv(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write " + path.string());
    out << "true\\pred";
    for (const auto& n : names_) out << ',' << n;
    out << "\n";
    for (int i = 0; i < size(); ++i) {
      out << names_[static_cast<std::size_t>(i)];
      for (int j = 0; j < size(); ++j) out << ',' << at(i, j);
      out << "\n";
    }
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<long long>> counts_;
};

}  // namespace lmsd::metrics
