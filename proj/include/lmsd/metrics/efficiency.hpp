#pragma once

#include "lmsd/core/tensor.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

namespace lmsd::metrics {

struct TimingStats {
  double median_s = 0.0;
  double cv = 0.0;  // std / mean over the timed runs
  int runs = 0;
  int warmup = 0;
};

/// Times `fn` `runs` times after `warmup` discarded calls.
inline TimingStats time_runs(const std::function<void()>& fn, int warmup = 1, int runs = 5) {
  require(runs >= 5, "timing: need at least 5 timed runs");
  require(warmup >= 0, "timing: negative warmup");
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> t;
  for (int i = 0; i < runs; ++i) {
    const auto a = std::chrono::steady_clock::now();
    fn();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - a).count());
  }
  TimingStats s;
  s.runs = runs;
  s.warmup = warmup;
  std::vector<double> sorted = t;
  std::sort(sorted.begin(), sorted.end());
  s.median_s = runs % 2 ? sorted[runs / 2] : 0.5 * (sorted[runs / 2 - 1] + sorted[runs / 2]);
  double mean = 0.0;
  for (double v : t) mean += v;
  mean /= runs;
  double var = 0.0;
  for (double v : t) var += (v - mean) * (v - mean);
  s.cv = mean > 0.0 ? std::sqrt(var / runs) / mean : 0.0;
  return s;
}

/// Total bytes of the given checkpoint files.
inline std::uintmax_t model_size_bytes(const std::vector<std::filesystem::path>& files) {
  std::uintmax_t total = 0;
  for (const auto& f : files) {
    require(std::filesystem::is_regular_file(f), "missing checkpoint " + f.string());
    total += std::filesystem::file_size(f);
  }
  return total;
}

inline nlohmann::json hardware_descriptor() {
  nlohmann::json j;
  j["hardware_concurrency"] = std::thread::hardware_concurrency();
  std::ifstream cpu("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpu, line))
    if (line.rfind("model name", 0) == 0) {
      j["cpu"] = line.substr(line.find(':') + 2);
      break;
    }
  return j;
}

struct EfficiencyReport {
  double et_s = 0.0;
  double ttt_s = 0.0;
  TimingStats it32;
  std::uintmax_t msize_bytes = 0;

  nlohmann::json to_json() const {
    return {{"ET_s", et_s},
            {"TTT_s", ttt_s},
            {"IT32_s", it32.median_s},
            {"IT32_cv", it32.cv},
            {"IT32_runs", it32.runs},
            {"IT32_warmup", it32.warmup},
            {"MSize_bytes", msize_bytes},
            {"MSize_MB", static_cast<double>(msize_bytes) / (1024.0 * 1024.0)},
            {"hardware", hardware_descriptor()}};
  }
};

}  // namespace lmsd::metrics
