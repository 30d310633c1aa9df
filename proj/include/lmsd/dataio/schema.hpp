#pragma once

#include "lmsd/core/tensor.hpp"

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace lmsd::dataio {

enum class ChannelCategory { electrical, fuel, engine, cylinder, flight_status, environmental };
enum class ObservationSet { monitoring, operational };

inline const char* to_string(ChannelCategory c) {
  switch (c) {
    case ChannelCategory::electrical: return "electrical";
    case ChannelCategory::fuel: return "fuel";
    case ChannelCategory::engine: return "engine";
    case ChannelCategory::cylinder: return "cylinder";
    case ChannelCategory::flight_status: return "flight_status";
    case ChannelCategory::environmental: return "environmental";
  }
  return "?";
}

inline const char* to_string(ObservationSet o) {
  return o == ObservationSet::monitoring ? "monitoring" : "operational";
}

struct Channel {
  std::string name;
  ChannelCategory category;
  ObservationSet observation;
};

class ChannelSchema {
 public:
  ChannelSchema() = default;
  explicit ChannelSchema(std::vector<Channel> channels) : channels_(std::move(channels)) {
    std::set<std::string> seen;
    for (const auto& c : channels_) {
      require(seen.insert(c.name).second, "duplicate channel name in schema: " + c.name);
    }
  }

  /// The 23-channel NGAFID layout (Cessna 172 flight logs), grouped by category.
  static ChannelSchema ngafid23() {
    using C = ChannelCategory;
    const auto mon = ObservationSet::monitoring;
    const auto op = ObservationSet::operational;
    return ChannelSchema({
        {"volt1", C::electrical, mon},    {"volt2", C::electrical, mon},
        {"amp1", C::electrical, mon},     {"amp2", C::electrical, mon},
        {"FQtyL", C::fuel, mon},          {"FQtyR", C::fuel, mon},
        {"E1 FFlow", C::fuel, mon},       {"E1 OilT", C::engine, mon},
        {"E1 OilP", C::engine, mon},      {"E1 RPM", C::engine, mon},
        {"E1 CHT1", C::cylinder, mon},    {"E1 CHT2", C::cylinder, mon},
        {"E1 CHT3", C::cylinder, mon},    {"E1 CHT4", C::cylinder, mon},
        {"E1 EGT1", C::cylinder, mon},    {"E1 EGT2", C::cylinder, mon},
        {"E1 EGT3", C::cylinder, mon},    {"E1 EGT4", C::cylinder, mon},
        {"IAS", C::flight_status, op},    {"VSpd", C::flight_status, op},
        {"AltMSL", C::flight_status, op}, {"NormAc", C::flight_status, mon},
        {"OAT", C::environmental, op},
    });
  }

  /// Reduced schema for synthetic data: the first monitoring channels of the
  /// NGAFID layout (engine and cylinder first) plus an operational block.
  /// D=8 gives four monitoring and the four standard operational channels.
  static ChannelSchema synthetic(int dim) {
    require(dim >= 4 && dim <= 23, "synthetic schema needs 4 <= D <= 23, got " + std::to_string(dim));
    const auto full = ngafid23();
    const int n_op = std::clamp(dim / 2, 2, 4);
    static const char* op_order[] = {"AltMSL", "IAS", "VSpd", "OAT"};
    static const char* mon_order[] = {"E1 RPM",  "E1 OilT", "E1 CHT1", "E1 EGT1", "E1 FFlow", "E1 OilP",
                                      "E1 CHT2", "E1 EGT2", "E1 CHT3", "E1 EGT3", "E1 CHT4", "E1 EGT4",
                                      "volt1",   "volt2",   "amp1",    "amp2",    "FQtyL",   "FQtyR",
                                      "NormAc"};
    std::vector<Channel> out;
    for (int i = 0; i < dim - n_op; ++i) out.push_back(*full.find(mon_order[i]));
    for (int i = 0; i < n_op; ++i) out.push_back(*full.find(op_order[i]));
    return ChannelSchema(std::move(out));
  }

  int size() const { return static_cast<int>(channels_.size()); }
  const std::vector<Channel>& channels() const { return channels_; }
  const Channel& operator[](int i) const { return channels_.at(static_cast<std::size_t>(i)); }

  std::optional<int> index_of(const std::string& name) const {
    for (std::size_t i = 0; i < channels_.size(); ++i)
      if (channels_[i].name == name) return static_cast<int>(i);
    return std::nullopt;
  }

  const Channel* find(const std::string& name) const {
    auto i = index_of(name);
    return i ? &channels_[static_cast<std::size_t>(*i)] : nullptr;
  }

  std::vector<int> indices(ObservationSet set) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < channels_.size(); ++i)
      if (channels_[i].observation == set) out.push_back(static_cast<int>(i));
    return out;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& c : channels_) out.push_back(c.name);
    return out;
  }

 private:
  std::vector<Channel> channels_;
};

}  // namespace lmsd::dataio
