#pragma once
// Binary store for a processed dataset: magic "LMSDDATA", u32 version, a JSON
// header (schema, classes, per-flight metadata) and then, per flight, L x D
// little-endian doubles followed by L x D missing-mask bytes.

#include "lmsd/dataio/sample.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

namespace lmsd::dataio {

inline constexpr char kStoreMagic[8] = {'L', 'M', 'S', 'D', 'D', 'A', 'T', 'A'};
inline constexpr std::uint32_t kStoreVersion = 1;

namespace store_detail {

inline ChannelCategory parse_category(const std::string& s) {
  for (auto c : {ChannelCategory::electrical, ChannelCategory::fuel, ChannelCategory::engine,
                 ChannelCategory::cylinder, ChannelCategory::flight_status, ChannelCategory::environmental})
    if (s == to_string(c)) return c;
  throw Error("store: unknown channel category '" + s + "'");
}

inline nlohmann::json schema_json(const ChannelSchema& schema) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& c : schema.channels())
    a.push_back({{"name", c.name}, {"category", to_string(c.category)}, {"observation", to_string(c.observation)}});
  return a;
}

inline ChannelSchema schema_from_json(const nlohmann::json& a) {
  std::vector<Channel> out;
  for (const auto& c : a)
    out.push_back({c.at("name").get<std::string>(), parse_category(c.at("category").get<std::string>()),
                   c.at("observation").get<std::string>() == "monitoring" ? ObservationSet::monitoring
                                                                          : ObservationSet::operational});
  return ChannelSchema(std::move(out));
}

}  // namespace store_detail

inline void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds) {
  ds.check_invariants();
  nlohmann::json h;
  h["schema"] = store_detail::schema_json(ds.schema);
  h["class_names"] = ds.class_names;
  h["n_fault_classes"] = ds.n_fault_classes;
  h["flights"] = nlohmann::json::array();
  for (const auto& s : ds.samples) {
    nlohmann::json f{{"flight_id", s.flight_id}, {"source_id", s.source_id}, {"length", s.length()},
                     {"void_channels", s.void_channels}};
    f["ad_label"] = s.ad_label ? nlohmann::json(static_cast<int>(*s.ad_label)) : nlohmann::json(nullptr);
    f["fc_label"] = s.fc_label ? nlohmann::json(*s.fc_label) : nlohmann::json(nullptr);
    f["class_name"] = s.class_name ? nlohmann::json(*s.class_name) : nlohmann::json(nullptr);
    h["flights"].push_back(std::move(f));
  }
  const std::string header = h.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    require(static_cast<bool>(os), "cannot write " + tmp);
    os.write(kStoreMagic, 8);
    const std::uint32_t version = kStoreVersion;
    os.write(reinterpret_cast<const char*>(&version), sizeof version);
    const std::uint64_t n = header.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof n);
    os.write(header.data(), static_cast<std::streamsize>(n));
    for (const auto& s : ds.samples) {
      os.write(reinterpret_cast<const char*>(s.values.data()),
               static_cast<std::streamsize>(s.values.size() * sizeof(double)));
      std::vector<char> mask(static_cast<std::size_t>(s.values.size()), 0);
      if (s.missing.size() == s.values.size())
        for (Eigen::Index i = 0; i < s.missing.size(); ++i) mask[static_cast<std::size_t>(i)] = s.missing.data()[i];
      os.write(mask.data(), static_cast<std::streamsize>(mask.size()));
    }
    require(static_cast<bool>(os), "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline LabeledDataset load_dataset_store(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "cannot open processed dataset " + path.string());
  const std::string p = path.string();
  char magic[8];
  is.read(magic, 8);
  require(is && std::memcmp(magic, kStoreMagic, 8) == 0, p + ": not a processed dataset");
  std::uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  require(is && version == kStoreVersion, p + ": unsupported store version " + std::to_string(version));
  std::uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  require(is && n < (1ull << 34), p + ": corrupt header length");
  std::string header(n, '\0');
  is.read(header.data(), static_cast<std::streamsize>(n));
  require(static_cast<bool>(is), p + ": truncated header");
  const auto h = nlohmann::json::parse(header);

  LabeledDataset ds;
  ds.schema = store_detail::schema_from_json(h.at("schema"));
  ds.class_names = h.at("class_names").get<std::vector<std::string>>();
  ds.n_fault_classes = h.at("n_fault_classes").get<int>();
  const int D = ds.schema.size();
  for (const auto& f : h.at("flights")) {
    FlightSample s;
    s.flight_id = f.at("flight_id").get<std::string>();
    s.source_id = f.at("source_id").get<std::string>();
    s.void_channels = f.at("void_channels").get<std::vector<int>>();
    if (!f.at("ad_label").is_null()) s.ad_label = static_cast<AdLabel>(f.at("ad_label").get<int>());
    if (!f.at("fc_label").is_null()) s.fc_label = f.at("fc_label").get<int>();
    if (!f.at("class_name").is_null()) s.class_name = f.at("class_name").get<std::string>();
    const int L = f.at("length").get<int>();
    s.values.resize(L, D);
    is.read(reinterpret_cast<char*>(s.values.data()), static_cast<std::streamsize>(s.values.size() * sizeof(double)));
    std::vector<char> mask(static_cast<std::size_t>(L) * D);
    is.read(mask.data(), static_cast<std::streamsize>(mask.size()));
    require(static_cast<bool>(is), p + ": truncated at flight " + s.flight_id);
    s.missing.resize(L, D);
    for (Eigen::Index i = 0; i < s.missing.size(); ++i) s.missing.data()[i] = mask[static_cast<std::size_t>(i)] != 0;
    ds.samples.push_back(std::move(s));
  }
  ds.check_invariants();
  return ds;
}

}  // namespace lmsd::dataio
