#pragma once
// Checkpoint container.
//
//   "LMSDCKPT" | u32 version | u64 n | n bytes of config JSON
//   | u32 tensor count | per tensor: u32 name length, name, u64 rows, u64 cols,
//     rows*cols little-endian doubles (row-major)
//
// The config JSON carries a "kind" tag ("model" or "kel") plus the producing
// config, so a file is self-describing.

#include "lmsd/core/tensor.hpp"
#include "lmsd/nn/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace lmsd::nn {

inline constexpr char kCheckpointMagic[8] = {'L', 'M', 'S', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  using Error::Error;
};

struct TensorFile {
  nlohmann::json config;
  std::vector<std::pair<std::string, Mat>> tensors;
};

namespace detail {
template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError(path + ": truncated checkpoint");
  return v;
}
}  // namespace detail

inline void save_tensors(const std::filesystem::path& path, const nlohmann::json& config, const ConstParamRefs& ps) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError(path.string() + ": cannot open for writing");
    os.write(kCheckpointMagic, 8);
    detail::put<std::uint32_t>(os, kCheckpointVersion);
    const std::string cfg = config.dump();
    detail::put<std::uint64_t>(os, cfg.size());
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(ps.size()));
    for (const Param* p : ps) {
      detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(p->name.size()));
      os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
      detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(p->value.rows()));
      detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(p->value.cols()));
      os.write(reinterpret_cast<const char*>(p->value.data()),
               static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p->value.size())));
    }
    if (!os) throw CheckpointError(path.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

inline TensorFile load_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(path.string() + ": cannot open checkpoint");
  const std::string p = path.string();
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw CheckpointError(p + ": not an LMSD checkpoint");
  const auto version = detail::get<std::uint32_t>(is, p);
  if (version != kCheckpointVersion)
    throw CheckpointError(p + ": unsupported checkpoint version " + std::to_string(version));
  const auto n = detail::get<std::uint64_t>(is, p);
  if (n > (1u << 24)) throw CheckpointError(p + ": implausible config length");
  std::string cfg(n, '\0');
  is.read(cfg.data(), static_cast<std::streamsize>(n));
  if (!is) throw CheckpointError(p + ": truncated checkpoint");
  TensorFile tf;
  tf.config = nlohmann::json::parse(cfg);
  const auto count = detail::get<std::uint32_t>(is, p);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::get<std::uint32_t>(is, p);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rows = detail::get<std::uint64_t>(is, p);
    const auto cols = detail::get<std::uint64_t>(is, p);
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * rows * cols));
    if (!is) throw CheckpointError(p + ": truncated tensor '" + name + "'");
    tf.tensors.emplace_back(std::move(name), std::move(m));
  }
  return tf;
}

/// Copies stored tensors into `ps`. Any missing, extra or mis-shaped tensor is
/// reported by name in one error.
inline void assign_tensors(const std::string& origin, const TensorFile& tf, const ParamRefs& ps) {
  std::map<std::string, const Mat*> stored;
  for (const auto& [name, m] : tf.tensors) stored[name] = &m;
  std::ostringstream diff;
  for (const Param* p : ps) {
    auto it = stored.find(p->name);
    if (it == stored.end()) {
      diff << " missing '" << p->name << "';";
      continue;
    }
    if (it->second->rows() != p->value.rows() || it->second->cols() != p->value.cols())
      diff << " '" << p->name << "' expected " << p->value.rows() << "x" << p->value.cols() << " got "
           << it->second->rows() << "x" << it->second->cols() << ";";
    stored.erase(it);
  }
  for (const auto& [name, m] : stored) diff << " unexpected '" << name << "';";
  if (!diff.str().empty()) throw CheckpointError(origin + ": tensor mismatch:" + diff.str());
  std::map<std::string, const Mat*> by_name;
  for (const auto& [name, m] : tf.tensors) by_name[name] = &m;
  for (Param* p : ps) p->value = *by_name.at(p->name);
}

inline void save_model(const std::filesystem::path& path, const Model& m) {
  save_tensors(path, {{"kind", "model"}, {"model", m.config().to_json()}}, m.params());
}

/// Loads a model checkpoint. When `expected` is given, its config must match
/// the stored one exactly.
inline Model load_model(const std::filesystem::path& path, const ModelConfig* expected = nullptr) {
  const TensorFile tf = load_tensors(path);
  if (tf.config.value("kind", std::string()) != "model")
    throw CheckpointError(path.string() + ": not a model checkpoint");
  const ModelConfig cfg = ModelConfig::from_json(tf.config.at("model"));
  if (expected && expected->to_json() != cfg.to_json())
    throw CheckpointError(path.string() + ": config mismatch: stored " + cfg.to_json().dump() + " expected " +
                          expected->to_json().dump());
  Model m(cfg);
  assign_tensors(path.string(), tf, m.params());
  return m;
}

}  // namespace lmsd::nn
