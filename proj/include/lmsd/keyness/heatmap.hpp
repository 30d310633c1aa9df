#pragma once
// Keyness records and their export: a raster heatmap (one panel per channel,
// keyness as background intensity, flight solid, baseline dashed) plus a
// sidecar CSV holding the exact keyness values.

#include "lmsd/dataio/sample.hpp"
#include "lmsd/keyness/kel.hpp"
#include "lmsd/keyness/retrieval.hpp"

#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace lmsd::keyness {

struct KeynessRecord {
  std::string flight_id;
  std::string stage;  // "ad" or "fc"
  Vec w_k;
  int length = 0;  // L
  int stride = 32;
  std::vector<Neighbor> baselines;

  Mat expanded(int D) const { return expand(w_k, length, D, stride); }

  nlohmann::json to_json() const {
    nlohmann::json j{{"flight_id", flight_id},
                     {"stage", stage},
                     {"length", length},
                     {"stride", stride},
                     {"w_K", std::vector<double>(w_k.data(), w_k.data() + w_k.size())}};
    j["baselines"] = nlohmann::json::array();
    for (const auto& b : baselines) j["baselines"].push_back({{"flight_id", b.flight_id}, {"similarity", b.similarity}});
    return j;
  }
};

/// Columns slot_index, t_start, t_end, keyness. t_end is exclusive; keyness
/// is printed with 17 significant digits so it parses back bit-exactly.
inline void write_sidecar(const std::filesystem::path& path, const KeynessRecord& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write " + path.string());
  out << "slot_index,t_start,t_end,keyness\n";
  char buf[64];
  for (Eigen::Index i = 0; i < r.w_k.size(); ++i) {
    const int t0 = static_cast<int>(i) * r.stride;
    const int t1 = std::min(r.length, t0 + r.stride);
    std::snprintf(buf, sizeof buf, "%.17g", r.w_k(i));
    out << i << ',' << t0 << ',' << t1 << ',' << buf << "\n";
  }
}

inline Vec read_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  require(line == "slot_index,t_start,t_end,keyness", path.string() + ": unexpected sidecar header");
  std::vector<double> v;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    v.push_back(std::strtod(line.c_str() + comma + 1, nullptr));
  }
  return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// 8-bit RGB raster.
struct Image {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;

  Image(int w, int h, std::uint8_t fill = 255) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
    rgb[o] = r;
    rgb[o + 1] = g;
    rgb[o + 2] = b;
  }
};

inline void write_png(const std::filesystem::path& path, const Image& img) {
  auto be32 = [](std::string& s, std::uint32_t v) {
    for (int k = 3; k >= 0; --k) s.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
  };
  auto chunk = [&](std::string& out, const char* type, const std::string& data) {
    be32(out, static_cast<std::uint32_t>(data.size()));
    std::string body = std::string(type, 4) + data;
    out += body;
    be32(out, static_cast<std::uint32_t>(
                  crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
  };
  std::string raw;
  raw.reserve(static_cast<std::size_t>(img.height) * (img.width * 3 + 1));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back('\0');  // filter: none
    raw.append(reinterpret_cast<const char*>(img.rgb.data()) + static_cast<std::size_t>(y) * img.width * 3,
               static_cast<std::size_t>(img.width) * 3);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::string z(zlen, '\0');
  require(compress2(reinterpret_cast<Bytef*>(z.data()), &zlen, reinterpret_cast<const Bytef*>(raw.data()),
                    static_cast<uLong>(raw.size()), 6) == Z_OK,
          "png: compression failed");
  z.resize(zlen);
  std::string ihdr;
  be32(ihdr, static_cast<std::uint32_t>(img.width));
  be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit, RGB, deflate, no filter, no interlace
  std::string out = "\x89PNG\r\n\x1a\n";
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", z);
  chunk(out, "IEND", "");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

/// File-system safe form of a flight id.
inline std::string safe_name(const std::string& s) {
  std::string o = s;
  for (char& c : o)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return o;
}

struct HeatmapPaths {
  std::filesystem::path image;
  std::filesystem::path sidecar;
};

/// Writes <flight>_<stage>.png and <flight>_<stage>.csv into out_dir.
/// Keyness 0.5 maps to white and values toward 1 to saturated orange.
inline HeatmapPaths export_heatmap(const KeynessRecord& rec, const dataio::FlightSample& sample,
                                   const dataio::FlightSample* baseline, const std::vector<std::string>& channels,
                                   const dataio::ChannelSchema& schema, const std::filesystem::path& out_dir) {
  require(sample.length() == rec.length, "heatmap: record length " + std::to_string(rec.length) +
                                             " does not match flight length " + std::to_string(sample.length()));
  require(rec.w_k.size() == slot_count(rec.length, rec.stride), "heatmap: keyness length does not match L/s");
  if (baseline) require(baseline->length() == rec.length, "heatmap: baseline length does not match flight");
  std::vector<int> cols;
  for (const auto& name : channels) {
    auto i = schema.index_of(name);
    if (!i) {
      std::string valid;
      for (const auto& n : schema.names()) valid += (valid.empty() ? "" : ", ") + n;
      throw Error("heatmap: unknown channel '" + name + "'; valid names: " + valid);
    }
    cols.push_back(*i);
  }
  require(!cols.empty(), "heatmap: no channels selected");

  const int L = rec.length, panel = 96, gap = 6;
  const int W = std::max(L, 64);
  Image img(W, static_cast<int>(cols.size()) * (panel + gap));
  const Vec k = expand_time(rec.w_k, L, rec.stride);
  auto col_of = [&](int t) { return L == 1 ? 0 : static_cast<int>(static_cast<long long>(t) * (W - 1) / (L - 1)); };

  for (std::size_t c = 0; c < cols.size(); ++c) {
    const int y0 = static_cast<int>(c) * (panel + gap);
    for (int x = 0; x < W; ++x) {
      const int t = std::min(L - 1, static_cast<int>(static_cast<long long>(x) * L / W));
      const double a = std::clamp((k(t) - 0.5) * 2.0, 0.0, 1.0);
      const auto g = static_cast<std::uint8_t>(255 - 115 * a), b = static_cast<std::uint8_t>(255 - 255 * a);
      for (int y = y0; y < y0 + panel; ++y) img.set(x, y, 255, g, b);
    }
    const Eigen::Index d = cols[c];
    double lo = sample.values.col(d).minCoeff(), hi = sample.values.col(d).maxCoeff();
    if (baseline) {
      lo = std::min(lo, baseline->values.col(d).minCoeff());
      hi = std::max(hi, baseline->values.col(d).maxCoeff());
    }
    const double span = hi > lo ? hi - lo : 1.0;
    auto ypix = [&](double v) { return y0 + panel - 3 - static_cast<int>((v - lo) / span * (panel - 6)); };
    auto draw = [&](const Mat& v, bool dashed, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
      for (int t = 0; t < L; ++t) {
        if (dashed && (t / 4) % 2) continue;
        const int x = col_of(t), y = ypix(v(t, d));
        const int yn = t + 1 < L ? ypix(v(t + 1, d)) : y;
        for (int yy = std::min(y, yn); yy <= std::max(y, yn); ++yy) img.set(x, yy, r, g, b);
      }
    };
    if (baseline) draw(baseline->values, true, 30, 60, 200);
    draw(sample.values, false, 20, 20, 20);
  }

  const std::string stem = safe_name(rec.flight_id) + "_" + rec.stage;
  HeatmapPaths p{out_dir / (stem + ".png"), out_dir / (stem + ".csv")};
  write_png(p.image, img);
  write_sidecar(p.sidecar, rec);
  return p;
}

}  // namespace lmsd::keyness
