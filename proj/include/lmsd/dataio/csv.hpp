#pragma once
// Flight CSV and labels-manifest readers/writers.
//
// Flight file: header row of channel names (any column order, matched to the
// schema by name), then one row per 1 Hz timestep. Empty cell = missing.
// Manifest: flight_id,ad_label,class_name with ad_label in {healthy,anomalous}.

#include "lmsd/dataio/sample.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace lmsd::dataio {

class SchemaError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  return std::string(s.substr(b, e - b));
}

// Splits one CSV record; double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline double parse_double(const std::string& cell, const std::string& where) {
  double v = 0.0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  if (!cell.empty() && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) throw ParseError("non-numeric cell '" + cell + "' at " + where);
  return v;
}

/// Reads one flight file; missing cells become NaN with the mask set.
/// Throws SchemaError on header mismatch, ParseError on malformed content.
inline FlightSample read_flight_csv(const std::filesystem::path& path, const ChannelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file " + path.string());
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  const auto header = split_csv_line(line);

  std::vector<int> column_to_channel(header.size(), -1);
  std::vector<bool> covered(static_cast<std::size_t>(schema.size()), false);
  for (std::size_t c = 0; c < header.size(); ++c) {
    auto idx = schema.index_of(header[c]);
    if (!idx) throw SchemaError(path.string() + ": column '" + header[c] + "' is not in the channel schema");
    if (covered[static_cast<std::size_t>(*idx)])
      throw SchemaError(path.string() + ": channel '" + header[c] + "' appears twice");
    covered[static_cast<std::size_t>(*idx)] = true;
    column_to_channel[c] = *idx;
  }
  for (int i = 0; i < schema.size(); ++i)
    if (!covered[static_cast<std::size_t>(i)])
      throw SchemaError(path.string() + ": missing channel '" + schema[i].name + "'");

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
    std::vector<double> row(static_cast<std::size_t>(schema.size()), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c].empty()) continue;
      row[static_cast<std::size_t>(column_to_channel[c])] =
          parse_double(cells[c], path.string() + ":" + std::to_string(line_no));
    }
    rows.push_back(std::move(row));
  }

  FlightSample s;
  s.flight_id = path.stem().string();
  s.source_id = s.flight_id;
  const auto L = static_cast<Eigen::Index>(rows.size());
  s.values.resize(L, schema.size());
  s.missing.resize(L, schema.size());
  for (Eigen::Index t = 0; t < L; ++t)
    for (int d = 0; d < schema.size(); ++d) {
      const double v = rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(d)];
      s.values(t, d) = v;
      s.missing(t, d) = std::isnan(v);
    }
  return s;
}

inline void write_flight_csv(const std::filesystem::path& path, const FlightSample& s, const ChannelSchema& schema) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (int d = 0; d < schema.size(); ++d) out << (d ? "," : "") << csv_escape(schema[d].name);
  out << "\n";
  char buf[32];
  for (Eigen::Index t = 0; t < s.values.rows(); ++t) {
    for (Eigen::Index d = 0; d < s.values.cols(); ++d) {
      if (d) out << ',';
      const bool miss = s.missing.size() != 0 && s.missing(t, d);
      if (!miss && !std::isnan(s.values(t, d))) {
        std::snprintf(buf, sizeof(buf), "%.9g", s.values(t, d));
        out << buf;
      }
    }
    out << "\n";
  }
}

struct ManifestEntry {
  AdLabel ad_label;
  std::string class_name;  // empty for healthy
};

using Manifest = std::map<std::string, ManifestEntry>;

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open labels manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("empty labels manifest " + path.string());
  const auto header = split_csv_line(line);
  auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw Error("labels manifest " + path.string() + " lacks column '" + name + "'");
  };
  const int c_id = col("flight_id"), c_ad = col("ad_label"), c_cls = col("class_name");
  Manifest m;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    cells.resize(header.size());
    const auto& ad = cells[static_cast<std::size_t>(c_ad)];
    ManifestEntry e;
    if (ad == "healthy" || ad == "0") {
      e.ad_label = AdLabel::healthy;
    } else if (ad == "anomalous" || ad == "1") {
      e.ad_label = AdLabel::anomalous;
    } else {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": ad_label must be healthy|anomalous, got '" + ad +
                  "'");
    }
    e.class_name = cells[static_cast<std::size_t>(c_cls)];
    const auto& id = cells[static_cast<std::size_t>(c_id)];
    if (!m.emplace(id, e).second) throw Error(path.string() + ": duplicate flight_id " + id);
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const LabeledDataset& ds) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "flight_id,ad_label,class_name\n";
  for (const auto& s : ds.samples) {
    if (!s.ad_label) continue;
    out << csv_escape(s.flight_id) << ',' << (s.is_anomalous() ? "anomalous" : "healthy") << ','
        << csv_escape(s.class_name.value_or("")) << "\n";
  }
}

}  // namespace lmsd::dataio
