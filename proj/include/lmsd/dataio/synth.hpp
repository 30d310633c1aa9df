#pragma once
// Desk-scale synthetic flight generator.
//
// Healthy flights follow a five-phase profile (taxi, climb, cruise, descent,
// taxi) on the operational channels; monitoring channels respond to engine
// power through first-order lags. Every channel carries band-limited noise
// with a channel-specific sigma. Fault class j adds a local deformation,
// scaled in units of that sigma, to one or two monitoring channels inside a
// bounded segment. Operational channels are generated identically for every
// class.

#include "lmsd/dataio/csv.hpp"
#include "lmsd/dataio/sample.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>

namespace lmsd::dataio {

struct FaultSignature {
  int segment_len = 0;           // 0: L / 8
  bool random_placement = true;  // false: every fault starts at fixed_start
  int fixed_start = 0;
  double amplitude = 80.0;       // in units of the channel's noise sigma
};

struct SynthConfig {
  int n_healthy = 600;
  std::vector<int> fault_counts = {75, 75, 75, 75};
  int length = 512;
  int dim = 8;
  std::uint64_t seed = 7;
  FaultSignature fault;

  int n_fault_classes() const { return static_cast<int>(fault_counts.size()); }

  void validate() const {
    require(n_healthy >= 0, "synth: n_healthy must be >= 0");
    require(!fault_counts.empty(), "synth: need at least one fault class");
    for (int c : fault_counts) require(c >= 0, "synth: fault counts must be >= 0");
    require(length >= 16, "synth: length must be >= 16");
    require(dim >= 4 && dim <= 23, "synth: dim must be in [4, 23]");
    require(fault.amplitude >= 0.0, "synth: amplitude must be >= 0");
    const int seg = segment_len();
    require(seg >= 2 && seg <= length, "synth: segment length must be in [2, L]");
    if (!fault.random_placement)
      require(fault.fixed_start >= 0 && fault.fixed_start + seg <= length, "synth: fixed segment exceeds the flight");
  }
  int segment_len() const { return fault.segment_len > 0 ? fault.segment_len : length / 8; }

  nlohmann::json to_json() const {
    return {{"n_healthy", n_healthy},
            {"fault_counts", fault_counts},
            {"length", length},
            {"dim", dim},
            {"seed", seed},
            {"fault",
             {{"segment_len", fault.segment_len},
              {"random_placement", fault.random_placement},
              {"fixed_start", fault.fixed_start},
              {"amplitude", fault.amplitude}}}};
  }
  static SynthConfig from_json(const nlohmann::json& j) {
    SynthConfig c;
    c.n_healthy = j.value("n_healthy", c.n_healthy);
    c.fault_counts = j.value("fault_counts", c.fault_counts);
    c.length = j.value("length", c.length);
    c.dim = j.value("dim", c.dim);
    c.seed = j.value("seed", c.seed);
    if (j.contains("fault")) {
      const auto& f = j.at("fault");
      c.fault.segment_len = f.value("segment_len", c.fault.segment_len);
      c.fault.random_placement = f.value("random_placement", c.fault.random_placement);
      c.fault.fixed_start = f.value("fixed_start", c.fault.fixed_start);
      c.fault.amplitude = f.value("amplitude", c.fault.amplitude);
    }
    return c;
  }
};

namespace synth_detail {

inline Rng flight_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x5eedu};
  return Rng(seq);
}

inline std::vector<double> smooth(const std::vector<double>& x, int w) {
  const int n = static_cast<int>(x.size());
  std::vector<double> out(x.size());
  for (int t = 0; t < n; ++t) {
    double acc = 0.0;
    int cnt = 0;
    for (int j = std::max(0, t - w / 2); j <= std::min(n - 1, t + w / 2); ++j) {
      acc += x[static_cast<std::size_t>(j)];
      ++cnt;
    }
    out[static_cast<std::size_t>(t)] = acc / cnt;
  }
  return out;
}

// Unit-variance noise low-passed by a width-5 moving average.
inline std::vector<double> band_noise(int n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> white(static_cast<std::size_t>(n + 4));
  for (auto& v : white) v = g(rng);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    double acc = 0.0;
    for (int j = 0; j < 5; ++j) acc += white[static_cast<std::size_t>(t + j)];
    out[static_cast<std::size_t>(t)] = acc / std::sqrt(5.0);
  }
  return out;
}

inline std::vector<double> lag(const std::vector<double>& drive, double tau, double start) {
  std::vector<double> out(drive.size());
  double v = start;
  for (std::size_t t = 0; t < drive.size(); ++t) {
    v += (drive[t] - v) / tau;
    out[t] = v;
  }
  return out;
}

struct Profile {
  std::vector<double> alt, ias, vspd, oat, rpm;
};

inline Profile flight_profile(int L, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto U = [&](double a, double b) { return a + (b - a) * u(rng); };
  const double f_taxi1 = U(0.05, 0.12), f_climb = U(0.12, 0.20), f_desc = U(0.15, 0.25), f_taxi2 = U(0.05, 0.10);
  const int b1 = static_cast<int>(f_taxi1 * L);
  const int b2 = b1 + static_cast<int>(f_climb * L);
  const int b4 = L - static_cast<int>(f_taxi2 * L);
  const int b3 = b4 - static_cast<int>(f_desc * L);
  const double field = U(0.0, 1500.0), cruise = field + U(2500.0, 8000.0);
  const double oat0 = U(-5.0, 30.0), cruise_ias = U(95.0, 115.0), cruise_rpm = U(2200.0, 2400.0);
  const double wobble_period = U(40.0, 120.0), wobble_amp = U(20.0, 150.0);

  Profile p;
  std::vector<double> alt(static_cast<std::size_t>(L)), ias(alt.size()), rpm(alt.size());
  for (int t = 0; t < L; ++t) {
    const auto i = static_cast<std::size_t>(t);
    if (t < b1) {
      alt[i] = field, ias[i] = 12.0, rpm[i] = 1000.0;
    } else if (t < b2) {
      const double f = static_cast<double>(t - b1) / std::max(1, b2 - b1);
      alt[i] = field + f * (cruise - field), ias[i] = 75.0, rpm[i] = 2450.0;
    } else if (t < b3) {
      alt[i] = cruise + wobble_amp * std::sin(2.0 * std::numbers::pi * t / wobble_period);
      ias[i] = cruise_ias, rpm[i] = cruise_rpm;
    } else if (t < b4) {
      const double f = static_cast<double>(t - b3) / std::max(1, b4 - b3);
      alt[i] = cruise + f * (field - cruise), ias[i] = 90.0, rpm[i] = 1700.0;
    } else {
      alt[i] = field, ias[i] = 10.0, rpm[i] = 900.0;
    }
  }
  p.alt = smooth(alt, 9);
  p.ias = smooth(ias, 9);
  p.rpm = smooth(rpm, 5);
  p.vspd.resize(alt.size());
  for (std::size_t t = 0; t < alt.size(); ++t) {
    const std::size_t a = t == 0 ? 0 : t - 1, b = std::min(alt.size() - 1, t + 1);
    p.vspd[t] = 60.0 * (p.alt[b] - p.alt[a]) / static_cast<double>(b - a);
  }
  p.oat.resize(alt.size());
  for (std::size_t t = 0; t < alt.size(); ++t) p.oat[t] = oat0 - 2.0 * (p.alt[t] - field) / 1000.0;
  return p;
}

// Clean signal and noise sigma for one channel given the flight profile.
inline std::pair<std::vector<double>, double> channel_signal(const std::string& name, const Profile& p, int L,
                                                             Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> drive(static_cast<std::size_t>(L));
  auto map_rpm = [&](double base, double gain) {
    for (std::size_t t = 0; t < drive.size(); ++t) drive[t] = base + gain * (p.rpm[t] - 1000.0);
  };
  const double tau_slow = std::max(4.0, L / 16.0), tau_fast = std::max(2.0, L / 48.0);
  if (name == "AltMSL") return {p.alt, 15.0};
  if (name == "IAS") return {p.ias, 1.5};
  if (name == "VSpd") return {p.vspd, 40.0};
  if (name == "OAT") return {p.oat, 0.3};
  if (name == "E1 RPM") return {p.rpm, 15.0};
  if (name == "E1 OilT") {
    map_rpm(150.0 + 10.0 * u(rng), 0.02);
    return {lag(drive, tau_slow, drive[0]), 0.8};
  }
  if (name.rfind("E1 CHT", 0) == 0) {
    map_rpm(200.0 + 20.0 * u(rng), 0.08);
    for (std::size_t t = 0; t < drive.size(); ++t) drive[t] -= 0.04 * (p.ias[t] - 60.0);
    return {lag(drive, tau_fast * 2.0, drive[0]), 2.0};
  }
  if (name.rfind("E1 EGT", 0) == 0) {
    map_rpm(1150.0 + 50.0 * u(rng), 0.2);
    return {lag(drive, tau_fast, drive[0]), 6.0};
  }
  if (name == "E1 FFlow") {
    map_rpm(2.0, 0.004);
    return {drive, 0.1};
  }
  if (name == "E1 OilP") {
    map_rpm(60.0 + 5.0 * u(rng), 0.01);
    return {lag(drive, tau_fast, drive[0]), 0.5};
  }
  if (name.rfind("volt", 0) == 0) {
    std::fill(drive.begin(), drive.end(), 27.5 + u(rng));
    return {drive, 0.05};
  }
  if (name.rfind("amp", 0) == 0) {
    map_rpm(5.0 + u(rng), 0.002);
    return {drive, 0.3};
  }
  if (name.rfind("FQty", 0) == 0) {
    const double start = 15.0 + 10.0 * u(rng);
    for (std::size_t t = 0; t < drive.size(); ++t) drive[t] = start - 8.0 * static_cast<double>(t) / L;
    return {drive, 0.1};
  }
  if (name == "NormAc") {
    std::fill(drive.begin(), drive.end(), 1.0);
    return {drive, 0.02};
  }
  map_rpm(0.0, 0.01);
  return {drive, 1.0};
}

// Deformation family j % 4 evaluated at relative position u in [0, 1).
inline void inject_fault(Mat& x, const std::vector<double>& sigma, const std::vector<int>& mon, int fault_index,
                         int start, int seg, double amplitude) {
  const int M = static_cast<int>(mon.size());
  const int family = fault_index % 4;
  const int shift = fault_index / 4;
  const int ch_a = mon[static_cast<std::size_t>((fault_index + shift) % M)];
  const int ch_b = mon[static_cast<std::size_t>((fault_index + shift + 1) % M)];
  const double pi = std::numbers::pi;
  for (int i = 0; i < seg; ++i) {
    const double u = static_cast<double>(i) / seg;
    const double env = std::sin(pi * u);
    const int t = start + i;
    const double Aa = amplitude * sigma[static_cast<std::size_t>(ch_a)];
    const double Ab = amplitude * sigma[static_cast<std::size_t>(ch_b)];
    switch (family) {
      case 0: {  // plateau with steep ramps over the first and last eighth
        const double ramp = std::min(1.0, 8.0 * std::min(u, 1.0 - u));
        x(t, ch_a) += Aa * ramp;
        break;
      }
      case 1:  // coupled in-phase oscillation, period 8
        x(t, ch_a) += Aa * env * std::sin(2.0 * pi * i / 8.0);
        x(t, ch_b) += Ab * env * std::sin(2.0 * pi * i / 8.0);
        break;
      case 2:  // anti-phase oscillation, period 16
        x(t, ch_a) += Aa * env * std::sin(2.0 * pi * i / 16.0);
        x(t, ch_b) -= Ab * env * std::sin(2.0 * pi * i / 16.0);
        break;
      default:  // single-channel chatter, period 4
        x(t, ch_a) += Aa * env * std::sin(2.0 * pi * i / 4.0);
        break;
    }
  }
}

}  // namespace synth_detail

/// Deterministic given cfg.seed. Healthy flights come first, then each fault
/// class in order; ids are "h<idx>" and "f<class>_<idx>".
inline LabeledDataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  using namespace synth_detail;
  LabeledDataset ds;
  ds.schema = ChannelSchema::synthetic(cfg.dim);
  ds.n_fault_classes = cfg.n_fault_classes();
  for (int j = 1; j <= ds.n_fault_classes; ++j) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fault_%02d", j);
    ds.class_names.emplace_back(buf);
  }
  const auto mon = ds.schema.indices(ObservationSet::monitoring);
  const int L = cfg.length, D = cfg.dim, seg = cfg.segment_len();

  std::uint64_t index = 0;
  auto make = [&](const std::string& id, int fault_class) {
    Rng rng = flight_rng(cfg.seed, index++);
    const Profile prof = flight_profile(L, rng);
    FlightSample s;
    s.flight_id = id;
    s.source_id = id;
    s.values.resize(L, D);
    s.missing = MissingMask::Constant(L, D, false);
    std::vector<double> sigma(static_cast<std::size_t>(D));
    for (int d = 0; d < D; ++d) {
      auto [clean, sd] = channel_signal(ds.schema[d].name, prof, L, rng);
      const auto noise = band_noise(L, rng);
      sigma[static_cast<std::size_t>(d)] = sd;
      for (int t = 0; t < L; ++t)
        s.values(t, d) = clean[static_cast<std::size_t>(t)] + sd * noise[static_cast<std::size_t>(t)];
    }
    // placement is drawn for every flight so healthy and faulty flights
    // consume the same random stream
    std::uniform_int_distribution<int> pos(0, L - seg);
    const int start = cfg.fault.random_placement ? pos(rng) : cfg.fault.fixed_start;
    if (fault_class == 0) {
      s.ad_label = AdLabel::healthy;
    } else {
      s.ad_label = AdLabel::anomalous;
      s.fc_label = fault_class;
      s.class_name = ds.class_names[static_cast<std::size_t>(fault_class - 1)];
      if (cfg.fault.amplitude > 0.0)
        inject_fault(s.values, sigma, mon, fault_class - 1, start, seg, cfg.fault.amplitude);
    }
    ds.samples.push_back(std::move(s));
  };
  char buf[48];
  for (int i = 0; i < cfg.n_healthy; ++i) {
    std::snprintf(buf, sizeof(buf), "h%05d", i);
    make(buf, 0);
  }
  for (int j = 1; j <= ds.n_fault_classes; ++j)
    for (int i = 0; i < cfg.fault_counts[static_cast<std::size_t>(j - 1)]; ++i) {
      std::snprintf(buf, sizeof(buf), "f%02d_%05d", j, i);
      make(buf, j);
    }
  ds.check_invariants();
  return ds;
}

/// Writes one CSV per flight plus labels.csv into dir.
inline void write_dataset(const std::filesystem::path& dir, const LabeledDataset& ds) {
  std::filesystem::create_directories(dir);
  for (const auto& s : ds.samples) write_flight_csv(dir / (s.flight_id + ".csv"), s, ds.schema);
  write_manifest(dir / "labels.csv", ds);
}

}  // namespace lmsd::dataio
