#pragma once
// Small hand-built datasets shared by the unit tests.

#include "lmsd/dataio/sample.hpp"
#include "lmsd/nn/config.hpp"

namespace fixtures {

/// Healthy flights are N(0, 1) noise. Fault class k adds a +shift offset to
/// channel k-1 over the whole flight, so every class is linearly separable.
inline lmsd::dataio::LabeledDataset offset_dataset(int n_healthy, int n_per_fault, int n_faults, int L, int D,
                                                   std::uint64_t seed, double shift = 2.5) {
  using namespace lmsd;
  dataio::LabeledDataset ds;
  ds.schema = dataio::ChannelSchema::synthetic(D);
  ds.n_fault_classes = n_faults;
  for (int k = 1; k <= n_faults; ++k) ds.class_names.push_back("fault" + std::to_string(k));
  Rng rng(seed);
  std::normal_distribution<double> n;
  auto make = [&](const std::string& id, int fault) {
    dataio::FlightSample s;
    s.flight_id = id;
    s.source_id = id;
    s.values.resize(L, D);
    for (Eigen::Index i = 0; i < s.values.size(); ++i) s.values.data()[i] = n(rng);
    s.missing = dataio::MissingMask::Constant(L, D, false);
    if (fault == 0) {
      s.ad_label = dataio::AdLabel::healthy;
    } else {
      s.ad_label = dataio::AdLabel::anomalous;
      s.fc_label = fault;
      s.class_name = ds.class_names[static_cast<std::size_t>(fault - 1)];
      s.values.col((fault - 1) % D).array() += shift;
    }
    ds.samples.push_back(std::move(s));
  };
  for (int i = 0; i < n_healthy; ++i) make("h" + std::to_string(i), 0);
  for (int k = 1; k <= n_faults; ++k)
    for (int i = 0; i < n_per_fault; ++i) make("f" + std::to_string(k) + "_" + std::to_string(i), k);
  return ds;
}

inline lmsd::nn::ModelConfig small_mmk(int L, int D, int head, std::uint64_t seed = 1) {
  auto c = lmsd::nn::ModelConfig::mmk_net(L, D, head);
  c.mmk.blocks = 1;
  c.mmk.filters = 4;
  c.mmk.bottleneck = 4;
  c.mmk.hidden_dim = 0;
  c.mmk.dropout = 0.0;
  c.init_seed = seed;
  return c;
}

inline lmsd::nn::ModelConfig small_convtok(int L, int D, int head, std::uint64_t seed = 1) {
  auto c = lmsd::nn::ModelConfig::convtok(L, D, head, 1, 8, 16);
  c.attention.heads = 2;
  c.attention.dropout = 0.0;
  c.init_seed = seed;
  return c;
}

}  // namespace fixtures
