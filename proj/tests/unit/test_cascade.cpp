#include "lmsd/cascade/report.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace lmsd;
using namespace lmsd::cascade;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

nn::ModelConfig tiny_health(int L, int D) {
  auto c = nn::ModelConfig::convtok(L, D, 2, 1, 8, 8);
  c.attention.heads = 2;
  c.init_seed = 1;
  return c;
}

nn::ModelConfig tiny_fault(int L, int D, int n) {
  auto c = nn::ModelConfig::mmk_net(L, D, n);
  c.mmk.blocks = 1;
  c.mmk.filters = 2;
  c.mmk.bottleneck = 2;
  c.mmk.hidden_dim = 0;
  c.init_seed = 2;
  return c;
}

}  // namespace

TEST(Routing, HealthyPathIsOneHot) {
  bool called = false;
  auto out = route_and_assemble(vec({2.0, -1.0}), [&] {
    called = true;
    return vec({0.0, 0.0, 0.0});
  }, 3);
  EXPECT_FALSE(called);
  EXPECT_EQ(out.routing.path, Path::healthy);
  EXPECT_EQ(out.p_d(0), 1.0);
  for (int i = 1; i < 4; ++i) {
    EXPECT_EQ(out.p_d(i), 0.0);
    EXPECT_TRUE(std::isinf(out.z_d(i)) && out.z_d(i) < 0);
  }
  EXPECT_FALSE(out.z_fc.has_value());
  EXPECT_EQ(out.predicted(), 0);
}

TEST(Routing, AnomalousPathHasNoHealthyMass) {
  auto out = route_and_assemble(vec({-1.0, 3.0}), [] { return vec({1.0, 2.0, 0.5}); }, 3);
  EXPECT_EQ(out.routing.path, Path::anomalous);
  EXPECT_EQ(out.p_d(0), 0.0);
  EXPECT_NEAR(out.p_d.sum(), 1.0, 1e-15);
  EXPECT_EQ(out.predicted(), 2);
}

TEST(Routing, TieRoutesAnomalous) {
  EXPECT_EQ(route(vec({0.7, 0.7})).path, Path::anomalous);
}

TEST(Routing, ThresholdOption) {
  RoutingOptions opt;
  opt.anomaly_threshold = 0.9;
  EXPECT_EQ(route(vec({0.0, 1.0}), opt).path, Path::healthy);  // p_a ~ 0.73
  EXPECT_EQ(route(vec({0.0, 5.0}), opt).path, Path::anomalous);
}

TEST(Routing, BadInputsThrow) {
  EXPECT_THROW(route(vec({1.0, 2.0, 3.0})), Error);
  EXPECT_THROW(route(vec({NAN, 0.0})), Error);
}

TEST(Routing, FaultStageErrorNamesFlight) {
  try {
    route_and_assemble(vec({0.0, 1.0}), [] { return vec({1.0}); }, 3, "F42");
    FAIL();
  } catch (const FaultStageError& e) {
    EXPECT_EQ(e.flight_id(), "F42");
    EXPECT_NE(std::string(e.what()).find("F42"), std::string::npos);
  }
  EXPECT_THROW(route_and_assemble(vec({0.0, 1.0}), [] { return vec({NAN, 0.0}); }, 2, "F1"), FaultStageError);
}

TEST(Diagnose, RequiresEvalModeAndShapes) {
  nn::Model h(tiny_health(8, 2)), f(tiny_fault(8, 2, 3));
  Mat x = Mat::Ones(8, 2);
  EXPECT_NO_THROW(diagnose(x, h, f));
  h.set_training(true);
  EXPECT_THROW(diagnose(x, h, f), Error);
  h.set_training(false);
  EXPECT_THROW(diagnose(Mat::Ones(7, 2), h, f), Error);
}

TEST(Diagnose, ConsistentWithStageModels) {
  nn::Model h(tiny_health(8, 2)), f(tiny_fault(8, 2, 3));
  Rng rng(3);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    Mat x(8, 2);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    const auto out = diagnose(x, h, f);
    const Vec z = h.infer(x).logits;
    if (z(1) >= z(0)) {
      EXPECT_EQ(out.p_d.tail(3), softmax(f.infer(x).logits));
    } else {
      EXPECT_EQ(out.predicted(), 0);
    }
  }
}

TEST(Report, JsonRoundTripKeepsSentinels) {
  DiagnosisRecord r;
  r.flight_id = "A";
  r.true_label = 2;
  r.out = route_and_assemble(vec({1.0, 0.0}), [] { return vec({0.0, 0.0}); }, 2);
  r.predicted_name = "healthy";
  const auto j = to_json(r);
  EXPECT_EQ(j["z_D"][1], "-inf");
  EXPECT_TRUE(j["z_FC"].is_null());
  const auto back = record_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.flight_id, "A");
  EXPECT_EQ(back.true_label, 2);
  EXPECT_EQ(back.out.p_d, r.out.p_d);
  EXPECT_TRUE(std::isinf(back.out.z_d(2)));
  EXPECT_EQ(back.out.routing.path, Path::healthy);
}

TEST(Report, DatasetOrderIndependentOfJobs) {
  dataio::LabeledDataset ds;
  ds.schema = dataio::ChannelSchema::synthetic(4);
  ds.n_fault_classes = 3;
  ds.class_names = {"a", "b", "c"};
  Rng rng(9);
  std::normal_distribution<double> n;
  for (int i = 0; i < 7; ++i) {
    dataio::FlightSample s;
    s.flight_id = "f" + std::to_string(i);
    s.values.resize(8, 4);
    for (Eigen::Index k = 0; k < s.values.size(); ++k) s.values.data()[k] = n(rng);
    s.ad_label = dataio::AdLabel::healthy;
    ds.samples.push_back(s);
  }
  nn::Model h(tiny_health(8, 4)), f(tiny_fault(8, 4, 3));
  const auto a = diagnose_dataset(ds, h, f, 1);
  const auto b = diagnose_dataset(ds, h, f, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].flight_id, b[i].flight_id);
    EXPECT_EQ(a[i].out.p_d, b[i].out.p_d);
  }
  const auto path = std::filesystem::temp_directory_path() / "lmsd_diag_test.jsonl";
  write_records(path, a);
  const auto c = read_records(path);
  ASSERT_EQ(c.size(), a.size());
  EXPECT_EQ(c[4].out.p_d, a[4].out.p_d);
  std::filesystem::remove(path);
}
