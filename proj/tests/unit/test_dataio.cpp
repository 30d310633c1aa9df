#include "lmsd/dataio/augment.hpp"
#include "lmsd/dataio/folds.hpp"
#include "lmsd/dataio/load.hpp"
#include "lmsd/dataio/normalize.hpp"
#include "lmsd/dataio/resample.hpp"
#include "lmsd/dataio/synth.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace lmsd;
using namespace lmsd::dataio;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("lmsd_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

FlightSample make_flight(const std::string& id, int label, int L = 6, int D = 1, double v = 0.0) {
  FlightSample s;
  s.flight_id = id;
  s.source_id = id;
  s.values = Mat::Constant(L, D, v);
  s.missing = MissingMask::Constant(L, D, false);
  s.ad_label = label == 0 ? AdLabel::healthy : AdLabel::anomalous;
  if (label > 0) s.fc_label = label;
  return s;
}

LabeledDataset toy(const std::vector<int>& counts) {
  LabeledDataset ds;
  ds.schema = ChannelSchema({{"a", ChannelCategory::engine, ObservationSet::monitoring}});
  ds.n_fault_classes = static_cast<int>(counts.size()) - 1;
  for (int j = 1; j < static_cast<int>(counts.size()); ++j) ds.class_names.push_back("c" + std::to_string(j));
  for (std::size_t c = 0; c < counts.size(); ++c)
    for (int i = 0; i < counts[c]; ++i)
      ds.samples.push_back(make_flight("s" + std::to_string(c) + "_" + std::to_string(i), static_cast<int>(c)));
  return ds;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST(Schema, DefaultHas23Channels) {
  const auto s = ChannelSchema::ngafid23();
  EXPECT_EQ(s.size(), 23);
  EXPECT_EQ(s[0].name, "volt1");
  EXPECT_EQ(s[22].name, "OAT");
  std::set<std::string> op;
  for (int i : s.indices(ObservationSet::operational)) op.insert(s[i].name);
  for (const char* name : {"IAS", "VSpd", "AltMSL", "OAT"}) EXPECT_TRUE(op.count(name)) << name;
}

TEST(Schema, DuplicateNamesRejected) {
  EXPECT_THROW(ChannelSchema({{"a", ChannelCategory::engine, ObservationSet::monitoring},
                              {"a", ChannelCategory::fuel, ObservationSet::monitoring}}),
               Error);
}

TEST(Load, ForwardFillExclusionAndSchemaErrors) {
  TempDir dir("load");
  const auto schema = ChannelSchema::synthetic(4);
  const auto names = schema.names();
  auto header = [&] {
    std::string h;
    for (std::size_t i = 0; i < names.size(); ++i) h += (i ? "," : "") + names[i];
    return h + "\n";
  };
  // E1 OilT missing at t=5 only
  std::string good = header();
  const int oil = *schema.index_of("E1 OilT");
  for (int t = 0; t < 20; ++t) {
    for (int d = 0; d < 4; ++d) {
      if (d) good += ",";
      if (!(d == oil && t == 5)) good += d == oil && t == 4 ? "180.0" : std::to_string(t + d);
    }
    good += "\n";
  }
  write_text(dir.path / "good.csv", good);
  // one channel 15 % missing
  std::string holey = header();
  for (int t = 0; t < 20; ++t) {
    for (int d = 0; d < 4; ++d) {
      if (d) holey += ",";
      if (!(d == 0 && t < 3)) holey += "1";
    }
    holey += "\n";
  }
  write_text(dir.path / "holey.csv", holey);
  write_text(dir.path / "labels.csv", "flight_id,ad_label,class_name\ngood,healthy,\nholey,anomalous,fault_a\n");

  Warnings w;
  auto res = load_dataset(dir.path, schema, dir.path / "labels.csv", {}, &w);
  ASSERT_EQ(res.dataset.size(), 1u);
  EXPECT_EQ(res.excluded_missing, 1);
  EXPECT_EQ(res.dataset.samples[0].values(5, oil), 180.0);
  EXPECT_TRUE(res.dataset.samples[0].values.allFinite());

  write_text(dir.path / "bad.csv", "volt1,E1 RPM\n1,2\n");
  try {
    load_dataset(dir.path, schema, dir.path / "labels.csv");
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("volt1"), std::string::npos) << e.what();
  }
  fs::remove(dir.path / "bad.csv");

  write_text(dir.path / "labels.csv", "flight_id,ad_label,class_name\ngood,healthy,\nholey,anomalous,mystery\n");
  LoadOptions opt;
  opt.class_names = {"fault_a"};
  EXPECT_THROW(load_dataset(dir.path, schema, dir.path / "labels.csv", opt), Error);
}

TEST(Load, LeadingGapBackFilledAndVoidChannelZeroed) {
  FlightSample s = make_flight("x", 0, 5, 2);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.values.col(0) << nan, nan, 3, nan, 5;
  s.values.col(1).setConstant(nan);
  fill_missing(s);
  EXPECT_EQ(s.values(0, 0), 3.0);
  EXPECT_EQ(s.values(3, 0), 3.0);
  EXPECT_EQ(s.void_channels, std::vector<int>{1});
  EXPECT_TRUE(s.values.col(1).isZero(0.0));
}

TEST(Load, NgafidHeaderGivesD23) {
  TempDir dir("ngafid");
  const auto schema = ChannelSchema::ngafid23();
  std::string csv;
  for (int i = 0; i < 23; ++i) csv += (i ? "," : "") + csv_escape(schema[i].name);
  csv += "\n";
  for (int t = 0; t < 3; ++t) {
    for (int i = 0; i < 23; ++i) csv += (i ? "," : "") + std::to_string(i);
    csv += "\n";
  }
  write_text(dir.path / "f1.csv", csv);
  auto s = read_flight_csv(dir.path / "f1.csv", schema);
  EXPECT_EQ(s.dim(), 23);
  EXPECT_EQ(s.length(), 3);
}

TEST(Resample, ConstantAndRamp) {
  FlightSample c = make_flight("c", 0, 100, 1, 7.3);
  auto rc = resample_cubic(c, 2048);
  EXPECT_EQ(rc.length(), 2048);
  EXPECT_LT((rc.values.array() - 7.3).abs().maxCoeff(), 1e-9);

  FlightSample r = make_flight("r", 0, 5, 1);
  for (int t = 0; t < 5; ++t) r.values(t, 0) = t / 4.0;
  auto rr = resample_cubic(r, 2048);
  EXPECT_EQ(rr.values(0, 0), 0.0);
  EXPECT_EQ(rr.values(2047, 0), 1.0);
  for (int i = 0; i < 2048; ++i) EXPECT_NEAR(rr.values(i, 0), i / 2047.0, 1e-9);
}

TEST(Resample, IdempotentAtMatchingLength) {
  Rng rng(3);
  std::normal_distribution<double> n;
  FlightSample s = make_flight("s", 0, 300, 2);
  for (Eigen::Index i = 0; i < s.values.size(); ++i) s.values.data()[i] = n(rng);
  auto once = resample_cubic(s, 512);
  auto twice = resample_cubic(once, 512);
  EXPECT_LT((once.values - twice.values).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Resample, DegenerateLengths) {
  FlightSample one = make_flight("o", 0, 2, 1);
  one.values.resize(1, 1);
  EXPECT_THROW(resample_cubic(one, 8), Error);
  FlightSample three = make_flight("t", 0, 3, 1);
  three.values.col(0) << 0, 1, 4;  // t^2
  auto r = resample_cubic(three, 5);
  EXPECT_NEAR(r.values(1, 0), 0.25, 1e-15);
  EXPECT_NEAR(r.values(3, 0), 2.25, 1e-15);
}

TEST(Normalize, HandCaseAndConstantChannel) {
  LabeledDataset train = toy({2});
  train.samples[0].values.setConstant(2.0);
  train.samples[1].values.setConstant(4.0);
  NormStats st = fit_norm_stats(train);
  EXPECT_DOUBLE_EQ(st.mean[0], 3.0);
  EXPECT_DOUBLE_EQ(st.std[0], 1.0);
  FlightSample test = make_flight("t", 0, 3, 1, 5.0);
  EXPECT_DOUBLE_EQ(apply_norm(test, st).values(0, 0), 2.0);

  LabeledDataset flat = toy({3});
  for (auto& s : flat.samples) s.values.setConstant(1.5);
  auto [normed, fs_] = normalize(flat, nullptr, NormMode::fit);
  for (const auto& s : normed.samples) EXPECT_TRUE(s.values.isZero(0.0));
  EXPECT_THROW(normalize(flat, nullptr, NormMode::apply), Error);
}

TEST(Normalize, FittedTrainingSetIsStandardized) {
  auto ds = synth_generate([] {
    SynthConfig c;
    c.n_healthy = 20;
    c.fault_counts = {5, 5};
    c.length = 64;
    c.dim = 6;
    return c;
  }());
  auto [normed, st] = normalize(ds, nullptr, NormMode::fit);
  const int D = ds.schema.size();
  for (int d = 0; d < D; ++d) {
    double sum = 0, sq = 0, n = 0;
    for (const auto& s : normed.samples) {
      sum += s.values.col(d).sum();
      sq += s.values.col(d).squaredNorm();
      n += s.length();
    }
    EXPECT_NEAR(sum / n, 0.0, 1e-6);
    EXPECT_NEAR(std::sqrt(sq / n - (sum / n) * (sum / n)), 1.0, 1e-6);
  }
}

TEST(Normalize, NaNIsRejected) {
  LabeledDataset train = toy({2});
  train.samples[0].values(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(fit_norm_stats(train), Error);
}

TEST(Normalize, StatsDependOnlyOnTrainingFlights) {
  auto ds = synth_generate([] {
    SynthConfig c;
    c.n_healthy = 30;
    c.fault_counts = {10, 10};
    c.length = 32;
    c.dim = 4;
    return c;
  }());
  const FoldPlan plan = stratified_kfold(ds, 5, 1);
  AccessAudit audit;
  const auto train = ds.select(plan.train_ids(0));
  const NormStats st = fit_norm_stats(train, 1e-8, &audit);
  const auto test_ids = plan.test_ids(0);
  EXPECT_TRUE(audit.violations({test_ids.begin(), test_ids.end()}).empty());
  // injecting the test flights changes the statistics, so the check above is not vacuous
  const NormStats leaky = fit_norm_stats(ds);
  EXPECT_GT((st.mean - leaky.mean).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Folds, ExactDivisibility) {
  auto ds = toy({60, 40});
  auto plan = stratified_kfold(ds, 5, 42);
  for (int f = 0; f < 5; ++f) {
    int healthy = 0, faulty = 0;
    for (const auto& id : plan.test_ids(f)) (id[1] == '0' ? healthy : faulty)++;
    EXPECT_EQ(healthy, 12);
    EXPECT_EQ(faulty, 8);
  }
}

TEST(Folds, SmallClassSpreadOnePerFold) {
  auto ds = toy({20, 3});
  auto plan = stratified_kfold(ds, 5, 7);
  std::map<int, int> per_fold;
  for (const auto& [id, f] : plan.assignments)
    if (id[1] == '1') per_fold[f]++;
  EXPECT_EQ(per_fold.size(), 3u);
  for (const auto& [f, n] : per_fold) EXPECT_EQ(n, 1);
}

TEST(Folds, PartitionDeterminismAndPersistence) {
  auto ds = toy({37, 11, 6, 2});
  auto a = stratified_kfold(ds, 5, 9), b = stratified_kfold(ds, 5, 9);
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_EQ(a.assignments.size(), ds.size());
  std::set<std::string> seen;
  for (int f = 0; f < 5; ++f)
    for (const auto& id : a.test_ids(f)) EXPECT_TRUE(seen.insert(id).second);
  EXPECT_EQ(seen.size(), ds.size());
  TempDir dir("folds");
  a.save(dir.path / "folds.csv");
  auto c = FoldPlan::load(dir.path / "folds.csv");
  EXPECT_EQ(c.assignments, a.assignments);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_THROW(stratified_kfold(toy({3}), 5, 0), Error);
}

TEST(Augment, FormulaCases) {
  EXPECT_EQ(replicated_size(10, 100, 3), 30);
  EXPECT_EQ(replicated_size(50, 100, 3), 100);
  EXPECT_EQ(replicated_size(100, 100, 3), 100);
}

TEST(Augment, SizesAndProvenance) {
  auto ds = toy({0, 100, 10, 50, 1});
  ds.samples.erase(std::remove_if(ds.samples.begin(), ds.samples.end(), [](auto& s) { return !s.is_anomalous(); }),
                   ds.samples.end());
  auto aug = replicate_augment(ds, 3);
  std::map<int, int> sizes;
  std::set<std::string> ids, sources;
  for (const auto& s : aug.samples) {
    sizes[s.diagnosis_label()]++;
    EXPECT_TRUE(ids.insert(s.flight_id).second);
    sources.insert(s.source_id);
  }
  EXPECT_EQ(sizes[1], 100);
  EXPECT_EQ(sizes[2], 30);
  EXPECT_EQ(sizes[3], 100);
  EXPECT_EQ(sizes[4], 3);
  for (const auto& s : ds.samples) EXPECT_TRUE(ids.count(s.flight_id));
  EXPECT_EQ(sources.size(), ds.size());
  EXPECT_THROW(replicate_augment(ds.empty_like()), Error);
}

TEST(Augment, AnomalousSubset) {
  auto ds = toy({10, 3, 2});
  auto sub = anomalous_subset(ds);
  EXPECT_EQ(sub.size(), 5u);
  EXPECT_EQ(sub.n_fault_classes, 2);
  for (const auto& s : sub.samples) EXPECT_TRUE(s.is_anomalous());
  Warnings w;
  EXPECT_TRUE(anomalous_subset(toy({4}), &w).empty());
  EXPECT_EQ(w.count("empty_subset"), 1);
}

TEST(Synth, DeterministicAndLabeled) {
  SynthConfig c;
  c.n_healthy = 10;
  c.fault_counts = {3, 3, 3, 3};
  c.length = 128;
  auto a = synth_generate(c), b = synth_generate(c);
  ASSERT_EQ(a.size(), 22u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a.samples[i].values == b.samples[i].values);
  EXPECT_EQ(a.n_fault_classes, 4);
  EXPECT_EQ(a.schema.size(), 8);
}

TEST(Synth, ZeroAmplitudeMatchesHealthyMeans) {
  SynthConfig c;
  c.n_healthy = 200;
  c.fault_counts = {200};
  c.length = 128;
  c.fault.amplitude = 0.0;
  auto ds = synth_generate(c);
  // two-sample z-test on per-flight channel means, every channel
  for (int d = 0; d < ds.schema.size(); ++d) {
    std::vector<double> h, f;
    for (const auto& s : ds.samples) (s.is_anomalous() ? f : h).push_back(s.values.col(d).mean());
    auto stats = [](const std::vector<double>& v) {
      double m = 0, q = 0;
      for (double x : v) m += x;
      m /= v.size();
      for (double x : v) q += (x - m) * (x - m);
      return std::pair{m, q / (v.size() - 1)};
    };
    auto [mh, vh] = stats(h);
    auto [mf, vf] = stats(f);
    const double z = (mh - mf) / std::sqrt(vh / h.size() + vf / f.size());
    EXPECT_LT(std::abs(z), 3.5) << ds.schema[d].name;
  }
}

TEST(Synth, CsvRoundTrip) {
  TempDir dir("synth_io");
  SynthConfig c;
  c.n_healthy = 3;
  c.fault_counts = {2, 1};
  c.length = 16;
  c.dim = 5;
  auto ds = synth_generate(c);
  write_dataset(dir.path, ds);
  auto res = load_dataset(dir.path, ds.schema, dir.path / "labels.csv");
  ASSERT_EQ(res.dataset.size(), ds.size());
  const auto back = res.dataset.select(ds.flight_ids());  // files load in name order
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.samples[i].diagnosis_label(), ds.samples[i].diagnosis_label());
    EXPECT_LT((back.samples[i].values - ds.samples[i].values).cwiseAbs().maxCoeff(),
              1e-6 * (1 + ds.samples[i].values.cwiseAbs().maxCoeff()));
  }
}
