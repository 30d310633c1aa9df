#include "lmsd/metrics/report.hpp"
#include "lmsd/metrics/similarity.hpp"
#include "lmsd/metrics/stability.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace lmsd;
using namespace lmsd::metrics;

TEST(Classification, PerfectMatrix) {
  auto cm = ConfusionMatrix::from_counts({{5, 0}, {0, 4}});
  auto r = classification_metrics(cm, Task::ad);
  EXPECT_EQ(r.acc, 1.0);
  EXPECT_EQ(r.macro_f1, 1.0);
  EXPECT_EQ(r.weighted_f1, 1.0);
  EXPECT_EQ(*r.fnr, 0.0);
}

TEST(Classification, HandTwoByTwo) {
  auto r = classification_metrics(ConfusionMatrix::from_counts({{8, 2}, {3, 7}}), Task::ad);
  EXPECT_DOUBLE_EQ(r.acc, 0.75);
  EXPECT_DOUBLE_EQ(*r.fnr, 0.3);
  EXPECT_DOUBLE_EQ(*r.fnr + r.per_class[1].recall, 1.0);
  EXPECT_FALSE(r.mcwpm.has_value());
}

TEST(Classification, AbsentClassExcludedFromMacro) {
  // Class 2 has no support and no predictions; class 1 is predicted but absent.
  auto cm = ConfusionMatrix::from_counts({{4, 1, 0}, {0, 0, 0}, {0, 0, 0}});
  auto r = classification_metrics(cm, Task::fc);
  EXPECT_FALSE(r.per_class[2].in_macro);
  EXPECT_TRUE(r.per_class[1].in_macro);
  EXPECT_EQ(r.per_class[1].f1, 0.0);
  const double f0 = 2.0 * 0.8 / 1.8;  // precision 1, recall 0.8
  EXPECT_NEAR(r.macro_f1, f0 / 2.0, 1e-15);
  EXPECT_NEAR(r.weighted_f1, f0, 1e-15);
}

TEST(Classification, Errors) {
  EXPECT_THROW(classification_metrics(ConfusionMatrix::from_counts({{0, 0}, {0, 0}}), Task::ad), Error);
  EXPECT_THROW(classification_metrics(ConfusionMatrix::from_counts({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}), Task::ad), Error);
  ConfusionMatrix cm({"h", "a"});
  EXPECT_THROW(cm.add(2, 0), Error);
  EXPECT_THROW(ConfusionMatrix::from_counts({{-1}}), Error);
}

TEST(Mcwpm, HandCase) {
  // trace 8, two faults predicted healthy, one healthy predicted faulty.
  auto cm = ConfusionMatrix::from_counts({{3, 1, 0}, {2, 3, 0}, {0, 0, 2}});
  EXPECT_NEAR(mcwpm(cm), 4.0 / 7.0, 1e-15);
}

TEST(Mcwpm, PerfectAndCrossFault) {
  EXPECT_EQ(mcwpm(ConfusionMatrix::from_counts({{3, 0}, {0, 2}})), 1.0);
  // Cross-fault confusion leaves the denominator untouched.
  EXPECT_EQ(mcwpm(ConfusionMatrix::from_counts({{3, 0, 0}, {0, 2, 5}, {0, 0, 1}})), 1.0);
  EXPECT_EQ(mcwpm(ConfusionMatrix::from_counts({{0, 0}, {0, 0}})), 1.0);
}

TEST(Mcwpm, MissedFaultCostsMoreThanFalseAlarm) {
  auto base = ConfusionMatrix::from_counts({{5, 1, 0}, {1, 5, 0}, {0, 0, 5}});
  auto fn = base, fp = base;
  fn.add(1, 0);
  fp.add(0, 1);
  EXPECT_LT(mcwpm(fn), mcwpm(fp));
  EXPECT_LT(mcwpm(fp), mcwpm(base));
}

TEST(Mcwpm, NegativeWeightThrows) {
  auto cm = ConfusionMatrix::from_counts({{1, 0}, {0, 1}});
  EXPECT_THROW(mcwpm(cm, {-1.0, 1.0}), Error);
  EXPECT_THROW(mcwpm(cm, {1.0, -0.5}), Error);
}

TEST(Confusion, CsvLayout) {
  ConfusionMatrix cm({"healthy", "f1"});
  cm.add(0, 0, 3);
  cm.add(1, 0);
  const auto p = std::filesystem::temp_directory_path() / "lmsd_cm_test.csv";
  cm.write_csv(p);
  std::ifstream in(p);
  std::string a, b, c;
  std::getline(in, a);
  std::getline(in, b);
  std::getline(in, c);
  EXPECT_EQ(a, "true\\pred,healthy,f1");
  EXPECT_EQ(b, "healthy,3,0");
  EXPECT_EQ(c, "f1,1,0");
  std::filesystem::remove(p);
}

TEST(Stability, Bins) {
  EXPECT_EQ(categorize(10, 10), Stability::always_correct);
  EXPECT_EQ(categorize(7, 10), Stability::generally_correct);
  EXPECT_EQ(categorize(6, 10), Stability::generally_correct);
  EXPECT_EQ(categorize(5, 10), Stability::frequently_misclassified);
  EXPECT_EQ(categorize(1, 10), Stability::frequently_misclassified);
  EXPECT_EQ(categorize(0, 10), Stability::always_misclassified);
}

TEST(Stability, PartitionAndRaggedError) {
  std::map<std::string, std::vector<bool>> m;
  Rng rng(4);
  std::bernoulli_distribution b(0.7);
  for (int i = 0; i < 50; ++i) {
    std::vector<bool> v(10);
    for (int r = 0; r < 10; ++r) v[static_cast<std::size_t>(r)] = b(rng);
    m["f" + std::to_string(i)] = v;
  }
  auto rep = stability_analysis(m);
  int total = 0;
  for (const auto& [s, n] : rep.counts) total += n;
  EXPECT_EQ(total, 50);
  EXPECT_EQ(rep.category.size(), 50u);
  m["bad"] = {true, false};
  EXPECT_THROW(stability_analysis(m), Error);
}

TEST(Similarity, HandCase) {
  Vec c(2);
  c << 1.0, 0.0;
  Vec a(2), b(2);
  a << 1.0, 0.0;
  b << 0.0, 1.0;
  auto r = healthy_center_similarity({{"a", a}, {"b", b}}, {{"a", 0}, {"b", 0}}, {{"a", 0}, {"b", 0}}, c);
  const auto& g = *r.groups.at(SimilarityGroup::true_healthy_correct);
  EXPECT_EQ(g.n, 2);
  EXPECT_DOUBLE_EQ(g.mean, 0.5);
  EXPECT_DOUBLE_EQ(g.std, 0.5);
  EXPECT_FALSE(r.groups.at(SimilarityGroup::false_negative).has_value());
  EXPECT_TRUE(r.to_json()["false_positive"].is_null());
}

TEST(Similarity, AllAtCentroid) {
  Vec c(3);
  c << 1.0, 2.0, 3.0;
  auto r = healthy_center_similarity({{"a", c}, {"b", 2.0 * c}, {"d", c}}, {{"a", 0}, {"b", 1}, {"d", 0}},
                                     {{"a", 0}, {"b", 0}, {"d", 2}}, c);
  for (auto g : {SimilarityGroup::true_healthy_correct, SimilarityGroup::false_negative, SimilarityGroup::false_positive}) {
    ASSERT_TRUE(r.groups.at(g).has_value());
    EXPECT_NEAR(r.groups.at(g)->mean, 1.0, 1e-15);
    EXPECT_NEAR(r.groups.at(g)->std, 0.0, 1e-15);
  }
}

TEST(Similarity, ZeroNormIsZero) { EXPECT_EQ(cosine(Vec::Zero(3), Vec::Ones(3)), 0.0); }

TEST(Efficiency, MedianExcludesWarmupAndReportsCv) {
  int calls = 0;
  auto s = time_runs([&] { ++calls; }, 2, 5);
  EXPECT_EQ(calls, 7);
  EXPECT_EQ(s.runs, 5);
  EXPECT_GE(s.cv, 0.0);
  EXPECT_THROW(time_runs([] {}, 0, 4), Error);
}

TEST(Efficiency, ModelSizeSumsFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "lmsd_msize_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "a.ckpt") << std::string(700, 'x');
    std::ofstream(dir / "b.ckpt") << std::string(597, 'y');
  }
  EXPECT_EQ(model_size_bytes({dir / "a.ckpt", dir / "b.ckpt"}), 1297u);
  EXPECT_THROW(model_size_bytes({dir / "missing.ckpt"}), Error);
  std::filesystem::remove_all(dir);
}

TEST(Report, ProvenanceFieldsPresent) {
  MetricsReport r;
  r.provenance.config_hash = "abc";
  r.provenance.seed = 7;
  r.provenance.fold = 2;
  r.evaluations["diagnosis"] =
      classification_metrics(ConfusionMatrix::from_counts({{2, 0}, {0, 2}}), Task::diagnosis);
  const auto j = r.to_json();
  EXPECT_EQ(j["provenance"]["config_hash"], "abc");
  EXPECT_EQ(j["provenance"]["fold"], 2);
  EXPECT_FALSE(j["provenance"]["code_version"].get<std::string>().empty());
  EXPECT_EQ(j["evaluations"]["diagnosis"]["mcwpm"], 1.0);
  const auto ms = mean_std({1.0, 3.0});
  EXPECT_EQ(ms["mean"], 2.0);
  EXPECT_EQ(ms["std"], 1.0);
}
