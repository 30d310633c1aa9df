#include "fixtures.hpp"

#include "lmsd/training/trainer.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace lmsd;
using namespace lmsd::training;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("lmsd_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

TrainConfig quick(Stage stage, int epochs = 4) {
  TrainConfig c;
  c.stage = stage;
  c.lr = 1e-2;
  c.batch_size = 8;
  c.max_epochs = epochs;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(EarlyStopper, PatienceCounter) {
  EarlyStopper s(3);
  const std::vector<double> losses = {1.0, 0.9, 0.95, 0.96, 0.97};
  int stopped_at = 0;
  for (std::size_t i = 0; i < losses.size(); ++i)
    if (s.update(losses[i])) {
      stopped_at = static_cast<int>(i) + 1;
      break;
    }
  EXPECT_EQ(stopped_at, 5);
  EXPECT_EQ(s.best_epoch(), 2);
  EXPECT_EQ(s.best(), 0.9);
}

TEST(Timing, AdditiveFormula) {
  TrainReport a, f;
  a.total_time = 100;
  a.epochs_run = 10;
  f.total_time = 50;
  f.epochs_run = 5;
  const auto t = lmsd_timing(a, f);
  EXPECT_DOUBLE_EQ(t.ttt, 150.0);
  EXPECT_DOUBLE_EQ(t.et, 10.0);
  EXPECT_THROW(lmsd_timing(a, std::nullopt), Error);
  a.epochs_run = f.epochs_run = 0;
  EXPECT_THROW(lmsd_timing(a, f), Error);
}

TEST(Adam, MinimizesQuadratic) {
  Param p("w", 1, 3);
  p.value << 3.0, -2.0, 1.0;
  Adam opt({&p}, {0.1});
  for (int i = 0; i < 500; ++i) {
    p.grad = 2.0 * p.value;
    opt.step();
  }
  EXPECT_LT(p.value.norm(), 1e-2);
  EXPECT_EQ(p.grad.norm(), 0.0);
}

TEST(Adam, FirstStepHasLrMagnitude) {
  Param p("w", 1, 2);
  p.value << 1.0, 1.0;
  p.grad << 5.0, -0.01;
  Adam opt({&p}, {0.01});
  opt.step();
  EXPECT_NEAR(p.value(0, 0), 0.99, 1e-8);
  EXPECT_NEAR(p.value(0, 1), 1.01, 1e-6);
}

TEST(Config, AdStageRejectsAugmentation) {
  auto c = quick(Stage::ad);
  c.k_da = 3;
  EXPECT_THROW(c.validate(), Error);
  c.k_da = 0;
  c.internal_split = 1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Split, StratifiedAndDeterministic) {
  auto ds = fixtures::offset_dataset(40, 10, 2, 8, 4, 1);
  auto [tr, va] = stratified_split(ds, Stage::ad, 0.9, 5);
  EXPECT_EQ(va.size(), 6u);  // 4 healthy + 2 anomalous
  EXPECT_EQ(tr.size() + va.size(), ds.size());
  auto [tr2, va2] = stratified_split(ds, Stage::ad, 0.9, 5);
  EXPECT_EQ(va.flight_ids(), va2.flight_ids());
}

TEST(Train, SeparableAdLearns) {
  auto ds = fixtures::offset_dataset(60, 30, 2, 16, 4, 2);
  nn::Model m(fixtures::small_mmk(16, 4, 2));
  auto cfg = quick(Stage::ad, 6);
  cfg.early_stop_patience = 10;
  const auto rep = train_stage(m, ds, cfg);
  ASSERT_GE(rep.epochs_run, 3);
  EXPECT_LT(rep.epochs[1].train_loss, rep.epochs[0].train_loss);
  EXPECT_LT(rep.epochs[2].train_loss, rep.epochs[1].train_loss);
  EXPECT_GE(rep.epochs[static_cast<std::size_t>(rep.best_epoch - 1)].val_acc, 0.95);
  EXPECT_EQ(rep.epoch_times.size(), static_cast<std::size_t>(rep.epochs_run));
  EXPECT_FALSE(m.training());
}

TEST(Train, BestRestoredAndReproducible) {
  auto ds = fixtures::offset_dataset(30, 15, 2, 16, 4, 3);
  nn::Model m(fixtures::small_mmk(16, 4, 2));
  const auto dir = temp_dir("train_ckpt");
  TrainIO io;
  io.checkpoint_dir = dir / "ckpt";
  io.log_path = dir / "log.jsonl";
  const auto rep = train_stage(m, ds, quick(Stage::ad, 5), io);
  double best = 1e300;
  for (const auto& e : rep.epochs) best = std::min(best, e.val_loss);
  EXPECT_EQ(rep.best_val_loss, best);
  auto [tr, va] = stratified_split(ds, Stage::ad, 0.9, 3);
  EXPECT_NEAR(evaluate_loss(m, va, Stage::ad).loss, rep.best_val_loss, 1e-6);
  auto loaded = nn::load_model(io.checkpoint_dir / "best.ckpt");
  EXPECT_EQ(loaded.hash(), m.hash());
  EXPECT_TRUE(std::filesystem::exists(io.checkpoint_dir / "last.ckpt"));
  std::ifstream log(io.log_path);
  int lines = 0;
  for (std::string l; std::getline(log, l);) {
    EXPECT_EQ(nlohmann::json::parse(l)["stage"], "ad");
    ++lines;
  }
  EXPECT_EQ(lines, rep.epochs_run);
  EXPECT_EQ(TrainReport::from_json(rep.to_json()).best_epoch, rep.best_epoch);
  std::filesystem::remove_all(dir);
}

TEST(Train, DeterministicGivenSeed) {
  auto ds = fixtures::offset_dataset(20, 10, 2, 16, 4, 4);
  auto c = fixtures::small_convtok(16, 4, 2);
  c.attention.dropout = 0.1;
  nn::Model a(c), b(c);
  train_stage(a, ds, quick(Stage::ad, 2));
  train_stage(b, ds, quick(Stage::ad, 2));
  EXPECT_EQ(a.hash(), b.hash());
}

TEST(Train, FcSeesNoHealthyFlights) {
  auto ds = fixtures::offset_dataset(30, 12, 3, 16, 4, 5);
  nn::Model m(fixtures::small_mmk(16, 4, 3));
  auto cfg = quick(Stage::fc, 2);
  cfg.k_da = 3;
  EXPECT_THROW(train_stage(m, ds, cfg), Error);  // healthy flights present
  dataio::AccessAudit audit;
  TrainIO io;
  io.audit = &audit;
  const auto rep = train_stage(m, dataio::anomalous_subset(ds), cfg, io);
  EXPECT_EQ(rep.loader.healthy_seen, 0);
  EXPECT_GT(rep.loader.samples_seen, 0);
  for (const auto& id : audit.reads(dataio::AccessPurpose::train)) EXPECT_EQ(id[0], 'f');
}

TEST(Train, AugmentedCopiesStayOutOfValidation) {
  auto ds = fixtures::offset_dataset(0, 0, 3, 16, 4, 6);
  auto big = fixtures::offset_dataset(0, 20, 1, 16, 4, 7);
  for (auto& s : big.samples) {
    s.fc_label = 1;
    ds.samples.push_back(s);
  }
  auto small = fixtures::offset_dataset(0, 5, 2, 16, 4, 8);
  for (auto& s : small.samples)
    if (*s.fc_label == 2) ds.samples.push_back(s);
  nn::Model m(fixtures::small_mmk(16, 4, 3));
  auto cfg = quick(Stage::fc, 1);
  cfg.k_da = 3;
  dataio::AccessAudit audit;
  TrainIO io;
  io.audit = &audit;
  const auto rep = train_stage(m, ds, cfg, io);
  // class 1: 20 -> 18 train; class 2: 5 -> 4 train, replicated to min(12, 18) = 12.
  EXPECT_EQ(rep.val_size, 3u);
  EXPECT_EQ(rep.train_size, 18u + 12u);
  const auto val = audit.reads(dataio::AccessPurpose::validate);
  for (const auto& id : audit.reads(dataio::AccessPurpose::train)) EXPECT_EQ(val.count(id), 0u) << id;
}

TEST(Train, StagesShareNoParameters) {
  nn::Model h(fixtures::small_convtok(16, 4, 2)), f(fixtures::small_mmk(16, 4, 3));
  std::set<const void*> a;
  for (Param* p : h.params()) a.insert(p->value.data());
  for (Param* p : f.params()) EXPECT_EQ(a.count(p->value.data()), 0u);
}

TEST(Train, NonFiniteLossReportsLrAndBatch) {
  auto ds = fixtures::offset_dataset(20, 10, 2, 16, 4, 9);
  ds.samples[3].values(0, 0) = std::numeric_limits<double>::infinity();
  nn::Model m(fixtures::small_mmk(16, 4, 2));
  try {
    train_stage(m, ds, quick(Stage::ad, 1));
    FAIL();
  } catch (const Error& e) {
    const std::string w = e.what();
    EXPECT_NE(w.find("lr="), std::string::npos) << w;
    EXPECT_NE(w.find("batch"), std::string::npos) << w;
  }
}

TEST(Train, EmptyValidationIsAnError) {
  auto ds = fixtures::offset_dataset(3, 1, 1, 16, 4, 10);
  nn::Model m(fixtures::small_mmk(16, 4, 2));
  EXPECT_THROW(train_stage(m, ds, quick(Stage::ad, 1)), Error);
  EXPECT_THROW(train_stage(m, ds.empty_like(), quick(Stage::ad, 1)), Error);
}

TEST(Train, DepthOneMmkSeparatesThreeFaults) {
  // 5-sigma channel offsets; a single block must separate unseen flights.
  auto train = dataio::anomalous_subset(fixtures::offset_dataset(0, 40, 3, 32, 4, 11, 5.0));
  auto test = dataio::anomalous_subset(fixtures::offset_dataset(0, 30, 3, 32, 4, 12, 5.0));
  nn::Model m(fixtures::small_mmk(32, 4, 3));
  auto cfg = quick(Stage::fc, 8);
  cfg.early_stop_patience = 10;
  train_stage(m, train, cfg);
  EXPECT_GE(evaluate_loss(m, test, Stage::fc).acc, 0.95);
}
