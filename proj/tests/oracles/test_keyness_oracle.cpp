// Closed-form KL and an exhaustive-sort retrieval oracle.

#include "lmsd/keyness/distill.hpp"
#include "lmsd/keyness/retrieval.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace lmsd;
using namespace lmsd::keyness;

TEST(KeynessOracle, TwoComponentKlClosedForm) {
  // p = softmax([a, 0]), q = softmax([0, a]) with a = 1/T. Since
  // log(sigmoid(a)/sigmoid(-a)) = a, KL(p||q) = a * (p1 - p2) = a * tanh(a/2).
  const double T = 1.2, a = 1.0 / T;
  Vec t(2), s(2);
  t << 1.0, 0.0;
  s << 0.0, 1.0;
  EXPECT_NEAR(kl_divergence(t, s, T), a * std::tanh(a / 2.0), 1e-15);
  EXPECT_NEAR(kl_divergence(t, s, T), 0.32843214, 1e-8);
}

TEST(KeynessOracle, RetrievalMatchesExhaustiveSort) {
  Rng rng(21);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    FeatureIndex pool;
    for (int i = 0; i < 100; ++i) {
      Vec f(5);
      for (int d = 0; d < 5; ++d) f(d) = n(rng);
      if (i % 17 == 3) f = pool.features.back();  // exact duplicates force ties
      pool.add("id" + std::to_string((i * 37) % 101), f);
    }
    Vec q(5);
    for (int d = 0; d < 5; ++d) q(d) = n(rng);

    std::vector<std::pair<double, std::string>> all;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const Vec& f = pool.features[i];
      double dot = 0, nq = 0, nf = 0;
      for (int d = 0; d < 5; ++d) {
        dot += q(d) * f(d);
        nq += q(d) * q(d);
        nf += f(d) * f(d);
      }
      all.emplace_back(dot / (std::sqrt(nq) * std::sqrt(nf)), pool.ids[i]);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    const auto got = retrieve_baselines(q, pool, 10);
    ASSERT_EQ(got.size(), 10u);
    for (std::size_t k = 0; k < 10; ++k) {
      EXPECT_EQ(got[k].flight_id, all[k].second) << "trial " << trial << " rank " << k;
      EXPECT_NEAR(got[k].similarity, all[k].first, 1e-12);
    }
  }
}
