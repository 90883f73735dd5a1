#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "labelcert/certify_binary.hpp"
#include "labelcert/sampling.hpp"
#include "labelcert/verify.hpp"
#include "oracles.hpp"

using namespace labelcert;
using oracle::alpha_of;
using oracle::labels_of;

TEST(CounterRng, Deterministic) {
  const CounterRng a(42), b(42), c(43);
  EXPECT_EQ(a.bits(0, 0), b.bits(0, 0));
  EXPECT_NE(a.bits(0, 0), c.bits(0, 0));
  EXPECT_NE(a.bits(0, 0), a.bits(1, 0));
  EXPECT_NE(a.bits(0, 0), a.bits(0, 1));
  EXPECT_EQ(a.derive(7), b.derive(7));
  // Frozen values: the generator is pure integer arithmetic, identical on every platform.
  EXPECT_EQ(CounterRng::mix(0), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(CounterRng(1).bits(2, 3), CounterRng::mix(CounterRng::mix(1 ^ CounterRng::mix(2)) + 3 * 0xd1b54a32d192ed03ULL));
}

TEST(CounterRng, UniformIsInUnitInterval) {
  const CounterRng r(5);
  double sum = 0.0;
  for (std::uint64_t i = 0; i < 100000; ++i) {
    const double u = r.uniform(0, i);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(SampleLabels, NoFlipsAtVanishingNoise) {
  const LabelVector y({0, 1, 1, 0, 1, 0, 0, 1, 1, 0}, 2);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) ASSERT_EQ(sample_labels(y, 1e-300, 2, seed), y);
}

TEST(SampleLabels, HalfNoiseFlipsHalf) {
  const LabelVector y(std::vector<int>(10000, 1), 2);
  const auto s = sample_labels(y, 0.5, 2, 99);
  int flips = 0;
  for (std::size_t j = 0; j < s.size(); ++j) flips += s[j] != y[j];
  EXPECT_NEAR(flips / 10000.0, 0.5, 0.02);
}

TEST(SampleLabels, MulticlassReplacementIsUniformOverOthers) {
  const LabelVector y(std::vector<int>(30000, 1), 4);
  const auto s = sample_labels(y, 0.6, 4, 3);
  std::vector<int> counts(4, 0);
  for (std::size_t j = 0; j < s.size(); ++j) ++counts[static_cast<std::size_t>(s[j])];
  EXPECT_NEAR(counts[1] / 30000.0, 0.4, 0.015);
  for (int c : {0, 2, 3}) EXPECT_NEAR(counts[static_cast<std::size_t>(c)] / 30000.0, 0.2, 0.015);
}

TEST(SampleLabels, SameSeedSameOutput) {
  const LabelVector y({0, 1, 2, 1, 0}, 3);
  EXPECT_EQ(sample_labels(y, 0.4, 3, 11), sample_labels(y, 0.4, 3, 11));
}

TEST(ClopperPearson, ClosedFormCorners) {
  EXPECT_NEAR(clopper_pearson_lower(100, 100, 0.01), std::pow(0.01, 1.0 / 100), 1e-12);
  EXPECT_NEAR(clopper_pearson_upper(0, 100, 0.01), 1.0 - std::pow(0.01, 1.0 / 100), 1e-12);
  EXPECT_EQ(clopper_pearson_lower(0, 10, 0.05), 0.0);
  EXPECT_EQ(clopper_pearson_upper(10, 10, 0.05), 1.0);
}

TEST(ClopperPearson, Coverage) {
  std::mt19937_64 gen(17);
  const double g = 0.7, delta = 0.05;
  const int n = 200, trials = 10000;
  std::binomial_distribution<int> bin(n, g);
  int fail = 0;
  for (int t = 0; t < trials; ++t) fail += clopper_pearson_lower(static_cast<std::uint64_t>(bin(gen)), n, delta) > g;
  const double rate = static_cast<double>(fail) / trials;
  EXPECT_LE(rate, delta + 3 * std::sqrt(delta * (1 - delta) / trials));
}

TEST(MonteCarlo, UnanimousVote) {
  const auto est = mc_estimate(alpha_of({1.0}), labels_of({1}), SmoothingConfig{1e-300, 2, 53}, 1000, 0.001, 1);
  EXPECT_EQ(est.counts[1], 1000U);
  EXPECT_EQ(est.g_hat, 1);
  EXPECT_NEAR(est.G_bound, std::pow(0.001, 1.0 / 1000), 1e-12);
}

TEST(MonteCarlo, TwoPointExample) {
  const auto alpha = alpha_of({0.3, 0.4});
  const auto y = labels_of({1, 1});
  const SmoothingConfig cfg{0.25, 2, 53};
  const auto ex = exact_g(alpha, y, cfg);
  EXPECT_NEAR(ex.G, 0.5625, 1e-15);
  EXPECT_EQ(ex.g, 1);
  const auto est = mc_estimate(alpha, y, cfg, 100000, 0.001, 2024);
  EXPECT_LE(est.G_bound, 0.5625);
  const double upper = clopper_pearson_upper(est.counts[1], est.N, 0.001);
  EXPECT_GE(upper, 0.5625);
  EXPECT_NEAR(est.G_hat, 0.5625, 0.01);
}

TEST(MonteCarlo, SingleSampleAbstains) {
  const auto est = mc_estimate(alpha_of({0.3, 0.4}), labels_of({1, 1}), SmoothingConfig{0.25, 2, 53}, 1, 0.001, 5);
  EXPECT_TRUE(est.abstained);
}

TEST(MonteCarlo, IndependentOfEvaluationOrder) {
  const auto alpha = alpha_of({0.3, 0.4, -0.1, 0.2});
  const auto y = labels_of({1, 0, 1, 1});
  const SmoothingConfig cfg{0.3, 2, 53};
  const auto est = mc_estimate(alpha, y, cfg, 5000, 0.01, 77);
  // Same draws taken in reverse order.
  const CounterRng rng(77);
  std::uint64_t ones = 0;
  for (std::uint64_t s = 5000; s-- > 0;) ones += base_prediction(alpha, sample_labels(y, 0.3, 2, rng.derive(s))) == 1;
  EXPECT_EQ(ones, est.counts[1]);
}

TEST(ExactVote, MatchesBruteForce) {
  std::mt19937_64 gen(19);
  std::uniform_int_distribution<int> nd(1, 16);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = oracle::random_binary_instance(gen, nd(gen));
    const auto ex = exact_g(inst.alpha, labels_of(inst.y), SmoothingConfig{0.2, 2, 53});
    const double p1 = oracle::prob_vote_one(inst.alpha, inst.y, 0.2);
    ASSERT_NEAR(ex.class_measure[1], p1, 1e-12);
    ASSERT_NEAR(ex.class_measure[0], 1 - p1, 1e-12);
  }
}

TEST(ExactVote, MulticlassMatchesBruteForce) {
  std::mt19937_64 gen(23);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> a(7);
    std::vector<int> y(7);
    for (std::size_t j = 0; j < 7; ++j) {
      a[j] = g(gen);
      y[j] = static_cast<int>(gen() % 3);
    }
    const auto ex = exact_g(alpha_of(a), labels_of(y, 3), SmoothingConfig{0.4, 3, 53});
    std::vector<double> measure(3, 0.0);
    oracle::for_each_outcome(y, 0.4, 3, [&](const std::vector<int>& v, double p) {
      std::vector<double> score(3, 0.0);
      for (std::size_t j = 0; j < v.size(); ++j) score[static_cast<std::size_t>(v[j])] += a[j];
      measure[static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin())] += p;
    });
    for (int c = 0; c < 3; ++c) ASSERT_NEAR(ex.class_measure[static_cast<std::size_t>(c)], measure[static_cast<std::size_t>(c)], 1e-12);
  }
}

TEST(ExactVote, RejectsLargeInstances) {
  const std::vector<double> a(26, 0.1);
  const std::vector<int> y(26, 1);
  EXPECT_THROW(exact_g(alpha_of(a), labels_of(y), SmoothingConfig{0.1, 2, 53}), ValidationError);
}

TEST(ExactVote, ApproachesHalfAtMaximalNoise) {
  const auto alpha = alpha_of({0.3, 0.25, 0.2, 0.15, 0.1});
  const auto y = labels_of({1, 1, 0, 1, 0});
  double prev = 1.0;
  for (double q : {0.1, 0.3, 0.45, 0.49, 0.5 - 1e-6, 0.5 - 1e-15}) {
    const double gap = std::abs(exact_g(alpha, y, SmoothingConfig{q, 2, 53}).class_measure[1] - 0.5);
    EXPECT_LE(gap, prev + 1e-15);
    prev = gap;
  }
  EXPECT_LT(prev, 0.2);
}

TEST(ExactVote, ComplementedLabelsGiveComplementaryVote) {
  std::mt19937_64 gen(29);
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = oracle::random_binary_instance(gen, 11);
    std::vector<double> a(inst.alpha.values().data(), inst.alpha.values().data() + inst.alpha.size());
    double s = 0.0;
    for (double v : a) s += v;
    if (std::abs(s) < 0.3) continue;
    for (auto& v : a) v /= s;
    std::vector<int> flipped(inst.y.size());
    for (std::size_t j = 0; j < flipped.size(); ++j) flipped[j] = 1 - inst.y[j];
    const SmoothingConfig cfg{0.2, 2, 53};
    const auto e1 = exact_g(alpha_of(a), labels_of(inst.y), cfg);
    const auto e2 = exact_g(alpha_of(a), labels_of(flipped), cfg);
    if (std::abs(e1.class_measure[1] - 0.5) < 1e-9) continue;
    // P_{1-y}(alpha^T y'' >= 1/2) = P_y(alpha^T y' <= 1/2)
    EXPECT_NE(e1.g, e2.g);
  }
}

TEST(ExactVote, ChernoffMarginNeverExceedsTruth) {
  std::mt19937_64 gen(31);
  std::uniform_int_distribution<int> nd(1, 16);
  int informative = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = oracle::random_binary_instance(gen, nd(gen));
    const SmoothingConfig cfg{0.1, 2, 53};
    const auto c = solve_chernoff(inst.alpha, labels_of(inst.y), cfg.q);
    if (c.p_star <= 0.55) continue;
    ++informative;
    const auto ex = exact_g(inst.alpha, labels_of(inst.y), cfg);
    ASSERT_EQ(ex.g, c.prediction);
    ASSERT_GE(ex.G, c.p_star - 1e-12);
  }
  EXPECT_GT(informative, 20);
}

TEST(Verify, ReportAgreesOnTheTwoPointExample) {
  const auto r = verify_alpha(alpha_of({0.3, 0.4}), labels_of({1, 1}), SmoothingConfig{0.25, 2, 53}, 20000, 0.001, 3);
  EXPECT_EQ(r.prediction, r.mc_prediction);
  EXPECT_TRUE(r.agree);
}
