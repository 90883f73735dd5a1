#include <gtest/gtest.h>

#include <random>

#include "labelcert/attack.hpp"
#include "labelcert/sampling.hpp"
#include "labelcert/synthetic.hpp"
#include "oracles.hpp"

using namespace labelcert;
using oracle::alpha_of;
using oracle::labels_of;

TEST(UndefendedAttack, SingleFlipExample) {
  const auto alpha = alpha_of({0.6, 0.3, -0.2});
  const auto y = labels_of({1, 1, 0});
  const auto r = greedy_attack_undefended(alpha, y, 2, 3);
  ASSERT_TRUE(r.achieved());
  EXPECT_EQ(*r.flips_needed, 1);
  ASSERT_EQ(r.flip_sequence.size(), 1U);
  EXPECT_EQ(r.flip_sequence[0].index, 0U);
  EXPECT_EQ(r.flip_sequence[0].new_label, 0);
  const int minimal = oracle::minimal_flips(y.values(), 2, 3, [&](const std::vector<int>& v) {
    return base_prediction(alpha, labels_of(v));
  });
  EXPECT_EQ(minimal, 1);
}

TEST(UndefendedAttack, ZeroAlphaNeverFlips) {
  const auto r = greedy_attack_undefended(alpha_of({0.0, 0.0, 0.0}), labels_of({1, 0, 1}), 2, 3);
  EXPECT_FALSE(r.achieved());
  EXPECT_TRUE(r.flip_sequence.empty());
  EXPECT_EQ(r.budget, 3);
}

TEST(UndefendedAttack, ZeroBudget) {
  const auto r = greedy_attack_undefended(alpha_of({0.6, 0.3, -0.2}), labels_of({1, 1, 0}), 2, 0);
  EXPECT_FALSE(r.achieved());
}

TEST(UndefendedAttack, RejectsBadBudget) {
  EXPECT_THROW(greedy_attack_undefended(alpha_of({0.6}), labels_of({1}), 2, 2), ValidationError);
  EXPECT_THROW(greedy_attack_undefended(alpha_of({0.6}), labels_of({1}), 2, -1), ValidationError);
}

TEST(UndefendedAttack, GreedyIsOptimalForBinaryLinearVote) {
  std::mt19937_64 gen(53);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = oracle::random_binary_instance(gen, 10);
    const auto y = labels_of(inst.y);
    const auto r = greedy_attack_undefended(inst.alpha, y, 2, 10);
    const int minimal = oracle::minimal_flips(inst.y, 2, 10, [&](const std::vector<int>& v) {
      return base_prediction(inst.alpha, labels_of(v));
    });
    if (minimal < 0) {
      EXPECT_FALSE(r.achieved());
    } else {
      ASSERT_TRUE(r.achieved());
      EXPECT_EQ(*r.flips_needed, minimal);
    }
  }
}

TEST(UndefendedAttack, MulticlassFlipsToCompetitor) {
  const auto alpha = alpha_of({0.5, 0.4, 0.3, 0.1});
  const auto y = labels_of({0, 0, 1, 2}, 3);
  const auto r = greedy_attack_undefended(alpha, y, 3, 4);
  ASSERT_TRUE(r.achieved());
  const int minimal = oracle::minimal_flips(y.values(), 3, 4, [&](const std::vector<int>& v) {
    return base_prediction(alpha, labels_of(v, 3));
  });
  EXPECT_GE(*r.flips_needed, minimal);
  EXPECT_NE(base_prediction(alpha, apply_flips(y, r.flip_sequence, r.flip_sequence.size())), 0);
}

TEST(SmoothedAttack, SymmetricPair) {
  const auto alpha = alpha_of({0.4, 0.4});
  const auto y = labels_of({1, 1});
  const SmoothingConfig cfg{0.1, 2, 53};
  const auto r = greedy_attack_smoothed_alpha(alpha, y, cfg, 2);
  const int minimal = oracle::minimal_flips(y.values(), 2, 2, [&](const std::vector<int>& v) {
    return certified_prediction(alpha, labels_of(v), cfg.q);
  });
  ASSERT_TRUE(r.achieved());
  EXPECT_EQ(*r.flips_needed, minimal);
}

TEST(SmoothedAttack, GreedyIsAtLeastTheExhaustiveMinimum) {
  std::mt19937_64 gen(59);
  std::uniform_int_distribution<int> nd(2, 14);
  for (int trial = 0; trial < 150; ++trial) {
    const int n = nd(gen);
    const auto inst = oracle::random_binary_instance(gen, n);
    const auto y = labels_of(inst.y);
    const SmoothingConfig cfg{0.2, 2, 53};
    const auto r = greedy_attack_smoothed_alpha(inst.alpha, y, cfg, n);
    const int minimal = oracle::minimal_flips(inst.y, 2, 3, [&](const std::vector<int>& v) {
      return solve_chernoff(inst.alpha, labels_of(v), cfg.q).prediction;
    });
    if (minimal < 0) continue;
    ASSERT_TRUE(r.achieved());
    EXPECT_GE(*r.flips_needed, minimal);
  }
}

TEST(SmoothedAttack, NeverBeatsTheCertificate) {
  std::mt19937_64 gen(61);
  std::uniform_int_distribution<int> nd(1, 40);
  const auto table = build_table(0.1, 40, 256);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = nd(gen);
    const auto inst = oracle::random_binary_instance(gen, n);
    const auto y = labels_of(inst.y);
    const SmoothingConfig cfg{0.1, 2, 256};
    const auto cert = certify_alpha(inst.alpha, y, cfg, &table);
    const auto r = greedy_attack_smoothed_alpha(inst.alpha, y, cfg, n);
    if (r.achieved()) ASSERT_GT(*r.flips_needed, cert.best_radius());
  }
}

TEST(SmoothedAttack, RadiusKeepsTheExactVote) {
  // Flipping any <= r labels must not change the exact majority vote.
  std::mt19937_64 gen(67);
  std::uniform_int_distribution<int> nd(2, 12);
  const auto table = build_table(0.05, 16, 256);
  int checked = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const int n = nd(gen);
    const auto inst = oracle::random_binary_instance(gen, n);
    const SmoothingConfig cfg{0.05, 2, 256};
    const auto cert = certify_alpha(inst.alpha, labels_of(inst.y), cfg, &table);
    const long r = std::min<long>(cert.best_radius(), 2);
    if (r == 0) continue;
    ++checked;
    const int base = exact_g(inst.alpha, labels_of(inst.y), cfg).g;
    const int changed = oracle::minimal_flips(inst.y, 2, static_cast<int>(r), [&](const std::vector<int>& v) {
      return exact_g(inst.alpha, labels_of(v), cfg).g;
    });
    ASSERT_EQ(exact_g(inst.alpha, labels_of(inst.y), cfg).g, base);
    EXPECT_EQ(changed, -1);
  }
  EXPECT_GT(checked, 10);
}

TEST(SmoothedAttack, MulticlassReplaysCleanly) {
  std::mt19937_64 gen(71);
  std::normal_distribution<double> g(0.3, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> a(12);
    std::vector<int> y(12);
    for (std::size_t j = 0; j < a.size(); ++j) {
      a[j] = g(gen) / 6;
      y[j] = static_cast<int>(gen() % 3);
    }
    const SmoothingConfig cfg{0.2, 3, 53};
    const auto r = greedy_attack_smoothed_alpha(alpha_of(a), labels_of(y, 3), cfg, 12);
    if (!r.achieved()) continue;
    const int before = certified_prediction_multiclass(alpha_of(a), labels_of(y, 3), cfg.q);
    const auto flipped = apply_flips(labels_of(y, 3), r.flip_sequence, r.flip_sequence.size());
    EXPECT_NE(certified_prediction_multiclass(alpha_of(a), flipped, cfg.q), before);
  }
}

namespace {

struct CurveFixture {
  RidgeModel model;
  Dataset train, test;
};

CurveFixture small_problem() {
  BlobSpec spec;
  spec.n = 200;
  spec.dim = 4;
  spec.separation = 3.0;
  CurveFixture f;
  f.train = make_blobs(spec, 5);
  spec.n = 60;
  f.test = make_blobs(spec, 6);
  f.model = precompute(f.train.features, estimate_lambda(f.train.features, f.train.labels, 0.1));
  return f;
}

}  // namespace

TEST(RobustnessCurve, DefendedCurvesAreConsistent) {
  const auto f = small_problem();
  const SmoothingConfig cfg{0.1, 2, 256};
  const auto table = build_table(0.1, 200, 256);
  const auto c = robustness_curve(f.model, f.train.labels, f.test.features.values(), f.test.labels, cfg, &table);
  ASSERT_FALSE(c.certified.empty());
  ASSERT_EQ(c.certified.size(), c.attacked.size());
  EXPECT_DOUBLE_EQ(c.certified[0], c.nonrobust_accuracy);
  EXPECT_DOUBLE_EQ(c.attacked[0], c.nonrobust_accuracy);
  for (std::size_t r = 0; r < c.certified.size(); ++r) {
    EXPECT_LE(c.certified[r], c.attacked[r]);
    if (r > 0) {
      EXPECT_LE(c.certified[r], c.certified[r - 1]);
      EXPECT_LE(c.attacked[r], c.attacked[r - 1]);
    }
  }
  for (const auto& p : c.points)
    if (p.attack_flips) EXPECT_GT(*p.attack_flips, p.certified_radius);
}

TEST(RobustnessCurve, ParallelMatchesSerial) {
  const auto f = small_problem();
  const SmoothingConfig cfg{0.1, 2, 256};
  const auto table = build_table(0.1, 200, 256);
  CurveOptions serial, parallel;
  parallel.workers = 4;
  const auto a = robustness_curve(f.model, f.train.labels, f.test.features.values(), f.test.labels, cfg, &table, serial);
  const auto b = robustness_curve(f.model, f.train.labels, f.test.features.values(), f.test.labels, cfg, &table, parallel);
  EXPECT_EQ(a.certified, b.certified);
  EXPECT_EQ(a.attacked, b.attacked);
}

TEST(RobustnessCurve, UndefendedHasNoCertifiedCurve) {
  const auto f = small_problem();
  CurveOptions opt;
  opt.mode = AttackMode::kUndefended;
  const auto c = robustness_curve(f.model, f.train.labels, f.test.features.values(), f.test.labels,
                                  SmoothingConfig{0.1, 2, 53}, nullptr, opt);
  EXPECT_TRUE(c.certified.empty());
  ASSERT_FALSE(c.attacked.empty());
  EXPECT_DOUBLE_EQ(c.attacked[0], c.nonrobust_accuracy);
}

TEST(RobustnessCurve, ConstantClassifierBaseline) {
  const LabelVector train({1, 1, 1, 0}, 2);
  const LabelVector test({1, 0, 1, 1, 0}, 2);
  EXPECT_DOUBLE_EQ(constant_classifier_accuracy(train, test), 0.6);
  EXPECT_DOUBLE_EQ(constant_classifier_accuracy(train, LabelVector({}, 2)), 0.0);
}
