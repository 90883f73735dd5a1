#include <gtest/gtest.h>

#include <cmath>

#include "labelcert/certify_binary.hpp"
#include "labelcert/tight_bound.hpp"
#include "oracles.hpp"

using namespace labelcert;

TEST(MinRho, IdenticalMeasuresAtZeroFlips) {
  for (double p : {0.5, 0.6, 0.93}) EXPECT_NEAR(min_rho_measure(p, 0, 0.3), p, 1e-15);
}

TEST(MinRho, TwoRegionExamples) {
  EXPECT_NEAR(min_rho_measure(0.6, 1, 0.4), 0.4, 1e-14);
  EXPECT_NEAR(min_rho_measure(2.0 / 3.0, 1, 0.4), 0.5, 1e-14);
}

TEST(MinRho, RegionMassesNormalize) {
  for (int r : {1, 2, 5, 17, 64}) {
    const auto regions = likelihood_regions<double>(r, 0.3);
    double mu = 0.0, rho = 0.0;
    for (const auto& reg : regions) {
      mu += std::exp(reg.log_mu_mass);
      rho += std::exp(reg.log_rho_mass);
    }
    EXPECT_NEAR(mu, 1.0, 1e-12);
    EXPECT_NEAR(rho, 1.0, 1e-12);
  }
}

TEST(MinRho, NoRandomizedSetDoesBetter) {
  // Every set is a fraction f_a in [0, 1] of each region a; scan a grid of
  // fractions for all but one region and solve for the last to hit mu(S) = p.
  const double q = 0.35;
  for (int r = 1; r <= 3; ++r) {
    const auto regions = likelihood_regions<double>(r, q);
    std::vector<double> mu, rho;
    for (const auto& reg : regions) {
      mu.push_back(std::exp(reg.log_mu_mass));
      rho.push_back(std::exp(reg.log_rho_mass));
    }
    const int m = static_cast<int>(mu.size());
    const int steps = 20;
    for (double p : {0.55, 0.7, 0.85}) {
      const double best = min_rho_measure(p, r, q);
      std::vector<int> idx(static_cast<std::size_t>(m - 1), 0);
      while (true) {
        for (int last = 0; last < m; ++last) {
          double mu_s = 0.0, rho_s = 0.0;
          int pos = 0;
          for (int a = 0; a < m; ++a) {
            if (a == last) continue;
            const double f = static_cast<double>(idx[static_cast<std::size_t>(pos++)]) / steps;
            mu_s += f * mu[static_cast<std::size_t>(a)];
            rho_s += f * rho[static_cast<std::size_t>(a)];
          }
          const double need = (p - mu_s) / mu[static_cast<std::size_t>(last)];
          if (need < 0.0 || need > 1.0) continue;
          rho_s += need * rho[static_cast<std::size_t>(last)];
          ASSERT_GE(rho_s, best - 1e-10) << "r=" << r << " p=" << p;
        }
        std::size_t k = 0;
        while (k < idx.size() && ++idx[k] > steps) idx[k++] = 0;
        if (k == idx.size()) break;
      }
    }
  }
}

TEST(MinRho, SymmetricInTheTwoMeasures) {
  // Swapping mu and rho is q -> 1 - q with the regions reversed; compare the
  // greedy fill run on the swapped masses.
  for (int r : {1, 2, 4, 9}) {
    const double q = 0.3;
    const auto regions = likelihood_regions<double>(r, q);
    std::vector<double> mu, rho;
    for (auto it = regions.rbegin(); it != regions.rend(); ++it) {
      mu.push_back(std::exp(it->log_rho_mass));
      rho.push_back(std::exp(it->log_mu_mass));
    }
    for (double p : {0.55, 0.8, 0.95}) {
      EXPECT_NEAR(fill_min_target_mass(mu, rho, p), min_rho_measure(p, r, q), 1e-12);
    }
  }
}

TEST(Table, ExactRationalValues) {
  const auto t = build_table(0.4, 12, 256);
  num::ScopedBigPrecision guard(256);
  const oracle::Rational q(2, 5);
  EXPECT_EQ(oracle::exact_p_min(1, q), oracle::Rational(2, 3));
  EXPECT_EQ(oracle::exact_p_min(2, q), oracle::Rational(7, 10));
  EXPECT_EQ(num::to_double(t.p_min[0]), 0.5);
  // The table is built from the double nearest 0.4, so agreement is to double rounding.
  for (int r = 1; r <= 12; ++r) {
    const oracle::Rational exact = oracle::exact_p_min(r, q);
    const BigReal big = BigReal(numerator(exact).str()) / BigReal(denominator(exact).str());
    EXPECT_LT(num::to_double(num::abs(t.p_min[static_cast<std::size_t>(r)] - big)), 1e-15) << r;
  }
}

TEST(Table, StrictlyIncreasing) {
  const auto t = build_table(0.3, 10, 128);
  for (std::size_t r = 1; r < t.p_min.size(); ++r) EXPECT_GT(t.p_min[r], t.p_min[r - 1]);
  EXPECT_EQ(t.r_max(), 10);
}

TEST(Table, StopsAtPrecisionCap) {
  const auto t = build_table(0.1, 1000, 53);
  EXPECT_TRUE(t.truncated());
  EXPECT_LT(t.r_max(), 1000);
  const BigReal cap = margin_cap<BigReal>(53);
  for (const auto& p : t.p_min) EXPECT_LE(p, cap);
}

TEST(TightRadius, Examples) {
  const auto t = build_table(0.4, 10, 128);
  EXPECT_EQ(tight_radius(0.5, t, 100).r, 0);
  EXPECT_EQ(tight_radius(0.69, t, 100).r, 1);
  EXPECT_EQ(tight_radius(0.6935, t, 100).r, 1);
  EXPECT_EQ(binary_kl_radius(0.6935, 0.4, 100).r, 1);
  EXPECT_EQ(tight_radius(0.67, t, 100).r, 1);
  EXPECT_EQ(binary_kl_radius(0.67, 0.4, 100).r, 0);
}

TEST(TightRadius, ClampsToN) {
  const auto t = build_table(0.4, 10, 128);
  const auto r = tight_radius(0.9999, t, 3);
  EXPECT_EQ(r.r, 3);
  EXPECT_TRUE(r.capped);
}

TEST(TightRadius, DominatesKl) {
  for (double q : {0.1, 0.2, 0.3, 0.4, 0.45}) {
    const auto t = build_table(q, 1000, 53);
    for (double p = 0.5; p <= 0.9990001; p += 0.005) {
      ASSERT_GE(tight_radius(p, t, 100000).r, binary_kl_radius(p, q, 100000).r) << "p=" << p << " q=" << q;
    }
    ASSERT_GE(tight_radius(0.999, t, 100000).r, binary_kl_radius(0.999, q, 100000).r);
  }
}

TEST(TightRadius, AboutTwiceKlAtHighMargin) {
  const auto t = build_table(0.4, 400, 128);
  const double ratio = static_cast<double>(tight_radius(0.99, t, 100000).r) / binary_kl_radius(0.99, 0.4, 100000).r;
  EXPECT_GE(ratio, 1.5);
  EXPECT_LE(ratio, 2.5);
}
