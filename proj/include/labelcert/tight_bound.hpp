#pragma once

// Exact worst-case certificate for binary label flips.
//
// Two label vectors differing in r positions induce flip measures mu and rho.
// Coordinates where they agree cancel in the likelihood ratio, so both
// measures reduce to a distribution over a = number of the r differing
// coordinates whose sampled label equals the original one:
//
//   mu(a)  = C(r,a) (1-q)^a q^(r-a)
//   rho(a) = C(r,a) q^a (1-q)^(r-a)
//   log(rho/mu) = (r - 2a) log((1-q)/q)
//
// The smallest rho-mass of any (randomized) set with mu-mass p is obtained by
// filling regions in ascending order of rho/mu. A margin p certifies r flips
// when that smallest mass is still at least 1/2.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "labelcert/error.hpp"
#include "labelcert/numeric.hpp"

namespace labelcert {

template <class Real>
struct LikelihoodRegion {
  int a = 0;
  Real log_mu_mass;
  Real log_rho_mass;
  Real log_ratio;  // log_rho_mass - log_mu_mass
};

namespace detail {

inline void check_binary_q(double q) {
  if (!(q > 0.0 && q < 0.5)) throw ValidationError("flip probability must lie in (0, 1/2)");
}

template <class Real>
Real log_binomial(int r, int a) {
  return num::lgamma(Real(r + 1)) - num::lgamma(Real(a + 1)) - num::lgamma(Real(r - a + 1));
}

}  // namespace detail

/// Regions sorted by ascending likelihood ratio rho/mu (a = r first).
template <class Real = double>
std::vector<LikelihoodRegion<Real>> likelihood_regions(int r, double q) {
  detail::check_binary_q(q);
  if (r < 0) throw ValidationError("flip count must be non-negative");
  const Real lq = num::log(Real(q));
  const Real l1q = num::log1p(Real(-q));
  std::vector<LikelihoodRegion<Real>> regions;
  regions.reserve(static_cast<std::size_t>(r) + 1);
  for (int a = r; a >= 0; --a) {
    const Real lc = detail::log_binomial<Real>(r, a);
    LikelihoodRegion<Real> reg;
    reg.a = a;
    reg.log_mu_mass = lc + Real(a) * l1q + Real(r - a) * lq;
    reg.log_rho_mass = lc + Real(a) * lq + Real(r - a) * l1q;
    reg.log_ratio = reg.log_rho_mass - reg.log_mu_mass;
    regions.push_back(reg);
  }
  return regions;
}

/// Smallest target mass of a randomized set whose source mass is `p`, for
/// regions already sorted by ascending target/source ratio.
template <class Real>
Real fill_min_target_mass(const std::vector<Real>& source_mass, const std::vector<Real>& target_mass, Real p) {
  Real remaining = p;
  Real acc(0);
  for (std::size_t i = 0; i < source_mass.size() && remaining > Real(0); ++i) {
    if (remaining >= source_mass[i]) {
      acc += target_mass[i];
      remaining -= source_mass[i];
    } else {
      acc += remaining * (target_mass[i] / source_mass[i]);
      remaining = Real(0);
    }
  }
  return acc;
}

/// inf { rho(S) : mu(S) = p } for measures differing in r coordinates.
template <class Real = double>
Real min_rho_measure(Real p, int r, double q) {
  const auto regions = likelihood_regions<Real>(r, q);
  std::vector<Real> mu, rho;
  for (const auto& reg : regions) {
    mu.push_back(num::exp(reg.log_mu_mass));
    rho.push_back(num::exp(reg.log_rho_mass));
  }
  return fill_min_target_mass(mu, rho, p);
}

/// Smallest certifying margin per flip count, p_min[0] = 1/2.
struct TightTable {
  double q = 0.0;
  int precision_bits = 53;
  int requested_r_max = 0;
  std::vector<BigReal> p_min;  // index r

  int r_max() const { return static_cast<int>(p_min.size()) - 1; }
  // True when the table stopped before requested_r_max because p_min reached 1 - 2^(1-bits).
  bool truncated() const { return r_max() < requested_r_max; }
};

namespace detail {

// p with min_rho_measure(p, r, q) = 1/2, accumulated region by region.
inline BigReal exact_p_min(int r, double q) {
  const auto regions = likelihood_regions<BigReal>(r, q);
  const BigReal half = BigReal(1) / 2;
  BigReal cum_mu(0), cum_rho(0);
  for (const auto& reg : regions) {
    const BigReal mu = num::exp(reg.log_mu_mass);
    const BigReal rho = num::exp(reg.log_rho_mass);
    if (cum_rho + rho >= half) return cum_mu + (half - cum_rho) * (mu / rho);
    cum_mu += mu;
    cum_rho += rho;
  }
  return BigReal(1);
}

}  // namespace detail

/// Builds p_min[0..r_max] with `precision_bits` of working precision. Stops early
/// once p_min exceeds 1 - 2^(1 - precision_bits).
///
/// Changes BigReal's process-wide default precision for the duration of the call.
inline TightTable build_table(double q, int r_max, int precision_bits) {
  detail::check_binary_q(q);
  if (r_max < 0) throw ValidationError("r_max must be non-negative");
  if (precision_bits < 53) throw ValidationError("precision_bits must be at least 53");
  num::ScopedBigPrecision guard(precision_bits);
  TightTable table;
  table.q = q;
  table.precision_bits = precision_bits;
  table.requested_r_max = r_max;
  const BigReal cap = BigReal(1) - num::ldexp(BigReal(1), 1 - precision_bits);
  for (int r = 0; r <= r_max; ++r) {
    BigReal p = r == 0 ? BigReal(1) / 2 : detail::exact_p_min(r, q);
    if (p > cap) break;
    table.p_min.push_back(std::move(p));
  }
  return table;
}

struct Radius {
  long r = 0;
  bool capped = false;  // the bound exceeded n and was clamped
};

/// Largest r <= min(r_max, n) with p >= p_min[r].
template <class Real>
Radius tight_radius(const Real& p_star, const TightTable& table, long n) {
  if (table.p_min.empty()) return {};
  const BigReal p(p_star);
  const auto it = std::upper_bound(table.p_min.begin(), table.p_min.end(), p);
  long r = static_cast<long>(it - table.p_min.begin()) - 1;
  if (r < 0) r = 0;
  Radius out{r, false};
  if (out.r > n) {
    out.r = n;
    out.capped = true;
  }
  return out;
}

}  // namespace labelcert
