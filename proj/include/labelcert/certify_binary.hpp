#pragma once

// Binary certification: Chernoff bound on the opposite-prediction probability,
// prediction from the sign of the optimal Chernoff parameter, and the
// certified number of label flips from the KL bound and the tight table.

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "labelcert/convex_solver.hpp"
#include "labelcert/dataset.hpp"
#include "labelcert/error.hpp"
#include "labelcert/numeric.hpp"
#include "labelcert/regression.hpp"
#include "labelcert/tight_bound.hpp"

namespace labelcert {

/// Log of the Chernoff bound on P(alpha^T y' <= 1/2) at t > 0 (and on
/// P(alpha^T y' >= 1/2) at -t):
///   f(t) = t/2 + sum_{y_i=1} log(q + (1-q) e^{-t a_i}) + sum_{y_i=0} log((1-q) + q e^{-t a_i}).
/// Each term is evaluated as log(c_i) + softplus(s_i L - t a_i) with
/// L = log((1-q)/q), so nothing overflows for large |t a_i|.
template <class Real = double>
class BinaryChernoffObjective {
public:
  BinaryChernoffObjective(const AlphaVector& alpha, const LabelVector& y, double q) {
    if (static_cast<std::size_t>(alpha.size()) != y.size()) {
      throw ValidationError("alpha and label vector lengths differ");
    }
    const Real lq = num::log(Real(q));
    const Real l1q = num::log1p(Real(-q));
    const Real ratio = l1q - lq;
    alpha_.reserve(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      alpha_.emplace_back(alpha[static_cast<Eigen::Index>(i)]);
      const bool one = y[i] == 1;
      base_.push_back(one ? lq : l1q);
      shift_.push_back(one ? ratio : Real(-ratio));
    }
  }

  Derivatives<Real> operator()(const Real& t) const {
    Derivatives<Real> d{t / 2, Real(0.5), Real(0), Real(0.5)};
    for (std::size_t i = 0; i < alpha_.size(); ++i) {
      const auto lt = num::logistic_terms<Real>(shift_[i] - t * alpha_[i]);
      d.value += base_[i] + lt.softplus;
      d.d1 -= alpha_[i] * lt.pos;
      d.d2 += alpha_[i] * alpha_[i] * lt.pos * lt.neg;
      d.d1_scale += num::abs(alpha_[i]) * lt.pos;
    }
    return d;
  }

private:
  std::vector<Real> alpha_;
  std::vector<Real> base_;
  std::vector<Real> shift_;
};

template <class Real>
struct ChernoffSolution {
  Real t_star;
  Real log_bound;     // log of the bound on the opposite-prediction probability
  int prediction = 0;
  bool deterministic = false;  // prediction cannot change under any label vector
};

/// Unconstrained minimization of the Chernoff objective.
///
/// When the sum of positive alpha entries is at most 1/2 the objective is
/// minimized at t -> -inf: alpha^T y' can never exceed 1/2 (or reaches it in a
/// single configuration), so the prediction is 0 and the bound is evaluated in
/// that limit.
template <class Real = double>
ChernoffSolution<Real> solve_chernoff_in(const AlphaVector& alpha, const LabelVector& y, double q,
                                         std::optional<Real> t0 = std::nullopt) {
  if (!(q > 0.0 && q < 0.5)) throw ValidationError("flip probability must lie in (0, 1/2)");
  double positive_mass = 0.0;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) positive_mass += std::max(alpha[i], 0.0);

  ChernoffSolution<Real> sol;
  if (positive_mass <= 0.5) {
    sol.prediction = 0;
    sol.t_star = -num::infinity<Real>();
    if (positive_mass < 0.5) {
      sol.deterministic = true;
      sol.log_bound = -num::infinity<Real>();
    } else {
      // Only configurations with y'_i = 1 on positive alpha and 0 on negative alpha reach 1/2.
      const Real lq = num::log(Real(q));
      const Real l1q = num::log1p(Real(-q));
      Real lb(0);
      for (Eigen::Index i = 0; i < alpha.size(); ++i) {
        if (alpha[i] == 0.0) continue;
        const bool want_one = alpha[i] > 0.0;
        const bool is_one = y[static_cast<std::size_t>(i)] == 1;
        lb += want_one == is_one ? l1q : lq;
      }
      sol.log_bound = lb;
    }
    return sol;
  }
  const BinaryChernoffObjective<Real> f(alpha, y, q);
  const auto m = minimize_convex<Real>(f, t0.value_or(Real(0)));
  sol.t_star = m.t;
  // f is convex, so t* >= 0 iff f'(0) <= 0. Reading the sign at 0 avoids
  // depending on solver noise when t* is near zero.
  sol.prediction = f(Real(0)).d1 <= Real(0) ? 1 : 0;
  sol.log_bound = m.value < Real(0) ? m.value : Real(0);
  return sol;
}

/// 1 - 2^(1 - bits): the largest margin the radius formulas accept.
template <class Real>
Real margin_cap(int bits) {
  return Real(1) - num::ldexp(Real(1), 1 - bits);
}

/// p* = max(1 - exp(log_bound), 1/2), clamped to the margin cap.
template <class Real>
Real margin_from_log_bound(const Real& log_bound, int bits) {
  Real p = num::one_minus_exp(log_bound);
  if (p < Real(0.5)) p = Real(0.5);
  const Real cap = margin_cap<Real>(bits);
  if (p > cap) p = cap;
  return p;
}

struct ChernoffResult {
  double t_star = 0.0;
  double log_bound = 0.0;
  double p_star = 0.5;
  int prediction = 0;
  bool deterministic = false;
};

inline ChernoffResult solve_chernoff(const AlphaVector& alpha, const LabelVector& y, double q) {
  const auto sol = solve_chernoff_in<double>(alpha, y, q);
  ChernoffResult r;
  r.t_star = sol.t_star;
  r.log_bound = sol.log_bound;
  r.prediction = sol.prediction;
  r.deterministic = sol.deterministic;
  r.p_star = sol.deterministic ? margin_cap<double>(num::kDoubleBits)
                               : margin_from_log_bound<double>(sol.log_bound, num::kDoubleBits);
  return r;
}

// ---------------------------------------------------------------------------
// KL certificate
// ---------------------------------------------------------------------------

/// KL divergence (nats) between flip measures whose base label vectors differ
/// in r positions: r (1 - Kq/(K-1)) log((1-q)(K-1)/q). Symmetric in the two measures.
inline double kl_divergence(long r, double q, int num_classes) {
  const double km1 = num_classes - 1;
  return static_cast<double>(r) * (1.0 - num_classes * q / km1) * std::log((1.0 - q) * km1 / q);
}

/// Binary special case, r (1-2q) log((1-q)/q).
inline double binary_kl_divergence(long r, double q) {
  return static_cast<double>(r) * (1.0 - 2.0 * q) * std::log((1.0 - q) / q);
}

namespace detail {

// Largest r in [0, n] with r * per_flip <= -1/2 log(4 p (1-p)).
template <class Real>
Radius radius_from_divergence(const Real& p, double per_flip, long n) {
  const Real half(0.5);
  if (!(p > half)) return {};
  const Real allowance = -num::log(Real(4) * p * (Real(1) - p)) / 2;
  if (!num::isfinite(allowance)) return {n, true};
  const Real x = allowance / Real(per_flip);
  if (x >= Real(n + 1)) return {n, true};
  long r = static_cast<long>(num::to_double(num::floor(x)));
  while (r > 0 && Real(per_flip) * Real(r) > allowance) --r;
  while (r < n && Real(per_flip) * Real(r + 1) <= allowance) ++r;
  return {r, false};
}

inline void check_q_for_classes(double q, int num_classes) {
  if (num_classes < 2) throw ValidationError("class count must be at least 2");
  const double q_max = static_cast<double>(num_classes - 1) / num_classes;
  if (!(q > 0.0 && q < q_max)) throw ValidationError("flip probability out of range for class count");
}

}  // namespace detail

/// Certified flips from the generic KL bound, floor(log(4p(1-p)) / (2 (1 - Kq/(K-1)) log(q/((1-q)(K-1))))),
/// clamped to [0, n].
template <class Real = double>
Radius kl_radius(const Real& p_star, double q, int num_classes, long n) {
  detail::check_q_for_classes(q, num_classes);
  return detail::radius_from_divergence(p_star, kl_divergence(1, q, num_classes), n);
}

template <class Real = double>
Radius binary_kl_radius(const Real& p_star, double q, long n) {
  detail::check_q_for_classes(q, 2);
  return detail::radius_from_divergence(p_star, binary_kl_divergence(1, q), n);
}

// ---------------------------------------------------------------------------
// Per-point certificate
// ---------------------------------------------------------------------------

struct Certificate {
  int prediction = 0;
  double t_star = 0.0;
  double log_bound = 0.0;
  double p_star = 0.5;
  long r_kl = 0;
  std::optional<long> r_tight;
  bool radius_capped = false;
  bool extended_precision = false;

  long best_radius() const { return r_tight ? std::max(*r_tight, r_kl) : r_kl; }
};

namespace detail {

// Double precision loses the margin once the bound drops below 2^-52.
inline bool needs_extended(double q, double log_bound, int precision_bits) {
  if (precision_bits <= num::kDoubleBits) return false;
  return q < 1e-3 || log_bound < -52.0 * std::log(2.0);
}

template <class Real>
void fill_radii(Certificate& cert, const Real& p, const SmoothingConfig& cfg, long n, const TightTable* table) {
  const Radius kl = binary_kl_radius(p, cfg.q, n);
  cert.r_kl = kl.r;
  cert.radius_capped = kl.capped;
  if (table != nullptr) {
    const Radius tight = tight_radius(p, *table, n);
    cert.r_tight = tight.r;
    cert.radius_capped = cert.radius_capped || tight.capped;
  }
}

}  // namespace detail

/// Certificate for one training-label vector and kernel weight vector.
///
/// Falls back to BigReal arithmetic (cfg.precision_bits wide) when q < 1e-3
/// or the bound underflows double precision. BigReal's default precision must
/// already be set to cfg.precision_bits when calling from several threads.
inline Certificate certify_alpha(const AlphaVector& alpha, const LabelVector& y, const SmoothingConfig& cfg,
                                 const TightTable* table = nullptr) {
  if (cfg.num_classes != 2) throw ValidationError("binary certification requires K = 2");
  cfg.validate();
  if (table != nullptr && std::abs(table->q - cfg.q) > 1e-12) {
    throw ValidationError("tight table was built for a different flip probability");
  }
  const long n = static_cast<long>(y.size());
  const auto sol = solve_chernoff_in<double>(alpha, y, cfg.q);
  Certificate cert;
  cert.prediction = sol.prediction;
  cert.t_star = sol.t_star;
  cert.log_bound = sol.log_bound;
  if (sol.deterministic) {
    cert.p_star = margin_cap<double>(num::kDoubleBits);
    cert.r_kl = n;
    if (table != nullptr) cert.r_tight = n;
    cert.radius_capped = true;
    return cert;
  }
  if (detail::needs_extended(cfg.q, sol.log_bound, cfg.precision_bits)) {
    num::ensure_big_precision(cfg.precision_bits);
    const std::optional<BigReal> start =
        num::isfinite(sol.t_star) ? std::optional<BigReal>(BigReal(sol.t_star)) : std::nullopt;
    const auto big = solve_chernoff_in<BigReal>(alpha, y, cfg.q, start);
    const BigReal p = margin_from_log_bound<BigReal>(big.log_bound, cfg.precision_bits);
    cert.extended_precision = true;
    cert.prediction = big.prediction;
    cert.t_star = num::to_double(big.t_star);
    cert.log_bound = num::to_double(big.log_bound);
    cert.p_star = num::to_double(p);
    detail::fill_radii(cert, p, cfg, n, table);
    return cert;
  }
  const double p = margin_from_log_bound<double>(sol.log_bound, num::kDoubleBits);
  cert.p_star = p;
  detail::fill_radii(cert, p, cfg, n, table);
  return cert;
}

/// alpha_for -> solve_chernoff -> KL radius (+ tight radius when a table is given).
inline Certificate certify_point(const RidgeModel& model, const LabelVector& y,
                                 const Eigen::Ref<const Eigen::VectorXd>& test_features,
                                 const SmoothingConfig& cfg, const TightTable* table = nullptr) {
  if (static_cast<Eigen::Index>(y.size()) != model.n()) {
    throw ValidationError("label count does not match model training size");
  }
  return certify_alpha(alpha_for(model, test_features), y, cfg, table);
}

/// Prediction of the certified classifier only (sign of t*), in double precision.
inline int certified_prediction(const AlphaVector& alpha, const LabelVector& y, double q) {
  if (!(q > 0.0 && q < 0.5)) throw ValidationError("flip probability must lie in (0, 1/2)");
  double positive_mass = 0.0;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) positive_mass += std::max(alpha[i], 0.0);
  if (positive_mass <= 0.5) return 0;
  return BinaryChernoffObjective<double>(alpha, y, q)(0.0).d1 <= 0.0 ? 1 : 0;
}

}  // namespace labelcert
