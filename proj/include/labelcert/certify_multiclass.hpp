#pragma once

// Multi-class certification from pairwise Chernoff bounds.
//
// For classes i != i', D_j = Y_ji - Y_ji' takes values +1, 0, -1 with
// probabilities that depend only on whether y_j is i, i', or neither. The
// Chernoff bound on P(alpha^T (Y_i - Y_i') <= 0) is
//   min_{t>0} sum_j log(p+ e^{-t a_j} + p0 + p- e^{t a_j}).
// Each unordered pair is minimized once without constraint; the sign of the
// minimizer says which direction the bound is informative for.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "labelcert/certify_binary.hpp"
#include "labelcert/convex_solver.hpp"
#include "labelcert/dataset.hpp"
#include "labelcert/numeric.hpp"
#include "labelcert/regression.hpp"

namespace labelcert {

enum class RowCase { kCandidate = 0, kCompetitor = 1, kOther = 2 };

struct RowCaseProbabilities {
  double plus = 0.0;   // P(D = +1)
  double zero = 0.0;   // P(D = 0)
  double minus = 0.0;  // P(D = -1)
};

/// Distribution of Y_ji - Y_ji' given whether y_j equals i, i', or another class.
inline RowCaseProbabilities row_case_probabilities(RowCase c, double q, int num_classes) {
  const double km1 = num_classes - 1;
  const double other = q / km1;
  switch (c) {
    case RowCase::kCandidate:
      return {1.0 - q, q * (num_classes - 2) / km1, other};
    case RowCase::kCompetitor:
      return {other, q * (num_classes - 2) / km1, 1.0 - q};
    case RowCase::kOther:
      break;
  }
  return {other, 1.0 - 2.0 * other, other};
}

template <class Real = double>
class PairwiseChernoffObjective {
public:
  PairwiseChernoffObjective(const AlphaVector& alpha, const LabelVector& y, int i, int i_prime, double q) {
    const int k = y.num_classes();
    for (int c = 0; c < 3; ++c) {
      const auto p = row_case_probabilities(static_cast<RowCase>(c), q, k);
      log_p_[c] = {log_or_neg_inf(p.plus), log_or_neg_inf(p.zero), log_or_neg_inf(p.minus)};
    }
    for (std::size_t j = 0; j < y.size(); ++j) {
      const double a = alpha[static_cast<Eigen::Index>(j)];
      if (a == 0.0) continue;  // contributes log(1) = 0
      alpha_.emplace_back(a);
      row_case_.push_back(y[j] == i ? 0 : y[j] == i_prime ? 1 : 2);
    }
  }

  Derivatives<Real> operator()(const Real& t) const {
    Derivatives<Real> d{Real(0), Real(0), Real(0), Real(0)};
    for (std::size_t j = 0; j < alpha_.size(); ++j) {
      const auto& lp = log_p_[row_case_[j]];
      const Real ta = t * alpha_[j];
      const Real e_plus = lp[0] - ta;
      const Real e_zero = lp[1];
      const Real e_minus = lp[2] + ta;
      Real m = e_plus > e_minus ? e_plus : e_minus;
      if (num::isfinite(e_zero) && e_zero > m) m = e_zero;
      const Real w_plus_raw = num::exp(e_plus - m);
      const Real w_zero_raw = num::isfinite(e_zero) ? num::exp(e_zero - m) : Real(0);
      const Real w_minus_raw = num::exp(e_minus - m);
      const Real z = w_plus_raw + w_zero_raw + w_minus_raw;
      const Real wp = w_plus_raw / z, w0 = w_zero_raw / z, wm = w_minus_raw / z;
      d.value += m + num::log(z);
      d.d1 += alpha_[j] * (wm - wp);
      d.d2 += alpha_[j] * alpha_[j] * (wp * w0 + wm * w0 + Real(4) * wp * wm);
      d.d1_scale += num::abs(alpha_[j]) * (wp + wm);
    }
    return d;
  }

  bool degenerate() const { return alpha_.empty(); }

private:
  static Real log_or_neg_inf(double p) { return p > 0.0 ? num::log(Real(p)) : -num::infinity<Real>(); }

  std::array<std::array<Real, 3>, 3> log_p_;
  std::vector<Real> alpha_;
  std::vector<int> row_case_;
};

struct PairwiseBound {
  int i = 0;
  int i_prime = 0;
  double t_star = 0.0;    // > 0 when informative; 0 means the bound is trivial
  double log_bound = 0.0; // log of the bound on P(alpha^T Y_i <= alpha^T Y_i'), <= 0
};

template <class Real>
struct PairSolution {
  Real t;          // unconstrained minimizer for direction (i, i')
  Real log_value;  // minimum, clamped to <= 0
};

template <class Real = double>
PairSolution<Real> solve_pair(const AlphaVector& alpha, const LabelVector& y, int i, int i_prime, double q,
                              std::optional<Real> t0 = std::nullopt) {
  const PairwiseChernoffObjective<Real> f(alpha, y, i, i_prime, q);
  if (f.degenerate()) return {Real(0), Real(0)};
  const auto m = minimize_convex<Real>(f, t0.value_or(Real(0)));
  return {m.t, m.value < Real(0) ? m.value : Real(0)};
}

/// Chernoff bound for the directed pair (i, i'): minimization restricted to t > 0.
inline PairwiseBound pairwise_chernoff(const AlphaVector& alpha, const LabelVector& y, int i, int i_prime,
                                       double q, int num_classes) {
  detail::check_q_for_classes(q, num_classes);
  if (i == i_prime) throw ValidationError("pairwise bound needs two distinct classes");
  if (i < 0 || i >= num_classes || i_prime < 0 || i_prime >= num_classes) {
    throw ValidationError("class index out of range");
  }
  if (y.num_classes() != num_classes) throw ValidationError("label vector class count mismatch");
  const auto s = solve_pair<double>(alpha, y, i, i_prime, q);
  if (s.t > 0.0) return {i, i_prime, s.t, s.log_value};
  return {i, i_prime, 0.0, 0.0};
}

struct MultiCertificate {
  int prediction = 0;
  double p_star = 0.5;
  double log_bound = 0.0;  // worst-pair log bound of the predicted class
  long r_kl = 0;
  bool radius_capped = false;
  bool extended_precision = false;
  std::vector<PairwiseBound> per_pair;  // all K(K-1) directed pairs, row-major in (i, i')
};

namespace detail {

// Picks the class whose worst pairwise bound is smallest; ties go to the lowest index.
inline std::pair<int, double> minimax_class(const std::vector<PairwiseBound>& pairs, int num_classes) {
  std::vector<double> worst(static_cast<std::size_t>(num_classes), -std::numeric_limits<double>::infinity());
  for (const auto& p : pairs) worst[static_cast<std::size_t>(p.i)] = std::max(worst[static_cast<std::size_t>(p.i)], p.log_bound);
  int best = 0;
  for (int c = 1; c < num_classes; ++c) {
    if (worst[static_cast<std::size_t>(c)] < worst[static_cast<std::size_t>(best)]) best = c;
  }
  return {best, worst[static_cast<std::size_t>(best)]};
}

}  // namespace detail

/// All K(K-1)/2 unordered pairs solved once; both directions read off the sign of t*.
inline MultiCertificate certify_alpha_multiclass(const AlphaVector& alpha, const LabelVector& y,
                                                 const SmoothingConfig& cfg) {
  cfg.validate();
  const int k = cfg.num_classes;
  if (y.num_classes() != k) throw ValidationError("label vector class count mismatch");
  if (static_cast<std::size_t>(alpha.size()) != y.size()) throw ValidationError("alpha and label lengths differ");
  const long n = static_cast<long>(y.size());

  MultiCertificate cert;
  if (alpha.values().isZero(0.0)) {
    // Every class scores exactly zero under every label vector.
    cert.prediction = 0;
    cert.p_star = margin_cap<double>(num::kDoubleBits);
    cert.r_kl = n;
    cert.radius_capped = true;
    for (int i = 0; i < k; ++i)
      for (int ip = 0; ip < k; ++ip)
        if (i != ip) cert.per_pair.push_back({i, ip, 0.0, 0.0});
    return cert;
  }

  std::vector<PairSolution<double>> solved(static_cast<std::size_t>(k * k));
  for (int i = 0; i < k; ++i)
    for (int ip = i + 1; ip < k; ++ip) solved[static_cast<std::size_t>(i * k + ip)] = solve_pair<double>(alpha, y, i, ip, cfg.q);

  auto directed = [&](int i, int ip) -> PairwiseBound {
    const bool forward = i < ip;
    const auto& s = solved[static_cast<std::size_t>(forward ? i * k + ip : ip * k + i)];
    const double t = forward ? s.t : -s.t;
    if (t > 0.0) return {i, ip, t, s.log_value};
    return {i, ip, 0.0, 0.0};
  };
  for (int i = 0; i < k; ++i)
    for (int ip = 0; ip < k; ++ip)
      if (i != ip) cert.per_pair.push_back(directed(i, ip));

  const auto [pred, worst] = detail::minimax_class(cert.per_pair, k);
  cert.prediction = pred;
  cert.log_bound = worst;

  if (detail::needs_extended(cfg.q, worst, cfg.precision_bits)) {
    // Re-solve the predicted class's pairs in BigReal and take the worst again.
    num::ensure_big_precision(cfg.precision_bits);
    BigReal worst_big = -num::infinity<BigReal>();
    for (int ip = 0; ip < k; ++ip) {
      if (ip == pred) continue;
      const auto& d = cert.per_pair[static_cast<std::size_t>(pred * (k - 1) + (ip < pred ? ip : ip - 1))];
      BigReal lb(0);
      if (d.t_star > 0.0) {
        const auto s = solve_pair<BigReal>(alpha, y, pred, ip, cfg.q, BigReal(d.t_star));
        lb = s.log_value;
      }
      if (lb > worst_big) worst_big = lb;
    }
    const BigReal p = margin_from_log_bound<BigReal>(worst_big, cfg.precision_bits);
    const Radius r = kl_radius(p, cfg.q, k, n);
    cert.extended_precision = true;
    cert.log_bound = num::to_double(worst_big);
    cert.p_star = num::to_double(p);
    cert.r_kl = r.r;
    cert.radius_capped = r.capped;
    return cert;
  }
  const double p = margin_from_log_bound<double>(worst, num::kDoubleBits);
  const Radius r = kl_radius(p, cfg.q, k, n);
  cert.p_star = p;
  cert.r_kl = r.r;
  cert.radius_capped = r.capped;
  return cert;
}

inline MultiCertificate predict_and_certify_multiclass(const RidgeModel& model, const LabelVector& y,
                                                       const Eigen::Ref<const Eigen::VectorXd>& test_features,
                                                       const SmoothingConfig& cfg) {
  if (static_cast<Eigen::Index>(y.size()) != model.n()) {
    throw ValidationError("label count does not match model training size");
  }
  return certify_alpha_multiclass(alpha_for(model, test_features), y, cfg);
}

/// Prediction only, in double precision.
inline int certified_prediction_multiclass(const AlphaVector& alpha, const LabelVector& y, double q) {
  SmoothingConfig cfg{q, y.num_classes(), num::kDoubleBits};
  return certify_alpha_multiclass(alpha, y, cfg).prediction;
}

}  // namespace labelcert
