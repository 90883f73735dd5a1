#pragma once

// Minimizer for smooth convex functions of one variable.
//
// Damped Newton from the starting point; if that stalls, bisection on the
// derivative over an exponentially expanded bracket. The objective returns its
// value and first two derivatives, plus a magnitude `d1_scale` used to
// recognise when the derivative is already at the rounding floor.

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "labelcert/error.hpp"
#include "labelcert/numeric.hpp"

namespace labelcert {

template <class Real>
struct Derivatives {
  Real value;
  Real d1;
  Real d2;
  Real d1_scale;  // sum of magnitudes of the terms making up d1
};

template <class Real>
struct ConvexMinimum {
  Real t;
  Real value;
  int newton_iterations = 0;
  int bisection_iterations = 0;
};

struct ConvexSolverOptions {
  double tolerance = 1e-12;  // |d1| <= tolerance * (1 + |t|)
  int max_newton_iterations = 100;
  int max_bisection_iterations = 5000;
  double max_abs_t = 1e15;
};

namespace detail {

template <class Real>
bool derivative_converged(const Derivatives<Real>& d, const Real& t, const ConvexSolverOptions& opt) {
  const Real tol = Real(opt.tolerance) * (Real(1) + num::abs(t));
  if (num::abs(d.d1) <= tol) return true;
  const Real floor = num::ldexp(Real(16), -num::mantissa_bits<Real>()) * d.d1_scale;
  return num::abs(d.d1) <= floor;
}

}  // namespace detail

template <class Real, class Objective>
ConvexMinimum<Real> minimize_convex(const Objective& f, Real t0, const ConvexSolverOptions& opt = {}) {
  Real t = t0;
  Derivatives<Real> cur = f(t);
  ConvexMinimum<Real> out{t, cur.value};

  for (int it = 0; it < opt.max_newton_iterations; ++it) {
    if (detail::derivative_converged(cur, t, opt)) {
      out.t = t;
      out.value = cur.value;
      return out;
    }
    if (!(cur.d2 > Real(0)) || !num::isfinite(cur.d2)) break;
    const Real step = -cur.d1 / cur.d2;
    Real scale(1);
    bool accepted = false;
    Real t_next = t;
    Derivatives<Real> next = cur;
    for (int ls = 0; ls < 60; ++ls) {
      t_next = t + scale * step;
      next = f(t_next);
      if (num::isfinite(next.value) && next.value <= cur.value + Real(1e-4) * scale * step * cur.d1) {
        accepted = true;
        break;
      }
      scale /= 2;
    }
    ++out.newton_iterations;
    if (!accepted || t_next == t) break;
    t = t_next;
    cur = next;
  }
  if (detail::derivative_converged(cur, t, opt)) {
    out.t = t;
    out.value = cur.value;
    return out;
  }

  // Bisection on the derivative. The minimizer lies downhill from t.
  const bool go_right = cur.d1 < Real(0);
  Real lo = t, hi = t;
  Real width(1);
  Derivatives<Real> probe = cur;
  while (true) {
    const Real edge = go_right ? t + width : t - width;
    probe = f(edge);
    const bool crossed = go_right ? probe.d1 >= Real(0) : probe.d1 <= Real(0);
    if (crossed) {
      (go_right ? hi : lo) = edge;
      break;
    }
    (go_right ? lo : hi) = edge;
    if (num::abs(edge) > Real(opt.max_abs_t)) {
      std::ostringstream msg;
      msg << "Chernoff objective has no finite minimizer within |t| <= " << opt.max_abs_t
          << " (derivative " << num::to_double(probe.d1) << " at t=" << num::to_double(edge) << ")";
      throw ConvergenceError(msg.str());
    }
    width *= 2;
  }
  for (int it = 0; it < opt.max_bisection_iterations; ++it) {
    const Real mid = (lo + hi) / 2;
    ++out.bisection_iterations;
    if (mid == lo || mid == hi) break;
    const Derivatives<Real> d = f(mid);
    if (detail::derivative_converged(d, mid, opt)) {
      out.t = mid;
      out.value = d.value;
      return out;
    }
    (d.d1 < Real(0) ? lo : hi) = mid;
  }
  // Bracket collapsed to adjacent floats: accept if the derivative is within a
  // few rounding units of its own scale.
  const Real mid = (lo + hi) / 2;
  const Derivatives<Real> d = f(mid);
  const Real slack = num::ldexp(Real(1024), -num::mantissa_bits<Real>()) * d.d1_scale;
  if (num::abs(d.d1) <= slack) {
    out.t = mid;
    out.value = d.value;
    return out;
  }
  std::ostringstream msg;
  msg << "Chernoff minimization did not converge: t=" << num::to_double(mid)
      << " derivative=" << num::to_double(d.d1) << " after " << out.newton_iterations
      << " Newton and " << out.bisection_iterations << " bisection steps";
  throw ConvergenceError(msg.str());
}

}  // namespace labelcert
