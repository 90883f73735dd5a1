#pragma once

// Scalar helpers shared by the double and extended-precision code paths.
//
// Everything probability-valued in this library is carried in the log domain.
// The templated routines below work for `double` and for `BigReal`, an MPFR
// backed float whose mantissa width is chosen at run time.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <type_traits>

#include <boost/multiprecision/mpfr.hpp>

namespace labelcert {

using BigReal = boost::multiprecision::number<boost::multiprecision::mpfr_float_backend<0>,
                                              boost::multiprecision::et_off>;

namespace num {

inline constexpr int kDoubleBits = std::numeric_limits<double>::digits;  // 53

// Decimal digits MPFR needs so that at least `bits` mantissa bits are kept.
inline unsigned digits10_for_bits(int bits) {
  return static_cast<unsigned>(std::ceil(bits * 0.30102999566398120)) + 2;
}

inline int current_big_precision_bits() {
  return static_cast<int>(
      boost::multiprecision::detail::digits10_2_2(BigReal::default_precision()));
}

// BigReal's default precision is process-wide state in this Boost release.
// Set it once before spawning workers; concurrent callers then only read it.
inline void ensure_big_precision(int bits) {
  const unsigned d = digits10_for_bits(bits);
  if (BigReal::default_precision() != d) BigReal::default_precision(d);
}

class ScopedBigPrecision {
public:
  explicit ScopedBigPrecision(int bits) : saved_(BigReal::default_precision()) {
    ensure_big_precision(bits);
  }
  ~ScopedBigPrecision() { BigReal::default_precision(saved_); }
  ScopedBigPrecision(const ScopedBigPrecision&) = delete;
  ScopedBigPrecision& operator=(const ScopedBigPrecision&) = delete;

private:
  unsigned saved_;
};

// --- elementary functions with a uniform spelling for both scalar types ---

inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double log1p(double x) { return std::log1p(x); }
inline double expm1(double x) { return std::expm1(x); }
inline double abs(double x) { return std::fabs(x); }
inline double lgamma(double x) { return std::lgamma(x); }
inline double ldexp(double x, int e) { return std::ldexp(x, e); }
inline double floor(double x) { return std::floor(x); }
inline bool isfinite(double x) { return std::isfinite(x); }
inline double to_double(double x) { return x; }

inline BigReal exp(const BigReal& x) { return boost::multiprecision::exp(x); }
inline BigReal log(const BigReal& x) { return boost::multiprecision::log(x); }
inline BigReal abs(const BigReal& x) { return boost::multiprecision::abs(x); }
inline BigReal floor(const BigReal& x) { return boost::multiprecision::floor(x); }
inline BigReal log1p(const BigReal& x) {
  BigReal r;
  mpfr_log1p(r.backend().data(), x.backend().data(), MPFR_RNDN);
  return r;
}
inline BigReal expm1(const BigReal& x) {
  BigReal r;
  mpfr_expm1(r.backend().data(), x.backend().data(), MPFR_RNDN);
  return r;
}
inline BigReal lgamma(const BigReal& x) {
  BigReal r;
  int sign = 0;
  mpfr_lgamma(r.backend().data(), &sign, x.backend().data(), MPFR_RNDN);
  return r;
}
inline BigReal ldexp(const BigReal& x, int e) {
  BigReal r;
  mpfr_mul_2si(r.backend().data(), x.backend().data(), e, MPFR_RNDN);
  return r;
}
inline bool isfinite(const BigReal& x) { return mpfr_number_p(x.backend().data()) != 0; }
inline double to_double(const BigReal& x) { return x.convert_to<double>(); }

template <class Real>
Real infinity() {
  if constexpr (std::is_same_v<Real, double>) {
    return std::numeric_limits<double>::infinity();
  } else {
    BigReal r;
    mpfr_set_inf(r.backend().data(), 1);
    return r;
  }
}

// Mantissa width actually carried by a value of type Real.
template <class Real>
int mantissa_bits() {
  if constexpr (std::is_same_v<Real, double>) {
    return kDoubleBits;
  } else {
    return current_big_precision_bits();
  }
}

// log(1 + e^u) without overflow.
template <class Real>
Real softplus(const Real& u) {
  const Real zero(0);
  const Real m = u > zero ? u : zero;
  return m + log1p(exp(-abs(u)));
}

// Logistic function 1 / (1 + e^-u), accurate in both tails.
template <class Real>
Real sigmoid(const Real& u) {
  if (u >= Real(0)) return Real(1) / (Real(1) + exp(-u));
  const Real e = exp(u);
  return e / (Real(1) + e);
}

template <class Real>
struct LogisticTerms {
  Real softplus;  // log(1 + e^u)
  Real pos;       // sigmoid(u)
  Real neg;       // sigmoid(-u)
};

// softplus and both sigmoids from a single exponential.
template <class Real>
LogisticTerms<Real> logistic_terms(const Real& u) {
  const bool up = u >= Real(0);
  const Real e = exp(up ? Real(-u) : u);
  const Real inv = Real(1) / (Real(1) + e);
  const Real small = e * inv;
  return {(up ? u : Real(0)) + log1p(e), up ? inv : small, up ? small : inv};
}

// log(e^a + e^b); either argument may be -inf.
template <class Real>
Real log_add_exp(const Real& a, const Real& b) {
  if (!isfinite(a) && a < Real(0)) return b;
  if (!isfinite(b) && b < Real(0)) return a;
  const Real hi = a > b ? a : b;
  const Real lo = a > b ? b : a;
  return hi + log1p(exp(lo - hi));
}

// 1 - e^x for x <= 0, computed without cancellation.
template <class Real>
Real one_minus_exp(const Real& x) {
  return -expm1(x);
}

inline std::string to_decimal(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string to_decimal(const BigReal& x) {
  return x.str(static_cast<std::streamsize>(x.precision()), std::ios_base::scientific);
}

}  // namespace num
}  // namespace labelcert
