#pragma once

// Reference implementations used to validate the analytic certifier: the
// sampling-based smoothing procedure with a Clopper-Pearson bound, and exact
// enumeration of the flip measure for small training sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "labelcert/dataset.hpp"
#include "labelcert/error.hpp"
#include "labelcert/regression.hpp"

namespace labelcert {

// ---------------------------------------------------------------------------
// Counter-based random numbers
// ---------------------------------------------------------------------------

/// Stateless generator: every draw is a hash of (seed, stream, counter), so
/// results do not depend on evaluation order or worker count.
class CounterRng {
public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const {
    return mix(mix(seed_ ^ mix(stream)) + counter * 0xd1b54a32d192ed03ULL);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform(std::uint64_t stream, std::uint64_t counter) const {
    return static_cast<double>(bits(stream, counter) >> 11) * 0x1.0p-53;
  }

  // Child seed for sample `index`.
  std::uint64_t derive(std::uint64_t index) const { return mix(seed_ + mix(index + 0x632be59bd9b4e019ULL)); }

private:
  std::uint64_t seed_;
};

/// Each label kept w.p. 1-q, else replaced uniformly among the other K-1 classes.
inline LabelVector sample_labels(const LabelVector& y, double q, int num_classes, std::uint64_t seed) {
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("flip probability must lie in [0, 1]");
  const CounterRng rng(seed);
  std::vector<int> out(y.values());
  for (std::size_t j = 0; j < out.size(); ++j) {
    if (rng.uniform(0, j) < q) {
      const int pick = std::min(static_cast<int>(rng.uniform(1, j) * (num_classes - 1)), num_classes - 2);
      out[j] = pick >= out[j] ? pick + 1 : pick;
    }
  }
  return LabelVector(std::move(out), num_classes);
}

// ---------------------------------------------------------------------------
// Base classifier evaluated on a label vector
// ---------------------------------------------------------------------------

/// Binary: 1{alpha^T y >= 1/2}. Multi-class: argmax_c sum_{y_j=c} alpha_j, ties to the lowest class.
inline int base_prediction(const AlphaVector& alpha, const LabelVector& y) {
  if (y.num_classes() == 2) {
    double s = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) s += alpha[static_cast<Eigen::Index>(j)] * y[j];
    return s >= 0.5 ? 1 : 0;
  }
  std::vector<double> score(static_cast<std::size_t>(y.num_classes()), 0.0);
  for (std::size_t j = 0; j < y.size(); ++j) score[static_cast<std::size_t>(y[j])] += alpha[static_cast<Eigen::Index>(j)];
  return static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin());
}

// ---------------------------------------------------------------------------
// Clopper-Pearson
// ---------------------------------------------------------------------------

/// One-sided exact binomial lower bound on a success probability: P(true < bound) <= delta.
inline double clopper_pearson_lower(std::uint64_t successes, std::uint64_t trials, double delta) {
  if (successes == 0) return 0.0;
  return boost::math::ibeta_inv(static_cast<double>(successes), static_cast<double>(trials - successes + 1), delta);
}

/// One-sided exact binomial upper bound: P(true > bound) <= delta.
inline double clopper_pearson_upper(std::uint64_t successes, std::uint64_t trials, double delta) {
  if (successes == trials) return 1.0;
  return boost::math::ibeta_inv(static_cast<double>(successes + 1), static_cast<double>(trials - successes),
                                1.0 - delta);
}

struct McEstimate {
  int g_hat = 0;
  double G_hat = 0.0;    // empirical frequency (binary: of class 1; multi-class: of g_hat)
  double G_bound = 0.0;  // one-sided confidence bound on the same quantity
  std::uint64_t N = 0;
  double delta = 0.0;
  bool abstained = false;
  std::vector<std::uint64_t> counts;  // votes per class
};

/// Sampling estimate of the smoothed prediction with N label draws.
///
/// Binary: G_hat and G_bound refer to P(class 1), matching G = E[phi]; the bound
/// is one-sided in the direction that under-certifies. Multi-class: they refer
/// to the winning class and G_bound is a lower bound.
inline McEstimate mc_estimate(const AlphaVector& alpha, const LabelVector& y, const SmoothingConfig& cfg,
                              std::uint64_t samples, double delta, std::uint64_t seed) {
  if (samples < 1) throw ValidationError("sample count must be at least 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must lie in (0, 1)");
  const CounterRng rng(seed);
  McEstimate est;
  est.N = samples;
  est.delta = delta;
  est.counts.assign(static_cast<std::size_t>(cfg.num_classes), 0);
  for (std::uint64_t s = 0; s < samples; ++s) {
    const LabelVector draw = sample_labels(y, cfg.q, cfg.num_classes, rng.derive(s));
    ++est.counts[static_cast<std::size_t>(base_prediction(alpha, draw))];
  }
  const double n = static_cast<double>(samples);
  if (cfg.num_classes == 2) {
    const std::uint64_t ones = est.counts[1];
    est.G_hat = static_cast<double>(ones) / n;
    est.g_hat = est.G_hat >= 0.5 ? 1 : 0;
    if (est.g_hat == 1) {
      est.G_bound = clopper_pearson_lower(ones, samples, delta);
      est.abstained = est.G_bound < 0.5;
    } else {
      est.G_bound = clopper_pearson_upper(ones, samples, delta);
      est.abstained = est.G_bound >= 0.5;
    }
    return est;
  }
  const auto best = std::max_element(est.counts.begin(), est.counts.end());
  est.g_hat = static_cast<int>(best - est.counts.begin());
  est.G_hat = static_cast<double>(*best) / n;
  est.G_bound = clopper_pearson_lower(*best, samples, delta);
  est.abstained = est.G_bound < 0.5;
  return est;
}

// ---------------------------------------------------------------------------
// Exact enumeration
// ---------------------------------------------------------------------------

inline constexpr double kMaxEnumeration = 33554432.0;  // 2^25 label vectors

struct ExactVote {
  int g = 0;                          // smoothed prediction
  double G = 0.0;                     // measure of the predicted class
  std::vector<double> class_measure;  // measure of each base prediction outcome
};

namespace detail {

struct HalfTable {
  std::vector<double> sum;   // alpha^T y' restricted to the half
  std::vector<double> prob;  // probability of the half-assignment
};

// All 2^m assignments of labels y[begin, end) under binary flips.
inline HalfTable enumerate_half(const AlphaVector& alpha, const LabelVector& y, double q, std::size_t begin,
                                std::size_t end) {
  const std::size_t m = end - begin;
  HalfTable t;
  t.sum.assign(std::size_t{1} << m, 0.0);
  t.prob.assign(std::size_t{1} << m, 1.0);
  for (std::size_t mask = 0; mask < t.sum.size(); ++mask) {
    double s = 0.0, p = 1.0;
    for (std::size_t b = 0; b < m; ++b) {
      const std::size_t j = begin + b;
      const int label = static_cast<int>((mask >> b) & 1U);
      s += alpha[static_cast<Eigen::Index>(j)] * label;
      p *= label == y[j] ? 1.0 - q : q;
    }
    t.sum[mask] = s;
    t.prob[mask] = p;
  }
  return t;
}

}  // namespace detail

/// Exact P(base prediction = c) for every class under the flip measure around y.
/// Binary instances are split in two halves and joined through sorted prefix sums.
inline ExactVote exact_g(const AlphaVector& alpha, const LabelVector& y, const SmoothingConfig& cfg) {
  const int k = cfg.num_classes;
  const std::size_t n = y.size();
  if (static_cast<std::size_t>(alpha.size()) != n) throw ValidationError("alpha and label lengths differ");
  if (std::pow(static_cast<double>(k), static_cast<double>(n)) > kMaxEnumeration) {
    throw ValidationError("instance too large for exact enumeration (K^n > 2^25)");
  }
  ExactVote out;
  out.class_measure.assign(static_cast<std::size_t>(k), 0.0);
  if (k == 2) {
    const std::size_t mid = n / 2;
    const auto a = detail::enumerate_half(alpha, y, cfg.q, 0, mid);
    const auto b = detail::enumerate_half(alpha, y, cfg.q, mid, n);
    std::vector<std::size_t> order(b.sum.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return b.sum[l] < b.sum[r]; });
    std::vector<double> sorted_sum(order.size());
    std::vector<double> suffix_prob(order.size() + 1, 0.0);
    for (std::size_t i = 0; i < order.size(); ++i) sorted_sum[i] = b.sum[order[i]];
    for (std::size_t i = order.size(); i-- > 0;) suffix_prob[i] = suffix_prob[i + 1] + b.prob[order[i]];
    double p1 = 0.0;
    for (std::size_t i = 0; i < a.sum.size(); ++i) {
      // class 1 iff a.sum + b.sum >= 1/2
      const double need = 0.5 - a.sum[i];
      const auto it = std::lower_bound(sorted_sum.begin(), sorted_sum.end(), need);
      p1 += a.prob[i] * suffix_prob[static_cast<std::size_t>(it - sorted_sum.begin())];
    }
    // Recover the complement directly so tiny class-0 masses keep relative accuracy.
    double p0 = 0.0;
    std::vector<double> prefix_prob(order.size() + 1, 0.0);
    for (std::size_t i = 0; i < order.size(); ++i) prefix_prob[i + 1] = prefix_prob[i] + b.prob[order[i]];
    for (std::size_t i = 0; i < a.sum.size(); ++i) {
      const double need = 0.5 - a.sum[i];
      const auto it = std::lower_bound(sorted_sum.begin(), sorted_sum.end(), need);
      p0 += a.prob[i] * prefix_prob[static_cast<std::size_t>(it - sorted_sum.begin())];
    }
    out.class_measure = {p0, p1};
    out.g = p1 >= 0.5 ? 1 : 0;
    out.G = out.class_measure[static_cast<std::size_t>(out.g)];
    return out;
  }
  // Depth-first enumeration of all K^n label vectors.
  const double keep = 1.0 - cfg.q;
  const double move = cfg.q / (k - 1);
  // One score vector per depth: in-place add/subtract would leave rounding residue and break exact ties.
  std::vector<std::vector<double>> score(n + 1, std::vector<double>(static_cast<std::size_t>(k), 0.0));
  auto recurse = [&](auto&& self, std::size_t j, double prob) -> void {
    const auto& cur = score[j];
    if (j == n) {
      const auto best = std::max_element(cur.begin(), cur.end()) - cur.begin();
      out.class_measure[static_cast<std::size_t>(best)] += prob;
      return;
    }
    const double a = alpha[static_cast<Eigen::Index>(j)];
    for (int c = 0; c < k; ++c) {
      score[j + 1] = cur;
      score[j + 1][static_cast<std::size_t>(c)] += a;
      self(self, j + 1, prob * (c == y[j] ? keep : move));
    }
  };
  recurse(recurse, 0, 1.0);
  out.g = static_cast<int>(std::max_element(out.class_measure.begin(), out.class_measure.end()) -
                           out.class_measure.begin());
  out.G = out.class_measure[static_cast<std::size_t>(out.g)];
  return out;
}

struct ExactPairProbability {
  double strictly_less = 0.0;  // P(alpha^T Y_i <  alpha^T Y_i')
  double at_most = 0.0;        // P(alpha^T Y_i <= alpha^T Y_i')
};

/// Exact distribution of alpha^T (Y_i - Y_i') by 3^n enumeration over row outcomes.
inline ExactPairProbability exact_pairwise_probability(const AlphaVector& alpha, const LabelVector& y, int i,
                                                       int i_prime, double q) {
  const int k = y.num_classes();
  const std::size_t n = y.size();
  if (std::pow(3.0, static_cast<double>(n)) > kMaxEnumeration) {
    throw ValidationError("instance too large for exact enumeration (3^n > 2^25)");
  }
  const double km1 = k - 1;
  ExactPairProbability out;
  auto recurse = [&](auto&& self, std::size_t j, double diff, double prob) -> void {
    if (prob == 0.0) return;
    if (j == n) {
      if (diff < 0.0) out.strictly_less += prob;
      if (diff <= 0.0) out.at_most += prob;
      return;
    }
    const double a = alpha[static_cast<Eigen::Index>(j)];
    const int yj = y[j];
    // P(sampled label == c) for c in {i, i', other}
    const double p_i = yj == i ? 1.0 - q : q / km1;
    const double p_ip = yj == i_prime ? 1.0 - q : q / km1;
    const double p_other = 1.0 - p_i - p_ip;
    self(self, j + 1, diff + a, prob * p_i);
    self(self, j + 1, diff - a, prob * p_ip);
    if (k > 2) self(self, j + 1, diff, prob * p_other);
  };
  recurse(recurse, 0, 0.0, 1.0);
  return out;
}

}  // namespace labelcert
