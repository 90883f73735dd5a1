#pragma once

#include <cmath>
#include <cstdint>

#include "labelcert/certify_binary.hpp"
#include "labelcert/certify_multiclass.hpp"
#include "labelcert/sampling.hpp"

namespace labelcert {

/// Analytic certificate against the sampling procedure for one test point.
struct VerifyReport {
  int prediction = 0;      // analytic
  double p_star = 0.5;     // analytic lower bound on the predicted-class measure
  int mc_prediction = 0;
  double mc_G = 0.0;       // sampled frequency of the analytic prediction
  double mc_G_bound = 0.0; // Clopper-Pearson bound reported by the sampler
  double std_error = 0.0;  // sqrt(mc_G (1 - mc_G) / N)
  bool agree = false;      // same prediction and mc_G >= p_star - 3 std_error
};

inline VerifyReport verify_alpha(const AlphaVector& alpha, const LabelVector& y, const SmoothingConfig& cfg,
                                 std::uint64_t samples, double delta, std::uint64_t seed) {
  VerifyReport r;
  if (cfg.num_classes == 2) {
    const auto c = solve_chernoff(alpha, y, cfg.q);
    r.prediction = c.prediction;
    r.p_star = c.p_star;
  } else {
    const auto c = certify_alpha_multiclass(alpha, y, SmoothingConfig{cfg.q, cfg.num_classes, num::kDoubleBits});
    r.prediction = c.prediction;
    r.p_star = c.p_star;
  }
  const McEstimate mc = mc_estimate(alpha, y, cfg, samples, delta, seed);
  r.mc_prediction = mc.g_hat;
  r.mc_G_bound = mc.G_bound;
  r.mc_G = static_cast<double>(mc.counts[static_cast<std::size_t>(r.prediction)]) / static_cast<double>(samples);
  r.std_error = std::sqrt(r.mc_G * (1.0 - r.mc_G) / static_cast<double>(samples));
  r.agree = r.mc_prediction == r.prediction && r.mc_G >= r.p_star - 3.0 * r.std_error;
  return r;
}

}  // namespace labelcert
