#pragma once

// Greedy label-flip attacks. Labels are flipped in order of how far each flip
// moves the decision statistic toward the other class, and the attack stops
// at the first prediction change. The number of flips used is an empirical
// upper bound on the robustness of the attacked point.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "labelcert/certify_binary.hpp"
#include "labelcert/certify_multiclass.hpp"
#include "labelcert/dataset.hpp"
#include "labelcert/parallel.hpp"
#include "labelcert/regression.hpp"
#include "labelcert/sampling.hpp"
#include "labelcert/tight_bound.hpp"

namespace labelcert {

struct Flip {
  std::size_t index = 0;
  int new_label = 0;
};

struct AttackResult {
  std::optional<long> flips_needed;  // empty: not achieved within budget
  std::vector<Flip> flip_sequence;   // exactly flips_needed entries when achieved
  long budget = 0;

  bool achieved() const { return flips_needed.has_value(); }
};

inline LabelVector apply_flips(const LabelVector& y, const std::vector<Flip>& flips, std::size_t count) {
  std::vector<int> v = y.values();
  for (std::size_t f = 0; f < count; ++f) v.at(flips[f].index) = flips[f].new_label;
  return LabelVector(std::move(v), y.num_classes());
}

namespace detail {

// Replays the sequence from scratch: the prediction must survive count-1 flips
// and change at count.
template <class Predict>
void verify_replay(const LabelVector& y, const AttackResult& res, int original, Predict&& predict) {
  if (!res.achieved()) return;
  const auto count = static_cast<std::size_t>(*res.flips_needed);
  if (res.flip_sequence.size() != count) throw std::logic_error("attack replay: sequence length mismatch");
  const int after = predict(apply_flips(y, res.flip_sequence, count));
  const int before = count == 0 ? original : predict(apply_flips(y, res.flip_sequence, count - 1));
  if (after == original || before != original) {
    throw std::logic_error("attack replay did not reproduce the prediction change");
  }
}

inline void check_budget(long budget, std::size_t n) {
  if (budget < 0 || static_cast<std::size_t>(budget) > n) {
    throw ValidationError("attack budget must lie in [0, n]");
  }
}

// Binary flip order: indices whose flip moves alpha^T y toward the other class,
// largest movement first.
inline std::vector<std::size_t> binary_flip_order(const AlphaVector& alpha, const LabelVector& y, int prediction) {
  std::vector<std::size_t> order;
  std::vector<double> movement(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double delta = (1 - 2 * y[j]) * alpha[static_cast<Eigen::Index>(j)];  // change in alpha^T y
    movement[j] = prediction == 1 ? -delta : delta;
    if (movement[j] > 0.0) order.push_back(j);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return movement[a] > movement[b]; });
  return order;
}

// Score margin of class c over its strongest competitor.
inline double score_margin(const std::vector<double>& score, int c) {
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < score.size(); ++i)
    if (static_cast<int>(i) != c) best_other = std::max(best_other, score[i]);
  return score[static_cast<std::size_t>(c)] - best_other;
}

inline int argmax_lowest(const std::vector<double>& score) {
  return static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin());
}

}  // namespace detail

/// Attack on the plain (q = 0) decision rule.
inline AttackResult greedy_attack_undefended(const AlphaVector& alpha, const LabelVector& y, int num_classes,
                                             long budget) {
  detail::check_budget(budget, y.size());
  if (y.num_classes() != num_classes) throw ValidationError("label vector class count mismatch");
  AttackResult res;
  res.budget = budget;
  const int original = base_prediction(alpha, y);

  if (num_classes == 2) {
    const auto order = detail::binary_flip_order(alpha, y, original);
    double s = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) s += alpha[static_cast<Eigen::Index>(j)] * y[j];
    for (std::size_t f = 0; f < order.size() && static_cast<long>(f) < budget; ++f) {
      const std::size_t j = order[f];
      const int nl = 1 - y[j];
      s += (nl - y[j]) * alpha[static_cast<Eigen::Index>(j)];
      res.flip_sequence.push_back({j, nl});
      if ((s >= 0.5 ? 1 : 0) != original) {
        res.flips_needed = static_cast<long>(f + 1);
        break;
      }
    }
  } else {
    std::vector<double> score(static_cast<std::size_t>(num_classes), 0.0);
    std::vector<int> cur = y.values();
    for (std::size_t j = 0; j < cur.size(); ++j) score[static_cast<std::size_t>(cur[j])] += alpha[static_cast<Eigen::Index>(j)];
    std::vector<bool> used(y.size(), false);
    for (long step = 0; step < budget; ++step) {
      double best_margin = detail::score_margin(score, original);
      std::optional<Flip> best;
      for (std::size_t j = 0; j < cur.size(); ++j) {
        if (used[j]) continue;
        const double a = alpha[static_cast<Eigen::Index>(j)];
        if (a == 0.0) continue;
        for (int l = 0; l < num_classes; ++l) {
          if (l == cur[j]) continue;
          score[static_cast<std::size_t>(cur[j])] -= a;
          score[static_cast<std::size_t>(l)] += a;
          const double m = detail::score_margin(score, original);
          score[static_cast<std::size_t>(l)] -= a;
          score[static_cast<std::size_t>(cur[j])] += a;
          if (m < best_margin) {
            best_margin = m;
            best = Flip{j, l};
          }
        }
      }
      if (!best) break;
      const double a = alpha[static_cast<Eigen::Index>(best->index)];
      score[static_cast<std::size_t>(cur[best->index])] -= a;
      score[static_cast<std::size_t>(best->new_label)] += a;
      cur[best->index] = best->new_label;
      used[best->index] = true;
      res.flip_sequence.push_back(*best);
      if (detail::argmax_lowest(score) != original) {
        res.flips_needed = step + 1;
        break;
      }
    }
  }
  if (!res.achieved()) res.flip_sequence.clear();
  detail::verify_replay(y, res, original, [&](const LabelVector& v) { return base_prediction(alpha, v); });
  return res;
}

/// Attack on the certified (smoothed) classifier for a given kernel weight vector.
///
/// Binary: the certified prediction is 1{t* >= 0}. Because the Chernoff
/// objective is convex with f'(0) = 1/2 - E[alpha^T y'], that sign is read off
/// the flip-measure mean after each flip. The replay check re-runs the full
/// Newton solve.
inline AttackResult greedy_attack_smoothed_alpha(const AlphaVector& alpha, const LabelVector& y,
                                                 const SmoothingConfig& cfg, long budget) {
  detail::check_budget(budget, y.size());
  cfg.validate();
  AttackResult res;
  res.budget = budget;

  if (cfg.num_classes == 2) {
    const double q = cfg.q;
    const int original = certified_prediction(alpha, y, q);
    const auto order = detail::binary_flip_order(alpha, y, original);
    // E[alpha^T y'] = (1 - 2q) alpha^T y + q sum(alpha)
    double s = 0.0, total = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      s += alpha[static_cast<Eigen::Index>(j)] * y[j];
      total += alpha[static_cast<Eigen::Index>(j)];
    }
    double positive_mass = 0.0;
    for (Eigen::Index j = 0; j < alpha.size(); ++j) positive_mass += std::max(alpha[j], 0.0);
    const double band = 1e-9 * (1.0 + alpha.values().cwiseAbs().sum());
    if (positive_mass > 0.5) {
      for (std::size_t f = 0; f < order.size() && static_cast<long>(f) < budget; ++f) {
        const std::size_t j = order[f];
        const int nl = 1 - y[j];
        s += (nl - y[j]) * alpha[static_cast<Eigen::Index>(j)];
        res.flip_sequence.push_back({j, nl});
        const double mean = (1.0 - 2.0 * q) * s + q * total;
        // The running mean carries rounding error; near 1/2 the exact rule decides.
        int now = mean >= 0.5 ? 1 : 0;
        if (std::abs(mean - 0.5) <= band) now = certified_prediction(alpha, apply_flips(y, res.flip_sequence, f + 1), q);
        if (now != original) {
          res.flips_needed = static_cast<long>(f + 1);
          break;
        }
      }
    }
    if (!res.achieved()) res.flip_sequence.clear();
    detail::verify_replay(y, res, original, [&](const LabelVector& v) { return solve_chernoff(alpha, v, q).prediction; });
    return res;
  }

  // Multi-class: flip toward the current worst-pair competitor.
  const int original = certified_prediction_multiclass(alpha, y, cfg.q);
  const int k = cfg.num_classes;
  std::vector<int> cur = y.values();
  std::vector<bool> used(y.size(), false);
  for (long step = 0; step < budget; ++step) {
    const LabelVector now(cur, k);
    const auto cert = certify_alpha_multiclass(alpha, now, SmoothingConfig{cfg.q, k, num::kDoubleBits});
    int competitor = -1;
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& p : cert.per_pair) {
      if (p.i == original && p.log_bound > worst) {
        worst = p.log_bound;
        competitor = p.i_prime;
      }
    }
    std::optional<Flip> best;
    double best_delta = 0.0;
    for (std::size_t j = 0; j < cur.size(); ++j) {
      if (used[j]) continue;
      const double a = alpha[static_cast<Eigen::Index>(j)];
      const double before = (cur[j] == original) - (cur[j] == competitor);
      for (int l = 0; l < k; ++l) {
        if (l == cur[j]) continue;
        const double delta = a * (((l == original) - (l == competitor)) - before);
        if (delta < best_delta) {
          best_delta = delta;
          best = Flip{j, l};
        }
      }
    }
    if (!best) break;
    cur[best->index] = best->new_label;
    used[best->index] = true;
    res.flip_sequence.push_back(*best);
    if (certified_prediction_multiclass(alpha, LabelVector(cur, k), cfg.q) != original) {
      res.flips_needed = step + 1;
      break;
    }
  }
  if (!res.achieved()) res.flip_sequence.clear();
  detail::verify_replay(y, res, original,
                        [&](const LabelVector& v) { return certified_prediction_multiclass(alpha, v, cfg.q); });
  return res;
}

inline AttackResult greedy_attack_smoothed(const RidgeModel& model, const LabelVector& y,
                                           const Eigen::Ref<const Eigen::VectorXd>& test_features,
                                           const SmoothingConfig& cfg, long budget) {
  return greedy_attack_smoothed_alpha(alpha_for(model, test_features), y, cfg, budget);
}

// ---------------------------------------------------------------------------
// Robustness curves
// ---------------------------------------------------------------------------

enum class AttackMode { kDefended, kUndefended };

struct PointEvaluation {
  int label = 0;
  int prediction = 0;
  long certified_radius = 0;       // defended only
  std::optional<long> attack_flips;  // empty: attack not run or not achieved
  bool attacked = false;
};

struct RobustnessCurve {
  AttackMode mode = AttackMode::kDefended;
  std::vector<double> certified;  // index r; defended mode only
  std::vector<double> attacked;   // index r; empty when attacks are disabled
  double nonrobust_accuracy = 0.0;
  std::vector<PointEvaluation> points;

  long max_flips() const {
    return static_cast<long>(std::max(certified.size(), attacked.size())) - 1;
  }
};

struct CurveOptions {
  AttackMode mode = AttackMode::kDefended;
  bool run_attack = true;
  long budget = -1;  // -1: n
  int workers = 1;
};

/// Certified accuracy (correct and radius >= r) and attacked accuracy
/// (correct and the greedy attack needs more than r flips) for r = 0, 1, ...
inline RobustnessCurve robustness_curve(const RidgeModel& model, const LabelVector& y_train,
                                        const Eigen::MatrixXd& test_features, const LabelVector& test_labels,
                                        const SmoothingConfig& cfg, const TightTable* table,
                                        const CurveOptions& opt = {}) {
  if (static_cast<Eigen::Index>(y_train.size()) != model.n()) {
    throw ValidationError("label count does not match model training size");
  }
  if (static_cast<std::size_t>(test_features.rows()) != test_labels.size()) {
    throw ValidationError("test features and test labels differ in length");
  }
  const std::size_t m = test_labels.size();
  const long n = model.n();
  const long budget = opt.budget < 0 ? n : std::min(opt.budget, n);
  if (opt.mode == AttackMode::kDefended) {
    cfg.validate();
    if (cfg.precision_bits > num::kDoubleBits) num::ensure_big_precision(cfg.precision_bits);
  }

  RobustnessCurve curve;
  curve.mode = opt.mode;
  curve.points.resize(m);
  parallel_for(m, resolve_workers(opt.workers), [&](std::size_t i) {
    const AlphaVector alpha = alpha_for(model, test_features.row(static_cast<Eigen::Index>(i)).transpose());
    PointEvaluation& pt = curve.points[i];
    pt.label = test_labels[i];
    if (opt.mode == AttackMode::kDefended) {
      if (cfg.num_classes == 2) {
        const Certificate c = certify_alpha(alpha, y_train, cfg, table);
        pt.prediction = c.prediction;
        pt.certified_radius = c.best_radius();
      } else {
        const MultiCertificate c = certify_alpha_multiclass(alpha, y_train, cfg);
        pt.prediction = c.prediction;
        pt.certified_radius = c.r_kl;
      }
      if (opt.run_attack && pt.prediction == pt.label) {
        const AttackResult a = greedy_attack_smoothed_alpha(alpha, y_train, cfg, budget);
        pt.attacked = true;
        pt.attack_flips = a.flips_needed;
      }
    } else {
      pt.prediction = base_prediction(alpha, y_train);
      if (opt.run_attack && pt.prediction == pt.label) {
        const AttackResult a = greedy_attack_undefended(alpha, y_train, y_train.num_classes(), budget);
        pt.attacked = true;
        pt.attack_flips = a.flips_needed;
      }
    }
  });

  long r_top = 0;
  std::size_t correct = 0;
  for (const auto& pt : curve.points) {
    if (pt.prediction != pt.label) continue;
    ++correct;
    if (opt.mode == AttackMode::kDefended) r_top = std::max(r_top, pt.certified_radius);
    if (pt.attacked) r_top = std::max(r_top, pt.attack_flips ? *pt.attack_flips : budget);
  }
  const double denom = m == 0 ? 1.0 : static_cast<double>(m);
  curve.nonrobust_accuracy = static_cast<double>(correct) / denom;
  const auto len = static_cast<std::size_t>(r_top + 1);
  if (opt.mode == AttackMode::kDefended) curve.certified.assign(len, 0.0);
  if (opt.run_attack) curve.attacked.assign(len, 0.0);
  for (const auto& pt : curve.points) {
    if (pt.prediction != pt.label) continue;
    for (std::size_t r = 0; r < len; ++r) {
      if (opt.mode == AttackMode::kDefended && pt.certified_radius >= static_cast<long>(r)) curve.certified[r] += 1;
      if (opt.run_attack && (!pt.attack_flips || *pt.attack_flips > static_cast<long>(r))) curve.attacked[r] += 1;
    }
  }
  for (auto& v : curve.certified) v /= denom;
  for (auto& v : curve.attacked) v /= denom;
  return curve;
}

/// Accuracy of a classifier that always predicts the majority training class.
inline double constant_classifier_accuracy(const LabelVector& y_train, const LabelVector& test_labels) {
  std::vector<std::size_t> count(static_cast<std::size_t>(y_train.num_classes()), 0);
  for (int v : y_train.values()) ++count[static_cast<std::size_t>(v)];
  const int majority = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
  if (test_labels.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (int v : test_labels.values()) hits += v == majority;
  return static_cast<double>(hits) / static_cast<double>(test_labels.size());
}

}  // namespace labelcert
