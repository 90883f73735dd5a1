#pragma once

// Regularized least squares in kernel form. The prediction for a test point x
// is alpha(x)^T y with alpha(x) = X (X^T X + lambda I)^{-1} x, which is linear
// in the training labels.

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "labelcert/dataset.hpp"
#include "labelcert/error.hpp"

namespace labelcert {

struct LambdaEstimate {
  double lambda = 0.0;
  double sigma2_hat = 0.0;
  double kappa = 1.0;
};

struct RidgeModel {
  Eigen::MatrixXd M;  // n x k
  double lambda = 0.0;
  double sigma2_hat = 0.0;  // zero unless lambda was estimated
  double kappa = 1.0;       // condition number of X^T X

  Eigen::Index n() const { return M.rows(); }
  Eigen::Index k() const { return M.cols(); }
};

/// Kernel weights for one test point.
class AlphaVector {
public:
  AlphaVector() = default;
  explicit AlphaVector(Eigen::VectorXd a) : a_(std::move(a)) {
    if (!a_.allFinite()) throw ValidationError("alpha vector contains a non-finite entry");
  }
  Eigen::Index size() const { return a_.size(); }
  double operator[](Eigen::Index i) const { return a_[i]; }
  const Eigen::VectorXd& values() const { return a_; }

private:
  Eigen::VectorXd a_;
};

namespace detail {

// Above this size the condition number is estimated by power iteration.
inline constexpr Eigen::Index kExactConditionLimit = 2000;

// Power iteration for the top eigenvalue, inverse iteration for the bottom one.
// Both stop at 1e-6 relative change of the Rayleigh quotient; the estimates
// are expected within 1e-3 relative.
inline std::pair<double, double> iterative_extreme_eigenvalues(const Eigen::MatrixXd& gram) {
  const Eigen::Index k = gram.rows();
  Eigen::VectorXd v = Eigen::VectorXd::Ones(k).normalized();
  double top = 0.0;
  for (int it = 0; it < 1000; ++it) {
    Eigen::VectorXd w = gram * v;
    const double next = v.dot(w);
    v = w.normalized();
    if (it > 0 && std::abs(next - top) <= 1e-6 * std::abs(next)) {
      top = next;
      break;
    }
    top = next;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) return {top, 0.0};
  v = Eigen::VectorXd::Ones(k).normalized();
  double inv_top = 0.0;
  for (int it = 0; it < 1000; ++it) {
    Eigen::VectorXd w = llt.solve(v);
    const double next = v.dot(w);
    v = w.normalized();
    if (it > 0 && std::abs(next - inv_top) <= 1e-6 * std::abs(next)) {
      inv_top = next;
      break;
    }
    inv_top = next;
  }
  return {top, inv_top > 0 ? 1.0 / inv_top : 0.0};
}

// Largest and smallest eigenvalue of a symmetric positive semidefinite matrix.
inline std::pair<double, double> extreme_eigenvalues(const Eigen::MatrixXd& gram) {
  if (gram.rows() > kExactConditionLimit) return iterative_extreme_eigenvalues(gram);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  return {eig.eigenvalues().maxCoeff(), eig.eigenvalues().minCoeff()};
}

inline bool numerically_singular(double top, double bottom, Eigen::Index k) {
  return !(bottom > static_cast<double>(k) * std::numeric_limits<double>::epsilon() * top);
}

}  // namespace detail

/// lambda = (1+q) * sigma2_hat * k / (2n) * kappa(X^T X), where sigma2_hat is the
/// OLS residual variance. For K > 2 the residual variance is averaged over the
/// one-hot target columns.
inline LambdaEstimate estimate_lambda(const FeatureMatrix& features, const LabelVector& labels, double q) {
  const auto& x = features.values();
  const Eigen::Index n = x.rows();
  const Eigen::Index k = x.cols();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw ValidationError("dimension mismatch between features and labels");
  }
  if (n <= k) {
    throw ValidationError("cannot estimate lambda with n=" + std::to_string(n) + " <= k=" +
                          std::to_string(k) +
                          "; supply --lambda explicitly or reduce the feature dimension (e.g. --pca-dim)");
  }
  const Eigen::MatrixXd gram = x.transpose() * x;
  const auto [top, bottom] = detail::extreme_eigenvalues(gram);
  if (detail::numerically_singular(top, bottom, k)) {
    throw ValidationError("feature matrix is rank deficient (smallest Gram eigenvalue " +
                          std::to_string(bottom) +
                          "); supply --lambda explicitly or reduce the feature dimension (e.g. --pca-dim)");
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  auto residual_variance = [&](const Eigen::VectorXd& target) {
    const Eigen::VectorXd beta = qr.solve(target);
    return (target - x * beta).squaredNorm() / static_cast<double>(n - k);
  };
  double sigma2 = 0.0;
  if (labels.num_classes() == 2) {
    sigma2 = residual_variance(labels.indicator(1));
  } else {
    for (int c = 0; c < labels.num_classes(); ++c) sigma2 += residual_variance(labels.indicator(c));
    sigma2 /= labels.num_classes();
  }
  LambdaEstimate est;
  est.sigma2_hat = sigma2;
  est.kappa = top / bottom;
  est.lambda = (1.0 + q) * sigma2 * static_cast<double>(k) / (2.0 * static_cast<double>(n)) * est.kappa;
  return est;
}

/// M = X (X^T X + lambda I)^{-1}, via a Cholesky solve.
inline RidgeModel precompute(const FeatureMatrix& features, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("lambda must be a finite non-negative number");
  }
  const auto& x = features.values();
  const Eigen::Index k = x.cols();
  Eigen::MatrixXd a = x.transpose() * x;
  const auto [top, bottom] = detail::extreme_eigenvalues(a);
  a.diagonal().array() += lambda;
  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success ||
      (lambda == 0.0 && detail::numerically_singular(top, bottom, k))) {
    std::ostringstream msg;
    msg << "X^T X + lambda I is singular (lambda=" << lambda << ", smallest eigenvalue "
        << bottom + lambda << "); use a positive lambda";
    throw ValidationError(msg.str());
  }
  RidgeModel model;
  model.M = llt.solve(x.transpose()).transpose();
  model.lambda = lambda;
  model.kappa = bottom > 0 ? top / bottom : std::numeric_limits<double>::infinity();
  if (!model.M.allFinite()) throw ValidationError("precomputed kernel matrix is not finite");
  return model;
}

inline RidgeModel precompute(const FeatureMatrix& features, const LambdaEstimate& est) {
  RidgeModel model = precompute(features, est.lambda);
  model.sigma2_hat = est.sigma2_hat;
  model.kappa = est.kappa;
  return model;
}

inline AlphaVector alpha_for(const RidgeModel& model, const Eigen::Ref<const Eigen::VectorXd>& test_features) {
  if (test_features.size() != model.k()) {
    throw ValidationError("test feature length " + std::to_string(test_features.size()) +
                          " does not match model dimension " + std::to_string(model.k()));
  }
  if (!test_features.allFinite()) throw ValidationError("test features contain a non-finite entry");
  return AlphaVector(model.M * test_features);
}

}  // namespace labelcert
