#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "labelcert/dataset.hpp"
#include "labelcert/error.hpp"

namespace labelcert {

struct BlobSpec {
  long n = 2000;
  int dim = 10;
  int num_classes = 2;
  double separation = 4.0;  // distance between neighbouring class means
  bool intercept = true;     // append a constant-one feature
};

/// Isotropic unit-variance Gaussian blobs, labels drawn uniformly. Binary
/// means sit at +-separation/2 along the diagonal; class c > 1 uses axis c.
inline Dataset make_blobs(const BlobSpec& spec, std::uint64_t seed) {
  if (spec.n < 1 || spec.dim < 1) throw ValidationError("blob size and dimension must be positive");
  if (spec.num_classes < 2 || (spec.num_classes > 2 && spec.num_classes > spec.dim)) {
    throw ValidationError("multi-class blobs need dim >= classes");
  }
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, spec.num_classes - 1);
  const int k = spec.dim + (spec.intercept ? 1 : 0);
  Eigen::MatrixXd x(spec.n, k);
  std::vector<int> y(static_cast<std::size_t>(spec.n));
  const double diag = spec.separation / (2.0 * std::sqrt(static_cast<double>(spec.dim)));
  for (long i = 0; i < spec.n; ++i) {
    const int c = cls(gen);
    y[static_cast<std::size_t>(i)] = c;
    for (int j = 0; j < spec.dim; ++j) {
      double mean = 0.0;
      if (spec.num_classes == 2) {
        mean = c == 1 ? diag : -diag;
      } else if (j == c) {
        mean = spec.separation / std::sqrt(2.0);
      }
      x(i, j) = mean + gauss(gen);
    }
    if (spec.intercept) x(i, spec.dim) = 1.0;
  }
  return Dataset{FeatureMatrix(std::move(x)), LabelVector(std::move(y), spec.num_classes)};
}

}  // namespace labelcert
