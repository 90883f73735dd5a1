#pragma once

// Domain types, CSV/label ingestion and PCA shared by the rest of the library.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "labelcert/error.hpp"

namespace labelcert {

/// Training (or test) features, one row per example. Every entry is finite.
class FeatureMatrix {
public:
  FeatureMatrix() = default;

  explicit FeatureMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
    if (values_.rows() < 1 || values_.cols() < 1) {
      throw ValidationError("feature matrix must have at least one row and one column");
    }
    if (!values_.allFinite()) throw ValidationError("feature matrix contains a non-finite entry");
  }

  Eigen::Index n() const { return values_.rows(); }
  Eigen::Index k() const { return values_.cols(); }
  const Eigen::MatrixXd& values() const { return values_; }

private:
  Eigen::MatrixXd values_;
};

/// Integer class labels in [0, K).
class LabelVector {
public:
  LabelVector() = default;

  LabelVector(std::vector<int> labels, int num_classes)
      : labels_(std::move(labels)), num_classes_(num_classes) {
    if (num_classes_ < 2) throw ValidationError("class count must be at least 2");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] < 0 || labels_[i] >= num_classes_) {
        throw ValidationError("label out of range at index " + std::to_string(i) + ": " +
                              std::to_string(labels_[i]) + " not in [0, " +
                              std::to_string(num_classes_) + ")");
      }
    }
  }

  std::size_t size() const { return labels_.size(); }
  int num_classes() const { return num_classes_; }
  int operator[](std::size_t i) const { return labels_[i]; }
  const std::vector<int>& values() const { return labels_; }

  // Indicator vector 1{y_i == c} as doubles.
  Eigen::VectorXd indicator(int c) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(labels_.size()));
    for (std::size_t i = 0; i < labels_.size(); ++i) v[static_cast<Eigen::Index>(i)] = labels_[i] == c;
    return v;
  }

  // Copy with label `i` replaced.
  LabelVector with(std::size_t i, int label) const {
    LabelVector out = *this;
    out.labels_.at(i) = label;
    return out;
  }

  friend bool operator==(const LabelVector&, const LabelVector&) = default;

private:
  std::vector<int> labels_;
  int num_classes_ = 2;
};

/// Label-noise model: keep each label w.p. 1-q, otherwise resample uniformly
/// among the other K-1 classes.
struct SmoothingConfig {
  double q = 0.1;
  int num_classes = 2;
  int precision_bits = 256;

  void validate() const {
    if (num_classes < 2) throw ValidationError("class count must be at least 2");
    const double q_max = static_cast<double>(num_classes - 1) / num_classes;
    if (!(q > 0.0 && q < q_max)) {
      throw ValidationError("flip probability q must lie in (0, " + std::to_string(q_max) +
                            "), got " + std::to_string(q));
    }
    if (precision_bits < 53) throw ValidationError("precision_bits must be at least 53");
  }
};

struct Dataset {
  FeatureMatrix features;
  LabelVector labels;

  int num_classes() const { return labels.num_classes(); }
  Eigen::Index n() const { return features.n(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline bool parse_double(std::string_view field, double& out) {
  field = trim(field);
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, out);
  return res.ec == std::errc() && res.ptr == end;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

inline std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  return in;
}

}  // namespace detail

/// Reads a comma-separated feature file. A first line that does not parse as
/// numbers is treated as a header and skipped. May return zero rows.
inline Eigen::MatrixXd read_feature_csv(const std::string& path) {
  auto in = detail::open_or_throw(path);
  std::vector<double> flat;
  Eigen::Index cols = -1;
  Eigen::Index rows = 0;
  std::string line;
  std::size_t line_no = 0;
  bool first_content_line = true;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto fields = detail::split_commas(body);
    std::vector<double> row(fields.size());
    std::size_t bad = fields.size();
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (!detail::parse_double(fields[j], row[j])) {
        bad = j;
        break;
      }
    }
    if (bad != fields.size()) {
      if (first_content_line) {
        first_content_line = false;
        continue;  // header
      }
      throw ValidationError(path + ":" + std::to_string(line_no) + ": unparseable value '" +
                            std::string(detail::trim(fields[bad])) + "'");
    }
    first_content_line = false;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (!std::isfinite(row[j])) {
        throw ValidationError(path + ":" + std::to_string(line_no) + ": non-finite feature in column " +
                              std::to_string(j + 1));
      }
    }
    if (cols < 0) cols = static_cast<Eigen::Index>(row.size());
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                            " columns, found " + std::to_string(row.size()));
    }
    flat.insert(flat.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = flat[static_cast<std::size_t>(i * cols + j)];
  return m;
}

/// Reads one integer label per line (blank lines ignored).
inline LabelVector read_labels(const std::string& path, int num_classes) {
  auto in = detail::open_or_throw(path);
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    int v = 0;
    const auto* end = body.data() + body.size();
    const auto res = std::from_chars(body.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": unparseable label '" +
                            std::string(body) + "'");
    }
    if (v < 0 || v >= num_classes) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": label out of range: " +
                            std::to_string(v) + " not in [0, " + std::to_string(num_classes) + ")");
    }
    labels.push_back(v);
  }
  return LabelVector(std::move(labels), num_classes);
}

inline Dataset load_dataset(const std::string& features_path, const std::string& labels_path,
                            int num_classes) {
  Eigen::MatrixXd x = read_feature_csv(features_path);
  LabelVector y = read_labels(labels_path, num_classes);
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw ValidationError("dimension mismatch: " + features_path + " has " + std::to_string(x.rows()) +
                          " rows but " + labels_path + " has " + std::to_string(y.size()) + " labels");
  }
  Dataset d{FeatureMatrix(std::move(x)), std::move(y)};
  std::set<int> distinct(d.labels.values().begin(), d.labels.values().end());
  if (distinct.size() < 2) {
    std::cerr << "warning: training labels contain a single class\n";
  }
  return d;
}

inline void write_feature_csv(const std::string& path, const Eigen::MatrixXd& x) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  char buf[32];
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", x(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

inline void write_labels(const std::string& path, const LabelVector& y) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  for (int v : y.values()) out << v << '\n';
}

inline void save_dataset(const Dataset& d, const std::string& features_path, const std::string& labels_path) {
  write_feature_csv(features_path, d.features.values());
  write_labels(labels_path, d.labels);
}

/// Principal-component projection fitted on training features. Centers, does not whiten.
struct PcaProjection {
  Eigen::VectorXd mean;        // length k
  Eigen::MatrixXd projection;  // k x target_dim, orthonormal columns

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    return (x.rowwise() - mean.transpose()) * projection;
  }
  Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& reduced) const {
    return (reduced * projection.transpose()).rowwise() + mean.transpose();
  }
};

struct PcaResult {
  FeatureMatrix reduced;
  PcaProjection pca;
};

inline PcaResult pca_reduce(const FeatureMatrix& features, Eigen::Index target_dim) {
  const auto& x = features.values();
  if (target_dim < 1 || target_dim > std::min(x.rows(), x.cols())) {
    throw ValidationError("pca target dimension " + std::to_string(target_dim) + " not in [1, " +
                          std::to_string(std::min(x.rows(), x.cols())) + "]");
  }
  PcaProjection p;
  p.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - p.mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues are ascending; take the trailing columns in reverse order.
  p.projection.resize(x.cols(), target_dim);
  for (Eigen::Index j = 0; j < target_dim; ++j) {
    Eigen::VectorXd v = eig.eigenvectors().col(x.cols() - 1 - j);
    // Fix the sign so the largest-magnitude component is positive.
    Eigen::Index idx = 0;
    v.cwiseAbs().maxCoeff(&idx);
    if (v[idx] < 0) v = -v;
    p.projection.col(j) = v;
  }
  Eigen::MatrixXd reduced = centered * p.projection;
  return PcaResult{FeatureMatrix(std::move(reduced)), std::move(p)};
}

}  // namespace labelcert
