#pragma once

// On-disk formats: model artifact (JSON), certificates (JSON lines), tight
// table cache (text), curves (CSV).

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "labelcert/attack.hpp"
#include "labelcert/certify_binary.hpp"
#include "labelcert/certify_multiclass.hpp"
#include "labelcert/dataset.hpp"
#include "labelcert/error.hpp"
#include "labelcert/numeric.hpp"
#include "labelcert/regression.hpp"
#include "labelcert/tight_bound.hpp"

namespace labelcert {

using Json = nlohmann::ordered_json;

inline constexpr int kModelFormatVersion = 1;
inline constexpr int kTableFormatVersion = 1;

namespace detail {

inline Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline double number_or(const Json& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }

inline Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const Json& rows, Eigen::Index cols_if_empty = 0) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index k = n == 0 ? cols_if_empty : static_cast<Eigen::Index>(rows.at(0).size());
  Eigen::MatrixXd m(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Json& row = rows.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != k) throw ValidationError("ragged matrix in artifact");
    for (Eigen::Index j = 0; j < k; ++j) m(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  return m;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out << text;
  if (!out) throw ValidationError("write failed: " + path);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model artifact
// ---------------------------------------------------------------------------

/// Everything `certify` needs from `precompute`: M, training labels, and the
/// optional PCA fitted on the training features.
struct ModelArtifact {
  RidgeModel model;
  LabelVector train_labels;
  double lambda_q = 0.0;  // q used by the automatic lambda; 0 when lambda was fixed
  std::optional<PcaProjection> pca;
};

inline std::string model_artifact_json(const ModelArtifact& a) {
  Json j;
  j["format"] = "labelcert-model";
  j["version"] = kModelFormatVersion;
  j["n"] = a.model.n();
  j["k"] = a.model.k();
  j["num_classes"] = a.train_labels.num_classes();
  j["lambda"] = a.model.lambda;
  j["lambda_q"] = a.lambda_q;
  j["sigma2_hat"] = a.model.sigma2_hat;
  j["kappa"] = detail::finite_or_null(a.model.kappa);
  j["labels"] = a.train_labels.values();
  j["M"] = detail::matrix_to_json(a.model.M);
  if (a.pca) {
    Json p;
    p["mean"] = std::vector<double>(a.pca->mean.data(), a.pca->mean.data() + a.pca->mean.size());
    p["projection"] = detail::matrix_to_json(a.pca->projection);
    j["pca"] = std::move(p);
  }
  return j.dump() + "\n";
}

inline void save_model(const ModelArtifact& a, const std::string& path) {
  detail::write_text_file(path, model_artifact_json(a));
}

inline ModelArtifact parse_model_artifact(const std::string& text, const std::string& origin = "<memory>") {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw ValidationError(origin + ": malformed model artifact: " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "labelcert-model") throw ValidationError(origin + ": not a model artifact");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw ValidationError(origin + ": unsupported model artifact version " + std::to_string(version));
    }
    ModelArtifact a;
    const auto k = j.at("k").get<Eigen::Index>();
    a.model.M = detail::matrix_from_json(j.at("M"), k);
    a.model.lambda = j.at("lambda").get<double>();
    a.model.sigma2_hat = j.at("sigma2_hat").get<double>();
    a.model.kappa = detail::number_or(j.at("kappa"), std::numeric_limits<double>::infinity());
    a.lambda_q = j.value("lambda_q", 0.0);
    a.train_labels = LabelVector(j.at("labels").get<std::vector<int>>(), j.at("num_classes").get<int>());
    if (a.model.n() != j.at("n").get<Eigen::Index>() || a.model.k() != k ||
        static_cast<Eigen::Index>(a.train_labels.size()) != a.model.n()) {
      throw ValidationError(origin + ": inconsistent dimensions in model artifact");
    }
    if (j.contains("pca")) {
      PcaProjection p;
      const auto mean = j["pca"].at("mean").get<std::vector<double>>();
      p.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
      p.projection = detail::matrix_from_json(j["pca"].at("projection"));
      if (p.projection.cols() != k || p.projection.rows() != p.mean.size()) {
        throw ValidationError(origin + ": PCA projection does not match model dimension");
      }
      a.pca = std::move(p);
    }
    return a;
  } catch (const Json::exception& e) {
    throw ValidationError(origin + ": malformed model artifact: " + e.what());
  }
}

inline ModelArtifact load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model_artifact(buf.str(), path);
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

inline std::string certificate_json(std::size_t index, const Certificate& c) {
  Json j;
  j["index"] = index;
  j["prediction"] = c.prediction;
  j["t_star"] = detail::finite_or_null(c.t_star);
  j["p_star"] = c.p_star;
  j["r_kl"] = c.r_kl;
  j["r_tight"] = c.r_tight ? Json(*c.r_tight) : Json(nullptr);
  j["radius_capped"] = c.radius_capped;
  return j.dump();
}

inline std::string certificate_json(std::size_t index, const MultiCertificate& c) {
  Json j;
  j["index"] = index;
  j["prediction"] = c.prediction;
  j["p_star"] = c.p_star;
  j["r_kl"] = c.r_kl;
  Json pairs = Json::array();
  for (const auto& p : c.per_pair) {
    Json e;
    e["i"] = p.i;
    e["i_prime"] = p.i_prime;
    e["t_star"] = p.t_star;
    e["log_bound"] = detail::finite_or_null(p.log_bound);
    pairs.push_back(std::move(e));
  }
  j["pairs"] = std::move(pairs);
  return j.dump();
}

// ---------------------------------------------------------------------------
// Tight table cache
// ---------------------------------------------------------------------------

inline std::string format_q_key(double q) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12f", q);
  return buf;
}

/// LABELCERT_CACHE overrides `configured`; falls back to ./.labelcert-cache.
inline std::filesystem::path table_cache_dir(const std::string& configured = "") {
  if (const char* env = std::getenv("LABELCERT_CACHE"); env != nullptr && *env != '\0') return env;
  if (!configured.empty()) return configured;
  return ".labelcert-cache";
}

inline std::filesystem::path table_cache_path(const std::filesystem::path& dir, double q, int precision_bits) {
  return dir / ("tight_q" + format_q_key(q) + "_b" + std::to_string(precision_bits) + ".txt");
}

inline void write_table(const TightTable& t, std::ostream& out) {
  num::ScopedBigPrecision guard(t.precision_bits);
  out << "labelcert-tight-table " << kTableFormatVersion << "\n";
  out << "q " << format_q_key(t.q) << "\n";
  out << "r_max " << t.requested_r_max << "\n";
  out << "precision_bits " << t.precision_bits << "\n";
  out << "entries " << t.p_min.size() << "\n";
  for (const auto& p : t.p_min) out << num::to_decimal(p) << "\n";
}

/// Reads a table written by write_table. `q` replaces the 12-decimal key stored in the file.
inline TightTable read_table(std::istream& in, double q, const std::string& origin) {
  auto expect = [&](const std::string& key) {
    std::string k;
    if (!(in >> k) || k != key) throw ValidationError(origin + ": table header missing '" + key + "'");
  };
  TightTable t;
  int version = 0;
  std::string q_text;
  std::size_t entries = 0;
  expect("labelcert-tight-table");
  in >> version;
  if (version != kTableFormatVersion) throw ValidationError(origin + ": unsupported table version");
  expect("q");
  in >> q_text;
  expect("r_max");
  in >> t.requested_r_max;
  expect("precision_bits");
  in >> t.precision_bits;
  expect("entries");
  in >> entries;
  if (!in) throw ValidationError(origin + ": malformed table header");
  if (q_text != format_q_key(q)) throw ValidationError(origin + ": table q " + q_text + " does not match requested q");
  num::ScopedBigPrecision guard(t.precision_bits);
  t.q = q;
  t.p_min.reserve(entries);
  std::string field;
  for (std::size_t i = 0; i < entries; ++i) {
    if (!(in >> field)) throw ValidationError(origin + ": table truncated at entry " + std::to_string(i));
    try {
      t.p_min.emplace_back(field);
    } catch (const std::exception&) {
      throw ValidationError(origin + ": bad table entry " + std::to_string(i));
    }
  }
  return t;
}

/// Cached table covering at least r_max (or truncated at the precision cap).
/// Builds and stores it when missing or too short; progress goes to `log`.
inline TightTable load_or_build_table(double q, int r_max, int precision_bits, const std::filesystem::path& dir,
                                      std::ostream* log = &std::cerr) {
  const auto path = table_cache_path(dir, q, precision_bits);
  if (std::ifstream in(path); in) {
    TightTable t = read_table(in, q, path.string());
    if (t.requested_r_max >= r_max || t.truncated()) return t;
  }
  if (log) *log << "building tight table q=" << format_q_key(q) << " r_max=" << r_max << " bits=" << precision_bits << "\n";
  TightTable t = build_table(q, r_max, precision_bits);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (out) write_table(t, out);
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec && log) *log << "warning: could not cache table at " << path.string() << "\n";
  return t;
}

// ---------------------------------------------------------------------------
// Curves
// ---------------------------------------------------------------------------

inline double curve_at(const std::vector<double>& curve, long r) {
  if (curve.empty() || r < 0) return 0.0;
  return static_cast<std::size_t>(r) < curve.size() ? curve[static_cast<std::size_t>(r)] : 0.0;
}

/// Attacked accuracy past the tracked range is the value at its last entry:
/// points the attack never flipped keep surviving.
inline double attacked_at(const std::vector<double>& curve, long r) {
  if (curve.empty()) return 0.0;
  return curve[std::min(static_cast<std::size_t>(r), curve.size() - 1)];
}

inline void write_curve_csv(std::ostream& out, const RobustnessCurve& c, const std::vector<long>& flips) {
  const bool certified = c.mode == AttackMode::kDefended;
  const bool attacked = !c.attacked.empty();
  out << "flips";
  if (certified) out << ",certified_accuracy";
  if (attacked) out << ",attacked_accuracy";
  out << "\n";
  char buf[64];
  for (long r : flips) {
    out << r;
    if (certified) {
      std::snprintf(buf, sizeof buf, ",%.6f", curve_at(c.certified, r));
      out << buf;
    }
    if (attacked) {
      std::snprintf(buf, sizeof buf, ",%.6f", attacked_at(c.attacked, r));
      out << buf;
    }
    out << "\n";
  }
}

}  // namespace labelcert
