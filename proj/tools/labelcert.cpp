#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "labelcert/labelcert.hpp"

using namespace labelcert;

namespace {

struct RunConfig {
  double q = 0.1;
  int num_classes = 2;
  std::string lambda = "auto";
  std::string bound = "both";
  int precision_bits = 256;
  std::string cache_dir;
  std::uint64_t seed = 0;
  int workers = 0;  // 0: hardware concurrency

  SmoothingConfig smoothing() const {
    SmoothingConfig s{q, num_classes, precision_bits};
    s.validate();
    return s;
  }
  bool wants_tight() const { return bound != "kl"; }
};

void add_common(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--q", cfg.q, "label flip probability")->capture_default_str();
  cmd->add_option("--classes", cfg.num_classes, "number of classes K")->capture_default_str();
  cmd->add_option("--precision-bits", cfg.precision_bits, "extended precision width")->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
  cmd->add_option("--workers", cfg.workers, "worker threads (0: all cores)")->capture_default_str();
}

void add_bound(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--bound", cfg.bound, "kl | tight | both")
      ->check(CLI::IsMember({"kl", "tight", "both"}))
      ->capture_default_str();
  cmd->add_option("--cache-dir", cfg.cache_dir, "tight table cache directory (LABELCERT_CACHE overrides)");
}

// Output to a file, or stdout for "-" / empty.
class Output {
public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw ValidationError("cannot write " + path);
    }
  }
  std::ostream& get() { return file_ ? *file_ : std::cout; }

private:
  std::unique_ptr<std::ofstream> file_;
};

Eigen::MatrixXd load_test_features(const ModelArtifact& art, const std::string& path) {
  Eigen::MatrixXd x = read_feature_csv(path);
  if (x.rows() == 0) return Eigen::MatrixXd(0, art.model.k());
  if (art.pca) {
    if (x.cols() != art.pca->mean.size()) throw ValidationError(path + ": feature count does not match the model");
    x = art.pca->apply(x);
  }
  if (x.cols() != art.model.k()) throw ValidationError(path + ": feature count does not match the model");
  return x;
}

std::optional<LabelVector> load_test_labels(const std::string& path, int num_classes, Eigen::Index rows) {
  if (path.empty()) return std::nullopt;
  LabelVector y = read_labels(path, num_classes);
  if (static_cast<Eigen::Index>(y.size()) != rows) throw ValidationError(path + ": label count does not match features");
  return y;
}

void check_model_classes(const ModelArtifact& art, const RunConfig& cfg) {
  if (art.train_labels.num_classes() != cfg.num_classes) {
    throw ValidationError("--classes " + std::to_string(cfg.num_classes) + " does not match the model (K=" +
                          std::to_string(art.train_labels.num_classes()) + ")");
  }
}

std::vector<long> parse_flip_counts(const std::string& text) {
  std::vector<long> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ValidationError("bad flip count '" + item + "'");
    }
  }
  return out;
}

std::vector<double> parse_q_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    if (!detail::parse_double(item, v)) throw ValidationError("bad q value '" + item + "'");
    out.push_back(v);
  }
  return out;
}

ModelArtifact fit_model(const Dataset& train, const RunConfig& cfg, int pca_dim) {
  ModelArtifact art;
  FeatureMatrix features = train.features;
  if (pca_dim > 0) {
    PcaResult r = pca_reduce(train.features, pca_dim);
    features = std::move(r.reduced);
    art.pca = std::move(r.pca);
  }
  if (cfg.lambda == "auto") {
    const LambdaEstimate est = estimate_lambda(features, train.labels, cfg.q);
    art.model = precompute(features, est);
    art.lambda_q = cfg.q;
  } else {
    double lambda = 0.0;
    if (!detail::parse_double(cfg.lambda, lambda) || lambda < 0.0) {
      throw ValidationError("--lambda must be 'auto' or a non-negative number");
    }
    art.model = precompute(features, lambda);
  }
  art.train_labels = train.labels;
  return art;
}

// Table deep enough for the radii in play: grows until no tight radius sits at
// the table end (or the table reaches n or the precision cap).
class TableProvider {
public:
  TableProvider(const RunConfig& cfg, long n) : cfg_(cfg), n_(n) {}

  const TightTable* table_for(double q, const BigReal& max_p_star) {
    if (!cfg_.wants_tight() || cfg_.num_classes != 2) return nullptr;
    const long r_kl = binary_kl_radius(max_p_star, q, n_).r;
    long r_max = std::min(n_, std::max<long>(64, 3 * r_kl + 16));
    while (true) {
      table_ = load_or_build_table(q, static_cast<int>(r_max), cfg_.precision_bits, table_cache_dir(cfg_.cache_dir));
      const Radius top = tight_radius(max_p_star, table_, n_);
      if (table_.truncated() || r_max >= n_ || top.r < table_.r_max()) break;
      r_max = std::min(n_, 2 * r_max);
    }
    return &table_;
  }

private:
  RunConfig cfg_;
  long n_;
  TightTable table_;
};

// Upper end of the margins any point can reach, from a double-precision pass.
// Points that need extended precision may reach the cap at `bits`.
BigReal max_margin(const ModelArtifact& art, const Eigen::MatrixXd& x, const SmoothingConfig& sc) {
  num::ensure_big_precision(sc.precision_bits);
  double best = 0.5;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const AlphaVector a = alpha_for(art.model, x.row(i).transpose());
    const auto c = solve_chernoff(a, art.train_labels, sc.q);
    if (c.deterministic) continue;
    if (detail::needs_extended(sc.q, c.log_bound, sc.precision_bits)) return margin_cap<BigReal>(sc.precision_bits);
    best = std::max(best, c.p_star);
  }
  return BigReal(best);
}

int cmd_synth(const BlobSpec& spec, long n_test, std::uint64_t seed, const std::string& prefix) {
  BlobSpec test_spec = spec;
  test_spec.n = n_test;
  const Dataset train = make_blobs(spec, seed);
  const Dataset test = make_blobs(test_spec, CounterRng(seed).derive(1));
  save_dataset(train, prefix + "train_features.csv", prefix + "train_labels.txt");
  save_dataset(test, prefix + "test_features.csv", prefix + "test_labels.txt");
  return 0;
}

int cmd_precompute(const RunConfig& cfg, const std::string& features, const std::string& labels, int pca_dim,
                   const std::string& out) {
  cfg.smoothing();
  const Dataset train = load_dataset(features, labels, cfg.num_classes);
  save_model(fit_model(train, cfg, pca_dim), out);
  return 0;
}

int cmd_certify(const RunConfig& cfg, const std::string& model_path, const std::string& features,
                const std::string& labels, const std::string& out, const std::string& summary,
                const std::vector<long>& flips) {
  const SmoothingConfig sc = cfg.smoothing();
  const ModelArtifact art = load_model(model_path);
  check_model_classes(art, cfg);
  const Eigen::MatrixXd x = load_test_features(art, features);
  const auto y_test = load_test_labels(labels, cfg.num_classes, x.rows());
  const long n = art.model.n();
  num::ensure_big_precision(cfg.precision_bits);

  TableProvider tables(cfg, n);
  const TightTable* table = x.rows() > 0 ? tables.table_for(cfg.q, max_margin(art, x, sc)) : nullptr;

  const auto m = static_cast<std::size_t>(x.rows());
  std::vector<std::string> lines(m);
  std::vector<int> prediction(m);
  std::vector<long> radius(m);
  parallel_for(m, resolve_workers(cfg.workers), [&](std::size_t i) {
    const AlphaVector a = alpha_for(art.model, x.row(static_cast<Eigen::Index>(i)).transpose());
    if (cfg.num_classes == 2) {
      Certificate c = certify_alpha(a, art.train_labels, sc, table);
      if (cfg.bound == "tight") {
        c.r_kl = 0;  // kl radius not requested
      }
      prediction[i] = c.prediction;
      radius[i] = c.best_radius();
      lines[i] = certificate_json(i, c);
    } else {
      const MultiCertificate c = certify_alpha_multiclass(a, art.train_labels, sc);
      prediction[i] = c.prediction;
      radius[i] = c.r_kl;
      lines[i] = certificate_json(i, c);
    }
  });
  Output o(out);
  for (const auto& l : lines) o.get() << l << "\n";

  if (!summary.empty()) {
    Output s(summary);
    s.get() << (y_test ? "flips,certified_accuracy\n" : "flips,certified_fraction\n");
    char buf[64];
    for (long r : flips) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < m; ++i) hits += radius[i] >= r && (!y_test || prediction[i] == (*y_test)[i]);
      std::snprintf(buf, sizeof buf, "%ld,%.6f\n", r, m == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(m));
      s.get() << buf;
    }
  }
  return 0;
}

int cmd_verify(const RunConfig& cfg, const std::string& model_path, const std::string& features,
               std::uint64_t samples, double delta, const std::string& out) {
  const SmoothingConfig sc = cfg.smoothing();
  const ModelArtifact art = load_model(model_path);
  check_model_classes(art, cfg);
  const Eigen::MatrixXd x = load_test_features(art, features);
  const auto m = static_cast<std::size_t>(x.rows());
  std::vector<std::string> lines(m);
  std::vector<char> agree(m, 0);
  const CounterRng rng(cfg.seed);
  parallel_for(m, resolve_workers(cfg.workers), [&](std::size_t i) {
    const AlphaVector a = alpha_for(art.model, x.row(static_cast<Eigen::Index>(i)).transpose());
    const VerifyReport r = verify_alpha(a, art.train_labels, sc, samples, delta, rng.derive(i));
    Json j;
    j["index"] = i;
    j["prediction"] = r.prediction;
    j["p_star"] = r.p_star;
    j["mc_prediction"] = r.mc_prediction;
    j["mc_G"] = r.mc_G;
    j["mc_G_bound"] = r.mc_G_bound;
    j["agree"] = r.agree;
    lines[i] = j.dump();
    agree[i] = r.agree;
  });
  Output o(out);
  for (const auto& l : lines) o.get() << l << "\n";
  std::size_t ok = 0;
  for (char a : agree) ok += a != 0;
  std::cerr << "agreement: " << ok << "/" << m << "\n";
  return 0;
}

int cmd_attack(const RunConfig& cfg, const std::string& model_path, const std::string& features, long budget,
               bool undefended, const std::string& out) {
  const SmoothingConfig sc = cfg.smoothing();
  const ModelArtifact art = load_model(model_path);
  check_model_classes(art, cfg);
  const Eigen::MatrixXd x = load_test_features(art, features);
  const long n = art.model.n();
  const long b = budget < 0 ? n : budget;
  const auto m = static_cast<std::size_t>(x.rows());
  std::vector<std::string> lines(m);
  parallel_for(m, resolve_workers(cfg.workers), [&](std::size_t i) {
    const AlphaVector a = alpha_for(art.model, x.row(static_cast<Eigen::Index>(i)).transpose());
    const AttackResult r = undefended ? greedy_attack_undefended(a, art.train_labels, cfg.num_classes, b)
                                      : greedy_attack_smoothed_alpha(a, art.train_labels, sc, b);
    Json j;
    j["index"] = i;
    j["prediction"] = undefended ? base_prediction(a, art.train_labels)
                                 : (cfg.num_classes == 2 ? certified_prediction(a, art.train_labels, cfg.q)
                                                         : certified_prediction_multiclass(a, art.train_labels, cfg.q));
    j["flips_needed"] = r.flips_needed ? Json(*r.flips_needed) : Json(nullptr);
    j["budget"] = r.budget;
    Json seq = Json::array();
    for (const auto& f : r.flip_sequence) seq.push_back(Json::array({f.index, f.new_label}));
    j["flip_sequence"] = std::move(seq);
    lines[i] = j.dump();
  });
  Output o(out);
  for (const auto& l : lines) o.get() << l << "\n";
  return 0;
}

RobustnessCurve evaluate_curve(const RunConfig& cfg, const ModelArtifact& art, const Eigen::MatrixXd& x,
                               const LabelVector& y, long budget, bool undefended, bool run_attack) {
  const SmoothingConfig sc = cfg.smoothing();
  num::ensure_big_precision(cfg.precision_bits);
  TableProvider tables(cfg, art.model.n());
  const TightTable* table = nullptr;
  if (!undefended && x.rows() > 0) table = tables.table_for(cfg.q, max_margin(art, x, sc));
  CurveOptions opt;
  opt.mode = undefended ? AttackMode::kUndefended : AttackMode::kDefended;
  opt.run_attack = run_attack;
  opt.budget = budget;
  opt.workers = cfg.workers;
  return robustness_curve(art.model, art.train_labels, x, y, sc, table, opt);
}

int cmd_evaluate(const RunConfig& cfg, const std::string& model_path, const std::string& features,
                 const std::string& labels, long budget, bool undefended, bool no_attack, bool baseline,
                 const std::vector<long>& flips, const std::string& out) {
  const ModelArtifact art = load_model(model_path);
  check_model_classes(art, cfg);
  const Eigen::MatrixXd x = load_test_features(art, features);
  const auto y = load_test_labels(labels, cfg.num_classes, x.rows());
  if (!y) throw ValidationError("evaluate requires --labels");
  const RobustnessCurve c = evaluate_curve(cfg, art, x, *y, budget, undefended, !no_attack);
  Output o(out);
  write_curve_csv(o.get(), c, flips);
  char buf[96];
  std::snprintf(buf, sizeof buf, "nonrobust accuracy %.6f\n", c.nonrobust_accuracy);
  std::cerr << buf;
  if (baseline) {
    std::snprintf(buf, sizeof buf, "constant classifier accuracy %.6f\n", constant_classifier_accuracy(art.train_labels, *y));
    std::cerr << buf;
  }
  return 0;
}

int cmd_sweep(RunConfig cfg, const std::string& train_f, const std::string& train_l, const std::string& test_f,
              const std::string& test_l, const std::vector<double>& grid, int pca_dim, long budget, bool no_attack,
              bool baseline, const std::vector<long>& flips, const std::string& out) {
  const Dataset train = load_dataset(train_f, train_l, cfg.num_classes);
  Output o(out);
  o.get() << "q,flips,certified_acc,attacked_acc,nonrobust_acc\n";
  char buf[160];
  std::optional<LabelVector> y;
  for (double q : grid) {
    cfg.q = q;
    const ModelArtifact art = fit_model(train, cfg, pca_dim);
    const Eigen::MatrixXd x = load_test_features(art, test_f);
    if (!y) y = load_test_labels(test_l, cfg.num_classes, x.rows());
    if (!y) throw ValidationError("sweep-q requires --test-labels");
    const RobustnessCurve c = evaluate_curve(cfg, art, x, *y, budget, false, !no_attack);
    for (long r : flips) {
      const std::string att = c.attacked.empty() ? "" : [&] {
        char a[32];
        std::snprintf(a, sizeof a, "%.6f", attacked_at(c.attacked, r));
        return std::string(a);
      }();
      std::snprintf(buf, sizeof buf, "%s,%ld,%.6f,%s,%.6f\n", format_q_key(q).c_str(), r, curve_at(c.certified, r),
                    att.c_str(), c.nonrobust_accuracy);
      o.get() << buf;
    }
  }
  if (baseline && y) {
    const double acc = constant_classifier_accuracy(train.labels, *y);
    for (long r : flips) {
      std::snprintf(buf, sizeof buf, "constant,%ld,%.6f,%.6f,%.6f\n", r, acc, acc, acc);
      o.get() << buf;
    }
  }
  return 0;
}

int cmd_table(const RunConfig& cfg, int r_max) {
  const TightTable t = load_or_build_table(cfg.q, r_max, cfg.precision_bits, table_cache_dir(cfg.cache_dir));
  std::cout << table_cache_path(table_cache_dir(cfg.cache_dir), cfg.q, cfg.precision_bits).string() << "\n";
  std::cout << "entries " << t.p_min.size() << (t.truncated() ? " (stopped at precision cap)" : "") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certified robustness to training-label flipping for ridge classifiers"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string features, labels, model, out = "-", summary, test_features, test_labels, flip_text = "1,10,25,50,100,200";
  std::string q_grid = "0.3,0.4,0.45,0.475";
  int pca_dim = 0, r_max = 200;
  long budget = -1, n_test = 500;
  std::uint64_t samples = 100000;
  double delta = 0.001;
  bool undefended = false, baseline = false, no_attack = false;
  BlobSpec blobs;

  auto* synth = app.add_subcommand("synth", "write a Gaussian-blob train/test split");
  synth->add_option("--n", blobs.n, "training points")->capture_default_str();
  synth->add_option("--n-test", n_test, "test points")->capture_default_str();
  synth->add_option("--dim", blobs.dim, "feature dimension")->capture_default_str();
  synth->add_option("--classes", blobs.num_classes, "number of classes")->capture_default_str();
  synth->add_option("--separation", blobs.separation, "distance between class means")->capture_default_str();
  synth->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
  synth->add_option("--out-prefix", out, "prefix for the four output files")->required();

  auto* pre = app.add_subcommand("precompute", "fit the ridge model and write the artifact");
  add_common(pre, cfg);
  pre->add_option("--features", features, "training feature CSV")->required();
  pre->add_option("--labels", labels, "training labels")->required();
  pre->add_option("--lambda", cfg.lambda, "'auto' or a non-negative value")->capture_default_str();
  pre->add_option("--pca-dim", pca_dim, "reduce features to this many principal components");
  pre->add_option("--out", out, "model artifact path")->required();

  auto* cert = app.add_subcommand("certify", "certificates as JSON lines");
  add_common(cert, cfg);
  add_bound(cert, cfg);
  cert->add_option("--model", model, "model artifact")->required();
  cert->add_option("--features", features, "test feature CSV")->required();
  cert->add_option("--labels", labels, "test labels (for the summary)");
  cert->add_option("--out", out, "certificate output (- for stdout)");
  cert->add_option("--summary", summary, "summary CSV path");
  cert->add_option("--flip-counts", flip_text, "flip counts for the summary")->capture_default_str();

  auto* ver = app.add_subcommand("verify", "compare certificates with the sampling procedure");
  add_common(ver, cfg);
  ver->add_option("--model", model, "model artifact")->required();
  ver->add_option("--features", features, "test feature CSV")->required();
  ver->add_option("--samples", samples, "label draws per point")->capture_default_str();
  ver->add_option("--delta", delta, "confidence parameter")->capture_default_str();
  ver->add_option("--out", out, "report output (- for stdout)");

  auto* att = app.add_subcommand("attack", "greedy label-flip attack per test point");
  add_common(att, cfg);
  att->add_option("--model", model, "model artifact")->required();
  att->add_option("--features", features, "test feature CSV")->required();
  att->add_option("--budget", budget, "maximum flips (default n)");
  att->add_flag("--undefended", undefended, "attack the unsmoothed classifier");
  att->add_option("--out", out, "attack output (- for stdout)");

  auto* eval = app.add_subcommand("evaluate", "certified and attacked accuracy curves");
  add_common(eval, cfg);
  add_bound(eval, cfg);
  eval->add_option("--model", model, "model artifact")->required();
  eval->add_option("--features", features, "test feature CSV")->required();
  eval->add_option("--labels", labels, "test labels")->required();
  eval->add_option("--budget", budget, "attack budget (default n)");
  eval->add_flag("--undefended", undefended, "evaluate the unsmoothed classifier");
  eval->add_flag("--no-attack", no_attack, "skip the attack curve");
  eval->add_flag("--baseline", baseline, "report the constant-classifier accuracy");
  eval->add_option("--flip-counts", flip_text, "flip counts")->capture_default_str();
  eval->add_option("--out", out, "curve CSV (- for stdout)");

  auto* sweep = app.add_subcommand("sweep-q", "curves over a grid of q");
  add_common(sweep, cfg);
  add_bound(sweep, cfg);
  sweep->add_option("--train-features", features, "training feature CSV")->required();
  sweep->add_option("--train-labels", labels, "training labels")->required();
  sweep->add_option("--test-features", test_features, "test feature CSV")->required();
  sweep->add_option("--test-labels", test_labels, "test labels")->required();
  sweep->add_option("--q-grid", q_grid, "comma-separated q values")->capture_default_str();
  sweep->add_option("--lambda", cfg.lambda, "'auto' or a non-negative value")->capture_default_str();
  sweep->add_option("--pca-dim", pca_dim, "reduce features to this many principal components");
  sweep->add_option("--budget", budget, "attack budget (default n)");
  sweep->add_flag("--no-attack", no_attack, "skip the attack curve");
  sweep->add_flag("--baseline", baseline, "append constant-classifier rows");
  sweep->add_option("--flip-counts", flip_text, "flip counts")->capture_default_str();
  sweep->add_option("--out", out, "CSV output (- for stdout)");

  auto* tab = app.add_subcommand("table", "build and cache a tight-bound table");
  add_common(tab, cfg);
  tab->add_option("--cache-dir", cfg.cache_dir, "cache directory (LABELCERT_CACHE overrides)");
  tab->add_option("--r-max", r_max, "largest flip count")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kValidation);
  }

  try {
    const auto flips = parse_flip_counts(flip_text);
    if (*synth) return cmd_synth(blobs, n_test, cfg.seed, out);
    if (*pre) return cmd_precompute(cfg, features, labels, pca_dim, out);
    if (*cert) return cmd_certify(cfg, model, features, labels, out, summary, flips);
    if (*ver) return cmd_verify(cfg, model, features, samples, delta, out);
    if (*att) return cmd_attack(cfg, model, features, budget, undefended, out);
    if (*eval) return cmd_evaluate(cfg, model, features, labels, budget, undefended, no_attack, baseline, flips, out);
    if (*sweep) {
      return cmd_sweep(cfg, features, labels, test_features, test_labels, parse_q_grid(q_grid), pca_dim, budget,
                       no_attack, baseline, flips, out);
    }
    if (*tab) return cmd_table(cfg, r_max);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kValidation);
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kNonConvergence);
  }
  return 0;
}
