// diva - dataset curation for weighted ridge models: closed-form dataset
// gradients, leave-one-out reports, reweighting, pool extension, and
// detrimental-sample detection over CSV or DIVM matrices.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "diva/diva.hpp"

namespace {

using namespace diva;

struct CommonOpts {
  std::string features_path;
  std::string labels_path;
  std::string val_features_path;
  std::string val_labels_path;
  std::string format = "csv";
  std::string loss;  // empty = per-subcommand default
  std::string mode = "loo";
  std::string out_path;
  double lambda = 0.0;
  std::string lambda_grid;
  std::uint64_t seed = 0;
};

MatrixFormat parse_format(const std::string& name) {
  if (name == "csv") return MatrixFormat::csv;
  if (name == "divm") return MatrixFormat::divm;
  throw dimension_error("unknown format '" + name + "'");
}

LossKind parse_loss(const std::string& name) {
  if (name == "squared") return LossKind::squared_error;
  if (name == "ce") return LossKind::cross_entropy;
  if (name == "ce-misclassified") return LossKind::misclassified_only_cross_entropy;
  throw dimension_error("unknown loss '" + name + "'");
}

ValidationMode parse_mode(const std::string& name) {
  if (name == "loo") return ValidationMode::loo;
  if (name == "heldout") return ValidationMode::held_out;
  throw dimension_error("unknown mode '" + name + "'");
}

LossKind loss_or_default(const CommonOpts& opts, LossKind fallback) {
  return opts.loss.empty() ? fallback : parse_loss(opts.loss);
}

std::vector<double> parse_lambda_grid(const std::string& spec) {
  if (spec == "default") return default_lambda_grid();
  std::vector<double> grid;
  std::size_t at = 0;
  while (at < spec.size()) {
    const std::size_t comma = spec.find(',', at);
    const std::string cell = spec.substr(at, comma == std::string::npos ? comma : comma - at);
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size() || v <= 0.0)
      throw dimension_error("bad lambda grid entry '" + cell + "'");
    grid.push_back(v);
    if (comma == std::string::npos) break;
    at = comma + 1;
  }
  if (grid.empty()) throw dimension_error("empty lambda grid");
  return grid;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--features", opts.features_path, "training feature matrix");
  cmd->add_option("--labels", opts.labels_path,
                  "training labels (one-hot matrix or integer class column)");
  cmd->add_option("--val-features", opts.val_features_path, "held-out feature matrix");
  cmd->add_option("--val-labels", opts.val_labels_path, "held-out labels");
  cmd->add_option("--format", opts.format, "matrix file format: csv|divm")
      ->check(CLI::IsMember({"csv", "divm"}));
  auto* lambda = cmd->add_option("--lambda", opts.lambda, "ridge regularizer (> 0)");
  auto* grid = cmd->add_option("--lambda-grid", opts.lambda_grid,
                               "'default' or comma-separated candidates; picks the "
                               "unweighted-LOO argmin");
  lambda->excludes(grid);
  grid->excludes(lambda);
  cmd->add_option("--loss", opts.loss, "squared|ce|ce-misclassified")
      ->check(CLI::IsMember({"squared", "ce", "ce-misclassified"}));
  cmd->add_option("--mode", opts.mode, "validation mode: loo|heldout")
      ->check(CLI::IsMember({"loo", "heldout"}));
  cmd->add_option("--out", opts.out_path, "report JSON path");
  cmd->add_option("--seed", opts.seed, "seed for synthetic gradcheck instances");
}

Dataset load_training(const CommonOpts& opts) {
  if (opts.features_path.empty() || opts.labels_path.empty())
    throw dimension_error("--features and --labels are required");
  return load_dataset(opts.features_path, opts.labels_path, parse_format(opts.format));
}

std::optional<Dataset> load_heldout(const CommonOpts& opts) {
  const bool heldout = parse_mode(opts.mode) == ValidationMode::held_out;
  if (!heldout) return std::nullopt;
  if (opts.val_features_path.empty() || opts.val_labels_path.empty())
    throw dimension_error("--mode heldout requires --val-features and --val-labels");
  return load_dataset(opts.val_features_path, opts.val_labels_path, parse_format(opts.format));
}

// resolved lambda plus, when grid-searched, the per-candidate table
double resolve_lambda(const CommonOpts& opts, const Dataset& data, LossKind loss,
                      std::map<std::string, double>* metrics) {
  if (!opts.lambda_grid.empty()) {
    const auto [best, table] = lambda_grid_search(data, parse_lambda_grid(opts.lambda_grid), loss);
    if (metrics) {
      char key[64];
      for (std::size_t i = 0; i < table.size(); ++i) {
        std::snprintf(key, sizeof key, "grid_%02zu_lambda", i);
        (*metrics)[key] = table[i].first;
        std::snprintf(key, sizeof key, "grid_%02zu_loss", i);
        (*metrics)[key] = table[i].second;
      }
    }
    return best;
  }
  if (opts.lambda <= 0.0) throw dimension_error("--lambda must be positive (or use --lambda-grid)");
  return opts.lambda;
}

void write_report(const CurationReport& report, const CommonOpts& opts) {
  if (!opts.out_path.empty()) save_report(report, opts.out_path);
}

int cmd_fit(const CommonOpts& opts, const std::string& test_features,
            const std::string& test_labels, const std::string& pred_out) {
  const Dataset data = load_training(opts);
  const LossKind loss = loss_or_default(opts, LossKind::squared_error);
  CurationReport report;
  const double lambda = resolve_lambda(opts, data, loss, &report.metrics);
  const auto fit = fit_weighted_ridge(data, SampleWeights::ones(data.n()), lambda);
  const Matrix train_pred = predict(fit, data.features);

  report.final_weights = SampleWeights::ones(data.n());
  report.metrics["lambda"] = lambda;
  report.metrics["train_loss"] = loss_value(loss, train_pred, data.labels);
  report.metrics["train_error_rate"] = error_rate(train_pred, data.labels);
  report.loss_trajectory.emplace_back(0, report.metrics["train_loss"]);
  if (!test_features.empty()) {
    const Dataset test = load_dataset(test_features, test_labels, parse_format(opts.format));
    report.metrics["test_error_rate"] = evaluate(fit, test).at("error_rate");
  }
  if (!pred_out.empty()) save_matrix(train_pred, pred_out, parse_format(opts.format));
  write_report(report, opts);
  return 0;
}

int cmd_reweight(const CommonOpts& opts, int steps, double lr) {
  const Dataset data = load_training(opts);
  const std::optional<Dataset> heldout = load_heldout(opts);
  ReweightConfig config = ReweightConfig::defaults_for(parse_mode(opts.mode));
  config.steps = steps;
  config.learning_rate = lr;
  config.loss = loss_or_default(opts, config.loss);

  CurationReport report;
  const double lambda = resolve_lambda(opts, data, config.loss, &report.metrics);
  CurationReport run = reweight(data, lambda, config, heldout ? &*heldout : nullptr);
  run.metrics.insert(report.metrics.begin(), report.metrics.end());
  run.metrics["lambda"] = lambda;
  write_report(run, opts);
  return 0;
}

int cmd_extend(const CommonOpts& opts, const std::string& pool_features,
               const std::string& pool_labels, Index batch, Index max_rounds) {
  const Dataset core = load_training(opts);
  if (pool_features.empty() || pool_labels.empty())
    throw dimension_error("--pool-features and --pool-labels are required");
  const Dataset pool = load_dataset(pool_features, pool_labels, parse_format(opts.format));
  const std::optional<Dataset> heldout = load_heldout(opts);

  ExtendConfig config;
  config.batch_size = batch;
  config.max_rounds = max_rounds;
  config.validation_mode = parse_mode(opts.mode);
  config.loss = loss_or_default(opts, config.validation_mode == ValidationMode::loo
                                          ? LossKind::misclassified_only_cross_entropy
                                          : LossKind::cross_entropy);

  CurationReport grid_metrics;
  const double lambda = resolve_lambda(opts, core, config.loss, &grid_metrics.metrics);
  CurationReport run = extend(core, pool, lambda, config, heldout ? &*heldout : nullptr);
  run.metrics.insert(grid_metrics.metrics.begin(), grid_metrics.metrics.end());
  run.metrics["lambda"] = lambda;
  write_report(run, opts);
  return 0;
}

int cmd_detect(const CommonOpts& opts, double epsilon) {
  const Dataset data = load_training(opts);
  const std::optional<Dataset> heldout = load_heldout(opts);
  const ValidationMode mode = parse_mode(opts.mode);
  const LossKind loss =
      loss_or_default(opts, mode == ValidationMode::loo
                                ? LossKind::misclassified_only_cross_entropy
                                : LossKind::cross_entropy);
  CurationReport grid_metrics;
  const double lambda = resolve_lambda(opts, data, loss, &grid_metrics.metrics);
  CurationReport run =
      detect_detrimental(data, lambda, loss, epsilon, mode, heldout ? &*heldout : nullptr);
  run.metrics.insert(grid_metrics.metrics.begin(), grid_metrics.metrics.end());
  run.metrics["lambda"] = lambda;
  run.metrics["epsilon"] = epsilon;
  write_report(run, opts);
  return 0;
}

int cmd_loo(const CommonOpts& opts, const std::string& pred_out) {
  const Dataset data = load_training(opts);
  const LossKind loss = loss_or_default(opts, LossKind::misclassified_only_cross_entropy);
  CurationReport report;
  const double lambda = resolve_lambda(opts, data, loss, &report.metrics);
  const LooReport loo = loo_loss(data, SampleWeights::ones(data.n()), lambda, loss);

  report.final_weights = SampleWeights::ones(data.n());
  report.metrics["lambda"] = lambda;
  report.metrics["loo_loss"] = loo.total_loss;
  report.metrics["loo_error_rate"] = error_rate(loo.predictions, data.labels);
  report.loss_trajectory.emplace_back(0, loo.total_loss);
  if (!pred_out.empty()) save_matrix(loo.predictions, pred_out, parse_format(opts.format));
  write_report(report, opts);
  return 0;
}

// synthetic instance for gradcheck runs without input files
Dataset synth_instance(Rng& rng, Index n, Index m, Index k) {
  Dataset data;
  data.features.resize(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) data.features(i, j) = rng.normal();
  data.labels = Matrix::Zero(n, k);
  for (Index i = 0; i < n; ++i) data.labels(i, Index(rng.bounded(std::uint64_t(k)))) = 1.0;
  return data;
}

int cmd_gradcheck(const CommonOpts& opts, const std::string& which, double fd_step, double tol,
                  Index n, Index m, Index k, Index q) {
  const LossKind loss = loss_or_default(opts, LossKind::squared_error);
  const double lambda = opts.lambda > 0.0 ? opts.lambda : 1.0;

  Rng rng(opts.seed == 0 ? 0x9e3779b9ULL : opts.seed);
  Dataset train;
  std::optional<Dataset> val;
  if (!opts.features_path.empty()) {
    train = load_training(opts);
    if (!opts.val_features_path.empty())
      val = load_dataset(opts.val_features_path, opts.val_labels_path,
                         parse_format(opts.format));
  } else {
    train = synth_instance(rng, n, m, k);
    val = synth_instance(rng, q, m, k);
  }
  Vector alpha(train.n());
  for (Index i = 0; i < train.n(); ++i) alpha[i] = rng.uniform(0.5, 1.5);
  const SampleWeights weights{alpha};

  double err = 0.0;
  double used_tol = tol;
  if (which == "val") {
    if (!val) throw dimension_error("gradcheck val needs --val-features/--val-labels");
    const auto fit = fit_weighted_ridge(train, weights, lambda);
    const auto closed = val_loss_gradient(fit, train, weights, *val, loss);
    const auto oracle = finite_difference_gradient(train, weights, lambda, *val, loss, fd_step);
    err = gradient_rel_err(closed.values, oracle.values);
    if (used_tol <= 0.0) used_tol = loss == LossKind::squared_error ? 1e-4 : 1e-3;
  } else if (which == "loo") {
    const auto closed = loo_loss_gradient(train, weights, lambda, loss);
    const auto oracle = finite_difference_loo_gradient(train, weights, lambda, loss, fd_step);
    err = gradient_rel_err(closed.values, oracle.values);
    if (used_tol <= 0.0) used_tol = loss == LossKind::squared_error ? 1e-4 : 1e-3;
  } else if (which == "jacobian") {
    const auto fit = fit_weighted_ridge(train, weights, lambda);
    const auto jac = model_dataset_jacobian(fit, train);
    Vector probe = alpha;
    for (Index r = 0; r < train.n(); ++r) {
      probe[r] = alpha[r] + fd_step;
      const Matrix up = fit_weighted_ridge(train, SampleWeights(probe), lambda).weights;
      probe[r] = alpha[r] - fd_step;
      const Matrix down = fit_weighted_ridge(train, SampleWeights(probe), lambda).weights;
      probe[r] = alpha[r];
      const Matrix fd = (up - down) / (2.0 * fd_step);
      const double scale = std::max(fd.cwiseAbs().maxCoeff(), 1e-12);
      err = std::max(err, (jac[std::size_t(r)] - fd).cwiseAbs().maxCoeff() / scale);
    }
    if (used_tol <= 0.0) used_tol = 1e-5;
  } else {
    throw dimension_error("gradcheck --which must be val, loo, or jacobian");
  }

  std::cout << "gradcheck " << which << " (" << loss_name(loss) << "): max rel err " << err
            << ", tolerance " << used_tol << "\n";
  return err < used_tol ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  const char* threads = std::getenv("DIVA_THREADS");
  if (threads != nullptr) {
    const int cap = std::atoi(threads);
    if (cap > 0) Eigen::setNbThreads(cap);
  }

  CLI::App app{"dataset derivatives for weighted ridge models"};
  app.require_subcommand(1);

  CommonOpts opts;

  auto* fit = app.add_subcommand("fit", "fit a weighted ridge model and report losses");
  std::string test_features, test_labels, pred_out;
  add_common(fit, opts);
  fit->add_option("--test-features", test_features, "optional test feature matrix");
  fit->add_option("--test-labels", test_labels, "optional test labels");
  fit->add_option("--pred-out", pred_out, "write training predictions to this matrix file");

  auto* reweight_cmd = app.add_subcommand("reweight", "gradient-descend the sample weights");
  int steps = 4;
  double lr = 0.15;
  add_common(reweight_cmd, opts);
  reweight_cmd->add_option("--steps", steps, "number of weight updates (default 4)");
  reweight_cmd->add_option("--lr", lr, "step size (default 0.15)");

  auto* extend_cmd = app.add_subcommand("extend", "greedily admit pool samples by gradient");
  std::string pool_features, pool_labels;
  Index batch = 1, max_rounds = 0;
  add_common(extend_cmd, opts);
  extend_cmd->add_option("--pool-features", pool_features, "pool feature matrix")->required();
  extend_cmd->add_option("--pool-labels", pool_labels, "pool labels")->required();
  extend_cmd->add_option("--batch", batch, "samples admitted per round (default 1)");
  extend_cmd->add_option("--max-rounds", max_rounds,
                         "round cap (default: pool size / batch, rounded up)");

  auto* detect_cmd = app.add_subcommand("detect", "list samples whose gradient exceeds epsilon");
  double epsilon = 0.0;
  add_common(detect_cmd, opts);
  detect_cmd->add_option("--epsilon", epsilon, "detrimental threshold (default 0)");

  auto* loo_cmd = app.add_subcommand("loo", "closed-form leave-one-out report");
  std::string loo_pred_out;
  add_common(loo_cmd, opts);
  loo_cmd->add_option("--pred-out", loo_pred_out, "write LOO predictions to this matrix file");

  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "closed-form gradients vs central finite differences");
  std::string which = "val";
  double fd_step = 1e-5, tol = 0.0;
  Index gc_n = 20, gc_m = 6, gc_k = 3, gc_q = 8;
  add_common(gradcheck_cmd, opts);
  gradcheck_cmd->add_option("--which", which, "val|loo|jacobian")
      ->check(CLI::IsMember({"val", "loo", "jacobian"}));
  gradcheck_cmd->add_option("--fd-step", fd_step, "finite difference step (default 1e-5)");
  gradcheck_cmd->add_option("--tol", tol, "override the pass tolerance");
  gradcheck_cmd->add_option("--n", gc_n, "synthetic instance rows");
  gradcheck_cmd->add_option("--m", gc_m, "synthetic feature dimension");
  gradcheck_cmd->add_option("--k", gc_k, "synthetic class count");
  gradcheck_cmd->add_option("--q", gc_q, "synthetic validation rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (fit->parsed()) return cmd_fit(opts, test_features, test_labels, pred_out);
    if (reweight_cmd->parsed()) return cmd_reweight(opts, steps, lr);
    if (extend_cmd->parsed())
      return cmd_extend(opts, pool_features, pool_labels, batch, max_rounds);
    if (detect_cmd->parsed()) return cmd_detect(opts, epsilon);
    if (loo_cmd->parsed()) return cmd_loo(opts, loo_pred_out);
    if (gradcheck_cmd->parsed())
      return cmd_gradcheck(opts, which, fd_step, tol, gc_n, gc_m, gc_k, gc_q);
  } catch (const std::exception& e) {
    std::cerr << "diva: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
