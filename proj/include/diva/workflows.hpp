#ifndef DIVA_WORKFLOWS_HPP
#define DIVA_WORKFLOWS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "diva/derivative.hpp"
#include "diva/linear_model.hpp"
#include "diva/loo.hpp"
#include "diva/loss.hpp"
#include "diva/types.hpp"

namespace diva {

enum class ValidationMode { loo, held_out };

inline const char* mode_name(ValidationMode mode) {
  return mode == ValidationMode::loo ? "loo" : "held_out";
}

// Projected gradient descent on alpha: few steps, large step size.
struct ReweightConfig {
  int steps = 4;
  double learning_rate = 0.15;
  LossKind loss = LossKind::misclassified_only_cross_entropy;
  bool clamp_nonnegative = true;
  ValidationMode validation_mode = ValidationMode::loo;

  static ReweightConfig defaults_for(ValidationMode mode) {
    ReweightConfig c;
    c.validation_mode = mode;
    c.loss = mode == ValidationMode::loo ? LossKind::misclassified_only_cross_entropy
                                         : LossKind::cross_entropy;
    return c;
  }

  void validate() const {
    require(steps >= 1, "reweight: steps must be >= 1");
    require(learning_rate >= 0.0 && std::isfinite(learning_rate),
            "reweight: learning rate must be finite and non-negative");
  }
};

// Greedy pool selection: per round, flip the batch_size pool samples with
// the most negative gradient coordinates to alpha = 1.
struct ExtendConfig {
  Index batch_size = 1;
  Index max_rounds = 0;  // 0 = ceil(pool size / batch_size)
  LossKind loss = LossKind::misclassified_only_cross_entropy;
  ValidationMode validation_mode = ValidationMode::loo;

  void validate() const {
    require(batch_size >= 1, "extend: batch_size must be >= 1");
    require(max_rounds >= 0, "extend: max_rounds must be >= 0");
  }
};

struct CurationReport {
  SampleWeights final_weights;
  std::vector<Index> selected_indices;                  // Extend: pool indices, selection order
  std::vector<std::pair<Index, double>> detrimental;    // (index, gradient score)
  std::vector<std::pair<int, double>> loss_trajectory;  // (step, loss)
  std::map<std::string, double> metrics;
  Vector scores;  // full gradient vector (detect), for downstream thresholding
};

namespace detail {

inline DatasetGradient curation_gradient(const Dataset& data, const SampleWeights& alpha,
                                         double lambda, LossKind loss, ValidationMode mode,
                                         const Dataset* held_out) {
  if (mode == ValidationMode::loo) return loo_loss_gradient(data, alpha, lambda, loss);
  require(held_out != nullptr, "held-out mode needs a validation dataset");
  const RidgeSolution fit = fit_weighted_ridge(data, alpha, lambda);
  return val_loss_gradient(fit, data, alpha, *held_out, loss);
}

inline double curation_loss(const Dataset& data, const SampleWeights& alpha, double lambda,
                            LossKind loss, ValidationMode mode, const Dataset* held_out) {
  if (mode == ValidationMode::loo) return loo_loss(data, alpha, lambda, loss).total_loss;
  require(held_out != nullptr, "held-out mode needs a validation dataset");
  const RidgeSolution fit = fit_weighted_ridge(data, alpha, lambda);
  return loss_value(loss, predict(fit, held_out->features), held_out->labels);
}

inline Dataset concat(const Dataset& a, const Dataset& b) {
  require(a.m() == b.m(), "concat: feature dimension mismatch");
  require(a.k() == b.k(), "concat: class count mismatch");
  Dataset out;
  out.features.resize(a.n() + b.n(), a.m());
  out.features << a.features, b.features;
  out.labels.resize(a.n() + b.n(), a.k());
  out.labels << a.labels, b.labels;
  out.onehot = a.onehot && b.onehot;
  out.class_names = a.class_names;
  return out;
}

}  // namespace detail

// alpha <- max(0, alpha - eta * grad), `steps` times from alpha = 1.
// Trajectory entry s is the loss after s updates (entry 0 is the
// initial loss), so it always holds steps + 1 points.
inline CurationReport reweight(const Dataset& data, double lambda, const ReweightConfig& config,
                               const Dataset* held_out = nullptr) {
  config.validate();
  data.validate();
  if (config.validation_mode == ValidationMode::held_out)
    require(held_out != nullptr, "reweight: held-out mode needs a validation dataset");

  CurationReport report;
  SampleWeights alpha = SampleWeights::ones(data.n());
  DatasetGradient grad = detail::curation_gradient(data, alpha, lambda, config.loss,
                                                   config.validation_mode, held_out);
  report.loss_trajectory.emplace_back(0, grad.loss_value);

  for (int step = 1; step <= config.steps; ++step) {
    alpha.alpha -= config.learning_rate * grad.values;
    if (config.clamp_nonnegative) alpha.alpha = alpha.alpha.cwiseMax(0.0);
    if (step < config.steps) {
      grad = detail::curation_gradient(data, alpha, lambda, config.loss, config.validation_mode,
                                       held_out);
      report.loss_trajectory.emplace_back(step, grad.loss_value);
    } else {
      report.loss_trajectory.emplace_back(
          step, detail::curation_loss(data, alpha, lambda, config.loss, config.validation_mode,
                                      held_out));
    }
  }

  report.final_weights = std::move(alpha);
  report.metrics["initial_loss"] = report.loss_trajectory.front().second;
  report.metrics["final_loss"] = report.loss_trajectory.back().second;
  return report;
}

// Merge core + pool, start pool at alpha = 0, and greedily admit the pool
// samples whose gradient coordinates are most negative. Stops when every
// unselected pool coordinate has non-negative gradient, when the pool is
// exhausted, or after max_rounds.
inline CurationReport extend(const Dataset& core, const Dataset& pool, double lambda,
                             const ExtendConfig& config, const Dataset* held_out = nullptr) {
  config.validate();
  core.validate();
  pool.validate();
  require(pool.n() >= 1, "extend: empty pool");
  if (config.validation_mode == ValidationMode::held_out)
    require(held_out != nullptr, "extend: held-out mode needs a validation dataset");

  const Dataset merged = detail::concat(core, pool);
  const Index nc = core.n();
  const Index np = pool.n();
  const Index rounds_cap =
      config.max_rounds > 0 ? config.max_rounds : (np + config.batch_size - 1) / config.batch_size;

  CurationReport report;
  SampleWeights alpha(Vector::Zero(nc + np));
  alpha.alpha.head(nc).setOnes();
  std::vector<bool> taken(std::size_t(np), false);

  // In LOO mode only the core rows act as validation points; pool labels
  // are untrusted and must not steer the selection toward themselves.
  std::vector<bool> core_rows(std::size_t(nc + np), false);
  for (Index i = 0; i < nc; ++i) core_rows[std::size_t(i)] = true;

  for (Index round = 0; round < rounds_cap; ++round) {
    if (std::size_t(report.selected_indices.size()) == std::size_t(np)) break;
    const DatasetGradient grad =
        config.validation_mode == ValidationMode::loo
            ? loo_loss_gradient(merged, alpha, lambda, config.loss, core_rows)
            : detail::curation_gradient(merged, alpha, lambda, config.loss,
                                        config.validation_mode, held_out);
    report.loss_trajectory.emplace_back(int(round), grad.loss_value);

    // candidates: unselected pool coordinates with strictly negative gradient
    std::vector<std::pair<double, Index>> order;
    for (Index j = 0; j < np; ++j)
      if (!taken[std::size_t(j)] && grad.values[nc + j] < 0.0)
        order.emplace_back(grad.values[nc + j], j);
    if (order.empty()) break;
    std::sort(order.begin(), order.end());  // gradient ascending, then pool index

    const Index take = std::min<Index>(config.batch_size, Index(order.size()));
    for (Index b = 0; b < take; ++b) {
      const Index j = order[std::size_t(b)].second;
      alpha.alpha[nc + j] = 1.0;
      taken[std::size_t(j)] = true;
      report.selected_indices.push_back(j);
    }
  }

  report.final_weights = std::move(alpha);
  report.metrics["selected_count"] = double(report.selected_indices.size());
  return report;
}

// Detrimental(eps) = { i : gradient_i >= eps } at alpha = 1, most
// detrimental first. The full gradient is kept in `scores`.
inline CurationReport detect_detrimental(const Dataset& data, double lambda, LossKind loss,
                                         double epsilon, ValidationMode mode,
                                         const Dataset* held_out = nullptr) {
  data.validate();
  if (mode == ValidationMode::held_out)
    require(held_out != nullptr, "detect: held-out mode needs a validation dataset");

  const SampleWeights ones = SampleWeights::ones(data.n());
  const DatasetGradient grad = detail::curation_gradient(data, ones, lambda, loss, mode, held_out);

  CurationReport report;
  report.final_weights = ones;
  report.scores = grad.values;
  report.loss_trajectory.emplace_back(0, grad.loss_value);
  for (Index i = 0; i < data.n(); ++i)
    if (grad.values[i] >= epsilon) report.detrimental.emplace_back(i, grad.values[i]);
  std::sort(report.detrimental.begin(), report.detrimental.end(),
            [](const auto& a, const auto& b) {
              return a.second != b.second ? a.second > b.second : a.first < b.first;
            });
  report.metrics["detrimental_count"] = double(report.detrimental.size());
  return report;
}

// Reweight the concatenation of tagged groups, then report each group's
// share of the final weight mass: p_g = sum_{i in g} alpha_i / sum alpha_i.
inline std::map<std::string, double> augmentation_weights(
    const std::vector<std::pair<std::string, Dataset>>& groups, double lambda,
    const ReweightConfig& config) {
  require(groups.size() >= 2, "augmentation: need at least two groups");
  require(config.validation_mode == ValidationMode::loo,
          "augmentation: only LOO validation is supported");

  Dataset merged = groups.front().second;
  for (std::size_t g = 1; g < groups.size(); ++g)
    merged = detail::concat(merged, groups[g].second);

  const CurationReport report = reweight(merged, lambda, config);
  const double total = report.final_weights.alpha.sum();
  if (total <= 0.0)
    throw numeric_error("augmentation: total weight <= 0 after clamping (step size too large)");

  std::map<std::string, double> probs;
  Index offset = 0;
  for (const auto& [tag, dataset] : groups) {
    probs[tag] = report.final_weights.alpha.segment(offset, dataset.n()).sum() / total;
    offset += dataset.n();
  }
  return probs;
}

inline std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int n = -20; n <= 4; ++n) grid.push_back(std::ldexp(1.0, n));
  return grid;
}

// Unweighted LOO loss for each lambda; ties go to the smaller lambda.
inline std::pair<double, std::vector<std::pair<double, double>>> lambda_grid_search(
    const Dataset& data, const std::vector<double>& grid, LossKind loss) {
  require(!grid.empty(), "grid search: empty grid");
  const SampleWeights ones = SampleWeights::ones(data.n());
  std::vector<std::pair<double, double>> table;
  table.reserve(grid.size());
  double best_lambda = grid.front();
  double best_loss = std::numeric_limits<double>::infinity();
  for (const double lambda : grid) {
    const double total = loo_loss(data, ones, lambda, loss).total_loss;
    table.emplace_back(lambda, total);
    if (total < best_loss || (total == best_loss && lambda < best_lambda)) {
      best_loss = total;
      best_lambda = lambda;
    }
  }
  return {best_lambda, table};
}

inline double error_rate(const Matrix& predictions, const Matrix& labels) {
  require(predictions.rows() == labels.rows() && predictions.rows() >= 1,
          "error_rate: empty or mismatched inputs");
  Index wrong = 0;
  for (Index i = 0; i < predictions.rows(); ++i) {
    Index pred = 0, truth = 0;
    predictions.row(i).maxCoeff(&pred);
    labels.row(i).maxCoeff(&truth);
    if (pred != truth) ++wrong;
  }
  return double(wrong) / double(predictions.rows());
}

// Top-1 test error of a fitted model.
inline std::map<std::string, double> evaluate(const RidgeSolution& model, const Dataset& test) {
  require(test.n() >= 1, "evaluate: empty test set");
  return {{"error_rate", error_rate(predict(model, test.features), test.labels)}};
}

// F1 at threshold zero plus trapezoidal ROC AUC over all score thresholds,
// for a binary detection task where higher scores mean "positive".
inline std::map<std::string, double> detection_metrics(const Vector& scores,
                                                       const std::vector<bool>& positive) {
  require(std::size_t(scores.size()) == positive.size() && scores.size() >= 1,
          "detection: score/label size mismatch");
  Index total_pos = 0;
  for (const bool p : positive) total_pos += p ? 1 : 0;
  const Index total_neg = scores.size() - total_pos;
  require(total_pos > 0 && total_neg > 0, "detection: need both classes present");

  // F1 with predicted positive = score >= 0
  Index tp = 0, fp = 0, fn = 0;
  for (Index i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= 0.0;
    if (pred && positive[std::size_t(i)]) ++tp;
    if (pred && !positive[std::size_t(i)]) ++fp;
    if (!pred && positive[std::size_t(i)]) ++fn;
  }
  const double f1 = (2 * tp + fp + fn) == 0 ? 0.0 : 2.0 * tp / double(2 * tp + fp + fn);

  // ROC sweep from "detect none" to "detect all"; equal scores move together.
  std::vector<Index> idx(std::size_t(scores.size()));
  for (Index i = 0; i < scores.size(); ++i) idx[std::size_t(i)] = i;
  std::sort(idx.begin(), idx.end(),
            [&](Index a, Index b) { return scores[a] > scores[b]; });
  double auc = 0.0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  Index cum_tp = 0, cum_fp = 0;
  std::size_t at = 0;
  while (at < idx.size()) {
    const double s = scores[idx[at]];
    while (at < idx.size() && scores[idx[at]] == s) {
      if (positive[std::size_t(idx[at])])
        ++cum_tp;
      else
        ++cum_fp;
      ++at;
    }
    const double fpr = double(cum_fp) / double(total_neg);
    const double tpr = double(cum_tp) / double(total_pos);
    auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  return {{"f1_at_zero", f1}, {"auc", auc}};
}

}  // namespace diva

#endif
