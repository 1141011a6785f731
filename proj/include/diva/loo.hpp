#ifndef DIVA_LOO_HPP
#define DIVA_LOO_HPP

#include <optional>
#include <string>
#include <vector>

#include "diva/derivative.hpp"
#include "diva/linear_model.hpp"
#include "diva/loss.hpp"
#include "diva/types.hpp"

namespace diva {

// Leave-one-out predictions, per-sample losses and (optionally) the
// gradient of the total LOO loss with respect to alpha.
struct LooReport {
  Matrix predictions;      // n x k, row i is f_{w^-i}(z_i)
  Vector per_sample_loss;  // n
  double total_loss = 0.0;
  std::optional<DatasetGradient> gradient;
};

namespace detail {

inline void check_loo_denominator(const Vector& d) {
  for (Index i = 0; i < d.size(); ++i)
    if (d[i] <= 1e-12)
      throw numeric_error("loo: 1 - alpha_i h_i <= 1e-12 at sample " + std::to_string(i) +
                          " (lambda too small for this data)");
}

}  // namespace detail

// Closed-form LOO predictions of the unit-weight ridge fit,
//   f_i = (z_i W - h_i y_i) / (1 - h_i),
// the quotient form of the hat-matrix identity f = (R Y - diag(R) Y) / (1 - diag(R)).
inline Matrix loo_predictions_unweighted(const Dataset& data, double lambda) {
  require(data.n() >= 2, "loo: need at least two samples");
  const SampleWeights ones = SampleWeights::ones(data.n());
  const RidgeSolution fit = fit_weighted_ridge(data, ones, lambda);
  const Vector h = hat_diagonal(fit, data);
  const Vector d = Vector::Ones(data.n()) - h;
  detail::check_loo_denominator(d);
  const Matrix full = predict(fit, data.features);
  Matrix out(data.n(), data.k());
  for (Index i = 0; i < data.n(); ++i)
    out.row(i) = (full.row(i) - h[i] * data.labels.row(i)) / d[i];
  return out;
}

// Alpha-weighted LOO predictions evaluated at the unweighted sample,
//   f_i = (z_i W_a - alpha_i h_i y_i) / (1 - alpha_i h_i).
// Finite at alpha_i = 0, where it reduces to the full-fit prediction
// (the sample is already excluded from the fit).
inline Matrix loo_predictions_weighted(const Dataset& data, const SampleWeights& weights,
                                       double lambda) {
  require(data.n() >= 2, "loo: need at least two samples");
  const RidgeSolution fit = fit_weighted_ridge(data, weights, lambda);
  const Vector h = hat_diagonal(fit, data);
  const Vector d = Vector::Ones(data.n()) - weights.alpha.cwiseProduct(h);
  detail::check_loo_denominator(d);
  const Matrix full = predict(fit, data.features);
  Matrix out(data.n(), data.k());
  for (Index i = 0; i < data.n(); ++i)
    out.row(i) = (full.row(i) - weights.alpha[i] * h[i] * data.labels.row(i)) / d[i];
  return out;
}

// L_loo(alpha) = sum_i l(f_{w_a^-i}(z_i), y_i); each term is unweighted.
inline LooReport loo_loss(const Dataset& data, const SampleWeights& weights, double lambda,
                          LossKind loss) {
  LooReport report;
  report.predictions = loo_predictions_weighted(data, weights, lambda);
  report.per_sample_loss.resize(data.n());
  for (Index i = 0; i < data.n(); ++i)
    report.per_sample_loss[i] = loss_row_value(loss, report.predictions.row(i),
                                               data.labels.row(i));
  report.total_loss = report.per_sample_loss.sum();
  return report;
}

// Exact gradient of loo_loss with respect to alpha.
//
// Chains dl/df through the quotient form above using, per the rank-one
// update of C_a,
//   d(z_i W_a)/da_r = G_ir (y_r - z_r W_a)      and
//   d h_i / da_r    = -G_ir^2,
// with G = Z C_a Z'. The i = r terms cancel exactly (the LOO prediction
// of a sample does not depend on its own weight), so no diagonal masking
// is needed.
//
// `loss_rows`, when non-empty, restricts the summed loss to a subset of
// samples; the excluded rows still train but their labels carry no
// validation signal (used by Extend, whose pool labels are untrusted).
inline DatasetGradient loo_loss_gradient(const Dataset& data, const SampleWeights& weights,
                                         double lambda, LossKind loss,
                                         const std::vector<bool>& loss_rows = {}) {
  require(data.n() >= 2, "loo: need at least two samples");
  require(loss_rows.empty() || Index(loss_rows.size()) == data.n(),
          "loo: loss-row mask length mismatch");
  const RidgeSolution fit = fit_weighted_ridge(data, weights, lambda);
  const Vector h = hat_diagonal(fit, data);
  const Vector d = Vector::Ones(data.n()) - weights.alpha.cwiseProduct(h);
  detail::check_loo_denominator(d);

  const Matrix full = predict(fit, data.features);
  Matrix loo_pred(data.n(), data.k());
  for (Index i = 0; i < data.n(); ++i)
    loo_pred.row(i) = (full.row(i) - weights.alpha[i] * h[i] * data.labels.row(i)) / d[i];

  const Matrix g = influence_crossterm(fit, data, data.features);  // n x n
  const Matrix residual = data.labels - full;
  Matrix dloss = loss_derivative_matrix(loss, loo_pred, data.labels);
  if (!loss_rows.empty())
    for (Index i = 0; i < data.n(); ++i)
      if (!loss_rows[std::size_t(i)]) dloss.row(i).setZero();

  // t_i = dl/df(i)/d_i ; s_i = dl/df(i).(f_i - y_i)/d_i
  const Matrix t = d.cwiseInverse().asDiagonal() * dloss;
  const Vector s = (dloss.cwiseProduct(loo_pred - data.labels)).rowwise().sum().cwiseQuotient(d);

  DatasetGradient out;
  out.values = ((g * t).cwiseProduct(residual)).rowwise().sum() + h.cwiseProduct(s) -
               g.cwiseProduct(g) * weights.alpha.cwiseProduct(s);
  out.loss_value = 0.0;
  for (Index i = 0; i < data.n(); ++i)
    if (loss_rows.empty() || loss_rows[std::size_t(i)])
      out.loss_value += loss_row_value(loss, loo_pred.row(i), data.labels.row(i));
  return out;
}

// Retraining oracle: n refits with alpha_i zeroed one at a time.
inline Matrix brute_force_loo(const Dataset& data, const SampleWeights& weights, double lambda) {
  require(data.n() >= 2, "loo: need at least two samples");
  weights.validate(data.n());
  Matrix out(data.n(), data.k());
  Vector alpha = weights.alpha;
  for (Index i = 0; i < data.n(); ++i) {
    const double keep = alpha[i];
    alpha[i] = 0.0;
    const RidgeSolution fit = fit_weighted_ridge(data, SampleWeights(alpha), lambda);
    out.row(i) = data.features.row(i) * fit.weights;
    alpha[i] = keep;
  }
  return out;
}

// Numerical oracle for loo_loss_gradient.
inline DatasetGradient finite_difference_loo_gradient(const Dataset& data,
                                                      const SampleWeights& weights, double lambda,
                                                      LossKind loss, double step,
                                                      std::vector<Index>* one_sided = nullptr) {
  auto loss_at = [&](const Vector& a) {
    return loo_loss(data, SampleWeights(a), lambda, loss).total_loss;
  };
  DatasetGradient out;
  out.values = central_difference(weights.alpha, step, loss_at, one_sided);
  out.loss_value = loss_at(weights.alpha);
  return out;
}

}  // namespace diva

#endif
