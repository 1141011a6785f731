#ifndef DIVA_DERIVATIVE_HPP
#define DIVA_DERIVATIVE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "diva/linear_model.hpp"
#include "diva/loss.hpp"
#include "diva/types.hpp"

namespace diva {

// Gradient of a scalar loss with respect to the sample weights alpha,
// together with the loss at the current alpha.
struct DatasetGradient {
  Vector values;
  double loss_value = 0.0;
};

// dW/dalpha_r for every r, as n slices of m x k. Each slice is the
// rank-one product (C_a z_r') (y_r - z_r W); diagnostic use, the
// end-to-end gradients below never materialize this.
inline std::vector<Matrix> model_dataset_jacobian(const RidgeSolution& model, const Dataset& data,
                                                  std::uint64_t max_entries = 10'000'000) {
  require(data.m() == model.m(), "jacobian: feature dimension mismatch");
  require(data.n() == model.alpha_snapshot.size(), "jacobian: model fitted on different data");
  const std::uint64_t entries = std::uint64_t(data.n()) * std::uint64_t(data.m()) *
                                std::uint64_t(data.k());
  require(entries <= max_entries,
          "jacobian: n*m*k = " + std::to_string(entries) + " exceeds cap");

  const Matrix cz = model.apply_c(data.features.transpose());        // m x n, col r = C_a z_r'
  const Matrix residual = data.labels - data.features * model.weights;  // n x k
  std::vector<Matrix> slices;
  slices.reserve(std::size_t(data.n()));
  for (Index r = 0; r < data.n(); ++r)
    slices.push_back(cz.col(r) * residual.row(r));
  return slices;
}

// End-to-end gradient of the validation loss with respect to alpha.
// With G = Z C_a Z_val' and L the per-row loss derivatives at the
// validation predictions, coordinate r is  (y_r - z_r W) . (G L)_r.
inline DatasetGradient val_loss_gradient(const RidgeSolution& model, const Dataset& train,
                                         const SampleWeights& train_weights, const Dataset& val,
                                         LossKind loss) {
  require(train.m() == model.m(), "val_grad: training feature dimension mismatch");
  require(val.m() == train.m(), "val_grad: validation feature dimension mismatch");
  require(val.k() == train.k(), "val_grad: validation class count mismatch");
  require(train_weights.size() == model.alpha_snapshot.size() &&
              (train_weights.alpha.array() == model.alpha_snapshot.array()).all(),
          "val_grad: weights do not match the model's fit-time snapshot");

  const Matrix val_pred = predict(model, val.features);
  const Matrix l = loss_derivative_matrix(loss, val_pred, val.labels);  // q x k
  const Matrix g = influence_crossterm(model, train, val.features);     // n x q
  const Matrix residual = train.labels - train.features * model.weights;

  DatasetGradient out;
  out.values = ((g * l).cwiseProduct(residual)).rowwise().sum();
  out.loss_value = loss_value(loss, val_pred, val.labels);
  return out;
}

// Central difference of a scalar function of alpha. Coordinates whose
// lower point would go negative are clamped to zero and evaluated
// one-sided; those rows are reported through `one_sided` when given.
template <typename LossFn>
Vector central_difference(const Vector& alpha, double step, LossFn&& loss_at,
                          std::vector<Index>* one_sided = nullptr) {
  require(step > 0.0, "central_difference: step must be positive");
  if (one_sided) one_sided->clear();
  Vector grad(alpha.size());
  Vector probe = alpha;
  for (Index i = 0; i < alpha.size(); ++i) {
    const double lo = alpha[i] - step < 0.0 ? 0.0 : alpha[i] - step;
    const double hi = alpha[i] + step;
    if (lo != alpha[i] - step && one_sided) one_sided->push_back(i);
    probe[i] = hi;
    const double up = loss_at(probe);
    probe[i] = lo;
    const double down = loss_at(probe);
    probe[i] = alpha[i];
    grad[i] = (up - down) / (hi - lo);
  }
  return grad;
}

// Numerical oracle for val_loss_gradient: n refits, one per coordinate.
inline DatasetGradient finite_difference_gradient(const Dataset& train,
                                                  const SampleWeights& train_weights,
                                                  double lambda, const Dataset& val,
                                                  LossKind loss, double step,
                                                  std::vector<Index>* one_sided = nullptr) {
  train.validate();
  train_weights.validate(train.n());
  auto loss_at = [&](const Vector& a) {
    const RidgeSolution fit = fit_weighted_ridge(train, SampleWeights(a), lambda);
    return loss_value(loss, predict(fit, val.features), val.labels);
  };
  DatasetGradient out;
  out.values = central_difference(train_weights.alpha, step, loss_at, one_sided);
  out.loss_value = loss_at(train_weights.alpha);
  return out;
}

// Relative disagreement of two gradient vectors, infinity-norm scaled.
inline double gradient_rel_err(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), "rel_err: length mismatch");
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-12});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace diva

#endif
