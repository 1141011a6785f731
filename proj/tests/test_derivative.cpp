#include "diva/derivative.hpp"

#include <vector>

#include "doctest.h"
#include "test_support.hpp"

using namespace diva;
using namespace diva::testing;

namespace {

// dW/dalpha_r by central differences on the fit itself
std::vector<Matrix> fd_jacobian(const Dataset& data, const Vector& alpha, double lambda,
                                double step) {
  std::vector<Matrix> slices;
  Vector probe = alpha;
  for (Index r = 0; r < data.n(); ++r) {
    probe[r] = alpha[r] + step;
    const Matrix up = fit_weighted_ridge(data, SampleWeights(probe), lambda).weights;
    probe[r] = alpha[r] - step;
    const Matrix down = fit_weighted_ridge(data, SampleWeights(probe), lambda).weights;
    probe[r] = alpha[r];
    slices.push_back((up - down) / (2.0 * step));
  }
  return slices;
}

// a dataset whose row `zero_row` has zero features and a zero label, so its
// training residual is exactly zero after any fit
Dataset with_zero_row(Rng& rng, Index n, Index m, Index k, Index zero_row) {
  Dataset data = random_dataset(rng, n, m, k);
  data.features.row(zero_row).setZero();
  data.labels.row(zero_row).setZero();
  data.onehot = false;
  return data;
}

}  // namespace

TEST_CASE("jacobian: identity instance has the quarter entry") {
  const Dataset data = identity_instance();
  const auto sol = fit_weighted_ridge(data, SampleWeights::ones(2), 1.0);
  const auto jac = model_dataset_jacobian(sol, data);
  REQUIRE(jac.size() == 2);
  CHECK(std::abs(jac[0](0, 0) - 0.25) < 1e-14);
  CHECK(std::abs(jac[0](0, 1)) < 1e-14);
  CHECK(std::abs(jac[0](1, 0)) < 1e-14);
  CHECK(std::abs(jac[0](1, 1)) < 1e-14);

  const auto fd = fd_jacobian(data, Vector::Ones(2), 1.0, 1e-6);
  CHECK(max_abs_diff(jac[0], fd[0]) < 1e-6);
  CHECK(max_abs_diff(jac[1], fd[1]) < 1e-6);
}

TEST_CASE("jacobian: zero-residual row has an all-zero slice") {
  Rng rng(101);
  const Dataset data = with_zero_row(rng, 10, 4, 2, 3);
  const auto sol = fit_weighted_ridge(data, SampleWeights::ones(10), 0.5);
  const auto jac = model_dataset_jacobian(sol, data);
  CHECK(jac[3].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("jacobian: matches finite differences on random instances") {
  Rng rng(102);
  const Dataset data = random_dataset(rng, 10, 4, 2);
  const Vector alpha = random_weights(rng, 10);
  const auto sol = fit_weighted_ridge(data, SampleWeights(alpha), 0.7);
  const auto jac = model_dataset_jacobian(sol, data);
  const auto fd = fd_jacobian(data, alpha, 0.7, 1e-6);
  for (Index r = 0; r < 10; ++r) {
    const double scale = std::max(fd[std::size_t(r)].cwiseAbs().maxCoeff(), 1e-12);
    CHECK(max_abs_diff(jac[std::size_t(r)], fd[std::size_t(r)]) / scale < 1e-5);
  }
}

TEST_CASE("jacobian: size guard") {
  Rng rng(103);
  const Dataset data = random_dataset(rng, 10, 4, 2);
  const auto sol = fit_weighted_ridge(data, SampleWeights::ones(10), 1.0);
  CHECK_THROWS_AS(model_dataset_jacobian(sol, data, 79), dimension_error);
  CHECK_NOTHROW(model_dataset_jacobian(sol, data, 80));
}

TEST_CASE("loss derivatives: spec rows") {
  // squared error at f = y
  Rng rng(104);
  const Matrix f = random_matrix(rng, 3, 2);
  CHECK(loss_derivative_matrix(LossKind::squared_error, f, f).cwiseAbs().maxCoeff() == 0.0);

  // cross entropy at the origin, k = 2
  Matrix pred = Matrix::Zero(1, 2);
  Matrix label(1, 2);
  label << 1.0, 0.0;
  const Matrix l = loss_derivative_matrix(LossKind::cross_entropy, pred, label);
  CHECK(std::abs(l(0, 0) + 0.5) < 1e-14);
  CHECK(std::abs(l(0, 1) - 0.5) < 1e-14);

  // misclassified-only: a correct row is zero no matter the margin
  Matrix confident(1, 2);
  confident << 5.0, 4.999;
  CHECK(loss_derivative_matrix(LossKind::misclassified_only_cross_entropy, confident, label)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  Matrix wrong(1, 2);
  wrong << 4.999, 5.0;
  CHECK(loss_derivative_matrix(LossKind::misclassified_only_cross_entropy, wrong, label)
            .cwiseAbs()
            .maxCoeff() > 0.0);
}

TEST_CASE("loss derivatives: non-finite prediction is rejected") {
  Matrix pred = Matrix::Zero(1, 2);
  pred(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(loss_derivative_matrix(LossKind::squared_error, pred, Matrix::Zero(1, 2)),
                  numeric_error);
}

TEST_CASE("val gradient: zero loss derivative means zero gradient") {
  Rng rng(105);
  const Dataset train = random_dataset(rng, 12, 5, 3);
  const SampleWeights ones = SampleWeights::ones(12);
  const auto sol = fit_weighted_ridge(train, ones, 0.5);

  Dataset val;
  val.features = random_matrix(rng, 6, 5);
  val.labels = predict(sol, val.features);  // perfect predictions
  val.onehot = false;

  const auto grad = val_loss_gradient(sol, train, ones, val, LossKind::squared_error);
  CHECK(grad.values.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grad.loss_value == 0.0);
}

TEST_CASE("val gradient: zero training residual kills that coordinate") {
  Rng rng(106);
  const Dataset train = with_zero_row(rng, 10, 4, 2, 5);
  const SampleWeights ones = SampleWeights::ones(10);
  const auto sol = fit_weighted_ridge(train, ones, 0.5);

  Dataset val;
  val.features = train.features.row(5);
  val.labels = train.labels.row(5);
  val.onehot = false;
  const auto grad = val_loss_gradient(sol, train, ones, val, LossKind::squared_error);
  CHECK(grad.values[5] == 0.0);
}

TEST_CASE("val gradient: snapshot mismatch is rejected") {
  Rng rng(107);
  const Dataset train = random_dataset(rng, 8, 3, 2);
  const auto sol = fit_weighted_ridge(train, SampleWeights::ones(8), 1.0);
  Vector other = Vector::Ones(8);
  other[0] = 2.0;
  CHECK_THROWS_AS(
      val_loss_gradient(sol, train, SampleWeights(other), train, LossKind::squared_error),
      dimension_error);
}

TEST_CASE("val gradient: matches finite differences for every loss kind") {
  Rng rng(108);
  const struct {
    LossKind kind;
    double tol;
  } cases[] = {
      {LossKind::squared_error, 1e-4},
      {LossKind::cross_entropy, 1e-3},
      {LossKind::misclassified_only_cross_entropy, 1e-3},
  };
  for (const auto& c : cases) {
    const Dataset train = random_dataset(rng, 30, 8, 3);
    const Dataset val = random_dataset(rng, 10, 8, 3);
    const Vector alpha = random_weights(rng, 30, 0.2, 1.8);
    const auto sol = fit_weighted_ridge(train, SampleWeights(alpha), 0.5);
    const auto closed = val_loss_gradient(sol, train, SampleWeights(alpha), val, c.kind);
    const auto fd =
        finite_difference_gradient(train, SampleWeights(alpha), 0.5, val, c.kind, 1e-5);
    CHECK(gradient_rel_err(closed.values, fd.values) < c.tol);
  }
}

TEST_CASE("val gradient: jacobian contraction agrees entrywise") {
  Rng rng(109);
  const Dataset train = random_dataset(rng, 12, 5, 2);
  const Dataset val = random_dataset(rng, 7, 5, 2);
  const Vector alpha = random_weights(rng, 12);
  const auto sol = fit_weighted_ridge(train, SampleWeights(alpha), 0.6);
  const auto grad = val_loss_gradient(sol, train, SampleWeights(alpha), val, LossKind::cross_entropy);

  const Matrix l =
      loss_derivative_matrix(LossKind::cross_entropy, predict(sol, val.features), val.labels);
  const Matrix dloss_dw = val.features.transpose() * l;  // m x k
  const auto jac = model_dataset_jacobian(sol, train);
  for (Index r = 0; r < train.n(); ++r) {
    const double contracted = (jac[std::size_t(r)].cwiseProduct(dloss_dw)).sum();
    CHECK(std::abs(contracted - grad.values[r]) < 1e-8);
  }
}

TEST_CASE("val gradient: sign semantics of a small weight bump") {
  Rng rng(110);
  const Dataset train = random_dataset(rng, 20, 6, 2);
  const Dataset val = random_dataset(rng, 8, 6, 2);
  const SampleWeights ones = SampleWeights::ones(20);
  const auto sol = fit_weighted_ridge(train, ones, 0.5);
  const auto grad = val_loss_gradient(sol, train, ones, val, LossKind::squared_error);

  Index pick = 0;
  grad.values.cwiseAbs().maxCoeff(&pick);
  const double eps = 1e-4;
  Vector bumped = ones.alpha;
  bumped[pick] += eps;
  const double before = grad.loss_value;
  const double after = loss_value(
      LossKind::squared_error,
      predict(fit_weighted_ridge(train, SampleWeights(bumped), 0.5), val.features), val.labels);
  const double predicted_change = eps * grad.values[pick];
  CHECK(std::abs((after - before) - predicted_change) / std::abs(predicted_change) < 1e-2);
}

TEST_CASE("finite differences: n = 1 instance works") {
  Dataset train;
  train.features = Matrix::Ones(1, 1);
  train.labels = Matrix::Ones(1, 1);
  const auto fd = finite_difference_gradient(train, SampleWeights::ones(1), 1.0, train,
                                             LossKind::squared_error, 1e-5);
  REQUIRE(fd.values.size() == 1);
  CHECK(std::isfinite(fd.values[0]));
}

TEST_CASE("finite differences: step halving is stable on a smooth instance") {
  Rng rng(111);
  const Dataset train = random_dataset(rng, 10, 4, 2);
  const Dataset val = random_dataset(rng, 5, 4, 2);
  const SampleWeights ones = SampleWeights::ones(10);
  const auto coarse =
      finite_difference_gradient(train, ones, 1.0, val, LossKind::squared_error, 1e-4);
  const auto fine =
      finite_difference_gradient(train, ones, 1.0, val, LossKind::squared_error, 1e-5);
  CHECK((coarse.values - fine.values).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("finite differences: zero weights are probed one-sided") {
  Rng rng(112);
  const Dataset train = random_dataset(rng, 6, 3, 2);
  Vector alpha = Vector::Ones(6);
  alpha[2] = 0.0;
  alpha[4] = 0.0;
  std::vector<Index> one_sided;
  finite_difference_gradient(train, SampleWeights(alpha), 1.0, train, LossKind::squared_error,
                             1e-5, &one_sided);
  CHECK(one_sided == std::vector<Index>{2, 4});
}
