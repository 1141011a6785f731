#include "diva/loo.hpp"

#include "doctest.h"
#include "test_support.hpp"

using namespace diva;
using namespace diva::testing;

namespace {

// two gaussian blobs, labels one-hot over 2 classes, optionally one planted
// flipped-label point
Dataset two_blobs(Rng& rng, Index per_class, Index m, double separation) {
  Dataset data;
  const Index n = 2 * per_class;
  data.features.resize(n, m);
  data.labels = Matrix::Zero(n, 2);
  for (Index i = 0; i < n; ++i) {
    const Index c = i < per_class ? 0 : 1;
    for (Index j = 0; j < m; ++j) data.features(i, j) = rng.normal();
    data.features(i, c) += separation;
    data.labels(i, c) = 1.0;
  }
  return data;
}

}  // namespace

TEST_CASE("loo unweighted: identity instance predicts zero") {
  const Dataset data = identity_instance();
  const Matrix f = loo_predictions_unweighted(data, 1.0);
  CHECK(f.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("loo unweighted: requires two samples") {
  Dataset tiny;
  tiny.features = Matrix::Ones(1, 2);
  tiny.labels = Matrix::Ones(1, 1);
  CHECK_THROWS_AS(loo_predictions_unweighted(tiny, 1.0), dimension_error);
}

TEST_CASE("loo unweighted: duplicated sample converges to the full-fit prediction") {
  Rng rng(201);
  const Dataset base = random_dataset(rng, 12, 4, 2);
  auto with_copies = [&](Index copies) {
    Dataset out;
    out.features.resize(base.n() + copies - 1, base.m());
    out.labels.resize(base.n() + copies - 1, base.k());
    out.features.topRows(base.n()) = base.features;
    out.labels.topRows(base.n()) = base.labels;
    for (Index c = 0; c < copies - 1; ++c) {
      out.features.row(base.n() + c) = base.features.row(0);
      out.labels.row(base.n() + c) = base.labels.row(0);
    }
    return out;
  };
  auto gap = [&](Index copies) {
    const Dataset data = with_copies(copies);
    const Matrix loo = loo_predictions_unweighted(data, 0.5);
    const auto fit = fit_weighted_ridge(data, SampleWeights::ones(data.n()), 0.5);
    return (loo.row(0) - predict(fit, data.features.row(0))).cwiseAbs().maxCoeff();
  };
  CHECK(gap(10) < gap(2));
  CHECK(gap(40) < gap(10));

  // and the 10-copy instance still matches the retraining oracle
  const Dataset data = with_copies(10);
  CHECK(max_abs_diff(loo_predictions_unweighted(data, 0.5),
                     brute_force_loo(data, SampleWeights::ones(data.n()), 0.5)) < 1e-9);
}

TEST_CASE("loo unweighted: matches per-sample retraining") {
  Rng rng(202);
  const Dataset data = random_dataset(rng, 25, 6, 3);
  CHECK(max_abs_diff(loo_predictions_unweighted(data, 0.7),
                     brute_force_loo(data, SampleWeights::ones(25), 0.7)) < 1e-9);
}

TEST_CASE("loo weighted: all-ones weights reduce to the unweighted form") {
  Rng rng(203);
  const Dataset data = random_dataset(rng, 15, 5, 2);
  CHECK(max_abs_diff(loo_predictions_weighted(data, SampleWeights::ones(15), 0.4),
                     loo_predictions_unweighted(data, 0.4)) < 1e-12);
}

TEST_CASE("loo weighted: a zero-weight sample sees the full fit exactly") {
  Rng rng(204);
  const Dataset data = random_dataset(rng, 12, 4, 2);
  Vector alpha = random_weights(rng, 12);
  alpha[5] = 0.0;
  const Matrix loo = loo_predictions_weighted(data, SampleWeights(alpha), 0.6);
  const auto fit = fit_weighted_ridge(data, SampleWeights(alpha), 0.6);
  const Matrix full = predict(fit, data.features);
  CHECK(loo(5, 0) == full(5, 0));
  CHECK(loo(5, 1) == full(5, 1));
}

TEST_CASE("loo weighted: matches per-sample retraining") {
  Rng rng(205);
  const Dataset data = random_dataset(rng, 20, 5, 3);
  const Vector alpha = random_weights(rng, 20, 0.1, 2.0);
  CHECK(max_abs_diff(loo_predictions_weighted(data, SampleWeights(alpha), 0.3),
                     brute_force_loo(data, SampleWeights(alpha), 0.3)) < 1e-9);
}

TEST_CASE("loo weighted: closed form equals brute force across lambda and alpha regimes") {
  Rng rng(206);
  for (const double lambda : {1e-3, 1e-1, 1.0, 10.0}) {
    const Dataset data = random_dataset(rng, 15, 4, 2);
    Vector alpha = random_weights(rng, 15, 0.0, 3.0);
    alpha[0] = 0.0;
    alpha[7] = 0.0;
    CHECK(max_abs_diff(loo_predictions_weighted(data, SampleWeights(alpha), lambda),
                       brute_force_loo(data, SampleWeights(alpha), lambda)) < 1e-9);
  }
}

TEST_CASE("loo: printed hat-matrix form agrees on strictly positive weights") {
  Rng rng(207);
  const Dataset data = random_dataset(rng, 14, 5, 3);
  const Vector alpha = random_weights(rng, 14, 0.2, 2.5);
  const double lambda = 0.8;

  // R_a = sqrt(D) Z C_a Z' sqrt(D), then the printed quotient
  const Vector root = alpha.array().sqrt();
  const Matrix gram = data.features.transpose() * alpha.asDiagonal() * data.features +
                      lambda * Matrix::Identity(5, 5);
  const Matrix r_alpha = root.asDiagonal() * data.features * gram.inverse() *
                         data.features.transpose() * root.asDiagonal();
  const Matrix scaled_labels = root.asDiagonal() * data.labels;
  Matrix printed(14, 3);
  for (Index i = 0; i < 14; ++i) {
    const double denom = root[i] * (1.0 - r_alpha(i, i));
    printed.row(i) =
        (r_alpha.row(i) * scaled_labels - r_alpha(i, i) * scaled_labels.row(i)) / denom;
  }
  CHECK(max_abs_diff(printed, loo_predictions_weighted(data, SampleWeights(alpha), lambda)) <
        1e-9);
}

TEST_CASE("loo: weighting is dual to sqrt-scaling the data") {
  Rng rng(208);
  const Dataset data = random_dataset(rng, 16, 5, 2);
  const Vector alpha = random_weights(rng, 16, 0.3, 2.0);

  Dataset scaled;
  scaled.features = alpha.array().sqrt().matrix().asDiagonal() * data.features;
  scaled.labels = alpha.array().sqrt().matrix().asDiagonal() * data.labels;
  scaled.onehot = false;
  const Matrix scaled_loo = loo_predictions_unweighted(scaled, 0.5);
  Matrix rescaled(16, 2);
  for (Index i = 0; i < 16; ++i) rescaled.row(i) = scaled_loo.row(i) / std::sqrt(alpha[i]);
  CHECK(max_abs_diff(rescaled, loo_predictions_weighted(data, SampleWeights(alpha), 0.5)) <
        1e-9);
}

TEST_CASE("loo: prediction of a sample is independent of its own weight") {
  Rng rng(209);
  const Dataset data = random_dataset(rng, 12, 4, 2);
  const Vector alpha = random_weights(rng, 12, 0.2, 2.0);
  const Matrix before = loo_predictions_weighted(data, SampleWeights(alpha), 0.5);
  for (const Index i : {Index(0), Index(5), Index(11)}) {
    Vector bumped = alpha;
    bumped[i] += 1e-4;
    const Matrix after = loo_predictions_weighted(data, SampleWeights(bumped), 0.5);
    CHECK((after.row(i) - before.row(i)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("loo loss: totals add up and beat the training loss under squared error") {
  Rng rng(210);
  const Dataset data = random_dataset(rng, 18, 5, 2);
  const SampleWeights ones = SampleWeights::ones(18);
  const auto report = loo_loss(data, ones, 1e-3, LossKind::squared_error);
  CHECK(std::abs(report.total_loss - report.per_sample_loss.sum()) < 1e-12);
  CHECK(!report.gradient.has_value());

  const auto fit = fit_weighted_ridge(data, ones, 1e-3);
  const double train_loss =
      loss_value(LossKind::squared_error, predict(fit, data.features), data.labels);
  CHECK(report.total_loss > train_loss);
}

TEST_CASE("loo loss: zero when every LOO prediction is correct") {
  Rng rng(211);
  const Dataset data = two_blobs(rng, 20, 6, 8.0);
  const auto report = loo_loss(data, SampleWeights::ones(40), 1.0,
                               LossKind::misclassified_only_cross_entropy);
  CHECK(report.total_loss == 0.0);
}

TEST_CASE("loo loss: equals the loss of brute-force predictions") {
  Rng rng(212);
  const Dataset data = random_dataset(rng, 15, 4, 3);
  const Vector alpha = random_weights(rng, 15, 0.2, 1.5);
  const auto report = loo_loss(data, SampleWeights(alpha), 0.5, LossKind::cross_entropy);
  const Matrix brute = brute_force_loo(data, SampleWeights(alpha), 0.5);
  double expected = 0.0;
  for (Index i = 0; i < 15; ++i)
    expected += loss_row_value(LossKind::cross_entropy, brute.row(i), data.labels.row(i));
  CHECK(std::abs(report.total_loss - expected) < 1e-9);
}

TEST_CASE("loo gradient: symmetric instance has symmetric gradient") {
  const Dataset data = identity_instance();
  const auto grad =
      loo_loss_gradient(data, SampleWeights::ones(2), 1.0, LossKind::squared_error);
  CHECK(std::abs(grad.values[0] - grad.values[1]) < 1e-15);
}

TEST_CASE("loo gradient: a planted flipped label scores positive") {
  Rng rng(213);
  Dataset data = two_blobs(rng, 15, 6, 4.0);
  // flip the label of sample 3
  data.labels.row(3) << 0.0, 1.0;
  const SampleWeights ones = SampleWeights::ones(30);
  const auto grad = loo_loss_gradient(data, ones, 1.0, LossKind::squared_error);
  CHECK(grad.values[3] > 0.0);

  const auto fd =
      finite_difference_loo_gradient(data, ones, 1.0, LossKind::squared_error, 1e-5);
  CHECK(gradient_rel_err(grad.values, fd.values) < 1e-4);
}

TEST_CASE("loo gradient: matches finite differences for every loss kind") {
  Rng rng(214);
  const struct {
    LossKind kind;
    double tol;
  } cases[] = {
      {LossKind::squared_error, 1e-4},
      {LossKind::cross_entropy, 1e-3},
      {LossKind::misclassified_only_cross_entropy, 1e-3},
  };
  for (const auto& c : cases) {
    const Dataset data = random_dataset(rng, 25, 6, 3);
    const Vector alpha = random_weights(rng, 25, 0.3, 1.7);
    const auto closed = loo_loss_gradient(data, SampleWeights(alpha), 0.6, c.kind);
    const auto fd =
        finite_difference_loo_gradient(data, SampleWeights(alpha), 0.6, c.kind, 1e-5);
    CHECK(gradient_rel_err(closed.values, fd.values) < c.tol);
    CHECK(std::abs(closed.loss_value - fd.loss_value) < 1e-9);
  }
}

TEST_CASE("brute force loo: identity instance reproduces the hand value") {
  const Dataset data = identity_instance();
  const Matrix brute = brute_force_loo(data, SampleWeights::ones(2), 1.0);
  CHECK(brute.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("loo: degenerate leverage is reported") {
  // a sample that is the only support of its direction, lambda ~ 0:
  // alpha_1 h_1 = 1/(1 + lambda) and the LOO denominator collapses
  Dataset data;
  data.features.resize(2, 1);
  data.features << 1.0, 0.0;
  data.labels.resize(2, 1);
  data.labels << 1.0, 0.0;
  data.onehot = false;
  CHECK_THROWS_AS(loo_predictions_weighted(data, SampleWeights::ones(2), 1e-15), numeric_error);
}
