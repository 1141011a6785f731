#ifndef DIVA_LINEAR_MODEL_HPP
#define DIVA_LINEAR_MODEL_HPP

#include <Eigen/Cholesky>

#include <string>

#include "diva/types.hpp"

namespace diva {

// Weighted ridge solution W = (Z' D_a Z + lambda I)^-1 Z' D_a Y together
// with the Cholesky factor of C_a^-1 = Z' D_a Z + lambda I, which every
// derivative and LOO computation reuses.
struct RidgeSolution {
  Matrix weights;             // m x k
  double lambda = 0.0;
  Eigen::LLT<Matrix> c_factor;  // factor of the m x m matrix C_a^-1
  Vector alpha_snapshot;      // weights the model was fitted with

  Index m() const { return weights.rows(); }
  Index k() const { return weights.cols(); }

  // C_a * B via two triangular solves, never an explicit inverse.
  Matrix apply_c(const Matrix& b) const { return c_factor.solve(b); }
};

inline RidgeSolution fit_weighted_ridge(const Dataset& data, const SampleWeights& weights,
                                        double lambda) {
  data.validate();
  weights.validate(data.n());
  require(lambda > 0.0, "fit: lambda must be positive");

  const Index m = data.m();
  // Z' D_a Z as (sqrt(D_a) Z)' (sqrt(D_a) Z), lower triangle only.
  const Matrix scaled = weights.alpha.array().sqrt().matrix().asDiagonal() * data.features;
  Matrix gram = Matrix::Zero(m, m);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
  gram.diagonal().array() += lambda;

  RidgeSolution sol;
  sol.lambda = lambda;
  sol.alpha_snapshot = weights.alpha;
  sol.c_factor.compute(gram);
  if (sol.c_factor.info() != Eigen::Success)
    throw numeric_error("fit: Cholesky factorization failed (non-finite input?)");
  sol.weights = sol.c_factor.solve(data.features.transpose() *
                                   (weights.alpha.asDiagonal() * data.labels));
  if (!sol.weights.allFinite()) throw numeric_error("fit: non-finite solution");
  return sol;
}

inline Matrix predict(const RidgeSolution& model, const Matrix& features) {
  require(features.cols() == model.m(), "predict: feature dimension mismatch");
  return features * model.weights;
}

// Cross term G = Z C_a Z_other', the n x q influence kernel between the
// training rows and any evaluation rows. Symmetric when other = Z.
inline Matrix influence_crossterm(const RidgeSolution& model, const Dataset& data,
                                  const Matrix& other_features) {
  require(data.m() == model.m(), "influence: training feature dimension mismatch");
  require(other_features.cols() == model.m(), "influence: evaluation feature dimension mismatch");
  return data.features * model.apply_c(other_features.transpose());
}

// Leverages h_i = z_i C_a z_i'. Under lambda > 0 every alpha_i * h_i < 1;
// a violation means the system was effectively unregularized.
inline Vector hat_diagonal(const RidgeSolution& model, const Dataset& data) {
  require(data.m() == model.m(), "hat: feature dimension mismatch");
  require(data.n() == model.alpha_snapshot.size(), "hat: model fitted on different sample count");
  const Matrix solved = model.apply_c(data.features.transpose());  // m x n
  Vector h = (data.features.cwiseProduct(solved.transpose())).rowwise().sum();
  for (Index i = 0; i < h.size(); ++i) {
    if (h[i] < 0.0) {
      if (h[i] < -1e-12) throw numeric_error("hat: negative leverage " + std::to_string(h[i]));
      h[i] = 0.0;
    }
    if (model.alpha_snapshot[i] * h[i] >= 1.0)
      throw numeric_error("hat: alpha_i * h_i >= 1 at sample " + std::to_string(i) +
                          " (lambda too small)");
  }
  return h;
}

}  // namespace diva

#endif
