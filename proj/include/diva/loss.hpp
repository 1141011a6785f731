#ifndef DIVA_LOSS_HPP
#define DIVA_LOSS_HPP

#include <cmath>
#include <string>

#include "diva/types.hpp"

namespace diva {

// Validation losses, all reduced by summation over rows.
//   squared_error                     ||f - y||^2
//   cross_entropy                     -sum_c y_c log softmax(f)_c
//   misclassified_only_cross_entropy  cross entropy gated to rows where
//                                     argmax f != argmax y (ties count as
//                                     correct, i.e. zero loss)
enum class LossKind {
  squared_error,
  cross_entropy,
  misclassified_only_cross_entropy,
};

inline const char* loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::squared_error: return "squared_error";
    case LossKind::cross_entropy: return "cross_entropy";
    case LossKind::misclassified_only_cross_entropy: return "misclassified_only_cross_entropy";
  }
  return "?";
}

namespace detail {

inline Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& f) {
  Eigen::RowVectorXd e = (f.array() - f.maxCoeff()).exp();
  return e / e.sum();
}

// Correct iff the true-class output already attains the row maximum.
inline bool row_correct(const Eigen::RowVectorXd& f, const Eigen::RowVectorXd& y) {
  Index true_class = 0;
  y.maxCoeff(&true_class);
  return f[true_class] >= f.maxCoeff();
}

inline double logsumexp_row(const Eigen::RowVectorXd& f) {
  const double fmax = f.maxCoeff();
  return fmax + std::log((f.array() - fmax).exp().sum());
}

}  // namespace detail

inline double loss_row_value(LossKind kind, const Eigen::RowVectorXd& f,
                             const Eigen::RowVectorXd& y) {
  switch (kind) {
    case LossKind::squared_error:
      return (f - y).squaredNorm();
    case LossKind::cross_entropy:
      return detail::logsumexp_row(f) * y.sum() - y.dot(f);
    case LossKind::misclassified_only_cross_entropy:
      if (detail::row_correct(f, y)) return 0.0;
      return detail::logsumexp_row(f) * y.sum() - y.dot(f);
  }
  return 0.0;
}

inline double loss_value(LossKind kind, const Matrix& predictions, const Matrix& labels) {
  require(predictions.rows() == labels.rows() && predictions.cols() == labels.cols(),
          "loss: prediction/label shape mismatch");
  double total = 0.0;
  for (Index i = 0; i < predictions.rows(); ++i)
    total += loss_row_value(kind, predictions.row(i), labels.row(i));
  return total;
}

// Row i is dl/df evaluated at (prediction_i, label_i); the matrix the
// chain rule contracts against.
inline Matrix loss_derivative_matrix(LossKind kind, const Matrix& predictions,
                                     const Matrix& labels) {
  require(predictions.rows() == labels.rows() && predictions.cols() == labels.cols(),
          "loss: prediction/label shape mismatch");
  if (!predictions.allFinite()) throw numeric_error("loss: non-finite prediction");
  Matrix out(predictions.rows(), predictions.cols());
  for (Index i = 0; i < predictions.rows(); ++i) {
    const Eigen::RowVectorXd f = predictions.row(i);
    const Eigen::RowVectorXd y = labels.row(i);
    switch (kind) {
      case LossKind::squared_error:
        out.row(i) = 2.0 * (f - y);
        break;
      case LossKind::cross_entropy:
        out.row(i) = detail::softmax_row(f) * y.sum() - y;
        break;
      case LossKind::misclassified_only_cross_entropy:
        if (detail::row_correct(f, y))
          out.row(i).setZero();
        else
          out.row(i) = detail::softmax_row(f) * y.sum() - y;
        break;
    }
  }
  return out;
}

}  // namespace diva

#endif
