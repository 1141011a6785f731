#ifndef DIVA_TYPES_HPP
#define DIVA_TYPES_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace diva {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Thrown on shape or value violations of an input (caller bug).
struct dimension_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when a computation degenerates numerically (leverage at 1,
// factorization failure, non-finite intermediate).
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw dimension_error(what);
}

// Training substrate: feature rows Z (n x m) and label rows Y (n x k).
// Labels are either one-hot rows or externally residualized targets;
// `onehot` records which. Both are treated identically downstream.
struct Dataset {
  Matrix features;  // n x m
  Matrix labels;    // n x k
  std::vector<std::string> class_names;
  bool onehot = true;

  Index n() const { return features.rows(); }
  Index m() const { return features.cols(); }
  Index k() const { return labels.cols(); }

  void validate() const {
    require(features.rows() >= 1 && features.cols() >= 1, "dataset: need n >= 1 and m >= 1");
    require(labels.cols() >= 1, "dataset: need k >= 1");
    require(labels.rows() == features.rows(), "dataset: feature/label row count mismatch");
    require(features.allFinite(), "dataset: non-finite feature value");
    require(labels.allFinite(), "dataset: non-finite label value");
    if (onehot) {
      for (Index i = 0; i < labels.rows(); ++i) {
        int ones = 0;
        for (Index c = 0; c < labels.cols(); ++c) {
          const double v = labels(i, c);
          if (v == 1.0)
            ++ones;
          else
            require(v == 0.0, "dataset: row " + std::to_string(i) + " is not one-hot");
        }
        require(ones == 1, "dataset: row " + std::to_string(i) + " is not one-hot");
      }
    }
  }
};

// Per-sample importance weights alpha, the optimization variable.
// alpha_i = 0 excludes sample i, alpha_i = 1 is standard inclusion.
struct SampleWeights {
  Vector alpha;

  SampleWeights() = default;
  explicit SampleWeights(Vector a) : alpha(std::move(a)) {}

  static SampleWeights ones(Index n) { return SampleWeights(Vector::Ones(n)); }

  Index size() const { return alpha.size(); }

  void validate(Index n) const {
    require(alpha.size() == n, "weights: length does not match dataset");
    require(alpha.allFinite(), "weights: non-finite entry");
    require((alpha.array() >= 0.0).all(), "weights: negative entry");
  }
};

}  // namespace diva

#endif
