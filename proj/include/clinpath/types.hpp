#pragma once

#include <Eigen/Dense>

namespace clinpath {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class Polarity { Positive, Negative };

// Positive-wins fold, applied at note, day and stage level alike.
inline Polarity merge_polarity(Polarity a, Polarity b) {
  if (a == Polarity::Positive || b == Polarity::Positive) return Polarity::Positive;
  return Polarity::Negative;
}

inline const char* to_string(Polarity p) {
  return p == Polarity::Positive ? "positive" : "negative";
}

}  // namespace clinpath
