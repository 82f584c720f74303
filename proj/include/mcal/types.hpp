#pragma once

#include <Eigen/Dense>

namespace mcal {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Numerically stable logistic function.
template <typename Scalar>
Scalar expit(Scalar t) {
  using std::exp;
  if (t >= Scalar(0)) {
    return Scalar(1) / (Scalar(1) + exp(-t));
  }
  const Scalar e = exp(t);
  return e / (Scalar(1) + e);
}

/// (A + A^T) / 2
template <typename Derived>
auto symmetrized(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out = (a + a.transpose()) * Scalar(0.5);
  return out;
}

}  // namespace mcal
