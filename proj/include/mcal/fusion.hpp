#pragma once

#include "mcal/core.hpp"

namespace mcal {

/// GLS combination of an internal and an external estimate of the reduced
/// model parameter.
struct PooledBenchmark {
  Vec alpha_star;
  Mat covariance;    // (V1^-1 + V2^-1)^-1
  Mat gls_weight;    // W = (V1^-1 + V2^-1)^-1 V2^-1
  SummaryStatistic internal;
  SummaryStatistic external;
  bool external_only = false;
  /// The external covariance had no off-diagonal entries (standard errors only).
  bool external_diagonal = false;
};

/// Design-based covariance of sum_i dtilde_i U_i for the sample's design.
/// Row i of `scores` is U_i.
///   Poisson: sum dtilde_i^2 (1 - pi_i) U_i U_i^T
///   SRS without replacement: (1 - n/N) n^-1 S_U   (S_U the sample covariance)
///   Unknown: sum dtilde_i^2 U_i U_i^T   (with-replacement approximation)
Mat score_covariance(const SurveySample& sample, const Mat& scores);

/// Linearization (sandwich) variance of the Z-estimator theta_hat.
Mat variance_linearized(const SurveySample& sample, const EstimatingSpec& spec, Model which, const Vec& theta_hat);

/// alpha_hat_1 and V1 from the internal sample.
SummaryStatistic estimate_alpha_internal(const SurveySample& sample, const EstimatingSpec& spec);

/// With `use_external_only` the external estimate is taken as the benchmark
/// (alpha* = alpha_hat_2, W = I), for external sources whose variance is
/// negligible next to the internal one.
PooledBenchmark gls_pool(const SummaryStatistic& internal, const SummaryStatistic& external,
                         bool use_external_only = false);

namespace detail {

/// Inverse of a symmetric positive definite matrix; throws SingularCovariance
/// when the factorization fails or the reciprocal condition is below 1e-12.
template <typename Scalar>
MatrixX<Scalar> spd_inverse(const MatrixX<Scalar>& m, const char* what) {
  Eigen::LLT<MatrixX<Scalar>> llt(symmetrized(m));
  if (llt.info() != Eigen::Success || !(llt.rcond() >= Scalar(1e-12)))
    throw Error(ErrorCode::SingularCovariance, "benchmark_fusion", std::string(what) + " is not invertible");
  return llt.solve(MatrixX<Scalar>::Identity(m.rows(), m.cols()));
}

}  // namespace detail

}  // namespace mcal
