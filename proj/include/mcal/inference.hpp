#pragma once

#include <optional>

#include "mcal/calibration.hpp"
#include "mcal/fusion.hpp"

namespace mcal {

enum class VarianceMode { KnownAlpha, PooledAlphaCase1, ExternalDominant };

const char* to_string(VarianceMode mode) noexcept;

/// Plug-in blocks for the calibrated estimator's sandwich, all evaluated at
/// (beta_hat, alpha used) with normalized design weights.
struct VarianceDecomposition {
  Mat I11;      // sum dtilde dU1/dbeta^T
  Mat I12;      // sum dtilde U1 U2^T
  Mat I22;      // sum dtilde U2 U2^T
  Mat I0;       // sum dtilde dU2/dalpha^T
  Mat sigma_u;  // n times the design covariance of sum dtilde (U1, U2)
  Index q1 = 0;
  Index q2 = 0;
  Index n = 0;
  VarianceMode mode = VarianceMode::KnownAlpha;

  Mat sigma11() const { return sigma_u.topLeftCorner(q1, q1); }
  Mat sigma12() const { return sigma_u.topRightCorner(q1, q2); }
  Mat sigma22() const { return sigma_u.bottomRightCorner(q2, q2); }
};

VarianceDecomposition assemble_decomposition(const SurveySample& sample, const EstimatingSpec& spec,
                                             const Vec& beta_hat, const Vec& alpha_used, VarianceMode mode);

/// Same decomposition with the score covariance blocks that involve U2
/// replaced by their I-block counterparts (Sigma12 = I12, Sigma22 = I22), the
/// identities that hold under simple random sampling.
VarianceDecomposition with_srs_plugins(VarianceDecomposition dec);

/// A (S11 - B S21 - S12 B^T + B S22 B^T) A^T with A = I11^-1, B = I12 I22^-1.
template <typename Scalar>
MatrixX<Scalar> four_term_sandwich(const MatrixX<Scalar>& i11, const MatrixX<Scalar>& i12, const MatrixX<Scalar>& i22,
                                   const MatrixX<Scalar>& s11, const MatrixX<Scalar>& s12,
                                   const MatrixX<Scalar>& s22) {
  Eigen::PartialPivLU<MatrixX<Scalar>> lu11(i11);
  if (!(lu11.rcond() > Scalar(1e-14))) throw Error(ErrorCode::SingularBlock, "inference", "I11 is singular");
  Eigen::LDLT<MatrixX<Scalar>> ldlt22(i22);
  if (ldlt22.info() != Eigen::Success || !(ldlt22.rcond() > Scalar(1e-14)))
    throw Error(ErrorCode::SingularBlock, "inference", "I22 is singular");
  const MatrixX<Scalar> a = lu11.inverse();
  const MatrixX<Scalar> b = ldlt22.solve(i12.transpose()).transpose();
  const MatrixX<Scalar> inner = s11 - b * s12.transpose() - s12 * b.transpose() + b * s22 * b.transpose();
  return symmetrized(MatrixX<Scalar>(a * inner * a.transpose()));
}

Mat sandwich_known_alpha(const VarianceDecomposition& dec);

/// Sandwich with the pooled benchmark's own variability folded into the
/// Sigma12 and Sigma22 blocks through the GLS weight W.
Mat sandwich_estimated_alpha(const VarianceDecomposition& dec, const PooledBenchmark& pooled, Index n);

/// I11^-1 Sigma11 I11^-T
Mat sandwich_uncalibrated(const VarianceDecomposition& dec);

struct EstimateReport {
  Vec beta_hat;
  Mat sigma_beta;
  Vec ci_lower;
  Vec ci_upper;
  double level = 0.95;
  Index n = 0;
  VarianceMode mode = VarianceMode::KnownAlpha;
  std::optional<CalibrationResult> diagnostics;
};

/// Two-sided normal quantile z_{(1+level)/2}.
double normal_quantile_two_sided(double level);

EstimateReport wald_report(const Vec& beta_hat, const Mat& sigma_beta, Index n, double level = 0.95,
                           std::optional<CalibrationResult> diagnostics = std::nullopt,
                           VarianceMode mode = VarianceMode::KnownAlpha);

}  // namespace mcal
