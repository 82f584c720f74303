#include "mcal/inference.hpp"

#include <boost/math/distributions/normal.hpp>

namespace mcal {

namespace {

constexpr const char* kModule = "inference";

}  // namespace

const char* to_string(VarianceMode mode) noexcept {
  switch (mode) {
    case VarianceMode::KnownAlpha: return "KnownAlpha";
    case VarianceMode::PooledAlphaCase1: return "PooledAlphaCase1";
    case VarianceMode::ExternalDominant: return "ExternalDominant";
  }
  return "Unknown";
}

VarianceDecomposition assemble_decomposition(const SurveySample& sample, const EstimatingSpec& spec,
                                             const Vec& beta_hat, const Vec& alpha_used, VarianceMode mode) {
  spec.validate_for(sample.dim());
  const Index q1 = spec.dimension(Model::Full);
  const Index q2 = spec.dimension(Model::Reduced);
  if (beta_hat.size() != q1 || alpha_used.size() != q2)
    throw Error(ErrorCode::DimensionMismatch, kModule, "parameter lengths differ from model dimensions");

  const Vec dtilde = normalized_weights(sample);
  const Mat u1 = score_matrix(spec, Model::Full, beta_hat, sample);
  const Mat u2 = score_matrix(spec, Model::Reduced, alpha_used, sample);
  const Mat u2w = u2.array().colwise() * dtilde.array();

  VarianceDecomposition dec;
  dec.q1 = q1;
  dec.q2 = q2;
  dec.n = sample.size();
  dec.mode = mode;
  dec.I11 = weighted_score_jacobian(spec, Model::Full, beta_hat, sample, dtilde);
  dec.I12 = u1.transpose() * u2w;
  dec.I22 = symmetrized(Mat(u2.transpose() * u2w));
  dec.I0 = weighted_score_jacobian(spec, Model::Reduced, alpha_used, sample, dtilde);

  Mat stacked(sample.size(), q1 + q2);
  stacked << u1, u2;
  dec.sigma_u = static_cast<double>(dec.n) * score_covariance(sample, stacked);

  Eigen::PartialPivLU<Mat> lu(dec.I11);
  if (!(lu.rcond() > 1e-14)) throw Error(ErrorCode::SingularJacobian, kModule, "full-score Jacobian is singular");
  return dec;
}

VarianceDecomposition with_srs_plugins(VarianceDecomposition dec) {
  dec.sigma_u.topRightCorner(dec.q1, dec.q2) = dec.I12;
  dec.sigma_u.bottomLeftCorner(dec.q2, dec.q1) = dec.I12.transpose();
  dec.sigma_u.bottomRightCorner(dec.q2, dec.q2) = dec.I22;
  return dec;
}

Mat sandwich_known_alpha(const VarianceDecomposition& dec) {
  if (dec.mode != VarianceMode::KnownAlpha)
    throw Error(ErrorCode::InvalidArgument, kModule, "known-benchmark sandwich needs a KnownAlpha decomposition");
  return four_term_sandwich<double>(dec.I11, dec.I12, dec.I22, dec.sigma11(), dec.sigma12(), dec.sigma22());
}

Mat sandwich_estimated_alpha(const VarianceDecomposition& dec, const PooledBenchmark& pooled, Index n) {
  if (dec.mode == VarianceMode::KnownAlpha)
    throw Error(ErrorCode::InvalidArgument, kModule, "estimated-benchmark sandwich needs a pooled decomposition");
  const Index q2 = dec.q2;
  if (pooled.gls_weight.rows() != q2 || pooled.gls_weight.cols() != q2)
    throw Error(ErrorCode::DimensionMismatch, kModule, "GLS weight dimension differs from q2");
  const Mat& w = pooled.gls_weight;
  const Mat s12 = dec.sigma12();
  const Mat s22 = dec.sigma22();
  const Mat sigma_c = dec.mode == VarianceMode::ExternalDominant
                          ? Mat(Mat::Zero(q2, q2))
                          : Mat(static_cast<double>(n) * pooled.external.covariance);

  Mat t12;
  Mat t22;
  if (w == Mat::Identity(q2, q2)) {
    // I0 W I0^-1 collapses to the identity; skip the round trip through I0^-1.
    t12 = s12;
    t22 = s22 + dec.I0 * sigma_c * dec.I0.transpose();
  } else {
    Eigen::PartialPivLU<Mat> lu0(dec.I0);
    if (!(lu0.rcond() > 1e-14)) throw Error(ErrorCode::SingularBlock, kModule, "I0 is singular");
    const Mat i0inv = lu0.inverse();
    const Mat m = dec.I0 * w;
    t12 = s12 * i0inv.transpose() * w.transpose() * dec.I0.transpose();
    t22 = m * (sigma_c + i0inv * s22 * i0inv.transpose()) * m.transpose();
  }
  return four_term_sandwich<double>(dec.I11, dec.I12, dec.I22, dec.sigma11(), t12, symmetrized(t22));
}

Mat sandwich_uncalibrated(const VarianceDecomposition& dec) {
  Eigen::PartialPivLU<Mat> lu(dec.I11);
  if (!(lu.rcond() > 1e-14)) throw Error(ErrorCode::SingularBlock, kModule, "I11 is singular");
  const Mat a = lu.inverse();
  return symmetrized(Mat(a * dec.sigma11() * a.transpose()));
}

double normal_quantile_two_sided(double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, kModule, "level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + level / 2.0);
}

EstimateReport wald_report(const Vec& beta_hat, const Mat& sigma_beta, Index n, double level,
                           std::optional<CalibrationResult> diagnostics, VarianceMode mode) {
  if (sigma_beta.rows() != beta_hat.size() || sigma_beta.cols() != beta_hat.size())
    throw Error(ErrorCode::DimensionMismatch, kModule, "covariance dimension differs from estimate");
  if (n <= 0) throw Error(ErrorCode::InvalidArgument, kModule, "sample size must be positive");
  const double z = normal_quantile_two_sided(level);
  EstimateReport r;
  r.beta_hat = beta_hat;
  r.sigma_beta = sigma_beta;
  r.level = level;
  r.n = n;
  r.mode = mode;
  r.diagnostics = std::move(diagnostics);
  const Vec half = z * (sigma_beta.diagonal().cwiseMax(0.0) / static_cast<double>(n)).cwiseSqrt();
  r.ci_lower = beta_hat - half;
  r.ci_upper = beta_hat + half;
  return r;
}

}  // namespace mcal
