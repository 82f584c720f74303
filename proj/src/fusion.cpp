#include "mcal/fusion.hpp"

namespace mcal {

namespace {

constexpr const char* kModule = "benchmark_fusion";

}  // namespace

Mat score_covariance(const SurveySample& sample, const Mat& scores) {
  const Index n = sample.size();
  if (scores.rows() != n) throw Error(ErrorCode::DimensionMismatch, kModule, "score rows differ from sample size");
  const Vec dtilde = normalized_weights(sample);
  const Index q = scores.cols();
  Mat out = Mat::Zero(q, q);
  switch (sample.design().kind) {
    case DesignKind::Poisson: {
      Vec pi = sample.has_inclusion_probs() ? sample.inclusion_probs() : sample.design_weights().cwiseInverse();
      const Vec scale = dtilde.cwiseAbs2().cwiseProduct((Vec::Ones(n) - pi));
      out = scores.transpose() * (scores.array().colwise() * scale.array()).matrix();
      break;
    }
    case DesignKind::SrsWithoutReplacement: {
      if (n < 2) break;
      const double fraction = static_cast<double>(n) / sample.design().population_size;
      const Mat centered = scores.rowwise() - scores.colwise().mean();
      const Mat s = centered.transpose() * centered / static_cast<double>(n - 1);
      out = (1.0 - fraction) / static_cast<double>(n) * s;
      break;
    }
    case DesignKind::Unknown: {
      const Vec scale = dtilde.cwiseAbs2();
      out = scores.transpose() * (scores.array().colwise() * scale.array()).matrix();
      break;
    }
  }
  return symmetrized(out);
}

Mat variance_linearized(const SurveySample& sample, const EstimatingSpec& spec, Model which, const Vec& theta_hat) {
  spec.validate_for(sample.dim());
  if (theta_hat.size() != spec.dimension(which))
    throw Error(ErrorCode::DimensionMismatch, kModule, "parameter length differs from model dimension");
  const Vec dtilde = normalized_weights(sample);
  const Mat jac = weighted_score_jacobian(spec, which, theta_hat, sample, dtilde);
  Eigen::PartialPivLU<Mat> lu(jac);
  if (!(lu.rcond() > 1e-14)) throw Error(ErrorCode::SingularJacobian, kModule, "score Jacobian is singular");
  const Mat jinv = lu.inverse();
  const Mat s = score_covariance(sample, score_matrix(spec, which, theta_hat, sample));
  return symmetrized(jinv * s * jinv.transpose());
}

SummaryStatistic estimate_alpha_internal(const SurveySample& sample, const EstimatingSpec& spec) {
  spec.validate_for(sample.dim());
  SummaryStatistic out;
  out.alpha_hat = solve_weighted_z(sample, spec, Model::Reduced, sample.design_weights(),
                                   Vec::Zero(spec.dimension(Model::Reduced)));
  out.covariance = variance_linearized(sample, spec, Model::Reduced, out.alpha_hat);
  out.n_source = static_cast<long long>(sample.size());
  return out;
}

PooledBenchmark gls_pool(const SummaryStatistic& internal, const SummaryStatistic& external, bool use_external_only) {
  internal.validate();
  external.validate();
  const Index q = internal.alpha_hat.size();
  if (external.alpha_hat.size() != q)
    throw Error(ErrorCode::DimensionMismatch, kModule, "internal and external estimates differ in length");

  PooledBenchmark out;
  out.internal = internal;
  out.external = external;
  out.external_only = use_external_only;
  const Mat& v2 = external.covariance;
  out.external_diagonal = q > 1 && (v2 - Mat(v2.diagonal().asDiagonal())).isZero(0.0);

  if (use_external_only) {
    out.alpha_star = external.alpha_hat;
    out.covariance = symmetrized(v2);
    out.gls_weight = Mat::Identity(q, q);
    return out;
  }
  const Mat p1 = detail::spd_inverse<double>(internal.covariance, "internal covariance");
  const Mat p2 = detail::spd_inverse<double>(v2, "external covariance");
  out.covariance = detail::spd_inverse<double>(p1 + p2, "pooled precision");
  out.alpha_star = out.covariance * (p1 * internal.alpha_hat + p2 * external.alpha_hat);
  out.gls_weight = out.covariance * p2;
  return out;
}

}  // namespace mcal
