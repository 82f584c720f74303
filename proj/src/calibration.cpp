#include "mcal/calibration.hpp"

namespace mcal {

CalibrationResult solve_dual_lambda(const CalibrationProblem& problem) {
  return solve_dual_lambda<double>(problem.dtilde, problem.constraints);
}

namespace {

Vec uncalibrated_start(const SurveySample& sample, const EstimatingSpec& spec, const Vec& beta0) {
  if (beta0.size() > 0) return beta0;
  return solve_weighted_z(sample, spec, Model::Full, sample.design_weights(),
                          Vec::Zero(spec.dimension(Model::Full)));
}

}  // namespace

CalibratedEstimate calibrated_estimate(const SurveySample& sample, const EstimatingSpec& spec, const Vec& alpha_star,
                                       const Vec& beta0) {
  spec.validate_for(sample.dim());
  if (alpha_star.size() != spec.dimension(Model::Reduced))
    throw Error(ErrorCode::DimensionMismatch, "el_calibration", "benchmark length differs from q2");
  const BenchmarkConstraint source{spec, alpha_star};
  return multi_source_calibrate(sample, {source}, spec, beta0);
}

CalibratedEstimate multi_source_calibrate(const SurveySample& sample_a, const std::vector<BenchmarkConstraint>& sources,
                                          const EstimatingSpec& spec_full, const Vec& beta0) {
  if (sources.empty()) throw Error(ErrorCode::InvalidArgument, "el_calibration", "no benchmark sources given");
  spec_full.validate_for(sample_a.dim());

  Index total = 0;
  for (const auto& s : sources) {
    s.spec.validate_for(sample_a.dim());
    if (s.benchmark.size() != s.spec.dimension(Model::Reduced))
      throw Error(ErrorCode::DimensionMismatch, "el_calibration", "benchmark length differs from its model");
    total += s.benchmark.size();
  }
  Mat stacked(sample_a.size(), total);
  Index col = 0;
  for (const auto& s : sources) {
    const Mat block = score_matrix(s.spec, Model::Reduced, s.benchmark, sample_a);
    stacked.middleCols(col, block.cols()) = block;
    col += block.cols();
  }

  CalibratedEstimate out;
  out.calibration = solve_dual_lambda<double>(normalized_weights(sample_a), stacked);
  const Vec start = uncalibrated_start(sample_a, spec_full, beta0);
  out.beta = solve_weighted_z(sample_a, spec_full, Model::Full, out.calibration.weights, start);
  return out;
}

Vec population_scaled_weights(const CalibrationResult& result, const SurveySample& sample) {
  return result.weights * sample.design_weights().sum();
}

double calibration_log_ratio(const Vec& dtilde, const Vec& weights) {
  return (dtilde.array() * (weights.array() / dtilde.array()).log()).sum();
}

}  // namespace mcal
