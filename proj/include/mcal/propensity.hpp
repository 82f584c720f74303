#pragma once

#include "mcal/core.hpp"

namespace mcal {

/// Which unit quantities enter the log-linear density ratio besides the
/// constant: a covariate mask and, by default, the response.
struct FeatureSelector {
  std::vector<bool> covariate_mask;
  bool include_response = true;

  static FeatureSelector from_reduced(const EstimatingSpec& spec) { return {spec.reduced_mask, true}; }
  Index dimension() const;
};

/// Row i is f_i = (1, selected covariates, y).
Mat tilt_features(const FeatureSelector& selector, const SurveySample& sample);
Vec tilt_features(const FeatureSelector& selector, const UnitRecord& unit);

/// log r(f) = phi^T f for the ratio of non-selected to selected densities.
struct DensityRatioModel {
  Vec phi;
  double n_big = 0.0;    // N1
  double n0_hat = 0.0;   // sum of internal design weights minus N1
  Vec moment_targets;    // first entry 1
  FeatureSelector features;
  int iterations = 0;
};

struct TiltFit {
  Vec phi;
  int iterations = 0;
  double max_residual = 0.0;
};

/// Solves (1/N1) sum_i exp(phi^T f_i) f_i = targets by damped Newton on the
/// convex potential (1/N1) sum exp(phi^T f_i) - phi^T targets.
TiltFit fit_exponential_tilt(const Mat& features, const Vec& targets, const Vec& phi0 = Vec());

DensityRatioModel solve_density_ratio(const SurveySample& big, const SurveySample& internal,
                                      const FeatureSelector& selector);

struct PropensityWeight {
  double inverse = 1.0;
  bool clamped = false;
};

PropensityWeight propensity_inverse(const DensityRatioModel& model, const UnitRecord& unit);
/// Inverse propensities for every unit of `big`; `clamped_count` receives the
/// number of units whose exponent hit the clamp.
Vec propensity_inverses(const DensityRatioModel& model, const SurveySample& big, Index* clamped_count = nullptr);

/// Reduced-model fit on the big sample with weights pi_hat^-1. With
/// `negligible_variance` the covariance is returned as zero.
SummaryStatistic debiased_alpha2(const SurveySample& big, const EstimatingSpec& spec, const DensityRatioModel& model,
                                 bool negligible_variance = false);

}  // namespace mcal
