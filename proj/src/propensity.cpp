#include "mcal/propensity.hpp"

#include <algorithm>
#include <cmath>

#include "mcal/fusion.hpp"

namespace mcal {

namespace {

constexpr const char* kModule = "propensity";
constexpr double kExponentClamp = 50.0;

double clamped_exp(double eta, bool* clamped = nullptr) {
  const double c = std::clamp(eta, -kExponentClamp, kExponentClamp);
  if (clamped) *clamped = c != eta;
  return std::exp(c);
}

Vec tilt_values(const Mat& features, const Vec& phi) {
  Vec e = features * phi;
  for (Index i = 0; i < e.size(); ++i) e(i) = clamped_exp(e(i));
  return e;
}

}  // namespace

Index FeatureSelector::dimension() const {
  return 1 + static_cast<Index>(std::count(covariate_mask.begin(), covariate_mask.end(), true)) +
         (include_response ? 1 : 0);
}

Mat tilt_features(const FeatureSelector& selector, const SurveySample& sample) {
  if (static_cast<Index>(selector.covariate_mask.size()) != sample.dim())
    throw Error(ErrorCode::DimensionMismatch, kModule, "feature mask length differs from covariate count");
  Mat f(sample.size(), selector.dimension());
  f.col(0).setOnes();
  Index c = 1;
  for (Index j = 0; j < sample.dim(); ++j)
    if (selector.covariate_mask[j]) f.col(c++) = sample.covariates().col(j);
  if (selector.include_response) f.col(c) = sample.response();
  return f;
}

Vec tilt_features(const FeatureSelector& selector, const UnitRecord& unit) {
  if (static_cast<Index>(selector.covariate_mask.size()) != unit.covariates.size())
    throw Error(ErrorCode::DimensionMismatch, kModule, "feature mask length differs from covariate count");
  Vec f(selector.dimension());
  f(0) = 1.0;
  Index c = 1;
  for (Index j = 0; j < unit.covariates.size(); ++j)
    if (selector.covariate_mask[j]) f(c++) = unit.covariates(j);
  if (selector.include_response) f(c) = unit.response;
  return f;
}

TiltFit fit_exponential_tilt(const Mat& features, const Vec& targets, const Vec& phi0) {
  constexpr int kMaxIterations = 200;
  constexpr int kMaxHalvings = 40;
  constexpr double kTolerance = 1e-9;
  const Index n = features.rows();
  const Index k = features.cols();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, kModule, "big sample is empty");
  if (targets.size() != k) throw Error(ErrorCode::DimensionMismatch, kModule, "targets differ from feature count");
  if (!features.allFinite() || !targets.allFinite())
    throw Error(ErrorCode::NonFiniteInput, kModule, "non-finite features or targets");
  for (Index j = 1; j < k; ++j) {
    const double lo = features.col(j).minCoeff();
    const double hi = features.col(j).maxCoeff();
    if (!(targets(j) > lo && targets(j) < hi))
      throw Error(ErrorCode::DegenerateTargets, kModule, "moment target lies outside the range of the big sample");
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  Vec phi = phi0.size() == k ? phi0 : Vec(Vec::Zero(k));
  auto potential = [&](const Vec& e, const Vec& p) { return e.sum() * inv_n - p.dot(targets); };

  Vec e = tilt_values(features, phi);
  double value = potential(e, phi);
  TiltFit fit;
  for (int iter = 0; iter <= kMaxIterations; ++iter) {
    const Vec grad = features.transpose() * e * inv_n - targets;
    fit.max_residual = grad.lpNorm<Eigen::Infinity>();
    if (fit.max_residual <= kTolerance) {
      fit.phi = phi;
      fit.iterations = iter;
      return fit;
    }
    if (iter == kMaxIterations) break;
    const Mat hess = features.transpose() * (features.array().colwise() * e.array()).matrix() * inv_n;
    Eigen::LDLT<Mat> ldlt(hess);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-15))
      throw Error(ErrorCode::DegenerateTargets, kModule, "tilted moment matrix is singular");
    const Vec step = -ldlt.solve(grad);
    const double slope = grad.dot(step);
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= kMaxHalvings; ++h, t *= 0.5) {
      const Vec cand = phi + t * step;
      const Vec ec = tilt_values(features, cand);
      const double vc = potential(ec, cand);
      const double gc = (features.transpose() * ec * inv_n - targets).lpNorm<Eigen::Infinity>();
      if (std::isfinite(vc) && (vc <= value + 1e-4 * t * slope || gc < fit.max_residual)) {
        phi = cand;
        e = ec;
        value = vc;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  const Vec eta = features * phi;
  if (eta.cwiseAbs().maxCoeff() >= kExponentClamp)
    throw Error(ErrorCode::DegenerateTargets, kModule, "density ratio diverged");
  throw Error(ErrorCode::NoConvergence, kModule, "exponential tilt did not converge");
}

DensityRatioModel solve_density_ratio(const SurveySample& big, const SurveySample& internal,
                                      const FeatureSelector& selector) {
  if (big.dim() != internal.dim())
    throw Error(ErrorCode::DimensionMismatch, kModule, "big and internal samples differ in covariate count");
  const Mat f_big = tilt_features(selector, big);
  const Mat f_int = tilt_features(selector, internal);
  const double n_hat = internal.design_weights().sum();
  const double n_big = static_cast<double>(big.size());

  DensityRatioModel model;
  model.features = selector;
  model.n_big = n_big;
  model.n0_hat = n_hat - n_big;
  if (model.n0_hat < -1e-9 * n_hat)
    throw Error(ErrorCode::InvalidArgument, kModule, "big sample exceeds the estimated population size");
  if (model.n0_hat <= 1e-9 * n_hat) {
    // Census-like big data: nothing is left outside it to model.
    model.n0_hat = 0.0;
    model.phi = Vec::Zero(selector.dimension());
    model.moment_targets = f_big.colwise().mean().transpose();
    return model;
  }
  const Vec weighted = f_int.transpose() * internal.design_weights();
  const Vec big_total = f_big.colwise().sum().transpose();
  model.moment_targets = (weighted - big_total) / model.n0_hat;
  model.moment_targets(0) = 1.0;
  const TiltFit fit = fit_exponential_tilt(f_big, model.moment_targets);
  model.phi = fit.phi;
  model.iterations = fit.iterations;
  return model;
}

PropensityWeight propensity_inverse(const DensityRatioModel& model, const UnitRecord& unit) {
  PropensityWeight out;
  const double r = clamped_exp(model.phi.dot(tilt_features(model.features, unit)), &out.clamped);
  out.inverse = 1.0 + model.n0_hat / model.n_big * r;
  return out;
}

Vec propensity_inverses(const DensityRatioModel& model, const SurveySample& big, Index* clamped_count) {
  const Vec eta = tilt_features(model.features, big) * model.phi;
  Vec out(eta.size());
  Index clamped = 0;
  for (Index i = 0; i < eta.size(); ++i) {
    bool c = false;
    out(i) = 1.0 + model.n0_hat / model.n_big * clamped_exp(eta(i), &c);
    clamped += c ? 1 : 0;
  }
  if (clamped_count) *clamped_count = clamped;
  return out;
}

SummaryStatistic debiased_alpha2(const SurveySample& big, const EstimatingSpec& spec, const DensityRatioModel& model,
                                 bool negligible_variance) {
  spec.validate_for(big.dim());
  const SurveySample weighted = big.reweighted(propensity_inverses(model, big), Design::unknown());
  SummaryStatistic out;
  const Index q2 = spec.dimension(Model::Reduced);
  out.alpha_hat = solve_weighted_z(weighted, spec, Model::Reduced, weighted.design_weights(), Vec::Zero(q2));
  out.covariance = negligible_variance ? Mat(Mat::Zero(q2, q2))
                                       : variance_linearized(weighted, spec, Model::Reduced, out.alpha_hat);
  out.n_source = static_cast<long long>(big.size());
  return out;
}

}  // namespace mcal
