#include "mcal/core.hpp"

#include <cmath>
#include <limits>

namespace mcal {

namespace {

constexpr const char* kModule = "domain_core";

[[noreturn]] void fail(ErrorCode code, const std::string& message) { throw Error(code, kModule, message); }

double mean_function(Family family, double eta) { return family == Family::Linear ? eta : expit(eta); }

double mean_derivative(Family family, double eta) {
  if (family == Family::Linear) return 1.0;
  const double p = expit(eta);
  return p * (1.0 - p);
}

void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) fail(ErrorCode::NonFiniteInput, std::string(what) + " contains non-finite values");
}

}  // namespace

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::InfeasibleConstraints: return "InfeasibleConstraints";
    case ErrorCode::RankDeficientConstraints: return "RankDeficientConstraints";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::SingularBlock: return "SingularBlock";
    case ErrorCode::DegenerateTargets: return "DegenerateTargets";
    case ErrorCode::InfeasibleState: return "InfeasibleState";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::WeightNonPositive: return "WeightNonPositive";
    case ErrorCode::InclusionMismatch: return "InclusionMismatch";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::AsymmetricCovariance: return "AsymmetricCovariance";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

// ---------------------------------------------------------------------------
// SurveySample

SurveySample::SurveySample(Mat covariates, Vec response, Vec design_weights, Vec inclusion_probs, Design design,
                           std::string label, std::vector<std::string> covariate_names)
    : covariates_(std::move(covariates)),
      response_(std::move(response)),
      weights_(std::move(design_weights)),
      inclusion_(std::move(inclusion_probs)),
      design_(design),
      label_(std::move(label)),
      names_(std::move(covariate_names)) {
  const Index n = response_.size();
  if (n == 0) fail(ErrorCode::InvalidArgument, "sample is empty");
  if (covariates_.rows() != n || weights_.size() != n)
    fail(ErrorCode::DimensionMismatch, "covariates, response and weights must have one entry per unit");
  if (inclusion_.size() != 0 && inclusion_.size() != n)
    fail(ErrorCode::DimensionMismatch, "inclusion probabilities must have one entry per unit");
  if (!covariates_.allFinite()) fail(ErrorCode::NonFiniteInput, "covariates contain non-finite values");
  require_finite(response_, "response");
  for (Index i = 0; i < n; ++i) {
    if (!(weights_(i) > 0.0) || !std::isfinite(weights_(i)))
      fail(ErrorCode::WeightNonPositive, "design weight of unit " + std::to_string(i) + " is not positive");
  }
  for (Index i = 0; i < inclusion_.size(); ++i) {
    const double pi = inclusion_(i);
    if (!(pi > 0.0 && pi <= 1.0))
      fail(ErrorCode::InclusionMismatch, "inclusion probability of unit " + std::to_string(i) + " outside (0,1]");
    if (std::abs(weights_(i) - 1.0 / pi) > 1e-9 * weights_(i))
      fail(ErrorCode::InclusionMismatch, "design weight of unit " + std::to_string(i) + " differs from 1/pi");
  }
  if (design_.kind == DesignKind::SrsWithoutReplacement) {
    if (!(design_.population_size >= static_cast<double>(n)))
      fail(ErrorCode::InvalidArgument, "SRS population size must be at least the sample size");
    const double expected = design_.population_size / static_cast<double>(n);
    if (((weights_.array() - expected).abs() > 1e-9 * expected).any())
      fail(ErrorCode::InvalidArgument, "SRS design weights must all equal N/n");
  }
  if (!names_.empty() && static_cast<Index>(names_.size()) != covariates_.cols())
    fail(ErrorCode::DimensionMismatch, "covariate name count differs from covariate dimension");
}

SurveySample SurveySample::from_units(const std::vector<UnitRecord>& units, Design design, std::string label) {
  if (units.empty()) fail(ErrorCode::InvalidArgument, "sample is empty");
  const Index n = static_cast<Index>(units.size());
  const Index p = units.front().covariates.size();
  const bool with_pi = units.front().inclusion_prob.has_value();
  Mat x(n, p);
  Vec y(n), d(n), pi(with_pi ? n : 0);
  for (Index i = 0; i < n; ++i) {
    const auto& u = units[static_cast<std::size_t>(i)];
    if (u.covariates.size() != p) fail(ErrorCode::DimensionMismatch, "units have differing covariate dimension");
    if (u.inclusion_prob.has_value() != with_pi)
      fail(ErrorCode::InvalidArgument, "inclusion probabilities must be given for all units or none");
    x.row(i) = u.covariates.transpose();
    y(i) = u.response;
    d(i) = u.design_weight;
    if (with_pi) pi(i) = *u.inclusion_prob;
  }
  return SurveySample(std::move(x), std::move(y), std::move(d), std::move(pi), design, std::move(label));
}

UnitRecord SurveySample::unit(Index i) const {
  UnitRecord u;
  u.covariates = covariates_.row(i).transpose();
  u.response = response_(i);
  u.design_weight = weights_(i);
  if (has_inclusion_probs()) u.inclusion_prob = inclusion_(i);
  return u;
}

SurveySample SurveySample::reweighted(Vec design_weights, Design design) const {
  return SurveySample(covariates_, response_, std::move(design_weights), Vec(), design, label_, names_);
}

void SummaryStatistic::validate() const {
  const Index q = alpha_hat.size();
  if (q == 0) fail(ErrorCode::SchemaError, "summary statistic has an empty alpha");
  if (covariance.rows() != q || covariance.cols() != q)
    fail(ErrorCode::SchemaError, "covariance must be a square matrix matching alpha");
  if (!alpha_hat.allFinite() || !covariance.allFinite())
    fail(ErrorCode::NonFiniteInput, "summary statistic contains non-finite values");
  for (Index i = 0; i < q; ++i) {
    for (Index j = i + 1; j < q; ++j) {
      const double a = covariance(i, j), b = covariance(j, i);
      if (std::abs(a - b) > 1e-12 * std::max(std::abs(a), std::abs(b)))
        fail(ErrorCode::AsymmetricCovariance, "covariance entries (" + std::to_string(i) + "," + std::to_string(j) +
                                                  ") and (" + std::to_string(j) + "," + std::to_string(i) +
                                                  ") differ");
    }
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(symmetrized(covariance), Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale)
    fail(ErrorCode::SchemaError, "covariance is not positive semidefinite");
}

// ---------------------------------------------------------------------------
// EstimatingSpec

EstimatingSpec EstimatingSpec::make(Family family, std::vector<bool> full_mask, std::vector<bool> reduced_mask,
                                    bool intercept) {
  EstimatingSpec spec{family, std::move(full_mask), std::move(reduced_mask), intercept};
  spec.validate();
  return spec;
}

Index EstimatingSpec::dimension(Model which) const {
  const auto& mask = which == Model::Full ? full_mask : reduced_mask;
  Index q = intercept ? 1 : 0;
  for (bool b : mask) q += b ? 1 : 0;
  return q;
}

void EstimatingSpec::validate() const {
  if (full_mask.size() != reduced_mask.size())
    fail(ErrorCode::DimensionMismatch, "full and reduced masks must have the same length");
  bool any_reduced = false;
  for (std::size_t j = 0; j < full_mask.size(); ++j) {
    if (reduced_mask[j] && !full_mask[j])
      fail(ErrorCode::InvalidArgument, "reduced model must select a subset of the full model covariates");
    any_reduced = any_reduced || reduced_mask[j];
  }
  if (!any_reduced && !intercept) fail(ErrorCode::InvalidArgument, "reduced model selects no parameters");
  if (dimension(Model::Full) == 0) fail(ErrorCode::InvalidArgument, "full model selects no parameters");
}

void EstimatingSpec::validate_for(Index p) const {
  validate();
  if (covariate_count() != p)
    fail(ErrorCode::DimensionMismatch,
         "masks have length " + std::to_string(covariate_count()) + " but covariates have " + std::to_string(p));
}

// ---------------------------------------------------------------------------
// Scores

Vec regressors(const EstimatingSpec& spec, Model which, const Eigen::Ref<const Vec>& x) {
  const auto& mask = which == Model::Full ? spec.full_mask : spec.reduced_mask;
  if (x.size() != static_cast<Index>(mask.size()))
    fail(ErrorCode::DimensionMismatch, "covariate vector length differs from mask length");
  Vec h(spec.dimension(which));
  Index k = 0;
  if (spec.intercept) h(k++) = 1.0;
  for (std::size_t j = 0; j < mask.size(); ++j)
    if (mask[j]) h(k++) = x(static_cast<Index>(j));
  return h;
}

Mat regressor_matrix(const EstimatingSpec& spec, Model which, const Mat& covariates) {
  const auto& mask = which == Model::Full ? spec.full_mask : spec.reduced_mask;
  if (covariates.cols() != static_cast<Index>(mask.size()))
    fail(ErrorCode::DimensionMismatch, "covariate matrix width differs from mask length");
  Mat h(covariates.rows(), spec.dimension(which));
  Index k = 0;
  if (spec.intercept) h.col(k++).setOnes();
  for (std::size_t j = 0; j < mask.size(); ++j)
    if (mask[j]) h.col(k++) = covariates.col(static_cast<Index>(j));
  return h;
}

Vec eval_score(const EstimatingSpec& spec, Model which, const Vec& theta, const UnitRecord& unit) {
  spec.validate_for(unit.covariates.size());
  if (theta.size() != spec.dimension(which)) fail(ErrorCode::DimensionMismatch, "theta length differs from q");
  require_finite(theta, "theta");
  require_finite(unit.covariates, "covariates");
  if (!std::isfinite(unit.response)) fail(ErrorCode::NonFiniteInput, "response is not finite");
  const Vec h = regressors(spec, which, unit.covariates);
  return (unit.response - mean_function(spec.family, h.dot(theta))) * h;
}

Mat eval_score_jacobian(const EstimatingSpec& spec, Model which, const Vec& theta, const UnitRecord& unit) {
  spec.validate_for(unit.covariates.size());
  if (theta.size() != spec.dimension(which)) fail(ErrorCode::DimensionMismatch, "theta length differs from q");
  require_finite(theta, "theta");
  require_finite(unit.covariates, "covariates");
  const Vec h = regressors(spec, which, unit.covariates);
  return -mean_derivative(spec.family, h.dot(theta)) * (h * h.transpose());
}

Mat score_matrix(const EstimatingSpec& spec, Model which, const Vec& theta, const SurveySample& sample) {
  const Mat h = regressor_matrix(spec, which, sample.covariates());
  if (theta.size() != h.cols()) fail(ErrorCode::DimensionMismatch, "theta length differs from q");
  Vec eta = h * theta;
  Vec resid(eta.size());
  for (Index i = 0; i < eta.size(); ++i) resid(i) = sample.response()(i) - mean_function(spec.family, eta(i));
  return h.array().colwise() * resid.array();
}

Mat weighted_score_jacobian(const EstimatingSpec& spec, Model which, const Vec& theta, const SurveySample& sample,
                            const Vec& weights) {
  const Mat h = regressor_matrix(spec, which, sample.covariates());
  if (theta.size() != h.cols()) fail(ErrorCode::DimensionMismatch, "theta length differs from q");
  if (weights.size() != h.rows()) fail(ErrorCode::DimensionMismatch, "weights length differs from sample size");
  Vec eta = h * theta;
  Vec v(eta.size());
  for (Index i = 0; i < eta.size(); ++i) v(i) = weights(i) * mean_derivative(spec.family, eta(i));
  return -(h.transpose() * (h.array().colwise() * v.array()).matrix());
}

Vec normalized_weights(const SurveySample& sample) {
  const Vec& d = sample.design_weights();
  return d / d.sum();
}

double ht_total(const SurveySample& sample, const Vec& values) {
  if (values.size() != sample.size()) fail(ErrorCode::DimensionMismatch, "values length differs from sample size");
  return sample.design_weights().dot(values);
}

// ---------------------------------------------------------------------------
// Z-estimation

Vec solve_weighted_z(const SurveySample& sample, const EstimatingSpec& spec, Model which, const Vec& weights,
                     const Vec& theta0) {
  constexpr int kMaxIterations = 100;
  constexpr int kMaxHalvings = 30;
  constexpr double kTolerance = 1e-10;

  spec.validate_for(sample.dim());
  const Index q = spec.dimension(which);
  const Index n = sample.size();
  if (theta0.size() != q) fail(ErrorCode::DimensionMismatch, "theta0 length differs from q");
  if (weights.size() != n) fail(ErrorCode::DimensionMismatch, "weights length differs from sample size");
  require_finite(weights, "weights");
  require_finite(theta0, "theta0");
  if ((weights.array() < 0.0).any() || !(weights.sum() > 0.0))
    fail(ErrorCode::InvalidArgument, "weights must be non-negative with a positive sum");

  // The root is invariant to the weight scale; work with weights summing to one.
  const Vec w = weights / weights.sum();
  const Mat h = regressor_matrix(spec, which, sample.covariates());
  const Vec& y = sample.response();

  Vec resid(n);
  auto weighted_score = [&](const Vec& theta) -> Vec {
    const Vec eta = h * theta;
    for (Index i = 0; i < n; ++i) resid(i) = w(i) * (y(i) - mean_function(spec.family, eta(i)));
    return h.transpose() * resid;
  };
  // Magnitude of the summands, used as the round-off floor of the residual.
  auto noise_floor = [&](const Vec& theta) {
    const Vec eta = h * theta;
    double s = 0.0;
    for (Index i = 0; i < n; ++i)
      s += w(i) * std::abs(y(i) - mean_function(spec.family, eta(i))) * h.row(i).cwiseAbs().maxCoeff();
    return 256.0 * std::numeric_limits<double>::epsilon() * s;
  };

  Vec theta = theta0;
  Vec g = weighted_score(theta);
  double gnorm = g.lpNorm<Eigen::Infinity>();
  for (int iter = 0; iter <= kMaxIterations; ++iter) {
    const double tol = kTolerance * std::max(1.0, theta.lpNorm<Eigen::Infinity>());
    if (gnorm <= tol) return theta;
    if (iter == kMaxIterations) break;

    const Mat neg_jac = -weighted_score_jacobian(spec, which, theta, sample, w);
    Eigen::LDLT<Mat> ldlt(neg_jac);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14))
      fail(ErrorCode::SingularJacobian, "estimating-equation Jacobian is singular");
    const Vec step = ldlt.solve(g);

    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k <= kMaxHalvings; ++k, t *= 0.5) {
      const Vec candidate = theta + t * step;
      const Vec gc = weighted_score(candidate);
      const double gc_norm = gc.lpNorm<Eigen::Infinity>();
      if (std::isfinite(gc_norm) && gc_norm < gnorm) {
        theta = candidate;
        g = gc;
        gnorm = gc_norm;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No step reduces the residual: accept only if it sits at round-off level.
      if (gnorm <= std::max(tol, noise_floor(theta))) return theta;
      break;
    }
  }
  fail(ErrorCode::NoConvergence, "weighted estimating equation did not converge in 100 iterations");
}

}  // namespace mcal
