#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "mcal/core.hpp"

namespace mcal {

/// Empirical-likelihood calibration: maximize sum_i dtilde_i log w_i subject
/// to sum_i w_i = 1 and sum_i w_i u_i = 0. Row i of `constraints` is u_i
/// (several constraint blocks may be stacked side by side).
struct CalibrationProblem {
  Vec dtilde;
  Mat constraints;
};

template <typename Scalar>
struct CalibrationResultT {
  VectorX<Scalar> weights;
  VectorX<Scalar> lambda;
  int iterations = 0;
  Scalar max_constraint_residual = Scalar(0);
  bool converged = false;
};

using CalibrationResult = CalibrationResultT<double>;

namespace detail {

template <typename Scalar>
struct DualPoint {
  VectorX<Scalar> margin;  // 1 - lambda^T u_i
  VectorX<Scalar> residual;
  Scalar objective;  // -sum dtilde log(margin), convex in lambda
};

template <typename Scalar>
bool evaluate_dual(const VectorX<Scalar>& dtilde, const MatrixX<Scalar>& u, const VectorX<Scalar>& lambda,
                   Scalar min_margin, DualPoint<Scalar>& out) {
  using std::log;
  out.margin = VectorX<Scalar>::Ones(u.rows()) - u * lambda;
  if (!(out.margin.minCoeff() >= min_margin)) return false;
  const VectorX<Scalar> ratio = dtilde.cwiseQuotient(out.margin);
  out.residual = u.transpose() * ratio;
  out.objective = Scalar(0);
  for (Index i = 0; i < u.rows(); ++i) out.objective -= dtilde(i) * log(out.margin(i));
  return true;
}

}  // namespace detail

/// Damped Newton on the multiplier of the calibration dual, starting at
/// lambda = 0. Every accepted iterate keeps 1 - lambda^T u_i >= 1e-8.
/// Weights are recovered as dtilde_i / (1 - lambda^T u_i).
template <typename Scalar>
CalibrationResultT<Scalar> solve_dual_lambda(const VectorX<Scalar>& dtilde, const MatrixX<Scalar>& u) {
  constexpr const char* kModule = "el_calibration";
  constexpr int kMaxIterations = 100;
  constexpr int kMaxHalvings = 30;
  const Scalar kTolerance = Scalar(1e-10);
  const Scalar kMinMargin = Scalar(1e-8);
  // A KL gap this large means the weights collapsed towards a face of the hull.
  const Scalar kDivergedObjective = Scalar(-40);

  const Index n = u.rows();
  const Index q = u.cols();
  if (n == 0 || q == 0) throw Error(ErrorCode::InvalidArgument, kModule, "empty calibration problem");
  if (dtilde.size() != n)
    throw Error(ErrorCode::DimensionMismatch, kModule, "constraint rows differ from number of weights");
  if (!dtilde.allFinite() || !u.allFinite())
    throw Error(ErrorCode::NonFiniteInput, kModule, "calibration problem contains non-finite values");
  if ((dtilde.array() <= Scalar(0)).any())
    throw Error(ErrorCode::InvalidArgument, kModule, "normalized design weights must be positive");
  using std::abs;
  if (abs(dtilde.sum() - Scalar(1)) > Scalar(1e-12))
    throw Error(ErrorCode::InvalidArgument, kModule, "normalized design weights must sum to one");

  {
    Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr(u);
    qr.setThreshold(Scalar(1e-12));
    if (qr.rank() < q)
      throw Error(ErrorCode::RankDeficientConstraints, kModule, "stacked constraint matrix is rank deficient");
  }

  CalibrationResultT<Scalar> result;
  VectorX<Scalar> lambda = VectorX<Scalar>::Zero(q);
  detail::DualPoint<Scalar> point;
  detail::evaluate_dual(dtilde, u, lambda, kMinMargin, point);

  auto noise_floor = [&](const detail::DualPoint<Scalar>& p) {
    const VectorX<Scalar> ratio = dtilde.cwiseQuotient(p.margin);
    return Scalar(256) * std::numeric_limits<Scalar>::epsilon() * (u.cwiseAbs().transpose() * ratio).maxCoeff();
  };
  auto is_converged = [&](const detail::DualPoint<Scalar>& p, const VectorX<Scalar>& lam, Scalar floor) {
    const Scalar tol = std::max(kTolerance, floor);
    return p.residual.template lpNorm<Eigen::Infinity>() <= tol && abs(lam.dot(p.residual)) <= tol;
  };

  bool converged = false;
  bool stalled = false;
  int iter = 0;
  for (; iter <= kMaxIterations; ++iter) {
    if (is_converged(point, lambda, Scalar(0))) {
      converged = true;
      break;
    }
    if (iter == kMaxIterations) break;
    if (point.objective < kDivergedObjective) break;

    const VectorX<Scalar> curvature = dtilde.cwiseQuotient(point.margin.cwiseAbs2());
    const MatrixX<Scalar> hessian = u.transpose() * (u.array().colwise() * curvature.array()).matrix();
    Eigen::LDLT<MatrixX<Scalar>> ldlt(hessian);
    if (ldlt.info() != Eigen::Success)
      throw Error(ErrorCode::RankDeficientConstraints, kModule, "dual Hessian is singular");
    const VectorX<Scalar> step = -ldlt.solve(point.residual);
    const Scalar slope = point.residual.dot(step);
    const Scalar rnorm = point.residual.template lpNorm<Eigen::Infinity>();

    Scalar t = Scalar(1);
    bool accepted = false;
    detail::DualPoint<Scalar> trial;
    for (int k = 0; k <= kMaxHalvings; ++k, t *= Scalar(0.5)) {
      const VectorX<Scalar> candidate = lambda + t * step;
      if (!detail::evaluate_dual(dtilde, u, candidate, kMinMargin, trial)) continue;
      const bool residual_drop = trial.residual.template lpNorm<Eigen::Infinity>() < rnorm;
      const bool armijo = trial.objective <= point.objective + Scalar(1e-4) * t * slope;
      if (residual_drop || (armijo && trial.objective < point.objective)) {
        lambda = candidate;
        point = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      stalled = true;
      break;
    }
  }
  if (!converged && (stalled || iter == kMaxIterations)) converged = is_converged(point, lambda, noise_floor(point));

  result.iterations = iter;
  result.lambda = lambda;
  result.weights = dtilde.cwiseQuotient(point.margin);
  result.max_constraint_residual = (u.transpose() * result.weights).template lpNorm<Eigen::Infinity>();
  result.converged = converged;
  if (!converged) {
    const Scalar total = result.weights.sum();
    if (point.objective < kDivergedObjective || abs(total - Scalar(1)) > Scalar(1e-6))
      throw Error(ErrorCode::InfeasibleConstraints, kModule,
                  "benchmark lies outside the interior of the convex hull of the constraint rows");
    throw Error(ErrorCode::NoConvergence, kModule, "calibration dual did not converge");
  }
  return result;
}

CalibrationResult solve_dual_lambda(const CalibrationProblem& problem);

struct CalibratedEstimate {
  Vec beta;
  CalibrationResult calibration;
};

/// Two-step estimator: calibrate the weights to the reduced-model scores at
/// `alpha_star`, then solve the full-model equation with those weights. An
/// empty `beta0` starts from the uncalibrated design-weighted estimate.
CalibratedEstimate calibrated_estimate(const SurveySample& sample, const EstimatingSpec& spec, const Vec& alpha_star,
                                       const Vec& beta0 = Vec());

/// One external source: its working model (family and reduced_mask of
/// `spec`) evaluated on the internal covariates at `benchmark`.
struct BenchmarkConstraint {
  EstimatingSpec spec;
  Vec benchmark;
};

CalibratedEstimate multi_source_calibrate(const SurveySample& sample_a, const std::vector<BenchmarkConstraint>& sources,
                                          const EstimatingSpec& spec_full, const Vec& beta0 = Vec());

/// Weights on the population-total scale (sum equal to the HT estimate of N).
Vec population_scaled_weights(const CalibrationResult& result, const SurveySample& sample);

/// sum_i dtilde_i log(w_i / dtilde_i); never positive.
double calibration_log_ratio(const Vec& dtilde, const Vec& weights);

}  // namespace mcal
