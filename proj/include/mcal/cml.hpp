#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mcal/core.hpp"

namespace mcal {

/// Benchmark for the constrained likelihood: reduced-model coefficients and,
/// for the linear family, the reduced-model residual variance.
struct ReducedParams {
  Vec alpha;
  double sigma2 = 0.0;
};

/// Unweighted data for the constrained likelihood fit. Rows of `x` and `z`
/// are the full and reduced regressors (1, x_masked).
struct CmlProblem {
  Family family = Family::Linear;
  Mat x;
  Mat z;
  Vec y;
  ReducedParams reduced;

  Index theta_dim() const { return x.cols() + (family == Family::Linear ? 1 : 0); }
  Index lambda_dim() const { return z.cols() + (family == Family::Linear ? 1 : 0); }
};

CmlProblem make_cml_problem(const SurveySample& sample, const EstimatingSpec& spec, const ReducedParams& reduced);

/// eta = (lambda, theta_f) with theta_f = (beta, sigma2_full) for the linear
/// family and beta for the logistic family.
struct CmlState {
  Vec lambda;
  Vec theta_f;
  int step_count = 0;
  bool feasible = false;

  Vec eta() const;
  static CmlState from_eta(const Vec& eta, Index lambda_dim);
};

/// 1 - lambda^T u_i for every unit.
Vec cml_margins(const CmlState& state, const CmlProblem& problem);
bool cml_feasible(const CmlState& state, const CmlProblem& problem);

/// Gradient of sum log f(y | x; theta_f) - sum log(1 - lambda^T u_i), in the
/// (lambda, theta_f) order.
Vec cml_score(const CmlState& state, const CmlProblem& problem);
/// Negative Hessian of the same objective.
Mat cml_information(const CmlState& state, const CmlProblem& problem);

struct CmlFit {
  std::optional<Vec> beta;  // empty when the algorithm returned NA
  CmlState state;
  int iterations = 0;
  std::string failure;
  /// Smallest 1 - lambda^T u_i after each accepted step.
  std::vector<double> margin_history;

  bool ok() const { return beta.has_value(); }
};

/// Modified Newton-Raphson from lambda = 0 and the design-weighted fit;
/// halves steps that leave the feasible region and reports NA instead of
/// throwing when it cannot proceed.
CmlFit cml_fit(const SurveySample& sample, const EstimatingSpec& spec, const ReducedParams& reduced);
CmlFit cml_fit(const CmlProblem& problem, const CmlState& start);

}  // namespace mcal
