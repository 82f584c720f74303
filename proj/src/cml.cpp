#include "mcal/cml.hpp"

#include <cmath>

namespace mcal {

namespace {

constexpr const char* kModule = "cml_baseline";
constexpr int kMaxIterations = 100;
constexpr int kMaxHalvings = 30;
constexpr double kTolerance = 1e-8;

// Per-unit pieces of the constrained likelihood.
struct UnitTerms {
  Vec u;         // constraint function, length L
  Mat c;         // d u^T / d theta_f, T x L
  Vec s;         // d log f / d theta_f
  Mat info;      // -d^2 log f / d theta_f d theta_f^T
  Mat h_lambda;  // d^2 (lambda^T u) / d theta_f d theta_f^T
};

void unit_terms(const CmlProblem& pb, const CmlState& st, Index i, UnitTerms& t) {
  const Index q1 = pb.x.cols();
  const Index q2 = pb.z.cols();
  const Index T = pb.theta_dim();
  const Index L = pb.lambda_dim();
  const auto x = pb.x.row(i).transpose();
  const auto z = pb.z.row(i).transpose();
  const double y = pb.y(i);
  const auto beta = st.theta_f.head(q1);
  t.u.resize(L);
  t.c.setZero(T, L);
  t.s.resize(T);
  t.info.setZero(T, T);
  t.h_lambda.setZero(T, T);

  if (pb.family == Family::Linear) {
    const double s2f = st.theta_f(q1);
    const double s2r = pb.reduced.sigma2;
    const double gap = x.dot(beta) - z.dot(pb.reduced.alpha);
    const double res = y - x.dot(beta);
    t.u.head(q2) = gap * z / s2r;
    t.u(q2) = -0.5 / s2r + (s2f + gap * gap) / (2.0 * s2r * s2r);
    t.c.topLeftCorner(q1, q2) = x * z.transpose() / s2r;
    t.c.block(0, q2, q1, 1) = gap * x / (s2r * s2r);
    t.c(q1, q2) = 0.5 / (s2r * s2r);
    t.s.head(q1) = res * x / s2f;
    t.s(q1) = -0.5 / s2f + res * res / (2.0 * s2f * s2f);
    t.info.topLeftCorner(q1, q1) = x * x.transpose() / s2f;
    t.info.block(0, q1, q1, 1) = res * x / (s2f * s2f);
    t.info.block(q1, 0, 1, q1) = res * x.transpose() / (s2f * s2f);
    t.info(q1, q1) = res * res / (s2f * s2f * s2f) - 0.5 / (s2f * s2f);
    t.h_lambda.topLeftCorner(q1, q1) = st.lambda(q2) / (s2r * s2r) * x * x.transpose();
  } else {
    const double p = expit(x.dot(beta));
    const double p1 = expit(z.dot(pb.reduced.alpha));
    const double v = p * (1.0 - p);
    t.u = (p - p1) * z;
    t.c = v * x * z.transpose();
    t.s = (y - p) * x;
    t.info = v * x * x.transpose();
    t.h_lambda = st.lambda.dot(z) * v * (1.0 - 2.0 * p) * x * x.transpose();
  }
}

void check_state(const CmlState& st, const CmlProblem& pb) {
  if (st.lambda.size() != pb.lambda_dim() || st.theta_f.size() != pb.theta_dim())
    throw Error(ErrorCode::DimensionMismatch, kModule, "state dimension differs from problem");
  if (!cml_feasible(st, pb)) throw Error(ErrorCode::InfeasibleState, kModule, "state violates 1 - lambda^T u > 0");
}

}  // namespace

CmlProblem make_cml_problem(const SurveySample& sample, const EstimatingSpec& spec, const ReducedParams& reduced) {
  spec.validate_for(sample.dim());
  CmlProblem pb;
  pb.family = spec.family;
  pb.x = regressor_matrix(spec, Model::Full, sample.covariates());
  pb.z = regressor_matrix(spec, Model::Reduced, sample.covariates());
  pb.y = sample.response();
  pb.reduced = reduced;
  if (reduced.alpha.size() != pb.z.cols())
    throw Error(ErrorCode::DimensionMismatch, kModule, "reduced coefficients differ from q2");
  if (spec.family == Family::Linear && !(reduced.sigma2 > 0.0))
    throw Error(ErrorCode::InvalidArgument, kModule, "reduced residual variance must be positive");
  return pb;
}

Vec CmlState::eta() const {
  Vec e(lambda.size() + theta_f.size());
  e << lambda, theta_f;
  return e;
}

CmlState CmlState::from_eta(const Vec& eta, Index lambda_dim) {
  CmlState s;
  s.lambda = eta.head(lambda_dim);
  s.theta_f = eta.tail(eta.size() - lambda_dim);
  return s;
}

Vec cml_margins(const CmlState& state, const CmlProblem& problem) {
  Vec m(problem.y.size());
  UnitTerms t;
  for (Index i = 0; i < m.size(); ++i) {
    unit_terms(problem, state, i, t);
    m(i) = 1.0 - state.lambda.dot(t.u);
  }
  return m;
}

bool cml_feasible(const CmlState& state, const CmlProblem& problem) {
  if (!state.lambda.allFinite() || !state.theta_f.allFinite()) return false;
  if (problem.family == Family::Linear && !(state.theta_f(problem.x.cols()) > 0.0)) return false;
  return cml_margins(state, problem).minCoeff() > 0.0;
}

Vec cml_score(const CmlState& state, const CmlProblem& problem) {
  check_state(state, problem);
  const Index L = problem.lambda_dim();
  const Index T = problem.theta_dim();
  Vec g = Vec::Zero(L + T);
  UnitTerms t;
  for (Index i = 0; i < problem.y.size(); ++i) {
    unit_terms(problem, state, i, t);
    const double m = 1.0 - state.lambda.dot(t.u);
    g.head(L) += t.u / m;
    g.tail(T) += t.s + t.c * state.lambda / m;
  }
  return g;
}

Mat cml_information(const CmlState& state, const CmlProblem& problem) {
  check_state(state, problem);
  const Index L = problem.lambda_dim();
  const Index T = problem.theta_dim();
  Mat info = Mat::Zero(L + T, L + T);
  UnitTerms t;
  for (Index i = 0; i < problem.y.size(); ++i) {
    unit_terms(problem, state, i, t);
    const double m = 1.0 - state.lambda.dot(t.u);
    const Vec s_lambda = t.u / m;
    const Vec s_tilde = t.c * state.lambda / m;
    info.topLeftCorner(L, L) -= s_lambda * s_lambda.transpose();
    const Mat cross = -(t.c / m + s_tilde * s_lambda.transpose());
    info.bottomLeftCorner(T, L) += cross;
    info.topRightCorner(L, T) += cross.transpose();
    info.bottomRightCorner(T, T) += t.info - t.h_lambda / m - s_tilde * s_tilde.transpose();
  }
  return info;
}

CmlFit cml_fit(const CmlProblem& problem, const CmlState& start) {
  CmlFit fit;
  fit.state = start;
  const Index L = problem.lambda_dim();
  const Index q1 = problem.x.cols();
  if (!cml_feasible(start, problem)) {
    fit.failure = "infeasible start";
    return fit;
  }
  Vec eta = start.eta();
  CmlState st = start;
  st.feasible = true;
  for (int iter = 0; iter <= kMaxIterations; ++iter) {
    const Vec g = cml_score(st, problem);
    fit.iterations = iter;
    if (!g.allFinite()) {
      fit.failure = "non-finite score";
      break;
    }
    if (g.lpNorm<Eigen::Infinity>() <= kTolerance) {
      fit.state = st;
      fit.beta = st.theta_f.head(q1);
      return fit;
    }
    if (iter == kMaxIterations) {
      fit.failure = "iteration limit";
      break;
    }
    Eigen::PartialPivLU<Mat> lu(cml_information(st, problem));
    if (!(lu.rcond() > 1e-14)) {
      fit.failure = "singular information";
      break;
    }
    const Vec delta = lu.solve(g);
    bool accepted = false;
    double t = 1.0;
    for (int h = 0; h <= kMaxHalvings; ++h, t *= 0.5) {
      CmlState trial = CmlState::from_eta(eta + t * delta, L);
      if (cml_feasible(trial, problem)) {
        trial.feasible = true;
        trial.step_count = st.step_count + 1;
        st = trial;
        eta = st.eta();
        fit.margin_history.push_back(cml_margins(st, problem).minCoeff());
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      fit.failure = "halving limit";
      break;
    }
  }
  fit.state = st;
  return fit;
}

CmlFit cml_fit(const SurveySample& sample, const EstimatingSpec& spec, const ReducedParams& reduced) {
  const CmlProblem problem = make_cml_problem(sample, spec, reduced);
  const Index q1 = problem.x.cols();
  CmlState start;
  start.lambda = Vec::Zero(problem.lambda_dim());
  start.theta_f.resize(problem.theta_dim());
  const Vec& d = sample.design_weights();
  const Vec beta = solve_weighted_z(sample, spec, Model::Full, d, Vec::Zero(q1));
  start.theta_f.head(q1) = beta;
  if (problem.family == Family::Linear) {
    const Vec res = problem.y - problem.x * beta;
    start.theta_f(q1) = d.dot(res.cwiseAbs2()) / d.sum();
  }
  return cml_fit(problem, start);
}

}  // namespace mcal
