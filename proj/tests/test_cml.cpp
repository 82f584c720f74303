#include <doctest.h>

#include "helpers.hpp"
#include "mcal/cml.hpp"

using namespace mcal;
using namespace testing;

namespace {

struct Linear {
  SurveySample sample;
  EstimatingSpec spec;
  CmlProblem problem;
  Vec beta_mle;
  double s2_full;
  ReducedParams reduced_mle;
};

Linear linear_instance(std::mt19937_64& rng, Index n) {
  const auto draw = oracle::linear_draw(rng, n, vec({1, 2, 1}), 1.5);
  const auto s = unknown_sample(draw.x, draw.y, Vec::Ones(n));
  const auto spec = two_covariate_spec();
  const Mat x = oracle::design_matrix(draw.x, {true, true});
  const Mat z = oracle::design_matrix(draw.x, {true, false});
  const Vec beta = oracle::wls(x, Vec::Ones(n), draw.y);
  const Vec alpha = oracle::wls(z, Vec::Ones(n), draw.y);
  const double s2f = (draw.y - x * beta).squaredNorm() / n;
  const double s2r = (draw.y - z * alpha).squaredNorm() / n;
  ReducedParams red{alpha, s2r};
  return {s, spec, make_cml_problem(s, spec, red), beta, s2f, red};
}

CmlState state_of(const Vec& lambda, const Vec& theta) {
  CmlState st;
  st.lambda = lambda;
  st.theta_f = theta;
  return st;
}

Vec concat(const Vec& a, double b) {
  Vec out(a.size() + 1);
  out << a, b;
  return out;
}

}  // namespace

TEST_SUITE("cml_baseline") {
  TEST_CASE("score at lambda zero and the unconstrained MLE") {
    std::mt19937_64 rng(71);
    auto inst = linear_instance(rng, 120);
    inst.problem.reduced.alpha += vec({0.2, -0.1});
    const auto st = state_of(Vec::Zero(3), concat(inst.beta_mle, inst.s2_full));
    const Vec g = cml_score(st, inst.problem);
    Vec violation = Vec::Zero(3);
    const double s2r = inst.problem.reduced.sigma2;
    for (Index i = 0; i < inst.problem.y.size(); ++i) {
      const Vec z = inst.problem.z.row(i).transpose();
      const double gap = inst.problem.x.row(i).dot(inst.beta_mle) - z.dot(inst.problem.reduced.alpha);
      violation.head(2) += gap * z / s2r;
      violation(2) += -0.5 / s2r + (inst.s2_full + gap * gap) / (2 * s2r * s2r);
    }
    CHECK((g.head(3) - violation).cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, violation.cwiseAbs().maxCoeff()));
    CHECK(g.tail(4).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("score vanishes at the truth on exact data") {
    const Mat xcov = mat({{0.5, 1}, {1.5, -2}, {2.5, 0.3}, {3, 4}, {-1, 2}});
    Vec y(5);
    for (Index i = 0; i < 5; ++i) y(i) = 1 + 2 * xcov(i, 0);
    const auto s = unknown_sample(xcov, y, Vec::Ones(5));
    const double sigma2 = 1e-4;
    const auto pb = make_cml_problem(s, two_covariate_spec(), ReducedParams{vec({1, 2}), sigma2});
    const Vec g = cml_score(state_of(Vec::Zero(3), vec({1, 2, 0, sigma2})), pb);
    CHECK(g.head(6).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(g(6) + 5.0 / (2.0 * sigma2)) < 1e-6);
  }

  TEST_CASE("at lambda zero the parameter block is the classical likelihood score") {
    std::mt19937_64 rng(72);
    std::normal_distribution<double> z(0.0, 1.0);
    auto inst = linear_instance(rng, 50);
    const Vec beta = inst.beta_mle + vec({0.1, -0.2, 0.05});
    const double s2 = 1.7;
    const Vec g = cml_score(state_of(Vec::Zero(3), concat(beta, s2)), inst.problem);
    Vec classical = Vec::Zero(4);
    for (Index i = 0; i < 50; ++i) {
      const Vec xi = inst.problem.x.row(i).transpose();
      const double res = inst.problem.y(i) - xi.dot(beta);
      classical.head(3) += res * xi / s2;
      classical(3) += -0.5 / s2 + res * res / (2 * s2 * s2);
    }
    CHECK((g.tail(4) - classical).cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, classical.cwiseAbs().maxCoeff()));

    const auto draw = oracle::logistic_draw(rng, 80, vec({-0.5, 0.3, -0.1}));
    const auto s = unknown_sample(draw.x, draw.y, Vec::Ones(80));
    const auto pb = make_cml_problem(s, two_covariate_spec(Family::Logistic), ReducedParams{vec({-0.4, 0.2}), 0});
    const Vec b = vec({-0.3, 0.2, -0.2});
    const Vec gl = cml_score(state_of(Vec::Zero(2), b), pb);
    Vec cl = Vec::Zero(3);
    for (Index i = 0; i < 80; ++i) {
      const Vec xi = pb.x.row(i).transpose();
      cl += (pb.y(i) - oracle::expit(xi.dot(b))) * xi;
    }
    CHECK((gl.tail(3) - cl).cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, cl.cwiseAbs().maxCoeff()));
  }

  TEST_CASE("property: analytic information matches finite differences") {
    std::mt19937_64 rng(73);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int rep = 0; rep < 40; ++rep) {
      CmlProblem pb;
      CmlState st;
      if (rep % 2 == 0) {
        auto inst = linear_instance(rng, 60);
        pb = inst.problem;
        pb.reduced.alpha += vec({0.3 * z(rng), 0.1 * z(rng)});
        st = state_of(0.01 * vec({z(rng), z(rng), z(rng)}), concat(inst.beta_mle + 0.1 * vec({z(rng), z(rng), z(rng)}),
                                                                 inst.s2_full * (1.0 + 0.2 * std::abs(z(rng)))));
      } else {
        const auto draw = oracle::logistic_draw(rng, 100, vec({-0.5, 0.3, -0.1}));
        pb = make_cml_problem(unknown_sample(draw.x, draw.y, Vec::Ones(100)), two_covariate_spec(Family::Logistic),
                              ReducedParams{vec({-0.4 + 0.1 * z(rng), 0.2}), 0});
        st = state_of(0.3 * vec({z(rng), z(rng)}), vec({-0.5, 0.3, -0.1}) + 0.2 * vec({z(rng), z(rng), z(rng)}));
      }
      REQUIRE(cml_feasible(st, pb));
      const Index L = pb.lambda_dim();
      const Mat info = cml_information(st, pb);
      const Mat fd = -oracle::fd_jacobian([&](const Vec& e) { return cml_score(CmlState::from_eta(e, L), pb); },
                                          st.eta(), 1e-6);
      const double scale = std::max(1.0, info.cwiseAbs().maxCoeff());
      CHECK((info - fd).cwiseAbs().maxCoeff() / scale < 1e-5);
    }
  }

  TEST_CASE("self-consistent benchmark leaves the MLE in place") {
    std::mt19937_64 rng(74);
    auto inst = linear_instance(rng, 150);
    const auto fit = cml_fit(inst.sample, inst.spec, inst.reduced_mle);
    REQUIRE(fit.ok());
    CHECK(fit.state.lambda.cwiseAbs().maxCoeff() < 1e-8);
    CHECK((*fit.beta - inst.beta_mle).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("property: feasibility holds at every accepted iterate") {
    std::mt19937_64 rng(75);
    std::normal_distribution<double> z(0.0, 1.0);
    int fits = 0;
    for (int rep = 0; rep < 40; ++rep) {
      CmlFit fit;
      if (rep % 2 == 0) {
        auto inst = linear_instance(rng, 200);
        ReducedParams red = inst.reduced_mle;
        red.alpha += vec({0.3 * z(rng), 0.1 * z(rng)});
        red.sigma2 *= 1.0 + 0.1 * z(rng) * z(rng);
        fit = cml_fit(inst.sample, inst.spec, red);
      } else {
        const auto draw = oracle::logistic_draw(rng, 300, vec({-0.5, 0.3, -0.1}));
        fit = cml_fit(unknown_sample(draw.x, draw.y, Vec::Ones(300)), two_covariate_spec(Family::Logistic),
                      ReducedParams{vec({-0.5 + 0.1 * z(rng), 0.3 + 0.05 * z(rng)}), 0});
      }
      for (double m : fit.margin_history) CHECK(m > 0.0);
      if (fit.ok()) {
        ++fits;
        CHECK(fit.state.feasible);
      } else {
        CHECK(!fit.failure.empty());
      }
    }
    CHECK(fits > 30);
  }

  TEST_CASE("an infeasible start is reported as NA") {
    std::mt19937_64 rng(76);
    auto inst = linear_instance(rng, 30);
    auto st = state_of(Vec::Zero(3), concat(inst.beta_mle, -1.0));
    const auto fit = cml_fit(inst.problem, st);
    CHECK(!fit.ok());
    CHECK(fit.failure == "infeasible start");
    CHECK_THROWS_CODE(cml_score(st, inst.problem), ErrorCode::InfeasibleState);
  }
}
