#include <doctest.h>

#include "helpers.hpp"
#include "instances.hpp"
#include "mcal/calibration.hpp"
#include "mcal/fusion.hpp"

using namespace mcal;
using namespace testing;

TEST_SUITE("el_calibration") {
  TEST_CASE("benchmark already satisfied gives lambda zero") {
    const Vec dt = vec({0.25, 0.25, 0.5});
    const Mat u = mat({{1}, {3}, {-2}});
    const auto r = solve_dual_lambda(CalibrationProblem{dt, u});
    CHECK(r.lambda(0) == 0.0);
    CHECK(r.weights == dt);
    CHECK(r.converged);
    CHECK(r.iterations == 0);
  }

  TEST_CASE("scalar dual solved by hand") {
    const auto r = solve_dual_lambda(CalibrationProblem{vec({0.5, 0.5}), mat({{1}, {-3}})});
    CHECK(std::abs(r.lambda(0) - 1.0 / 3.0) <= 1e-12);
    CHECK(std::abs(r.weights(0) - 0.75) <= 1e-12);
    CHECK(std::abs(r.weights(1) - 0.25) <= 1e-12);
    CHECK(std::abs(r.weights(0) * 1.0 - r.weights(1) * 3.0) <= 1e-12);
  }

  TEST_CASE("zero outside the hull is infeasible") {
    CHECK_THROWS_CODE(solve_dual_lambda(CalibrationProblem{vec({0.5, 0.5}), mat({{1}, {2}})}),
                      ErrorCode::InfeasibleConstraints);
    CHECK_THROWS_CODE(solve_dual_lambda(CalibrationProblem{vec({0.5, 0.25, 0.25}), mat({{1}, {0}, {2}})}),
                      ErrorCode::InfeasibleConstraints);
  }

  TEST_CASE("rank deficient constraints are rejected") {
    CHECK_THROWS_CODE(solve_dual_lambda(CalibrationProblem{vec({0.5, 0.5}), mat({{1, 2}, {-1, -2}})}),
                      ErrorCode::RankDeficientConstraints);
  }

  TEST_CASE("property: dual matches a primal constrained maximizer") {
    std::mt19937_64 rng(501);
    int checked = 0;
    for (int rep = 0; rep < 200; ++rep) {
      const auto inst = instances::random_calibration(rng);
      const auto r = solve_dual_lambda(CalibrationProblem{inst.dtilde, inst.u});
      const Vec primal = oracle::primal_calibration(inst.dtilde, inst.u, inst.feasible);
      CHECK((r.weights - primal).cwiseAbs().maxCoeff() <= 1e-5);
      ++checked;
    }
    CHECK(checked == 200);
  }

  TEST_CASE("property: self-consistency, closed form and KL monotonicity") {
    std::mt19937_64 rng(502);
    for (int rep = 0; rep < 300; ++rep) {
      const auto inst = instances::random_calibration(rng, 40, 3);
      const auto r = solve_dual_lambda(CalibrationProblem{inst.dtilde, inst.u});
      CHECK(r.converged);
      CHECK(std::abs(r.weights.sum() - 1.0) <= 1e-10);
      CHECK(r.weights.minCoeff() > 0.0);
      CHECK((inst.u.transpose() * r.weights).lpNorm<Eigen::Infinity>() <= 1e-10);
      CHECK(r.max_constraint_residual == (inst.u.transpose() * r.weights).lpNorm<Eigen::Infinity>());
      const Vec closed = inst.dtilde.cwiseQuotient(Vec::Ones(inst.u.rows()) - inst.u * r.lambda);
      CHECK((closed - r.weights).cwiseAbs().maxCoeff() <= 1e-12);
      const double kl = calibration_log_ratio(inst.dtilde, r.weights);
      CHECK(kl <= 0.0);
      CHECK(kl < 0.0);
    }
    CHECK(calibration_log_ratio(vec({0.3, 0.7}), vec({0.3, 0.7})) == 0.0);
  }

  TEST_CASE("long double instantiation agrees with double") {
    using LD = long double;
    const VectorX<LD> dt = VectorX<LD>::Constant(2, 0.5L);
    MatrixX<LD> u(2, 1);
    u << 1.0L, -3.0L;
    const auto r = solve_dual_lambda<LD>(dt, u);
    CHECK(static_cast<double>(std::abs(r.lambda(0) - 1.0L / 3.0L)) < 1e-15);
  }

  TEST_CASE("internal benchmark reproduces the uncalibrated estimator") {
    std::mt19937_64 rng(7);
    const auto draw = oracle::linear_draw(rng, 60, vec({1, 2, 1}), 1.5);
    const auto spec = two_covariate_spec();
    const auto s = unknown_sample(draw.x, draw.y, random_weights(rng, 60));
    const Vec alpha1 = solve_weighted_z(s, spec, Model::Reduced, s.design_weights(), Vec::Zero(2));
    const auto est = calibrated_estimate(s, spec, alpha1);
    const Vec uncal = solve_weighted_z(s, spec, Model::Full, s.design_weights(), Vec::Zero(3));
    CHECK(est.calibration.lambda.cwiseAbs().maxCoeff() < 1e-9);
    CHECK((est.beta - uncal).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("calibrated estimate matches primal weights plus weighted least squares") {
    std::mt19937_64 rng(8);
    const auto spec = two_covariate_spec();
    int checked = 0;
    for (int rep = 0; rep < 20; ++rep) {
      const auto draw = oracle::linear_draw(rng, 10, vec({1, 2, 1}), 1.0);
      const Vec d = random_weights(rng, 10);
      const auto s = unknown_sample(draw.x, draw.y, d);
      const Mat z = oracle::design_matrix(draw.x, {true, false});
      // The benchmark is a fit under other positive weights v, so v / sum v
      // is a strictly feasible starting point for the primal search.
      const Vec v = random_weights(rng, 10);
      const Vec alpha_star = oracle::wls(z, v, draw.y);
      const Mat u2 = oracle::scores(false, z, draw.y, alpha_star).u;
      const Vec w = oracle::primal_calibration(d / d.sum(), u2, v / v.sum());
      const Vec beta_ref = oracle::wls(oracle::design_matrix(draw.x, {true, true}), w, draw.y);
      const auto est = calibrated_estimate(s, spec, alpha_star);
      CHECK((est.beta - beta_ref).cwiseAbs().maxCoeff() <= 1e-4);
      CHECK((est.calibration.weights - w).cwiseAbs().maxCoeff() <= 1e-8);
      ++checked;
    }
    CHECK(checked == 20);
  }

  TEST_CASE("property: weight-scale invariance of the calibrated estimator") {
    std::mt19937_64 rng(9);
    const auto spec = two_covariate_spec();
    for (int rep = 0; rep < 20; ++rep) {
      const auto draw = oracle::linear_draw(rng, 80, vec({1, 2, 1}), 1.0);
      const Vec d = random_weights(rng, 80);
      const auto s = unknown_sample(draw.x, draw.y, d);
      const auto s2 = unknown_sample(draw.x, draw.y, 250.0 * d);
      const Vec alpha = solve_weighted_z(s, spec, Model::Reduced, d, Vec::Zero(2)) + vec({0.1, -0.05});
      const auto a = calibrated_estimate(s, spec, alpha);
      const auto b = calibrated_estimate(s2, spec, alpha);
      CHECK((a.calibration.weights - b.calibration.weights).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }

  TEST_CASE("population-scale weights sum to the estimated population size") {
    std::mt19937_64 rng(10);
    const auto draw = oracle::linear_draw(rng, 50, vec({1, 2, 1}), 1.0);
    const auto s = unknown_sample(draw.x, draw.y, random_weights(rng, 50, 10, 40));
    const auto spec = two_covariate_spec();
    const Vec alpha = solve_weighted_z(s, spec, Model::Reduced, s.design_weights(), Vec::Zero(2)) + vec({0.1, 0});
    const auto est = calibrated_estimate(s, spec, alpha);
    const Vec total = population_scaled_weights(est.calibration, s);
    CHECK(std::abs(total.sum() - s.design_weights().sum()) <= 1e-9 * s.design_weights().sum());
  }

  TEST_CASE("multi-source calibration") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> nz(0.0, 1.0);
    const Index n = 300;
    Mat x(n, 3);  // z, x1, x2
    Vec y(n);
    for (Index i = 0; i < n; ++i) {
      x(i, 0) = nz(rng);
      x(i, 1) = 0.5 * x(i, 0) + nz(rng);
      x(i, 2) = nz(rng);
      y(i) = 1 + x(i, 0) + 2 * x(i, 1) - x(i, 2) + nz(rng);
    }
    const auto s = unknown_sample(x, y, random_weights(rng, n));
    const auto full = EstimatingSpec::make(Family::Linear, {true, true, true}, {true, true, false});
    const auto source_b = EstimatingSpec::make(Family::Linear, {true, true, true}, {true, true, false});
    const auto source_c = EstimatingSpec::make(Family::Linear, {true, true, true}, {true, false, true});
    const Vec fit_b = solve_weighted_z(s, source_b, Model::Reduced, s.design_weights(), Vec::Zero(3));
    const Vec fit_c = solve_weighted_z(s, source_c, Model::Reduced, s.design_weights(), Vec::Zero(3));

    SUBCASE("one source equals the two-step estimator") {
      const Vec alpha = fit_b + vec({0.05, -0.02, 0.03});
      const auto a = multi_source_calibrate(s, {{source_b, alpha}}, full);
      const auto b = calibrated_estimate(s, full, alpha);
      CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((a.calibration.weights - b.calibration.weights).cwiseAbs().maxCoeff() <= 1e-12);
    }
    SUBCASE("internal benchmarks leave the design weights alone") {
      const auto a = multi_source_calibrate(s, {{source_b, fit_b}, {source_c, fit_c}}, full);
      CHECK(a.calibration.lambda.cwiseAbs().maxCoeff() < 1e-9);
      CHECK((a.calibration.weights - normalized_weights(s)).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("both stacked blocks are satisfied") {
      const Vec alpha_b = fit_b + vec({0.04, 0.02, -0.03});
      const Vec alpha_c = fit_c + vec({-0.03, 0.01, 0.02});
      const auto a = multi_source_calibrate(s, {{source_b, alpha_b}, {source_c, alpha_c}}, full);
      const Mat ub = score_matrix(source_b, Model::Reduced, alpha_b, s);
      const Mat uc = score_matrix(source_c, Model::Reduced, alpha_c, s);
      CHECK((ub.transpose() * a.calibration.weights).lpNorm<Eigen::Infinity>() <= 1e-10);
      CHECK((uc.transpose() * a.calibration.weights).lpNorm<Eigen::Infinity>() <= 1e-10);
      CHECK(a.calibration.lambda.size() == 6);
    }
    SUBCASE("the same source twice is rank deficient") {
      CHECK_THROWS_CODE(multi_source_calibrate(s, {{source_b, fit_b}, {source_b, fit_b}}, full),
                        ErrorCode::RankDeficientConstraints);
    }
  }
}
