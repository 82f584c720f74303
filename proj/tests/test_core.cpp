#include <doctest.h>

#include "helpers.hpp"
#include "mcal/core.hpp"

using namespace mcal;
using namespace testing;

namespace {

UnitRecord unit_of(std::initializer_list<double> x, double y) {
  UnitRecord u;
  u.covariates = vec(x);
  u.response = y;
  return u;
}

}  // namespace

TEST_SUITE("domain_core") {
  TEST_CASE("score at an exact fit is zero") {
    const auto spec = two_covariate_spec();
    const Vec u = eval_score(spec, Model::Full, vec({1, 2, 1}), unit_of({3, 11}, 18));
    CHECK(u.isZero(0.0));
    CHECK(u.size() == 3);
  }

  TEST_CASE("logistic reduced score at theta zero") {
    const auto spec = two_covariate_spec(Family::Logistic);
    const Vec u = eval_score(spec, Model::Reduced, vec({0, 0}), unit_of({5, 7}, 1));
    CHECK(u(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(u(1) == doctest::Approx(2.5).epsilon(1e-15));
  }

  TEST_CASE("linear reduced score by hand") {
    const auto spec = two_covariate_spec();
    const Vec u = eval_score(spec, Model::Reduced, vec({0, 1}), unit_of({2, 9}, 5));
    CHECK(u(0) == 3.0);
    CHECK(u(1) == 6.0);
  }

  TEST_CASE("score dimension and finiteness errors") {
    const auto spec = two_covariate_spec();
    CHECK_THROWS_CODE(eval_score(spec, Model::Full, vec({1, 2}), unit_of({1, 1}, 1)), ErrorCode::DimensionMismatch);
    CHECK_THROWS_CODE(eval_score(spec, Model::Full, vec({1, 2, 3}), unit_of({1}, 1)), ErrorCode::DimensionMismatch);
    CHECK_THROWS_CODE(eval_score(spec, Model::Full, vec({1, 2, 3}), unit_of({1, NAN}, 1)), ErrorCode::NonFiniteInput);
  }

  TEST_CASE("score Jacobian closed forms") {
    const auto lin = EstimatingSpec::make(Family::Linear, {true}, {true});
    const Mat j = eval_score_jacobian(lin, Model::Full, vec({0.3, -0.2}), unit_of({2}, 1));
    CHECK(j.isApprox(mat({{-1, -2}, {-2, -4}}), 0.0));
    const auto logit = EstimatingSpec::make(Family::Logistic, {true}, {true});
    const Mat jl = eval_score_jacobian(logit, Model::Full, vec({0, 0}), unit_of({0}, 1));
    CHECK(jl(0, 0) == -0.25);
    CHECK(jl(0, 1) == 0.0);
    CHECK(jl(1, 1) == 0.0);
  }

  TEST_CASE("score Jacobian matches central differences") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> z(0.0, 1.0);
    for (Family family : {Family::Linear, Family::Logistic}) {
      const auto spec = EstimatingSpec::make(family, {true, true, true}, {true, false, true});
      for (int draw = 0; draw < 100; ++draw) {
        UnitRecord unit = unit_of({z(rng), 2.0 * z(rng), z(rng)}, family == Family::Linear ? z(rng) : draw % 2);
        for (Model which : {Model::Full, Model::Reduced}) {
          Vec theta(spec.dimension(which));
          for (Index k = 0; k < theta.size(); ++k) theta(k) = 0.7 * z(rng);
          const Mat analytic = eval_score_jacobian(spec, which, theta, unit);
          const Mat fd = oracle::fd_jacobian([&](const Vec& t) { return eval_score(spec, which, t, unit); }, theta, 1e-5);
          CHECK((analytic - fd).cwiseAbs().maxCoeff() < 1e-6);
        }
      }
    }
  }

  TEST_CASE("normalized weights") {
    const Mat x = Mat::Ones(3, 1);
    CHECK(normalized_weights(unknown_sample(x, Vec::Zero(3), vec({2, 2, 2}))).isApprox(Vec::Constant(3, 1.0 / 3.0)));
    CHECK(normalized_weights(unknown_sample(Mat::Ones(2, 1), Vec::Zero(2), vec({1, 3}))) == vec({0.25, 0.75}));
    const Vec w = normalized_weights(unknown_sample(x, Vec::Zero(3), vec({10, 30, 60})));
    CHECK((w - vec({0.1, 0.3, 0.6})).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("normalized weights are invariant to rescaling") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 50; ++rep) {
      const Vec d = random_weights(rng, 20);
      const Mat x = Mat::Ones(20, 1);
      const Vec a = normalized_weights(unknown_sample(x, Vec::Zero(20), d));
      for (double c : {1e-3, 0.5, 7.0, 1e4}) {
        const Vec b = normalized_weights(unknown_sample(x, Vec::Zero(20), c * d));
        CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-14);
        CHECK(std::abs(b.sum() - 1.0) <= 1e-12);
      }
    }
  }

  TEST_CASE("weighted Z-estimation interpolates exact data") {
    const auto spec = two_covariate_spec();
    const Mat x = mat({{0, 1}, {1, 0}, {2, 5}});
    Vec y(3);
    for (Index i = 0; i < 3; ++i) y(i) = 1 + 2 * x(i, 0) + x(i, 1);
    const auto s = unknown_sample(x, y, Vec::Ones(3));
    const Vec theta = solve_weighted_z(s, spec, Model::Full, s.design_weights(), Vec::Zero(3));
    CHECK((theta - vec({1, 2, 1})).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("weighted Z-estimation equals weighted least squares") {
    const auto spec = two_covariate_spec();
    const Mat x = mat({{0.2, 1.5}, {1.1, -0.4}, {2.3, 0.8}, {-0.7, 2.2}, {1.6, 1.1}});
    const Vec y = vec({1.4, 3.9, 6.1, -0.3, 4.4});
    const Vec d = vec({1, 4, 2.5, 3, 7});
    const auto s = unknown_sample(x, y, d);
    const Vec theta = solve_weighted_z(s, spec, Model::Full, d, Vec::Zero(3));
    const Vec ref = oracle::wls(oracle::design_matrix(x, {true, true}), d, y);
    CHECK(oracle::max_rel_diff(theta, ref) < 1e-8);
  }

  TEST_CASE("logistic fit on symmetric data has zero intercept") {
    const auto spec = EstimatingSpec::make(Family::Logistic, {true}, {true});
    const Mat x = mat({{-2}, {-1}, {-0.5}, {0.5}, {1}, {2}});
    const Vec y = vec({0, 1, 0, 1, 0, 1});
    const auto s = unknown_sample(x, y, Vec::Ones(6));
    const Vec theta = solve_weighted_z(s, spec, Model::Full, s.design_weights(), Vec::Zero(2));
    CHECK(std::abs(theta(0)) < 1e-10);
  }

  TEST_CASE("property: linear Z-estimation matches WLS on random full-rank instances") {
    std::mt19937_64 rng(21);
    const auto spec = EstimatingSpec::make(Family::Linear, {true, true, true}, {true, false, false});
    for (int rep = 0; rep < 100; ++rep) {
      const auto draw = oracle::linear_draw(rng, 12, vec({0.5, 1, -2, 0.3}), 0.7);
      const Vec d = random_weights(rng, 12);
      const auto s = unknown_sample(draw.x, draw.y, d);
      const Vec theta = solve_weighted_z(s, spec, Model::Full, d, Vec::Zero(4));
      const Vec ref = oracle::wls(oracle::design_matrix(draw.x, {true, true, true}), d, draw.y);
      CHECK(oracle::max_rel_diff(theta, ref) < 1e-8);
    }
  }

  TEST_CASE("property: Z-estimation is invariant to rescaling the weights") {
    std::mt19937_64 rng(22);
    for (Family family : {Family::Linear, Family::Logistic}) {
      const auto spec = two_covariate_spec(family);
      for (int rep = 0; rep < 30; ++rep) {
        const auto draw = family == Family::Linear ? oracle::linear_draw(rng, 40, vec({1, 2, 1}), 1.0)
                                                   : oracle::logistic_draw(rng, 200, vec({-0.5, 0.8, -0.4}));
        const Vec d = random_weights(rng, draw.y.size());
        const auto s = unknown_sample(draw.x, draw.y, d);
        const Vec a = solve_weighted_z(s, spec, Model::Full, d, Vec::Zero(3));
        const Vec b = solve_weighted_z(s, spec, Model::Full, 123.0 * d, Vec::Zero(3));
        CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-10);
      }
    }
  }

  TEST_CASE("singular design is reported") {
    const auto spec = two_covariate_spec();
    const Mat x = mat({{1, 2}, {2, 4}, {3, 6}});
    const auto s = unknown_sample(x, vec({1, 2, 3}), Vec::Ones(3));
    CHECK_THROWS_CODE(solve_weighted_z(s, spec, Model::Full, Vec::Ones(3), Vec::Zero(3)), ErrorCode::SingularJacobian);
  }

  TEST_CASE("Horvitz-Thompson totals") {
    CHECK(ht_total(unknown_sample(Mat::Ones(2, 1), Vec::Zero(2), vec({2, 2})), vec({1, 1})) == 4.0);
    CHECK(ht_total(unknown_sample(Mat::Ones(2, 1), Vec::Zero(2), vec({10, 20})), vec({0.5, 0.25})) == 10.0);
    CHECK(ht_total(unknown_sample(Mat::Ones(2, 1), Vec::Zero(2), vec({10, 20})), Vec::Zero(2)) == 0.0);
    CHECK_THROWS_CODE(ht_total(unknown_sample(Mat::Ones(2, 1), Vec::Zero(2), vec({1, 1})), Vec::Zero(3)),
                      ErrorCode::DimensionMismatch);
  }

  TEST_CASE("sample invariants are enforced") {
    const Mat x = Mat::Ones(2, 1);
    CHECK_THROWS_CODE(unknown_sample(x, Vec::Zero(2), vec({1, 0})), ErrorCode::WeightNonPositive);
    CHECK_THROWS_CODE(unknown_sample(x, Vec::Zero(2), vec({1, -2})), ErrorCode::WeightNonPositive);
    CHECK_THROWS_CODE(SurveySample(x, Vec::Zero(2), vec({2, 4}), vec({0.5, 0.3}), Design::poisson()),
                      ErrorCode::InclusionMismatch);
    CHECK_NOTHROW(SurveySample(x, Vec::Zero(2), vec({2, 4}), vec({0.5, 0.25}), Design::poisson()));
    CHECK_THROWS_CODE(SurveySample(x, Vec::Zero(2), vec({5, 6}), Vec(), Design::srs(10)), ErrorCode::InvalidArgument);
    CHECK_THROWS_CODE(unknown_sample(mat({{1}, {NAN}}), Vec::Zero(2), vec({1, 1})), ErrorCode::NonFiniteInput);
    CHECK_THROWS_CODE(SurveySample::from_units({}, Design::unknown()), ErrorCode::InvalidArgument);
    CHECK_THROWS_CODE(SurveySample::from_units({unit_of({1}, 0), unit_of({1, 2}, 0)}, Design::unknown()),
                      ErrorCode::DimensionMismatch);
  }

  TEST_CASE("units round-trip through the sample") {
    const auto s = SurveySample(mat({{1, 2}, {3, 4}}), vec({5, 6}), vec({2, 4}), vec({0.5, 0.25}), Design::poisson());
    const UnitRecord u = s.unit(1);
    CHECK(u.covariates == vec({3, 4}));
    CHECK(u.response == 6.0);
    CHECK(u.design_weight == 4.0);
    CHECK(*u.inclusion_prob == 0.25);
    const auto back = SurveySample::from_units({s.unit(0), s.unit(1)}, Design::poisson());
    CHECK(back.covariates() == s.covariates());
    CHECK(back.inclusion_probs() == s.inclusion_probs());
  }

  TEST_CASE("spec invariants") {
    CHECK_THROWS_CODE(EstimatingSpec::make(Family::Linear, {true, false}, {false, true}), ErrorCode::InvalidArgument);
    CHECK_THROWS_CODE(EstimatingSpec::make(Family::Linear, {true}, {true, false}), ErrorCode::DimensionMismatch);
    const auto spec = EstimatingSpec::make(Family::Linear, {true, true, false}, {true, false, false});
    CHECK(spec.dimension(Model::Full) == 3);
    CHECK(spec.dimension(Model::Reduced) == 2);
  }

  TEST_CASE("summary statistic validation") {
    SummaryStatistic s{vec({1, 2}), mat({{1, 0}, {0, 1}}), std::nullopt};
    CHECK_NOTHROW(s.validate());
    s.covariance = mat({{1, 0.5}, {0.4, 1}});
    CHECK_THROWS_CODE(s.validate(), ErrorCode::AsymmetricCovariance);
    s.covariance = mat({{1, 2}, {2, 1}});
    CHECK_THROWS_CODE(s.validate(), ErrorCode::SchemaError);
  }
}
