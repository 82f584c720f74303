#pragma once

#include <random>

#include <doctest.h>

#include "mcal/core.hpp"
#include "oracles.hpp"

#define CHECK_THROWS_CODE(expr, expected)            \
  do {                                               \
    bool caught_ = false;                            \
    try {                                            \
      (void)(expr);                                  \
    } catch (const mcal::Error& e_) {                \
      caught_ = true;                                \
      CHECK_MESSAGE(e_.code() == (expected), e_.what()); \
    }                                                \
    CHECK_MESSAGE(caught_, "expected an mcal::Error"); \
  } while (0)

namespace testing {

using mcal::Index;
using mcal::Mat;
using mcal::Vec;

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline Mat mat(std::initializer_list<std::initializer_list<double>> rows) {
  Mat out(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double x : row) out(r, c++) = x;
    ++r;
  }
  return out;
}

inline mcal::SurveySample unknown_sample(const Mat& x, const Vec& y, const Vec& d) {
  return mcal::SurveySample(x, y, d, Vec(), mcal::Design::unknown());
}

inline mcal::SurveySample srs_sample(const Mat& x, const Vec& y, double population) {
  const Vec d = Vec::Constant(y.size(), population / static_cast<double>(y.size()));
  return mcal::SurveySample(x, y, d, Vec(), mcal::Design::srs(population));
}

inline mcal::SurveySample poisson_sample(const Mat& x, const Vec& y, const Vec& pi) {
  return mcal::SurveySample(x, y, pi.cwiseInverse(), pi, mcal::Design::poisson());
}

inline Vec random_weights(std::mt19937_64& rng, Index n, double lo = 0.5, double hi = 5.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec d(n);
  for (Index i = 0; i < n; ++i) d(i) = u(rng);
  return d;
}

/// Two-covariate linear spec: full (x1, x2), reduced x1.
inline mcal::EstimatingSpec two_covariate_spec(mcal::Family family = mcal::Family::Linear) {
  return mcal::EstimatingSpec::make(family, {true, true}, {true, false});
}

}  // namespace testing
