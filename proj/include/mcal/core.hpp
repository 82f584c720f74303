#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mcal/error.hpp"
#include "mcal/types.hpp"

namespace mcal {

enum class Family { Linear, Logistic };

/// Selects which of the two estimating functions is meant: the full model
/// (U1, parameter beta) or the working reduced model (U2, parameter alpha).
enum class Model { Full, Reduced };

struct UnitRecord {
  Vec covariates;
  double response = 0.0;
  double design_weight = 1.0;
  std::optional<double> inclusion_prob;
};

enum class DesignKind { SrsWithoutReplacement, Poisson, Unknown };

struct Design {
  DesignKind kind = DesignKind::Unknown;
  double population_size = 0.0;  // meaningful for SrsWithoutReplacement only

  static Design srs(double population_size) { return {DesignKind::SrsWithoutReplacement, population_size}; }
  static Design poisson() { return {DesignKind::Poisson, 0.0}; }
  static Design unknown() { return {DesignKind::Unknown, 0.0}; }
};

/// Probability sample stored column-wise: one row of `covariates` per unit.
/// Immutable after construction; the constructor enforces the sample
/// invariants (positive weights, finite data, d = 1/pi, equal SRS weights).
class SurveySample {
 public:
  SurveySample(Mat covariates, Vec response, Vec design_weights, Vec inclusion_probs, Design design,
               std::string label = {}, std::vector<std::string> covariate_names = {});

  static SurveySample from_units(const std::vector<UnitRecord>& units, Design design, std::string label = {});

  Index size() const { return response_.size(); }
  Index dim() const { return covariates_.cols(); }

  const Mat& covariates() const { return covariates_; }
  const Vec& response() const { return response_; }
  const Vec& design_weights() const { return weights_; }
  bool has_inclusion_probs() const { return inclusion_.size() > 0; }
  /// Empty when the sample carries no inclusion probabilities.
  const Vec& inclusion_probs() const { return inclusion_; }
  const Design& design() const { return design_; }
  const std::string& label() const { return label_; }
  const std::vector<std::string>& covariate_names() const { return names_; }

  UnitRecord unit(Index i) const;

  /// Same units with replacement design weights (inclusion probabilities dropped).
  SurveySample reweighted(Vec design_weights, Design design) const;

 private:
  Mat covariates_;
  Vec response_;
  Vec weights_;
  Vec inclusion_;
  Design design_;
  std::string label_;
  std::vector<std::string> names_;
};

/// External (or internal) estimate of the reduced-model parameter with its
/// covariance.
struct SummaryStatistic {
  Vec alpha_hat;
  Mat covariance;
  std::optional<long long> n_source;

  /// Throws AsymmetricCovariance or SchemaError (not PSD, bad shape).
  void validate() const;
};

/// Regression family plus the covariate masks defining U1 (full) and U2
/// (reduced). Both use the gradient instrument h(x) = (1, x_masked).
struct EstimatingSpec {
  Family family = Family::Linear;
  std::vector<bool> full_mask;
  std::vector<bool> reduced_mask;
  bool intercept = true;

  static EstimatingSpec make(Family family, std::vector<bool> full_mask, std::vector<bool> reduced_mask,
                             bool intercept = true);

  Index covariate_count() const { return static_cast<Index>(full_mask.size()); }
  /// q1 or q2.
  Index dimension(Model which) const;
  void validate() const;
  void validate_for(Index p) const;
};

/// h(x) = (1, x_masked) for one covariate vector.
Vec regressors(const EstimatingSpec& spec, Model which, const Eigen::Ref<const Vec>& x);
/// Row i is h(x_i)^T.
Mat regressor_matrix(const EstimatingSpec& spec, Model which, const Mat& covariates);

Vec eval_score(const EstimatingSpec& spec, Model which, const Vec& theta, const UnitRecord& unit);
Mat eval_score_jacobian(const EstimatingSpec& spec, Model which, const Vec& theta, const UnitRecord& unit);

/// Row i is U(theta; x_i, y_i)^T.
Mat score_matrix(const EstimatingSpec& spec, Model which, const Vec& theta, const SurveySample& sample);
/// sum_i w_i dU_i/dtheta^T
Mat weighted_score_jacobian(const EstimatingSpec& spec, Model which, const Vec& theta, const SurveySample& sample,
                            const Vec& weights);

Vec normalized_weights(const SurveySample& sample);

/// Root of sum_i w_i U(theta; x_i, y_i) = 0 by damped Newton.
Vec solve_weighted_z(const SurveySample& sample, const EstimatingSpec& spec, Model which, const Vec& weights,
                     const Vec& theta0);

/// Horvitz-Thompson total sum_i d_i v_i.
double ht_total(const SurveySample& sample, const Vec& values);

}  // namespace mcal
