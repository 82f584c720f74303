#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mcal/core.hpp"

namespace mcal {

enum class CovariateMode { Independent, Dependent };
enum class ErrorVariance { Homo, Hetero };
enum class SamplingDesign { Srs, Poisson };
enum class Estimator { Proposed, InternalOnly, Cml };
/// Which plug-in variance the proposed estimator reports: the pooled-benchmark
/// sandwich or the one that treats the benchmark as known.
enum class ProposedVariance { Pooled, KnownBenchmark };

const char* to_string(CovariateMode v) noexcept;
const char* to_string(ErrorVariance v) noexcept;
const char* to_string(SamplingDesign v) noexcept;
const char* to_string(Estimator v) noexcept;

struct Scenario {
  Family family = Family::Linear;
  Index population_size = 20000;
  Index n1 = 500;
  Index n2 = 2000;
  CovariateMode covariates = CovariateMode::Independent;
  ErrorVariance variance = ErrorVariance::Homo;
  SamplingDesign design1 = SamplingDesign::Srs;
  SamplingDesign design2 = SamplingDesign::Srs;
  int replications = 500;
  std::uint64_t seed = 20240601;
  std::vector<Estimator> estimators{Estimator::Proposed, Estimator::InternalOnly, Estimator::Cml};
  ProposedVariance proposed_variance = ProposedVariance::Pooled;
  /// 0 picks the MCAL_THREADS environment variable, else hardware concurrency.
  int threads = 0;

  void validate() const;
  std::string label() const;
  bool runs(Estimator e) const;

  static Scenario desk(Family family, CovariateMode covariates, ErrorVariance variance, SamplingDesign design1,
                       SamplingDesign design2);
  static Scenario paper(Family family, CovariateMode covariates, ErrorVariance variance, SamplingDesign design1,
                        SamplingDesign design2);
};

/// Full-model and reduced-model specs used by every simulated scenario:
/// y on (x1, x2) and y on x1.
EstimatingSpec simulation_spec(Family family);

struct FinitePopulation {
  Mat x;  // N x 2
  Vec y;

  Index size() const { return y.size(); }
};

/// Stream for replication `rep`: mt19937_64 seeded from SplitMix64 of
/// (seed, rep), so a replication's draws never depend on scheduling.
std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t rep);
std::uint64_t splitmix64(std::uint64_t x);

FinitePopulation gen_population(const Scenario& scenario, std::mt19937_64& rng);

/// pi_i = min(c s_i, 1) with sum pi = target_n.
Vec poisson_inclusion_probabilities(const Vec& size_values, double target_n);

SurveySample draw_srs(const FinitePopulation& pop, Index n, std::mt19937_64& rng);
SurveySample draw_poisson(const FinitePopulation& pop, double target_n, const Vec& size_values,
                          std::mt19937_64& rng);

/// Size measures of the internal and external informative designs.
Vec internal_size_values(const Scenario& scenario, const FinitePopulation& pop);
Vec external_size_values(const FinitePopulation& pop);

/// Whole population as a unit-weight sample, used for finite-population targets.
SurveySample census_sample(const FinitePopulation& pop);

struct EstimatorDraw {
  bool ok = false;
  Vec estimate;
  Vec plugin_variance;  // empty when the estimator has no variance estimate
  std::string failure;
};

struct ReplicationOutcome {
  Vec target;  // beta_0N
  std::vector<EstimatorDraw> draws;  // indexed like Scenario::estimators
  /// Calibrated trace under SRS plug-ins never exceeds the uncalibrated trace.
  bool trace_ok = true;
  double trace_calibrated = 0.0;
  double trace_uncalibrated = 0.0;
};

ReplicationOutcome run_replication(const Scenario& scenario, int rep);

struct CoefficientMetrics {
  Estimator estimator = Estimator::Proposed;
  Index coefficient = 0;
  double bias = 0.0;
  double bias_se = 0.0;
  double mc_variance = 0.0;
  double mean_plugin_variance = 0.0;  // NaN without a variance estimate
  double coverage = 0.0;              // NaN without a variance estimate
  int successes = 0;
  int failures = 0;
};

struct MetricsTable {
  Scenario scenario;
  std::vector<CoefficientMetrics> rows;
  int replications = 0;
  int trace_violations = 0;
  double wall_clock_seconds = 0.0;

  const CoefficientMetrics& at(Estimator e, Index coefficient) const;
};

MetricsTable aggregate(const Scenario& scenario, const std::vector<ReplicationOutcome>& outcomes);

/// Replications run concurrently; results are aggregated in replication
/// order so the table does not depend on the thread count.
MetricsTable run_monte_carlo(const Scenario& scenario, std::vector<ReplicationOutcome>* outcomes = nullptr);

int resolve_threads(int requested);

/// One row per (estimator, coefficient); wall-clock time is left out so that
/// equal seeds give byte-identical files.
std::string metrics_csv(const MetricsTable& table);
std::string metrics_csv(const std::vector<MetricsTable>& tables);

/// Propensity study: an SRS internal sample and an informative Poisson big
/// sample of the linear population; the reduced model is fitted to the big
/// sample naively and with density-ratio weights.
struct PropensityDraw {
  Vec population_alpha;
  std::optional<Vec> naive;
  std::optional<Vec> debiased;
};

PropensityDraw run_propensity_replication(const Scenario& scenario, int rep);
std::vector<PropensityDraw> run_propensity_study(const Scenario& scenario);

}  // namespace mcal
