#include "mcal/sim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <thread>

#include "mcal/calibration.hpp"
#include "mcal/cml.hpp"
#include "mcal/fusion.hpp"
#include "mcal/inference.hpp"
#include "mcal/propensity.hpp"

namespace mcal {

namespace {

constexpr const char* kModule = "sim_harness";

std::string fmt17(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SurveySample draw(SamplingDesign design, const FinitePopulation& pop, Index n, const Vec& sizes,
                  std::mt19937_64& rng) {
  return design == SamplingDesign::Srs ? draw_srs(pop, n, rng)
                                       : draw_poisson(pop, static_cast<double>(n), sizes, rng);
}

SurveySample select_units(const FinitePopulation& pop, const std::vector<Index>& idx, Vec weights, Vec pi,
                          Design design, std::string label) {
  const Index n = static_cast<Index>(idx.size());
  Mat x(n, pop.x.cols());
  Vec y(n);
  for (Index k = 0; k < n; ++k) {
    x.row(k) = pop.x.row(idx[k]);
    y(k) = pop.y(idx[k]);
  }
  return SurveySample(std::move(x), std::move(y), std::move(weights), std::move(pi), design, std::move(label),
                      {"x1", "x2"});
}

double weighted_residual_variance(const SurveySample& s, const EstimatingSpec& spec, const Vec& alpha) {
  const Mat z = regressor_matrix(spec, Model::Reduced, s.covariates());
  const Vec res = s.response() - z * alpha;
  return s.design_weights().dot(res.cwiseAbs2()) / s.design_weights().sum();
}

EstimatorDraw failed(const std::string& why) {
  EstimatorDraw d;
  d.failure = why;
  return d;
}

}  // namespace

const char* to_string(CovariateMode v) noexcept { return v == CovariateMode::Independent ? "Independent" : "Dependent"; }
const char* to_string(ErrorVariance v) noexcept { return v == ErrorVariance::Homo ? "Homo" : "Hetero"; }
const char* to_string(SamplingDesign v) noexcept { return v == SamplingDesign::Srs ? "SRS" : "Poisson"; }
const char* to_string(Estimator v) noexcept {
  switch (v) {
    case Estimator::Proposed: return "Proposed";
    case Estimator::InternalOnly: return "InternalOnly";
    case Estimator::Cml: return "CML";
  }
  return "Unknown";
}

void Scenario::validate() const {
  if (population_size < 2) throw Error(ErrorCode::ConfigError, kModule, "population size must be at least 2");
  if (n1 < 1 || n1 >= population_size || n2 < 1 || n2 >= population_size)
    throw Error(ErrorCode::ConfigError, kModule, "sample sizes must lie in [1, N)");
  if (replications < 1) throw Error(ErrorCode::ConfigError, kModule, "replication count must be at least 1");
  if (threads < 0) throw Error(ErrorCode::ConfigError, kModule, "thread count must be non-negative");
  if (estimators.empty()) throw Error(ErrorCode::ConfigError, kModule, "no estimators selected");
}

std::string Scenario::label() const {
  std::string s = family == Family::Linear ? "linear" : "logistic";
  if (family == Family::Linear) s += std::string("/") + to_string(variance);
  s += std::string("/") + to_string(design1) + "-" + to_string(design2) + "/" + to_string(covariates);
  return s;
}

bool Scenario::runs(Estimator e) const { return std::find(estimators.begin(), estimators.end(), e) != estimators.end(); }

Scenario Scenario::desk(Family family, CovariateMode covariates, ErrorVariance variance, SamplingDesign design1,
                        SamplingDesign design2) {
  Scenario s;
  s.family = family;
  s.covariates = covariates;
  s.variance = variance;
  s.design1 = design1;
  s.design2 = design2;
  return s;
}

Scenario Scenario::paper(Family family, CovariateMode covariates, ErrorVariance variance, SamplingDesign design1,
                         SamplingDesign design2) {
  Scenario s = desk(family, covariates, variance, design1, design2);
  s.population_size = 100000;
  s.n1 = 1000;
  s.n2 = 10000;
  s.replications = 1000;
  return s;
}

EstimatingSpec simulation_spec(Family family) { return EstimatingSpec::make(family, {true, true}, {true, false}); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t rep) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(rep + 0x632be59bd9b4e019ULL)));
}

FinitePopulation gen_population(const Scenario& sc, std::mt19937_64& rng) {
  const Index n = sc.population_size;
  FinitePopulation pop;
  pop.x.resize(n, 2);
  pop.y.resize(n);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    const double x1 = 3.0 + std_normal(rng);
    const double x2 = sc.covariates == CovariateMode::Independent ? 11.0 + 6.5 * std_normal(rng)
                                                                  : x1 * x1 + std_normal(rng);
    pop.x(i, 0) = x1;
    pop.x(i, 1) = x2;
    if (sc.family == Family::Linear) {
      const double mu = 1.0 + 2.0 * x1 + x2;
      const double sd = sc.variance == ErrorVariance::Homo ? 3.0 : 0.2 * std::abs(mu);
      pop.y(i) = mu + sd * std_normal(rng);
    } else {
      const double p = expit(-0.5 + 0.3 * x1 - 0.1 * x2);
      pop.y(i) = unif(rng) < p ? 1.0 : 0.0;
    }
  }
  return pop;
}

Vec poisson_inclusion_probabilities(const Vec& s, double target_n) {
  const Index n = s.size();
  if (n == 0 || !(target_n > 0.0) || target_n > static_cast<double>(n))
    throw Error(ErrorCode::InvalidArgument, kModule, "target size must lie in (0, N]");
  if (!s.allFinite() || (s.array() <= 0.0).any())
    throw Error(ErrorCode::InvalidArgument, kModule, "size measures must be positive");
  auto probs = [&](double c) { return (c * s).cwiseMin(1.0).eval(); };
  double lo = target_n / s.sum();
  if (lo * s.maxCoeff() <= 1.0) return lo * s;
  double hi = 1.0 / s.minCoeff();
  Vec pi = probs(hi);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    pi = probs(mid);
    const double gap = pi.sum() - target_n;
    if (std::abs(gap) <= 1e-6) break;
    (gap < 0.0 ? lo : hi) = mid;
  }
  return pi;
}

SurveySample draw_srs(const FinitePopulation& pop, Index n, std::mt19937_64& rng) {
  const Index big = pop.size();
  if (n < 1 || n > big) throw Error(ErrorCode::InvalidArgument, kModule, "SRS size must lie in [1, N]");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Index> idx;
  idx.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < big && static_cast<Index>(idx.size()) < n; ++i) {
    const double need = static_cast<double>(n - static_cast<Index>(idx.size()));
    if (unif(rng) * static_cast<double>(big - i) < need) idx.push_back(i);
  }
  const double w = static_cast<double>(big) / static_cast<double>(n);
  return select_units(pop, idx, Vec::Constant(n, w), Vec(), Design::srs(static_cast<double>(big)), "srs");
}

SurveySample draw_poisson(const FinitePopulation& pop, double target_n, const Vec& size_values,
                          std::mt19937_64& rng) {
  if (size_values.size() != pop.size())
    throw Error(ErrorCode::DimensionMismatch, kModule, "one size measure per population unit required");
  const Vec pi = poisson_inclusion_probabilities(size_values, target_n);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Index> idx;
  for (Index i = 0; i < pop.size(); ++i)
    if (unif(rng) < pi(i)) idx.push_back(i);
  if (idx.empty()) throw Error(ErrorCode::InvalidArgument, kModule, "Poisson draw selected no units");
  Vec p(static_cast<Index>(idx.size()));
  for (Index k = 0; k < p.size(); ++k) p(k) = pi(idx[k]);
  return select_units(pop, idx, p.cwiseInverse(), p, Design::poisson(), "poisson");
}

Vec internal_size_values(const Scenario& sc, const FinitePopulation& pop) {
  if (sc.family == Family::Linear) {
    const double lo = pop.y.minCoeff();
    return (pop.y.array() - lo + 10.0).sqrt().matrix();
  }
  return pop.y.unaryExpr([](double y) { return y > 0.5 ? 0.9 : 0.1; });
}

Vec external_size_values(const FinitePopulation& pop) {
  Vec s(pop.size());
  for (Index i = 0; i < s.size(); ++i) s(i) = 1.0 / (1.0 + std::exp(0.2 * pop.x(i, 0) + 0.1 * pop.x(i, 1) - 0.6));
  return s;
}

SurveySample census_sample(const FinitePopulation& pop) {
  const double n = static_cast<double>(pop.size());
  return SurveySample(pop.x, pop.y, Vec::Ones(pop.size()), Vec(), Design::srs(n), "population", {"x1", "x2"});
}

ReplicationOutcome run_replication(const Scenario& sc, int rep) {
  std::mt19937_64 rng = replication_rng(sc.seed, static_cast<std::uint64_t>(rep));
  const FinitePopulation pop = gen_population(sc, rng);
  const EstimatingSpec spec = simulation_spec(sc.family);
  const Index q1 = spec.dimension(Model::Full);

  ReplicationOutcome out;
  out.draws.resize(sc.estimators.size());
  const SurveySample census = census_sample(pop);
  out.target = solve_weighted_z(census, spec, Model::Full, census.design_weights(), Vec::Zero(q1));

  std::optional<SurveySample> s1;
  std::optional<SurveySample> s2;
  std::string draw_failure;
  try {
    s1.emplace(draw(sc.design1, pop, sc.n1, internal_size_values(sc, pop), rng));
    s2.emplace(draw(sc.design2, pop, sc.n2, external_size_values(pop), rng));
  } catch (const Error& e) {
    draw_failure = e.what();
  }
  if (!s1 || !s2) {
    for (auto& d : out.draws) d = failed(draw_failure);
    return out;
  }

  std::optional<Vec> beta_internal;
  try {
    beta_internal = solve_weighted_z(*s1, spec, Model::Full, s1->design_weights(), Vec::Zero(q1));
  } catch (const Error&) {
  }
  std::optional<SummaryStatistic> external;
  std::string external_failure;
  try {
    external = estimate_alpha_internal(*s2, spec);
  } catch (const Error& e) {
    external_failure = e.what();
  }
  for (std::size_t k = 0; k < sc.estimators.size(); ++k) {
    EstimatorDraw& d = out.draws[k];
    try {
      switch (sc.estimators[k]) {
        case Estimator::InternalOnly: {
          if (!beta_internal) throw Error(ErrorCode::NoConvergence, kModule, "internal fit failed");
          d.estimate = *beta_internal;
          d.plugin_variance = variance_linearized(*s1, spec, Model::Full, d.estimate).diagonal();
          break;
        }
        case Estimator::Proposed: {
          if (!external) throw Error(ErrorCode::NoConvergence, kModule, external_failure);
          const SummaryStatistic internal = estimate_alpha_internal(*s1, spec);
          const PooledBenchmark pooled = gls_pool(internal, *external);
          const CalibratedEstimate cal =
              calibrated_estimate(*s1, spec, pooled.alpha_star, beta_internal ? *beta_internal : Vec());
          const bool known = sc.proposed_variance == ProposedVariance::KnownBenchmark;
          const VarianceDecomposition dec = assemble_decomposition(
              *s1, spec, cal.beta, pooled.alpha_star,
              known ? VarianceMode::KnownAlpha : VarianceMode::PooledAlphaCase1);
          const Mat sigma = known ? sandwich_known_alpha(dec) : sandwich_estimated_alpha(dec, pooled, dec.n);
          d.estimate = cal.beta;
          d.plugin_variance = sigma.diagonal() / static_cast<double>(dec.n);

          const VarianceDecomposition srs = with_srs_plugins(dec);
          out.trace_calibrated = four_term_sandwich<double>(srs.I11, srs.I12, srs.I22, srs.sigma11(),
                                                            srs.sigma12(), srs.sigma22())
                                     .trace();
          out.trace_uncalibrated = sandwich_uncalibrated(dec).trace();
          out.trace_ok = out.trace_calibrated <= out.trace_uncalibrated + 1e-10;
          break;
        }
        case Estimator::Cml: {
          if (!external) throw Error(ErrorCode::NoConvergence, kModule, external_failure);
          ReducedParams reduced;
          reduced.alpha = external->alpha_hat;
          if (sc.family == Family::Linear) reduced.sigma2 = weighted_residual_variance(*s2, spec, reduced.alpha);
          const CmlFit fit = cml_fit(*s1, spec, reduced);
          if (!fit.ok()) throw Error(ErrorCode::NoConvergence, "cml_baseline", "NA: " + fit.failure);
          d.estimate = *fit.beta;
          break;
        }
      }
      d.ok = d.estimate.allFinite();
      if (!d.ok) d.failure = "non-finite estimate";
    } catch (const Error& e) {
      d = failed(e.what());
    }
  }
  return out;
}

const CoefficientMetrics& MetricsTable::at(Estimator e, Index coefficient) const {
  for (const auto& r : rows)
    if (r.estimator == e && r.coefficient == coefficient) return r;
  throw Error(ErrorCode::InvalidArgument, kModule, "no metrics row for the requested estimator");
}

MetricsTable aggregate(const Scenario& sc, const std::vector<ReplicationOutcome>& outcomes) {
  MetricsTable table;
  table.scenario = sc;
  table.replications = static_cast<int>(outcomes.size());
  for (const auto& o : outcomes) table.trace_violations += o.trace_ok ? 0 : 1;
  const Index q1 = simulation_spec(sc.family).dimension(Model::Full);
  const double z = normal_quantile_two_sided(0.95);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t k = 0; k < sc.estimators.size(); ++k) {
    for (Index j = 0; j < q1; ++j) {
      CoefficientMetrics m;
      m.estimator = sc.estimators[k];
      m.coefficient = j;
      double sum = 0.0, sum_var = 0.0;
      int hits = 0;
      bool has_var = true;
      std::vector<double> diffs;
      for (const auto& o : outcomes) {
        const EstimatorDraw& d = o.draws[k];
        if (!d.ok) {
          ++m.failures;
          continue;
        }
        ++m.successes;
        const double diff = d.estimate(j) - o.target(j);
        diffs.push_back(diff);
        sum += diff;
        if (d.plugin_variance.size() == q1) {
          const double v = d.plugin_variance(j);
          sum_var += v;
          hits += std::abs(diff) <= z * std::sqrt(std::max(v, 0.0)) ? 1 : 0;
        } else {
          has_var = false;
        }
      }
      const double s = static_cast<double>(m.successes);
      if (m.successes > 0) {
        m.bias = sum / s;
        double ss = 0.0;
        for (double v : diffs) ss += (v - m.bias) * (v - m.bias);
        m.mc_variance = m.successes > 1 ? ss / (s - 1.0) : 0.0;
        m.bias_se = std::sqrt(m.mc_variance / s);
        m.mean_plugin_variance = has_var ? sum_var / s : nan;
        m.coverage = has_var ? hits / s : nan;
      } else {
        m.bias = m.bias_se = m.mc_variance = m.mean_plugin_variance = m.coverage = nan;
      }
      table.rows.push_back(m);
    }
  }
  return table;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MCAL_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

template <typename Result, typename Fn>
std::vector<Result> run_parallel(int count, int threads, Fn fn) {
  std::vector<Result> results(static_cast<std::size_t>(count));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < count; r = next++) results[static_cast<std::size_t>(r)] = fn(r);
  };
  const int t = std::min(threads, count);
  std::vector<std::thread> pool;
  for (int i = 1; i < t; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return results;
}

}  // namespace

MetricsTable run_monte_carlo(const Scenario& sc, std::vector<ReplicationOutcome>* outcomes) {
  sc.validate();
  const auto start = std::chrono::steady_clock::now();
  auto results = run_parallel<ReplicationOutcome>(sc.replications, resolve_threads(sc.threads),
                                                  [&](int r) { return run_replication(sc, r); });
  MetricsTable table = aggregate(sc, results);
  table.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (outcomes) *outcomes = std::move(results);
  return table;
}

std::string metrics_csv(const std::vector<MetricsTable>& tables) {
  std::ostringstream os;
  os << "scenario,estimator,coefficient,bias,bias_se,mc_variance,mean_plugin_variance,coverage,successes,failures,"
        "trace_violations\n";
  for (const auto& t : tables) {
    for (const auto& r : t.rows) {
      os << t.scenario.label() << ',' << to_string(r.estimator) << ",beta" << r.coefficient << ',' << fmt17(r.bias)
         << ',' << fmt17(r.bias_se) << ',' << fmt17(r.mc_variance) << ',' << fmt17(r.mean_plugin_variance) << ','
         << fmt17(r.coverage) << ',' << r.successes << ',' << r.failures << ',' << t.trace_violations << '\n';
    }
  }
  return os.str();
}

std::string metrics_csv(const MetricsTable& table) { return metrics_csv(std::vector<MetricsTable>{table}); }

PropensityDraw run_propensity_replication(const Scenario& sc, int rep) {
  std::mt19937_64 rng = replication_rng(sc.seed, static_cast<std::uint64_t>(rep));
  const FinitePopulation pop = gen_population(sc, rng);
  const EstimatingSpec spec = simulation_spec(sc.family);
  const Index q2 = spec.dimension(Model::Reduced);
  PropensityDraw out;
  const SurveySample census = census_sample(pop);
  out.population_alpha = solve_weighted_z(census, spec, Model::Reduced, census.design_weights(), Vec::Zero(q2));
  try {
    const SurveySample s1 = draw(sc.design1, pop, sc.n1, internal_size_values(sc, pop), rng);
    const SurveySample big = draw_poisson(pop, static_cast<double>(sc.n2), external_size_values(pop), rng);
    const SurveySample flat = big.reweighted(Vec::Ones(big.size()), Design::unknown());
    out.naive = solve_weighted_z(flat, spec, Model::Reduced, flat.design_weights(), Vec::Zero(q2));
    const DensityRatioModel model = solve_density_ratio(big, s1, FeatureSelector::from_reduced(spec));
    out.debiased = debiased_alpha2(big, spec, model, true).alpha_hat;
  } catch (const Error&) {
  }
  return out;
}

std::vector<PropensityDraw> run_propensity_study(const Scenario& sc) {
  sc.validate();
  return run_parallel<PropensityDraw>(sc.replications, resolve_threads(sc.threads),
                                      [&](int r) { return run_propensity_replication(sc, r); });
}

}  // namespace mcal
