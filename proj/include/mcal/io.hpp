#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mcal/calibration.hpp"
#include "mcal/fusion.hpp"
#include "mcal/inference.hpp"
#include "mcal/propensity.hpp"
#include "mcal/sim.hpp"

namespace mcal {

/// Reads a sample from CSV text. Columns named y and weight are required, pi
/// and unit_id are optional, every other column is a covariate (in header
/// order). Without an explicit design, Poisson is assumed when pi is present
/// and Unknown otherwise. With `require_weight` off a missing weight column
/// means unit weights (big non-probability samples).
SurveySample parse_sample_csv_text(const std::string& text, std::optional<Design> design = std::nullopt,
                                   const std::string& label = {}, bool require_weight = true);
SurveySample parse_sample_csv(const std::string& path, std::optional<Design> design = std::nullopt,
                              bool require_weight = true);
/// Inverse of parse_sample_csv_text, 17 significant digits per value.
std::string emit_sample_csv(const SurveySample& sample);

SummaryStatistic parse_summary_json_text(const std::string& text);
SummaryStatistic parse_summary_json(const std::string& path);

/// Parses "srs:<N>", "poisson" or "unknown".
Design parse_design(const std::string& text);

std::string summary_to_json(const SummaryStatistic& s);
std::string pooled_to_json(const PooledBenchmark& p);
std::string report_to_json(const EstimateReport& r, const std::vector<std::string>& coefficient_names,
                           const std::optional<Vec>& alpha_star = std::nullopt);
std::string error_to_json(const std::string& module, const std::string& code, const std::string& message);
/// id, design weight and calibrated weight per unit.
std::string weights_csv(const SurveySample& sample, const CalibrationResult& result);

/// Scenario file: either one [scenario] table or an array [[scenario]].
std::vector<Scenario> parse_scenarios_toml_text(const std::string& text);
std::vector<Scenario> parse_scenarios_toml(const std::string& path);

/// Bias (with two-standard-error whiskers) and coverage bar charts.
std::string metrics_svg(const std::vector<MetricsTable>& tables);

enum class Command { Simulate, Calibrate, Estimate, Propensity, Pool };

enum class BenchmarkMode { Pooled, ExternalOnly, Known };

struct RunConfig {
  Command command = Command::Simulate;
  std::string config_path;
  std::string output_path;  // empty writes to stdout
  std::string svg_path;
  std::string internal_path;
  std::string big_path;
  std::string summary_path;
  std::string internal_summary_path;
  std::string external_summary_path;
  std::string internal_design;
  std::string family = "linear";
  std::vector<std::string> full_covariates;
  std::vector<std::string> reduced_covariates;
  std::vector<std::string> feature_covariates;
  BenchmarkMode benchmark = BenchmarkMode::Pooled;
  bool negligible_variance = false;
  double level = 0.95;
  int threads = 0;
  std::string log_level = "warn";
};

/// Covariate masks by column name; throws ConfigError for unknown names.
EstimatingSpec spec_from_names(const SurveySample& sample, const std::string& family,
                               const std::vector<std::string>& full, const std::vector<std::string>& reduced);

/// Runs one command and writes its artifact. Returns the process exit status;
/// failures print a JSON error record on `err` and return nonzero.
int run_command(const RunConfig& config, std::ostream& out, std::ostream& err);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace mcal
