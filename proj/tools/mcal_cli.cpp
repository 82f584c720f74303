#include <iostream>

#include <CLI11.hpp>

#include "mcal/io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Model calibration with summary-level benchmarks"};
  app.require_subcommand(1);
  mcal::RunConfig cfg;
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "warn, info or debug")->check(CLI::IsMember({"warn", "info", "debug"}));

  auto* sim = app.add_subcommand("simulate", "Monte Carlo study from a TOML scenario file");
  sim->add_option("--config", cfg.config_path, "scenario TOML")->required();
  sim->add_option("--out", cfg.output_path, "metrics CSV (default stdout)");
  sim->add_option("--svg", cfg.svg_path, "bias and coverage chart");
  sim->add_option("--threads", cfg.threads, "worker threads (0 = MCAL_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);

  bool external_only = false;
  bool known = false;
  auto add_model_options = [&](CLI::App* sub, bool with_summary) {
    sub->add_option("--internal", cfg.internal_path, "internal sample CSV")->required();
    sub->add_option("--design", cfg.internal_design, "srs:<N>, poisson or unknown");
    sub->add_option("--family", cfg.family, "linear or logistic")->check(CLI::IsMember({"linear", "logistic"}));
    sub->add_option("--full", cfg.full_covariates, "full-model covariates")->required()->delimiter(',');
    sub->add_option("--reduced", cfg.reduced_covariates, "reduced-model covariates")->required()->delimiter(',');
    sub->add_option("--out", cfg.output_path, "output file (default stdout)");
    if (with_summary) {
      sub->add_option("--summary", cfg.summary_path, "external summary JSON")->required();
      auto* eo = sub->add_flag("--external-only", external_only, "use the external benchmark alone");
      sub->add_flag("--known-benchmark", known, "treat the benchmark as known")->excludes(eo);
    }
  };

  auto* calibrate = app.add_subcommand("calibrate", "Calibrated weights for an internal sample");
  add_model_options(calibrate, true);
  auto* estimate = app.add_subcommand("estimate", "Calibrated coefficients with Wald intervals");
  add_model_options(estimate, true);
  estimate->add_option("--level", cfg.level, "confidence level")->check(CLI::Range(0.5, 0.999999));

  auto* propensity = app.add_subcommand("propensity", "Debiased benchmark from a big non-probability sample");
  add_model_options(propensity, false);
  propensity->add_option("--big", cfg.big_path, "big sample CSV")->required();
  propensity->add_option("--features", cfg.feature_covariates, "covariates in the density-ratio model")
      ->delimiter(',');
  propensity->add_flag("--negligible-variance", cfg.negligible_variance, "report a zero covariance");

  auto* pool = app.add_subcommand("pool", "GLS pooling of two summaries");
  pool->add_option("--internal-summary", cfg.internal_summary_path)->required();
  pool->add_option("--external-summary", cfg.external_summary_path)->required();
  pool->add_option("--out", cfg.output_path, "output file (default stdout)");
  pool->add_flag("--external-only", external_only, "use the external summary alone");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (*sim) cfg.command = mcal::Command::Simulate;
  else if (*calibrate) cfg.command = mcal::Command::Calibrate;
  else if (*estimate) cfg.command = mcal::Command::Estimate;
  else if (*propensity) cfg.command = mcal::Command::Propensity;
  else cfg.command = mcal::Command::Pool;
  cfg.benchmark = known ? mcal::BenchmarkMode::Known
                        : (external_only ? mcal::BenchmarkMode::ExternalOnly : mcal::BenchmarkMode::Pooled);
  cfg.log_level = log_level;
  return mcal::run_command(cfg, std::cout, std::cerr);
}
