#include "mcal/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>
#include <toml.hpp>

namespace mcal {

namespace {

constexpr const char* kModule = "cli_io";
using json = nlohmann::json;

[[noreturn]] void fail(ErrorCode code, const std::string& message) { throw Error(code, kModule, message); }

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::optional<double> to_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json mat_json(const Mat& m) {
  json a = json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

json summary_json(const SummaryStatistic& s) {
  json j;
  j["alpha"] = vec_json(s.alpha_hat);
  j["V"] = mat_json(s.covariance);
  if (s.n_source) j["n"] = *s.n_source;
  return j;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path);
  out << content;
  if (!out) fail(ErrorCode::IoError, "failed writing " + path);
}

Design parse_design(const std::string& text) {
  if (text == "poisson") return Design::poisson();
  if (text == "unknown") return Design::unknown();
  if (text.rfind("srs:", 0) == 0) {
    const auto n = to_double(text.substr(4));
    if (!n || *n <= 0.0) fail(ErrorCode::ConfigError, "SRS design needs a positive population size");
    return Design::srs(*n);
  }
  fail(ErrorCode::ConfigError, "unknown design '" + text + "' (expected srs:<N>, poisson or unknown)");
}

SurveySample parse_sample_csv_text(const std::string& text, std::optional<Design> design, const std::string& label,
                                   bool require_weight) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) fail(ErrorCode::MalformedHeader, "CSV is empty");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line = line.substr(3);
  const std::vector<std::string> header = split(trim(line), ',');

  int col_y = -1, col_w = -1, col_pi = -1, col_id = -1;
  std::vector<int> cov_cols;
  std::vector<std::string> names;
  std::map<std::string, int> seen;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const std::string& h = header[static_cast<std::size_t>(c)];
    if (h.empty()) fail(ErrorCode::MalformedHeader, "empty column name at position " + std::to_string(c + 1));
    if (seen.count(h)) fail(ErrorCode::MalformedHeader, "duplicate column '" + h + "'");
    seen[h] = c;
    if (h == "y") col_y = c;
    else if (h == "weight") col_w = c;
    else if (h == "pi") col_pi = c;
    else if (h == "unit_id") col_id = c;
    else {
      cov_cols.push_back(c);
      names.push_back(h);
    }
  }
  if (col_y < 0) fail(ErrorCode::MalformedHeader, "missing required column 'y'");
  if (col_w < 0 && require_weight) fail(ErrorCode::MalformedHeader, "missing required column 'weight'");
  if (cov_cols.empty()) fail(ErrorCode::MalformedHeader, "no covariate columns");
  (void)col_id;

  std::vector<std::vector<double>> xs;
  std::vector<double> ys, ws, pis;
  int row = 0;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split(trim(line), ',');
    if (cells.size() != header.size())
      fail(ErrorCode::NonNumericCell, "row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                                          " cells, header has " + std::to_string(header.size()));
    auto number = [&](int c) {
      const auto v = to_double(cells[static_cast<std::size_t>(c)]);
      if (!v)
        fail(ErrorCode::NonNumericCell, "row " + std::to_string(row) + ", column '" +
                                            header[static_cast<std::size_t>(c)] + "': '" +
                                            cells[static_cast<std::size_t>(c)] + "' is not a finite number");
      return *v;
    };
    std::vector<double> x;
    for (int c : cov_cols) x.push_back(number(c));
    xs.push_back(std::move(x));
    ys.push_back(number(col_y));
    const double w = col_w >= 0 ? number(col_w) : 1.0;
    if (!(w > 0.0)) fail(ErrorCode::WeightNonPositive, "row " + std::to_string(row) + ": weight must be positive");
    ws.push_back(w);
    if (col_pi >= 0) {
      const double pi = number(col_pi);
      if (!(pi > 0.0 && pi <= 1.0))
        fail(ErrorCode::InclusionMismatch, "row " + std::to_string(row) + ": pi must lie in (0, 1]");
      if (std::abs(w - 1.0 / pi) > 1e-9 * w)
        fail(ErrorCode::InclusionMismatch, "row " + std::to_string(row) + ": weight differs from 1/pi");
      pis.push_back(pi);
    }
  }
  if (row == 0) fail(ErrorCode::MalformedHeader, "CSV has a header but no rows");

  const Index n = row;
  const Index p = static_cast<Index>(cov_cols.size());
  Mat x(n, p);
  Vec y(n), w(n), pi(static_cast<Index>(pis.size()));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) x(i, j) = xs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    y(i) = ys[static_cast<std::size_t>(i)];
    w(i) = ws[static_cast<std::size_t>(i)];
  }
  for (Index i = 0; i < pi.size(); ++i) pi(i) = pis[static_cast<std::size_t>(i)];
  const Design d = design ? *design : (col_pi >= 0 ? Design::poisson() : Design::unknown());
  return SurveySample(std::move(x), std::move(y), std::move(w), std::move(pi), d, label, std::move(names));
}

SurveySample parse_sample_csv(const std::string& path, std::optional<Design> design, bool require_weight) {
  return parse_sample_csv_text(read_file(path), design, path, require_weight);
}

std::string emit_sample_csv(const SurveySample& sample) {
  std::ostringstream os;
  const Index p = sample.dim();
  for (Index j = 0; j < p; ++j)
    os << (sample.covariate_names().empty() ? "x" + std::to_string(j + 1)
                                            : sample.covariate_names()[static_cast<std::size_t>(j)])
       << ',';
  os << "y,weight" << (sample.has_inclusion_probs() ? ",pi" : "") << '\n';
  for (Index i = 0; i < sample.size(); ++i) {
    for (Index j = 0; j < p; ++j) os << fmt17(sample.covariates()(i, j)) << ',';
    os << fmt17(sample.response()(i)) << ',' << fmt17(sample.design_weights()(i));
    if (sample.has_inclusion_probs()) os << ',' << fmt17(sample.inclusion_probs()(i));
    os << '\n';
  }
  return os.str();
}

SummaryStatistic parse_summary_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::SchemaError, "summary must be a JSON object");
  if (!j.contains("alpha") || !j["alpha"].is_array() || j["alpha"].empty())
    fail(ErrorCode::SchemaError, "'alpha' must be a non-empty array of numbers");
  if (!j.contains("V") || !j["V"].is_array()) fail(ErrorCode::SchemaError, "'V' must be an array of rows");
  const auto& a = j["alpha"];
  const auto& v = j["V"];
  const Index q = static_cast<Index>(a.size());
  SummaryStatistic s;
  s.alpha_hat.resize(q);
  for (Index i = 0; i < q; ++i) {
    if (!a[static_cast<std::size_t>(i)].is_number()) fail(ErrorCode::SchemaError, "'alpha' entries must be numbers");
    s.alpha_hat(i) = a[static_cast<std::size_t>(i)].get<double>();
  }
  if (static_cast<Index>(v.size()) != q) fail(ErrorCode::SchemaError, "'V' must have one row per alpha entry");
  s.covariance.resize(q, q);
  for (Index r = 0; r < q; ++r) {
    const auto& row = v[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != q)
      fail(ErrorCode::SchemaError, "'V' must be a square matrix matching 'alpha'");
    for (Index c = 0; c < q; ++c) {
      if (!row[static_cast<std::size_t>(c)].is_number()) fail(ErrorCode::SchemaError, "'V' entries must be numbers");
      s.covariance(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  if (j.contains("n") && !j["n"].is_null()) {
    if (!j["n"].is_number_integer() || j["n"].get<long long>() <= 0)
      fail(ErrorCode::SchemaError, "'n' must be a positive integer");
    s.n_source = j["n"].get<long long>();
  }
  if (!s.alpha_hat.allFinite() || !s.covariance.allFinite()) fail(ErrorCode::SchemaError, "non-finite entries");
  s.validate();
  return s;
}

SummaryStatistic parse_summary_json(const std::string& path) { return parse_summary_json_text(read_file(path)); }

std::string summary_to_json(const SummaryStatistic& s) { return summary_json(s).dump(2) + "\n"; }

std::string pooled_to_json(const PooledBenchmark& p) {
  json j;
  j["alpha_star"] = vec_json(p.alpha_star);
  j["V_star"] = mat_json(p.covariance);
  j["W"] = mat_json(p.gls_weight);
  j["external_only"] = p.external_only;
  j["external_diagonal"] = p.external_diagonal;
  j["sources"] = {{"internal", summary_json(p.internal)}, {"external", summary_json(p.external)}};
  return j.dump(2) + "\n";
}

std::string report_to_json(const EstimateReport& r, const std::vector<std::string>& names,
                           const std::optional<Vec>& alpha_star) {
  json j;
  j["coefficients"] = names;
  j["beta_hat"] = vec_json(r.beta_hat);
  j["sigma_beta"] = mat_json(r.sigma_beta);
  j["ci_lower"] = vec_json(r.ci_lower);
  j["ci_upper"] = vec_json(r.ci_upper);
  j["level"] = r.level;
  j["n"] = r.n;
  j["variance_mode"] = to_string(r.mode);
  if (alpha_star) j["alpha_star"] = vec_json(*alpha_star);
  if (r.diagnostics) {
    const CalibrationResult& c = *r.diagnostics;
    j["calibration"] = {{"lambda", vec_json(c.lambda)},
                        {"iterations", c.iterations},
                        {"max_constraint_residual", c.max_constraint_residual},
                        {"weight_sum", c.weights.sum()},
                        {"min_weight", c.weights.minCoeff()},
                        {"converged", c.converged}};
  }
  return j.dump(2) + "\n";
}

std::string error_to_json(const std::string& module, const std::string& code, const std::string& message) {
  json j;
  j["error"] = {{"module", module}, {"code", code}, {"message", message}};
  return j.dump() + "\n";
}

std::string weights_csv(const SurveySample& sample, const CalibrationResult& result) {
  std::ostringstream os;
  os << "unit_id,d,w,w_total\n";
  const Vec total = population_scaled_weights(result, sample);
  for (Index i = 0; i < sample.size(); ++i)
    os << i + 1 << ',' << fmt17(sample.design_weights()(i)) << ',' << fmt17(result.weights(i)) << ','
       << fmt17(total(i)) << '\n';
  return os.str();
}

namespace {

template <typename T>
T enum_value(const toml::table& t, const char* key, const std::map<std::string, T>& options, T fallback) {
  const auto node = t[key];
  if (!node) return fallback;
  const auto s = node.value<std::string>();
  if (!s) fail(ErrorCode::ConfigError, std::string("'") + key + "' must be a string");
  const auto it = options.find(*s);
  if (it == options.end()) fail(ErrorCode::ConfigError, std::string("invalid value '") + *s + "' for '" + key + "'");
  return it->second;
}

template <typename T>
T int_value(const toml::table& t, const char* key, T fallback) {
  const auto node = t[key];
  if (!node) return fallback;
  const auto v = node.value<std::int64_t>();
  if (!v) fail(ErrorCode::ConfigError, std::string("'") + key + "' must be an integer");
  return static_cast<T>(*v);
}

Scenario scenario_from_table(const toml::table& t) {
  static const std::set<std::string> known{"family", "N", "n1", "n2", "covariates", "variance", "design1",
                                           "design2", "replications", "seed", "estimators", "proposed_variance",
                                           "threads", "scale"};
  for (const auto& [k, v] : t) {
    (void)v;
    if (!known.count(std::string(k.str())))
      fail(ErrorCode::ConfigError, "unknown scenario key '" + std::string(k.str()) + "'");
  }
  const Family family = enum_value<Family>(t, "family", {{"linear", Family::Linear}, {"logistic", Family::Logistic}},
                                           Family::Linear);
  const auto cov = enum_value<CovariateMode>(
      t, "covariates", {{"independent", CovariateMode::Independent}, {"dependent", CovariateMode::Dependent}},
      CovariateMode::Independent);
  const auto var = enum_value<ErrorVariance>(t, "variance", {{"homo", ErrorVariance::Homo}, {"hetero", ErrorVariance::Hetero}},
                                             ErrorVariance::Homo);
  const std::map<std::string, SamplingDesign> designs{{"srs", SamplingDesign::Srs}, {"poisson", SamplingDesign::Poisson}};
  const auto d1 = enum_value<SamplingDesign>(t, "design1", designs, SamplingDesign::Srs);
  const auto d2 = enum_value<SamplingDesign>(t, "design2", designs, SamplingDesign::Srs);
  const bool paper = enum_value<bool>(t, "scale", {{"desk", false}, {"paper", true}}, false);
  Scenario s = paper ? Scenario::paper(family, cov, var, d1, d2) : Scenario::desk(family, cov, var, d1, d2);
  s.population_size = int_value<Index>(t, "N", s.population_size);
  s.n1 = int_value<Index>(t, "n1", s.n1);
  s.n2 = int_value<Index>(t, "n2", s.n2);
  s.replications = int_value<int>(t, "replications", s.replications);
  s.seed = int_value<std::uint64_t>(t, "seed", s.seed);
  s.threads = int_value<int>(t, "threads", s.threads);
  s.proposed_variance = enum_value<ProposedVariance>(
      t, "proposed_variance", {{"pooled", ProposedVariance::Pooled}, {"known", ProposedVariance::KnownBenchmark}},
      ProposedVariance::Pooled);
  if (const auto* arr = t["estimators"].as_array()) {
    const std::map<std::string, Estimator> names{
        {"proposed", Estimator::Proposed}, {"internal_only", Estimator::InternalOnly}, {"cml", Estimator::Cml}};
    s.estimators.clear();
    for (const auto& e : *arr) {
      const auto v = e.value<std::string>();
      if (!v || !names.count(*v)) fail(ErrorCode::ConfigError, "unknown estimator in 'estimators'");
      s.estimators.push_back(names.at(*v));
    }
  } else if (t["estimators"]) {
    fail(ErrorCode::ConfigError, "'estimators' must be an array of strings");
  }
  s.validate();
  return s;
}

}  // namespace

std::vector<Scenario> parse_scenarios_toml_text(const std::string& text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    fail(ErrorCode::ConfigError, std::string("invalid TOML: ") + std::string(e.description()));
  }
  std::vector<Scenario> out;
  if (const auto* arr = root["scenario"].as_array()) {
    for (const auto& node : *arr) {
      const auto* t = node.as_table();
      if (!t) fail(ErrorCode::ConfigError, "[[scenario]] entries must be tables");
      out.push_back(scenario_from_table(*t));
    }
  } else if (const auto* t = root["scenario"].as_table()) {
    out.push_back(scenario_from_table(*t));
  } else {
    fail(ErrorCode::ConfigError, "config needs a [scenario] table or [[scenario]] array");
  }
  return out;
}

std::vector<Scenario> parse_scenarios_toml(const std::string& path) { return parse_scenarios_toml_text(read_file(path)); }

std::string metrics_svg(const std::vector<MetricsTable>& tables) {
  // One panel per scenario: standardized bias (bias / bias_se) and coverage.
  const int panel_w = 420, panel_h = 170, margin = 40;
  const int height = margin + static_cast<int>(tables.size()) * (panel_h + margin);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * panel_w + 3 * margin << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"10\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c"};
  for (std::size_t s = 0; s < tables.size(); ++s) {
    const MetricsTable& t = tables[s];
    const int top = margin + static_cast<int>(s) * (panel_h + margin);
    os << "<text x=\"" << margin << "\" y=\"" << top - 8 << "\" font-size=\"12\">" << t.scenario.label() << "</text>\n";
    for (int panel = 0; panel < 2; ++panel) {
      const int left = margin + panel * (panel_w + margin);
      const double lo = panel == 0 ? -6.0 : 0.8;
      const double hi = panel == 0 ? 6.0 : 1.0;
      auto ypos = [&](double v) { return top + panel_h * (hi - std::clamp(v, lo, hi)) / (hi - lo); };
      os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << panel_w << "\" height=\"" << panel_h
         << "\" fill=\"none\" stroke=\"#888\"/>\n";
      os << "<text x=\"" << left + 4 << "\" y=\"" << top + 12 << "\">"
         << (panel == 0 ? "bias / MC standard error" : "95% CI coverage") << "</text>\n";
      const double refs[2][2] = {{-2.0, 2.0}, {0.95, 0.95}};
      for (double r : refs[panel])
        os << "<line x1=\"" << left << "\" x2=\"" << left + panel_w << "\" y1=\"" << ypos(r) << "\" y2=\"" << ypos(r)
           << "\" stroke=\"#c00\" stroke-dasharray=\"4 3\"/>\n";
      const double base = panel == 0 ? ypos(0.0) : ypos(lo);
      const int nrows = static_cast<int>(t.rows.size());
      const double bw = static_cast<double>(panel_w) / std::max(1, nrows);
      for (int i = 0; i < nrows; ++i) {
        const auto& r = t.rows[static_cast<std::size_t>(i)];
        const double v = panel == 0 ? (r.bias_se > 0 ? r.bias / r.bias_se : 0.0) : r.coverage;
        if (std::isnan(v)) continue;
        const double y = ypos(v);
        os << "<rect x=\"" << left + i * bw + 2 << "\" y=\"" << std::min(y, base) << "\" width=\"" << bw - 4
           << "\" height=\"" << std::abs(base - y) << "\" fill=\""
           << colors[static_cast<int>(r.estimator) % 3] << "\"><title>" << to_string(r.estimator) << " beta"
           << r.coefficient << ": " << v << "</title></rect>\n";
        os << "<text x=\"" << left + i * bw + 2 << "\" y=\"" << top + panel_h + 12 << "\" font-size=\"8\">"
           << to_string(r.estimator)[0] << r.coefficient << "</text>\n";
      }
    }
  }
  os << "</svg>\n";
  return os.str();
}

EstimatingSpec spec_from_names(const SurveySample& sample, const std::string& family,
                               const std::vector<std::string>& full, const std::vector<std::string>& reduced) {
  Family fam;
  if (family == "linear") fam = Family::Linear;
  else if (family == "logistic") fam = Family::Logistic;
  else fail(ErrorCode::ConfigError, "family must be linear or logistic");
  const auto& names = sample.covariate_names();
  auto mask = [&](const std::vector<std::string>& chosen) {
    std::vector<bool> m(names.size(), false);
    for (const auto& c : chosen) {
      const auto it = std::find(names.begin(), names.end(), c);
      if (it == names.end()) fail(ErrorCode::ConfigError, "unknown covariate '" + c + "'");
      m[static_cast<std::size_t>(it - names.begin())] = true;
    }
    return m;
  };
  EstimatingSpec spec = EstimatingSpec::make(fam, mask(full), mask(reduced));
  spec.validate_for(sample.dim());
  return spec;
}

namespace {

std::vector<std::string> coefficient_names(const SurveySample& sample, const EstimatingSpec& spec) {
  std::vector<std::string> out;
  if (spec.intercept) out.emplace_back("(Intercept)");
  for (std::size_t j = 0; j < spec.full_mask.size(); ++j)
    if (spec.full_mask[j]) out.push_back(sample.covariate_names()[j]);
  return out;
}

void emit(const RunConfig& cfg, std::ostream& out, const std::string& content) {
  if (cfg.output_path.empty()) out << content;
  else write_file(cfg.output_path, content);
}

struct Benchmark {
  Vec alpha_star;
  VarianceMode mode = VarianceMode::KnownAlpha;
  std::optional<PooledBenchmark> pooled;
};

Benchmark resolve_benchmark(const RunConfig& cfg, const SurveySample& sample, const EstimatingSpec& spec) {
  const SummaryStatistic external = parse_summary_json(cfg.summary_path);
  if (external.alpha_hat.size() != spec.dimension(Model::Reduced))
    fail(ErrorCode::DimensionMismatch, "summary length differs from the reduced model dimension");
  Benchmark b;
  if (cfg.benchmark == BenchmarkMode::Known) {
    b.alpha_star = external.alpha_hat;
    b.mode = VarianceMode::KnownAlpha;
    return b;
  }
  const SummaryStatistic internal = estimate_alpha_internal(sample, spec);
  const bool external_only = cfg.benchmark == BenchmarkMode::ExternalOnly;
  b.pooled = gls_pool(internal, external, external_only);
  b.alpha_star = b.pooled->alpha_star;
  b.mode = external_only ? VarianceMode::ExternalDominant : VarianceMode::PooledAlphaCase1;
  return b;
}

std::optional<Design> design_option(const std::string& text) {
  if (text.empty()) return std::nullopt;
  return parse_design(text);
}

int run_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::vector<Scenario> scenarios = parse_scenarios_toml(cfg.config_path);
  std::vector<MetricsTable> tables;
  bool mismatch = false;
  for (Scenario& s : scenarios) {
    if (cfg.threads > 0) s.threads = cfg.threads;
    MetricsTable t = run_monte_carlo(s);
    for (const auto& r : t.rows)
      if (r.successes + r.failures != t.replications || t.replications != s.replications) mismatch = true;
    if (cfg.log_level == "info" || cfg.log_level == "debug")
      err << "[info] " << s.label() << ": " << s.replications << " replications in " << t.wall_clock_seconds
          << " s\n";
    tables.push_back(std::move(t));
  }
  emit(cfg, out, metrics_csv(tables));
  if (!cfg.svg_path.empty()) write_file(cfg.svg_path, metrics_svg(tables));
  if (mismatch) {
    err << error_to_json("sim_harness", "ReplicationMismatch", "replication counts do not add up");
    return 3;
  }
  return 0;
}

int run_calibrate_or_estimate(const RunConfig& cfg, std::ostream& out) {
  const SurveySample sample = parse_sample_csv(cfg.internal_path, design_option(cfg.internal_design));
  const EstimatingSpec spec = spec_from_names(sample, cfg.family, cfg.full_covariates, cfg.reduced_covariates);
  const Benchmark b = resolve_benchmark(cfg, sample, spec);
  const CalibratedEstimate cal = calibrated_estimate(sample, spec, b.alpha_star);
  if (cfg.command == Command::Calibrate) {
    emit(cfg, out, weights_csv(sample, cal.calibration));
    return 0;
  }
  const VarianceDecomposition dec = assemble_decomposition(sample, spec, cal.beta, b.alpha_star, b.mode);
  const Mat sigma = b.pooled ? sandwich_estimated_alpha(dec, *b.pooled, dec.n) : sandwich_known_alpha(dec);
  const EstimateReport report = wald_report(cal.beta, sigma, dec.n, cfg.level, cal.calibration, b.mode);
  emit(cfg, out, report_to_json(report, coefficient_names(sample, spec), b.alpha_star));
  return 0;
}

int run_propensity(const RunConfig& cfg, std::ostream& out) {
  const SurveySample big = parse_sample_csv(cfg.big_path, Design::unknown(), false);
  const SurveySample internal = parse_sample_csv(cfg.internal_path, design_option(cfg.internal_design));
  if (big.covariate_names() != internal.covariate_names())
    fail(ErrorCode::DimensionMismatch, "big and internal samples must have the same covariate columns");
  const EstimatingSpec spec = spec_from_names(big, cfg.family, cfg.full_covariates, cfg.reduced_covariates);
  FeatureSelector selector = FeatureSelector::from_reduced(spec);
  if (!cfg.feature_covariates.empty())
    selector.covariate_mask = spec_from_names(big, cfg.family, cfg.feature_covariates, cfg.feature_covariates).full_mask;
  const DensityRatioModel model = solve_density_ratio(big, internal, selector);
  emit(cfg, out, summary_to_json(debiased_alpha2(big, spec, model, cfg.negligible_variance)));
  return 0;
}

int run_pool(const RunConfig& cfg, std::ostream& out) {
  const SummaryStatistic a1 = parse_summary_json(cfg.internal_summary_path);
  const SummaryStatistic a2 = parse_summary_json(cfg.external_summary_path);
  emit(cfg, out, pooled_to_json(gls_pool(a1, a2, cfg.benchmark == BenchmarkMode::ExternalOnly)));
  return 0;
}

}  // namespace

int run_command(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    switch (cfg.command) {
      case Command::Simulate: return run_simulate(cfg, out, err);
      case Command::Calibrate:
      case Command::Estimate: return run_calibrate_or_estimate(cfg, out);
      case Command::Propensity: return run_propensity(cfg, out);
      case Command::Pool: return run_pool(cfg, out);
    }
  } catch (const Error& e) {
    err << error_to_json(e.module(), to_string(e.code()), e.what());
    return 2;
  } catch (const std::exception& e) {
    err << error_to_json(kModule, "InternalError", e.what());
    return 2;
  }
  return 2;
}

}  // namespace mcal
