#include "nnland/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include "nnland/errors.hpp"
#include "nnland/report.hpp"
#include "report_json.hpp"

namespace nnland {

namespace {

// Generator streams split off the root seed.
constexpr std::uint64_t kStreamData = 0;
constexpr std::uint64_t kStreamTransforms = 1;
constexpr std::uint64_t kStreamGd = 2;
constexpr std::uint64_t kStreamRcSearch = 3;
constexpr std::uint64_t kStreamRcCheck = 4;
constexpr std::uint64_t kStreamDescent = 5;
constexpr std::uint64_t kStreamInnerTransforms = 6;
constexpr std::uint64_t kStreamSafeRadius = 7;
constexpr std::uint64_t kStreamComparison = 8;

constexpr Index kSafeRadiusSamples = 200;

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ConfigError(key, "cannot parse '" + value + "' as a number");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) throw ConfigError(key, "value must be finite");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + value + "'");
}

bool needs_square(const ExperimentConfig& c, Command command) {
  return c.architecture != Architecture::Linear || (command != Command::Gen && command != Command::Minimize);
}

}  // namespace

const char* to_string(Command command) noexcept {
  switch (command) {
    case Command::Gen:
      return "gen";
    case Command::Minimize:
      return "minimize";
    case Command::CheckGd:
      return "check-gd";
    case Command::CheckRc:
      return "check-rc";
    case Command::Descend:
      return "descend";
    case Command::Full:
      return "full";
  }
  return "?";
}

Command parse_command(const std::string& name) {
  for (Command c : {Command::Gen, Command::Minimize, Command::CheckGd, Command::CheckRc, Command::Descend,
                    Command::Full}) {
    if (name == to_string(c)) return c;
  }
  throw ConfigError("command", "unknown command '" + name + "'");
}

void set_config_field(ExperimentConfig& c, const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "architecture") {
    if (value == "linear") {
      c.architecture = Architecture::Linear;
    } else if (value == "residual") {
      c.architecture = Architecture::Residual;
    } else if (value == "nonlinear") {
      c.architecture = Architecture::Nonlinear;
    } else {
      throw ConfigError(key, "expected linear, residual or nonlinear, got '" + value + "'");
    }
  } else if (key == "d") {
    c.d = parse_number<Index>(key, value);
  } else if (key == "m") {
    c.m = parse_number<Index>(key, value);
  } else if (key == "l") {
    c.l = parse_number<Index>(key, value);
  } else if (key == "r") {
    c.r = parse_number<Index>(key, value);
  } else if (key == "slope") {
    c.slope = parse_number<double>(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "samples") {
    c.samples = parse_number<Index>(key, value);
  } else if (key == "rc_samples") {
    c.rc_samples = parse_number<Index>(key, value);
  } else if (key == "search_samples") {
    c.search_samples = parse_number<Index>(key, value);
  } else if (key == "gamma") {
    c.gamma = parse_number<double>(key, value);
  } else if (key == "delta") {
    if (value == "auto") {
      c.delta.reset();
    } else {
      c.delta = parse_number<double>(key, value);
    }
  } else if (key == "gd_radius") {
    c.gd_radius = parse_number<double>(key, value);
  } else if (key == "eps_hi") {
    c.eps_hi = parse_number<double>(key, value);
  } else if (key == "rc_levels") {
    c.rc_levels = parse_number<int>(key, value);
  } else if (key == "transforms") {
    c.transforms = value;
  } else if (key == "fixture") {
    c.fixture = value;
  } else if (key == "displacement") {
    c.displacement = parse_number<double>(key, value);
  } else if (key == "descent_iters") {
    c.descent_iters = parse_number<Index>(key, value);
  } else if (key == "step") {
    c.step = parse_number<double>(key, value);
  } else if (key == "format") {
    c.format = value;
  } else if (key == "output") {
    c.output = value;
  } else if (key == "timing") {
    c.timing = parse_bool(key, value);
  } else {
    throw ConfigError(key, "unknown key");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(key, "repeated key");
    set_config_field(c, key, line.substr(eq + 1));
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void validate_config(const ExperimentConfig& c, Command command) {
  if (c.d < 1) throw ConfigError("d", "must be at least 1");
  if (c.samples_m() < c.d) throw ConfigError("m", "must be at least d");
  if (c.l < 1) throw ConfigError("l", "must be at least 1");
  if (c.r && c.architecture != Architecture::Residual) throw ConfigError("r", "only valid for residual");
  if (c.r && *c.r < 1) throw ConfigError("r", "must be at least 1");
  if (c.slope && c.architecture != Architecture::Nonlinear) throw ConfigError("slope", "only valid for nonlinear");
  if (c.slope && !(*c.slope > 0.0 && *c.slope < 1.0)) throw ConfigError("slope", "must lie in (0, 1)");
  if (c.architecture == Architecture::Nonlinear && c.l != 2) {
    throw ConfigError("l", "the nonlinear network has exactly two layers");
  }
  if (c.samples < 1) throw ConfigError("samples", "must be positive");
  if (c.rc_samples < 1) throw ConfigError("rc_samples", "must be positive");
  if (c.search_samples && *c.search_samples < 1) throw ConfigError("search_samples", "must be positive");
  if (!(c.gamma > 0.0 && c.gamma < 1.0)) throw ConfigError("gamma", "must lie in (0, 1)");
  if (c.delta && !(*c.delta > 0.0)) throw ConfigError("delta", "must be positive");
  if (c.gd_radius && !(*c.gd_radius > 0.0)) throw ConfigError("gd_radius", "must be positive");
  if (c.eps_hi && !(*c.eps_hi > 0.0)) throw ConfigError("eps_hi", "must be positive");
  if (c.rc_levels < 1 || c.rc_levels > 60) throw ConfigError("rc_levels", "must lie in [1, 60]");
  if (c.transforms != "identity" && c.transforms != "random") {
    throw ConfigError("transforms", "expected identity or random");
  }
  if (!(c.displacement > 0.0 && c.displacement < 1.0)) throw ConfigError("displacement", "must lie in (0, 1)");
  if (c.descent_iters < 1) throw ConfigError("descent_iters", "must be positive");
  if (c.step && !(*c.step > 0.0)) throw ConfigError("step", "must be positive");
  if (c.format != "json" && c.format != "csv") throw ConfigError("format", "expected json or csv");
  if (c.format == "csv" && command != Command::CheckGd && command != Command::CheckRc && command != Command::Full) {
    throw ConfigError("format", "csv is only produced by check-gd, check-rc and full");
  }
  if (c.fixture.empty() && needs_square(c, command) && c.samples_m() != c.d) {
    throw ConfigError("m", "this architecture or command requires m = d");
  }
}

DataPair experiment_data(const ExperimentConfig& config) {
  if (config.fixture == "builtin:f1") return fixture_f1();
  if (!config.fixture.empty()) return load_fixture(config.fixture);
  Rng rng = Rng(config.seed).split(kStreamData);
  return gen_data(config.d, config.samples_m(), rng);
}

MinimizerCertificate experiment_certificate(const ExperimentConfig& config, const DataPair& data) {
  const Rng root(config.seed);
  const bool random = config.transforms == "random";
  const Transforms outer =
      random ? Transforms::random(root.split(kStreamTransforms).seed()) : Transforms::identity();
  switch (config.architecture) {
    case Architecture::Linear:
      return linear_minimizer(data, config.l, outer);
    case Architecture::Residual: {
      const Transforms inner =
          random ? Transforms::random(root.split(kStreamInnerTransforms).seed()) : Transforms::identity();
      return residual_minimizer(data, config.l, config.depth(), outer, inner);
    }
    case Architecture::Nonlinear:
      return nonlinear_minimizer(data, Activation(config.activation_slope()), outer);
  }
  throw PreconditionError("experiment_certificate: unknown architecture");
}

RunResult run_command(Command command, const ExperimentConfig& config) {
  using report::Json;
  using report::to_json;
  validate_config(config, command);
  const auto started = std::chrono::steady_clock::now();
  RunResult result;
  auto fail = [&result](int code, std::string message) {
    result.exit_code = std::max(result.exit_code, code);
    result.diagnostics.push_back(std::move(message));
  };

  const DataPair data = experiment_data(config);
  if (command == Command::Gen) {
    result.output = format_fixture(data);
    return result;
  }
  if (needs_square(config, command) && !data.square()) {
    throw ConfigError("fixture", "this architecture or command requires m = d");
  }

  const Rng root(config.seed);
  Json rep;
  rep["schema_version"] = kReportSchemaVersion;
  rep["version"] = version_tag();
  rep["command"] = to_string(command);
  rep["config"] = to_json(config);

  const AssumptionReport assumptions = validate_assumptions(data);
  const SpectralSummary summary = spectral_summary(data);
  Json data_json;
  data_json["d"] = data.d();
  data_json["m"] = data.m();
  data_json["assumptions"] = to_json(assumptions);
  data_json["trace_sigma_yy"] = summary.sigma_yy_trace;
  data_json["optimal_value"] = summary.optimal_value;
  data_json["min_loss"] = summary.min_loss();
  rep["data"] = std::move(data_json);
  if (!assumptions.passed()) fail(2, "data violates the standing rank or eigenvalue assumptions");

  const MinimizerCertificate cert = experiment_certificate(config, data);
  rep["certificate"] = to_json(cert, command == Command::Minimize || command == Command::Full);
  if (!cert.value_matches()) fail(2, "certificate loss does not match the predicted optimal value");
  if (!cert.stationary()) fail(2, "certificate gradient norm exceeds 1e-8");

  std::optional<ConditionReport> gd_report;
  std::optional<ConditionReport> rc_report;
  if (command == Command::CheckGd || command == Command::Full) {
    const GDParams gd = gd_params(cert, data);
    gd_report = check_gd(cert, data, gd, config.samples, root.split(kStreamGd), config.gd_radius);
    Json j = to_json(*gd_report);
    if (gd.arch == Architecture::Residual) {
      Rng rng = root.split(kStreamSafeRadius);
      j["empirical_safe_radius"] = empirical_safe_radius(cert, gd, kSafeRadiusSamples, rng);
    }
    rep["gradient_dominance"] = std::move(j);
    if (gd_report->violations > 0) {
      fail(1, std::to_string(gd_report->violations) + " gradient-dominance violations");
    }
  }

  if (command == Command::CheckRc || command == Command::Full) {
    const RCParams rc = rc_params(cert, data, config.gamma, config.delta);
    const EpsilonSearchResult search = epsilon_search(cert, data, rc, config.search_budget(),
                                                      root.split(kStreamRcSearch), config.eps_hi, config.rc_levels);
    Json j;
    j["search"] = to_json(search);
    if (search.params.epsilon > 0.0) {
      rc_report = check_rc(cert, data, search.params, config.rc_samples, root.split(kStreamRcCheck));
      j["check"] = to_json(*rc_report);
      if (rc_report->violations > 0) fail(1, std::to_string(rc_report->violations) + " regularity violations");
    } else {
      j["check"] = nullptr;
      fail(1, "epsilon search found no certified radius: " + search.diagnostic);
    }
    rep["regularity"] = std::move(j);
  }

  if (command == Command::Descend || command == Command::Full) {
    const GDParams gd = gd_params(cert, data);
    Rng rng = root.split(kStreamDescent);
    const Net start = displaced_start(cert, data, gd, config.displacement, rng);
    DescentOptions options;
    options.step = config.step.value_or(default_step(cert, data));
    options.iters = config.descent_iters;
    options.in_neighborhood = gd_neighborhood(cert, data, gd);
    const DescentTrace trace = run_gd(start, cert.net, data, cert.predicted_value, options);
    Json j;
    j["gd_params"] = to_json(gd);
    j["trace"] = to_json(trace);
    if (trace.diverged) fail(2, "gradient descent diverged");
    if (const auto* res = std::get_if<ResidualNet>(&cert.net); res != nullptr && res->depth() == 1) {
      Rng cmp_rng = root.split(kStreamComparison);
      const ParameterizationComparison cmp = compare_residual_plain(cert, data, config.displacement, options, cmp_rng);
      Json c;
      c["lambda_f"] = cmp.lambda_f;
      c["lambda_h"] = cmp.lambda_h;
      c["residual_fit"] = to_json(cmp.residual.fit);
      c["plain_fit"] = to_json(cmp.plain.fit);
      j["residual_vs_plain"] = std::move(c);
    }
    rep["descent"] = std::move(j);
  }

  Json diagnostics = Json::array();
  for (const std::string& d : result.diagnostics) diagnostics.push_back(d);
  rep["diagnostics"] = std::move(diagnostics);
  rep["exit_code"] = result.exit_code;
  if (config.timing) {
    rep["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }

  if (config.format == "csv") {
    std::vector<const ConditionReport*> tables;
    if (gd_report) tables.push_back(&*gd_report);
    if (rc_report) tables.push_back(&*rc_report);
    result.output = samples_csv(tables);
  } else {
    result.output = rep.dump(2) + "\n";
  }
  return result;
}

}  // namespace nnland
