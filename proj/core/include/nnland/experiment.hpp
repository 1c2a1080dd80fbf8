#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nnland/descent.hpp"

namespace nnland {

enum class Command { Gen, Minimize, CheckGd, CheckRc, Descend, Full };

const char* to_string(Command command) noexcept;
/// "gen", "minimize", "check-gd", "check-rc", "descend" or "full".
Command parse_command(const std::string& name);

/// Experiment configuration.
///
/// File format: one `key = value` per line, `#` starts a comment, blank
/// lines are ignored. Unknown keys and repeated keys are errors.
///
///   architecture   linear | residual | nonlinear        (linear)
///   d, m           data dimension and sample count       (2, m = d)
///   l              layers or residual units              (2)
///   r              factors per residual unit             (residual only, 1)
///   slope          parametric ReLU slope a in (0, 1)     (nonlinear only, 0.5)
///   seed           64-bit seed for every random draw     (0)
///   samples        gradient-dominance samples            (10000)
///   rc_samples     qualifying regularity samples         (1000)
///   search_samples qualifying samples per epsilon level  (10 * rc_samples)
///   gamma          regularity gamma in (0, 1)            (0.5)
///   delta          auto | positive number                (auto)
///   gd_radius      override of the certified GD radius
///   eps_hi         top of the epsilon lattice            (zeta / 2)
///   rc_levels      epsilon lattice levels                (30)
///   transforms     identity | random                     (identity)
///   fixture        builtin:f1 | path to a fixture file   (generated data)
///   displacement   descent start, fraction of the radius (0.5)
///   descent_iters  descent iteration cap                 (2000)
///   step           descent step                          (1 / |F(W*)|^2)
///   format         json | csv                            (json)
///   output         report path                           (stdout)
///   timing         true | false, adds wall time          (false)
struct ExperimentConfig {
  Architecture architecture = Architecture::Linear;
  Index d = 2;
  std::optional<Index> m;
  Index l = 2;
  std::optional<Index> r;
  std::optional<double> slope;
  std::uint64_t seed = 0;
  Index samples = 10000;
  Index rc_samples = 1000;
  std::optional<Index> search_samples;
  double gamma = 0.5;
  std::optional<double> delta;
  std::optional<double> gd_radius;
  std::optional<double> eps_hi;
  int rc_levels = 30;
  std::string transforms = "identity";
  std::string fixture;
  double displacement = 0.5;
  Index descent_iters = 2000;
  std::optional<double> step;
  std::string format = "json";
  std::string output;
  bool timing = false;

  Index samples_m() const noexcept { return m.value_or(d); }
  Index search_budget() const noexcept { return search_samples.value_or(10 * rc_samples); }
  Index depth() const noexcept { return r.value_or(1); }
  double activation_slope() const noexcept { return slope.value_or(0.5); }
};

/// Sets one field from its textual value; throws ConfigError naming the key.
void set_config_field(ExperimentConfig& config, const std::string& key, const std::string& value);
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Field-level checks plus the architecture and command compatibility rules.
void validate_config(const ExperimentConfig& config, Command command);

DataPair experiment_data(const ExperimentConfig& config);
MinimizerCertificate experiment_certificate(const ExperimentConfig& config, const DataPair& data);

struct RunResult {
  std::string output;  // report text (JSON, CSV, or fixture text for gen)
  int exit_code = 0;   // 0 iff no violation and no error
  std::vector<std::string> diagnostics;
};

/// Runs a validated command. Library errors propagate as exceptions.
RunResult run_command(Command command, const ExperimentConfig& config);

}  // namespace nnland
