// nnland: seeded landscape experiments on linear, residual and nonlinear nets.
//
//   nnland full --fixture builtin:f1 --l 2
//   nnland check-rc --config run.cfg --seed 7 --format csv --out samples.csv

#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "nnland/errors.hpp"
#include "nnland/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Landscape checks for deep linear, residual and nonlinear networks"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, std::string> overrides;
  const std::vector<std::pair<std::string, std::string>> flags = {
      {"arch", "architecture"}, {"d", "d"},           {"m", "m"},           {"l", "l"},
      {"r", "r"},               {"slope", "slope"},   {"seed", "seed"},     {"samples", "samples"},
      {"gamma", "gamma"},       {"delta", "delta"},   {"format", "format"}, {"fixture", "fixture"},
      {"out", "output"}};

  for (const char* name : {"gen", "minimize", "check-gd", "check-rc", "descend", "full"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key = value configuration file");
    for (const auto& [flag, key] : flags) {
      sub->add_option_function<std::string>(
          "--" + flag, [&overrides, key = key](const std::string& v) { overrides[key] = v; },
          "override config key '" + key + "'");
    }
  }

  CLI11_PARSE(app, argc, argv);
  const CLI::App* chosen = app.get_subcommands().front();

  try {
    const nnland::Command command = nnland::parse_command(chosen->get_name());
    nnland::ExperimentConfig config = config_path.empty() ? nnland::ExperimentConfig{}
                                                          : nnland::load_config(config_path);
    for (const auto& [key, value] : overrides) nnland::set_config_field(config, key, value);

    const nnland::RunResult result = nnland::run_command(command, config);
    if (config.output.empty()) {
      std::cout << result.output;
    } else {
      std::ofstream out(config.output, std::ios::binary);
      if (!out) throw nnland::Error("cannot write " + config.output);
      out << result.output;
    }
    for (const std::string& d : result.diagnostics) std::cerr << "nnland: " << d << '\n';
    return result.exit_code;
  } catch (const nnland::ConfigError& e) {
    std::cerr << "nnland: invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "nnland: error: " << e.what() << '\n';
    return 3;
  }
}
