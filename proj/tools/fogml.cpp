// fogml: run or sweep a federated-learning experiment described by a JSON config.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fogml/experiment.hpp"

namespace {

int report(const fogml::Error& e) {
  std::cerr << fogml::error_json(e) << '\n';
  return fogml::exit_code(e.kind());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic simulator for communication-efficient federated learning"};
  app.require_subcommand(1);

  std::string config_path, param, values;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--output-dir", output_dir, "Override output_dir");
  run->add_option("--seed", seed, "Override master_seed");

  auto* sweep = app.add_subcommand("sweep", "Run one experiment per parameter value");
  sweep->add_option("config", config_path, "Experiment config (JSON)")->required();
  sweep->add_option("--param", param, "Dotted config key, e.g. fl.tau")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_option("--output-dir", output_dir, "Override output_dir");
  sweep->add_option("--seed", seed, "Override master_seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      auto cfg = fogml::load_config(config_path);
      if (output_dir) cfg.output_dir = *output_dir;
      if (seed) cfg.master_seed = *seed;
      const auto out = fogml::run_experiment(cfg);
      fogml::write_outputs(cfg.output_dir, out);
      std::cout << out.summary.dump() << '\n';
    } else {
      const auto doc = fogml::read_json_file(config_path);
      std::cout << fogml::run_sweep(doc, param, fogml::parse_sweep_values(values), output_dir,
                                    seed);
    }
  } catch (const fogml::Error& e) {
    return report(e);
  } catch (const std::exception& e) {
    return report(fogml::Error(fogml::ErrorKind::kIo, e.what()));
  }
  return 0;
}
