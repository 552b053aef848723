#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "clinpath/io_util.hpp"
#include "clinpath/pipeline.hpp"

namespace {

int run_cli(int argc, char** argv) {
  CLI::App app{"clinpath: prognostic pathway extraction from clinical notes"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool print_config = false;

  app.add_option("--config", config_path, "pipeline configuration (JSON)");
  app.add_option("--out", out_dir, "output directory (overrides config)");
  app.add_option("--seed", seed, "random seed (overrides config)")
      ->each([&](const std::string&) { seed_set = true; });
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");

  for (const auto& name : clinpath::pipeline::subcommands()) {
    app.add_subcommand(name)->silent(false);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  }

  clinpath::pipeline::PipelineConfig config;
  if (!config_path.empty()) {
    if (!clinpath::file_exists(config_path)) {
      std::cerr << "error: config file not found: " << config_path << "\n";
      return 1;
    }
    config = clinpath::pipeline::PipelineConfig::from_json(clinpath::read_file(config_path));
  }
  if (!out_dir.empty()) config.out = out_dir;
  if (seed_set) config.seed = seed;

  if (print_config) {
    std::cout << config.to_json();
    return 0;
  }

  const auto chosen = app.get_subcommands();
  if (chosen.empty()) {
    std::cerr << app.help();
    return 1;
  }
  clinpath::pipeline::run(chosen.front()->get_name(), config);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const clinpath::pipeline::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const clinpath::pipeline::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
