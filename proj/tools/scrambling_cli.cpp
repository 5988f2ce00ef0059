#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "scrambling/experiment.hpp"

namespace {

constexpr int exit_module_error = 1;
constexpr int exit_config_error = 2;

void print_diagnostics(const std::string& path, const std::vector<scrambling::Diagnostic>& diags) {
  for (const auto& d : diags) std::cerr << path << ": " << d.str() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Operator-scrambling experiments: walker Monte Carlo, return probabilities, Lyapunov exponents"};
  app.require_subcommand(1);

  std::string config_path, output_override;
  auto* run = app.add_subcommand("run", "run an experiment file");
  run->add_option("config", config_path, "experiment file")->required();
  run->add_option("-o,--output", output_override, "output directory (overrides output_path)");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check an experiment file without running it");
  validate->add_option("config", validate_path, "experiment file")->required();

  auto* list = app.add_subcommand("list-experiments", "list experiments and their keys");
  bool verbose = false;
  list->add_flag("-v,--verbose", verbose, "show keys");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_config_error;
  }

  using namespace scrambling;
  if (*list) {
    for (const auto& e : experiment_catalog()) {
      std::cout << e.name << "  " << e.description << "\n";
      if (!verbose) continue;
      for (const auto& k : e.keys)
        std::cout << "    " << k.path << (k.required ? " (required)" : "") << "  " << k.help << "\n";
    }
    return 0;
  }

  const std::string path = *run ? config_path : validate_path;
  ConfigDocument doc;
  try {
    doc = load_config(path);
  } catch (const ConfigError& e) {
    print_diagnostics(path, e.diagnostics);
    return exit_config_error;
  }
  const auto diags = validate_config(doc);
  if (!diags.empty()) {
    print_diagnostics(path, diags);
    return exit_config_error;
  }
  if (*validate) {
    std::cout << path << ": ok\n";
    return 0;
  }

  try {
    const ExperimentConfig config(std::move(doc));
    const RunReport rep = run_experiment(config, output_override);
    const std::string dir = output_override.empty() ? config.output_path() : output_override;
    for (const auto& f : rep.outputs) std::cout << dir << "/" << f.name << "\n";
    std::cout << dir << "/manifest.json\n";
  } catch (const ConfigError& e) {
    print_diagnostics(path, e.diagnostics);
    return exit_config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_module_error;
  }
  return 0;
}
