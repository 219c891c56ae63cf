// Command line front end for the experiment harness.
//
//   modadc_harness run <config.json> [--output stem]
//   modadc_harness sweep <config.json> --axis <name> --values v1,v2,...
//   modadc_harness selftest [ids...]
//
// run and sweep write <stem>.trials.csv and <stem>.summary.csv next to the
// stem given in the config (or overridden here). selftest runs the
// acceptance checklist. Exit status: 0 on success, nonzero otherwise.
#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "modadc/acceptance.hpp"
#include "modadc/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"modulo ADC experiment harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_override;
  std::string axis;
  std::vector<double> values;
  std::vector<int> ids;

  CLI::App* run = app.add_subcommand("run", "run one experiment config");
  run->add_option("config", config_path, "JSON experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--output", output_override,
                  "output stem, overrides the config's output_path");

  CLI::App* sweep =
      app.add_subcommand("sweep", "re-run one config across an axis");
  sweep->add_option("config", config_path, "JSON experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  sweep->add_option("--axis", axis, "config field to vary")->required();
  sweep->add_option("--values", values, "axis values, comma separated")
      ->required()
      ->delimiter(',');
  sweep->add_option("--output", output_override,
                    "output stem, overrides the config's output_path");

  CLI::App* selftest =
      app.add_subcommand("selftest", "run the acceptance checklist");
  selftest->add_option("ids", ids, "criterion ids, 1-based; empty runs all");

  CLI11_PARSE(app, argc, argv);

  try {
    if (selftest->parsed()) return modadc::run_acceptance(ids);
    modadc::ExperimentConfig cfg = modadc::load_config(config_path);
    if (!output_override.empty()) cfg.output_path = output_override;
    if (run->parsed()) return modadc::run_to_files(cfg);
    return modadc::sweep_to_files(cfg, axis, values);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
