// csl-lab: runs one experiment from a config file and writes summary.json plus a time series.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "csl/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Continuous spontaneous localization lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, format;
  std::optional<int> threads;
  std::string mode;

  app.add_option("--config", config_path, "experiment config (INI)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed, overrides [run] seed");
  app.add_option("--out", out, "output directory, overrides [run] out_dir");
  app.add_option("--format", format, "time-series format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  for (const auto& name : csl::experiment_commands()) {
    auto* sub = app.add_subcommand(name);
    sub->fallthrough();
    if (name == "creation") sub->add_option("--mode", mode, "ode | closed | trajectory");
    if (name == "gravity") sub->add_option("--mode", mode, "rescaled | smeared-clock");
    if (name == "tensors") sub->add_option("--mode", mode, "continuity | interacting | energy");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  csl::ExperimentOptions opt;
  opt.command = app.get_subcommands().front()->get_name();
  opt.seed = seed;
  if (out) opt.out_dir = *out;
  opt.format = format;
  opt.threads = threads;
  if (!mode.empty()) opt.mode = mode;

  try {
    auto res = csl::run_experiment(std::filesystem::path(config_path), opt);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& f : res.files) std::cout << f.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "csl-lab: " << e.what() << "\n";
    return csl::exit_code_for(std::current_exception());
  }
}
