#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "csl/io.hpp"

namespace csl {

/// Subcommand plus command-line overrides of the [run] section.
struct ExperimentOptions {
  std::string command;  // collapse | lindblad | creation | gravity | formfactor | tensors
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::string> format;  // csv | json, for the time series
  std::optional<int> threads;
  std::optional<std::string> mode;  // creation: ode|closed|trajectory, gravity: rescaled|smeared-clock, tensors: continuity|interacting|energy
};

struct ExperimentResult {
  std::vector<std::filesystem::path> files;
  std::string summary_text;
  Json summary;
  std::vector<std::string> warnings;
};

const std::vector<std::string>& experiment_commands();

LatticeSpec lattice_from_config(const Config& cfg);
CollapseParams collapse_from_config(const Config& cfg);

/// Runs one experiment and writes summary.json and timeseries.{csv,json} into the output
/// directory. Nothing is left behind when it throws.
ExperimentResult run_experiment(const Config& cfg, const ExperimentOptions& options);
ExperimentResult run_experiment(const std::filesystem::path& config_path, const ExperimentOptions& options);

/// 2 for ConfigError, 3 for InvariantViolation, 4 for IoError, 1 otherwise.
int exit_code_for(std::exception_ptr error);

}  // namespace csl
