#pragma once

// Plain-text run configuration:
//
//   [system]      name, horizon, domain_lo, domain_hi, initial_state, <constant> = value
//   [formalism]   kind (one or a comma list)
//   [training]    epochs, learning_rate, seed, hidden, activation, n_data, n_res, n_ic, n_bc,
//                 w_data, w_res, w_ic, w_bc, w_lag, w_cons, inverse_params, inverse_init,
//                 abort_threshold, runs, jobs, eval_points, ode_dt, diffusion_nt, diffusion_nx,
//                 diffusion_ny, fisher_nx, fisher_dt
//   [noise]       noise_level (one or a comma list)
//   [landscape]   half_range, resolution, pairs, seed
//   [output]      dir
//
// '#' and ';' start comments. Unknown sections and keys are errors.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "thermoforge/training.hpp"

namespace thermoforge::config {

struct Issue {
  int line = 0;  // 0 when not tied to a line
  std::string key;
  std::string message;

  std::string str() const;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<Issue> issues);
  std::vector<Issue> issues;
};

struct LandscapeSettings {
  double half_range = 1.0;
  std::size_t resolution = 25;
  std::size_t pairs = 1;
  std::uint64_t seed = 0;
};

struct RunConfig {
  training::SuiteConfig suite;
  LandscapeSettings landscape;
  std::filesystem::path output_dir;  // resolved against the config file's directory
  std::filesystem::path source;
};

/// Parses and validates; throws ConfigError carrying every problem found.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

/// Problems with a config file, empty when it is valid.
std::vector<Issue> validate_config(const std::filesystem::path& path);

/// Canonical text of every effective setting, defaults included.
std::string normalized(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

/// Seeds of every (formalism, noise, run) in suite order.
std::vector<std::uint64_t> run_seeds(const RunConfig& cfg);

}  // namespace thermoforge::config
