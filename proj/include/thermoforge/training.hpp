#pragma once

// Adam training of a Model on one dataset, evaluation metrics, and seeded
// multi-run suites.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "thermoforge/formalisms.hpp"
#include "thermoforge/oracles.hpp"
#include "thermoforge/systems.hpp"

namespace thermoforge::training {

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(std::size_t index, double value);
  std::size_t index;
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t step = 0;  // number of updates applied
};

/// One bias-corrected Adam update; moments are sized on first use.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad, const AdamHyper& hyper);

std::uint64_t splitmix64(std::uint64_t x) noexcept;
/// Seed of one suite run from (base seed, formalism, noise index, run index).
std::uint64_t run_seed(std::uint64_t base, formalisms::FormalismKind kind, std::size_t noise_index,
                       std::size_t run_index) noexcept;

double l2_relative_error(std::span<const double> pred, std::span<const double> truth);
double param_relative_error(double estimate, double truth);

struct GeometricMean {
  double value = 0.0;
  std::size_t floored = 0;  // entries raised to 1e-16
};
GeometricMean geometric_mean(std::span<const double> errors);

// ---------------------------------------------------------------------------

struct TrainConfig {
  systems::BenchmarkSystem system = systems::make_system(systems::SystemId::mass_spring);
  formalisms::FormalismKind formalism = formalisms::FormalismKind::NM;
  formalisms::LossWeights weights;
  oracles::Counts counts;
  double noise_level = 0.0;
  std::size_t epochs = 20000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::vector<std::string> inverse_params;
  double inverse_init = 1.0;
  std::vector<int> hidden = {64, 64, 64};
  net::Activation activation = net::Activation::tanh;
  double abort_threshold = 1e6;
  oracles::LatticeResolution resolution;
  std::size_t eval_points = 4000;

  /// Throws formalisms::ConfigurationError describing the first violation.
  void validate() const;
};

struct EpochLoss {
  double total = 0.0, data = 0.0, res = 0.0, ic = 0.0, bc = 0.0, lag = 0.0, cons = 0.0;
};

struct Metrics {
  double l2_relative_error = 0.0;  // state on held-out lattice points
  double rmse = 0.0;
  std::map<std::string, double> mse;  // H, L, R, S, sigma_s, Jx, Jy, u_t, velocity
  std::size_t points = 0;
};

struct TrainResult {
  formalisms::Model model;
  std::vector<EpochLoss> history;                 // one row per completed epoch
  std::vector<std::vector<double>> param_history;  // free physical parameters per epoch
  std::map<std::string, double> estimates;        // free parameters and identifiable ratios
  std::map<std::string, double> relative_errors;
  Metrics metrics;
  bool aborted = false;
  std::string abort_reason;
  std::uint64_t seed = 0;
  oracles::Dataset dataset;
};

/// Trains on a dataset drawn from `lattice` (built from the config when null).
TrainResult train(const TrainConfig& cfg, const oracles::Lattice* lattice = nullptr);

/// Held-out metrics of a model against a lattice.
Metrics evaluate(const formalisms::Model& model, const oracles::Lattice& lattice, std::size_t max_points);

/// Estimates of free parameters plus the identifiable ratios k/m and g/l when present.
std::map<std::string, double> parameter_estimates(const formalisms::Model& model);
std::map<std::string, double> reference_values(const systems::BenchmarkSystem& sys);

// ---------------------------------------------------------------------------
// Suites

struct SuiteConfig {
  TrainConfig base;
  std::vector<formalisms::FormalismKind> formalisms;
  std::vector<double> noise_levels = {0.0};
  std::size_t runs = 10;
  std::size_t jobs = 1;
};

struct RunRecord {
  formalisms::FormalismKind formalism;
  std::size_t noise_index = 0;
  double noise_level = 0.0;
  std::size_t run = 0;
  TrainResult result;
};

struct ParamStats {
  double mean = 0.0, std = 0.0;
  double mean_no_outliers = 0.0, std_no_outliers = 0.0;
  std::size_t count = 0, outliers = 0;
  GeometricMean relative_error;
};

struct CellReport {
  formalisms::FormalismKind formalism;
  double noise_level = 0.0;
  std::size_t runs = 0, aborted = 0;
  std::map<std::string, ParamStats> params;
  GeometricMean l2_relative_error;
  std::map<std::string, GeometricMean> functional_mse;
};

struct SuiteReport {
  std::vector<RunRecord> runs;  // ordered by (formalism, noise, run)
  std::vector<CellReport> cells;
};

/// `on_done` (optional) is called after each run from the worker thread that ran it.
SuiteReport run_suite(const SuiteConfig& cfg, const std::function<void(const RunRecord&)>& on_done = {});

/// Aggregates of one cell's runs; aborted runs are counted and excluded.
CellReport aggregate_cell(const std::vector<const RunRecord*>& runs, const systems::BenchmarkSystem& sys);

}  // namespace thermoforge::training
