#pragma once

// Two-dimensional loss slices around trained network parameters and the
// Hessian-based flatness score computed on them.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "thermoforge/formalisms.hpp"
#include "thermoforge/net.hpp"

namespace thermoforge::landscape {

/// Contiguous slice of a flat parameter vector normalized as one unit.
struct FilterGroup {
  std::size_t offset = 0, length = 0;
  double theta_norm = 0.0;
};

/// One group per output-neuron weight row and one per bias vector, for each
/// net in order (offsets into the concatenated flat vector).
std::vector<FilterGroup> filter_groups(std::span<const net::MLPSpec> specs, std::span<const double> theta);

struct Direction {
  std::vector<double> values;
  std::vector<FilterGroup> groups;
  std::uint64_t seed = 0;
};

/// Gaussian direction rescaled so each filter group has the norm of the
/// matching group of `theta` (zero where that group is zero).
Direction filter_normalized_direction(std::span<const net::MLPSpec> specs, std::span<const double> theta,
                                      std::uint64_t seed);
Direction filter_normalized_direction(const net::MLPSpec& spec, const net::NetParams& params, std::uint64_t seed);

using LossFn = std::function<double(std::span<const double>)>;

struct LandscapeGrid {
  std::vector<double> alphas, betas;  // ascending, both contain 0
  Eigen::MatrixXd losses;             // losses(i, j) = f(alphas[i], betas[j])
  std::vector<std::uint8_t> flagged;  // non-finite points, index i * n + j
  double center = 0.0;
  double spacing = 0.0;
  std::size_t flagged_count = 0;
};

/// Evaluates f(a, b) = loss(theta + a delta + b mu) on a uniform odd-sized grid
/// over [-half_range, half_range]^2. `jobs` > 1 evaluates rows concurrently;
/// `loss` must then be safe to call from several threads.
LandscapeGrid landscape_grid(const LossFn& loss, std::span<const double> theta, std::span<const double> delta,
                             std::span<const double> mu, double half_range, std::size_t resolution,
                             std::size_t jobs = 1);

struct FlatnessScore {
  double mean_frobenius_sq = 0.0;
  Eigen::MatrixXd l_aa, l_ab, l_ba, l_bb;  // per grid point; NaN on the rim and excluded points
  std::size_t used = 0, excluded = 0;
};

FlatnessScore hessian_frobenius(const LandscapeGrid& grid);

// ---------------------------------------------------------------------------
// Trained models

std::vector<net::MLPSpec> model_specs(const formalisms::Model& model);

/// Total composite loss with the network parameters replaced; physical
/// parameters stay at their trained values.
LossFn model_loss_fn(const formalisms::Model& model, const formalisms::LossWeights& weights,
                     const oracles::Dataset& ds);

struct PairResult {
  std::uint64_t delta_seed = 0, mu_seed = 0;
  LandscapeGrid grid;
  FlatnessScore score;
};

struct LandscapeReport {
  std::vector<PairResult> pairs;
  double median = 0.0, mean = 0.0, std = 0.0;  // over pair scores
};

std::uint64_t pair_seed(std::uint64_t base, std::size_t pair, int which) noexcept;

LandscapeReport model_landscape(const formalisms::Model& model, const formalisms::LossWeights& weights,
                                const oracles::Dataset& ds, double half_range, std::size_t resolution,
                                std::size_t pairs, std::uint64_t base_seed, std::size_t jobs = 1);

}  // namespace thermoforge::landscape
