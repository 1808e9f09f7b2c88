#pragma once

// Ground truth for the benchmark systems and the labeled datasets drawn from it.

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "thermoforge/systems.hpp"

namespace thermoforge::oracles {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CflError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> states;                 // per time: (q..., qdot...)
  std::map<std::string, std::vector<double>> derived;      // H, L  or  R, S, sigma_s
};

/// Classical RK4 over newtonian_rhs, one step per grid interval.
Trajectory integrate_rk4(const systems::BenchmarkSystem& sys, std::span<const double> ic,
                         std::span<const double> t_grid, std::span<const double> params);
Trajectory integrate_rk4(const systems::BenchmarkSystem& sys, std::span<const double> t_grid);

std::vector<double> uniform_grid(double t0, double t1, std::size_t intervals);

/// Closed-form solution of the anisotropic diffusion Cauchy problem for the
/// configured Gaussian initial data. Templated so spatial derivatives can be
/// taken by forward-mode lifting.
template <class S>
S diffusion_analytic(const systems::BenchmarkSystem& sys, std::span<const double> c, const S& x, const S& y,
                     const S& t) {
  using ad::exp, ad::pow, std::exp, std::pow;
  const auto& ic = sys.diffusion_ic;
  const double sx2 = ic.sigma_x * ic.sigma_x, sy2 = ic.sigma_y * ic.sigma_y;
  const S vx = sx2 + 2.0 * c[0] * t;
  const S vy = sy2 + 2.0 * c[1] * t;
  const S amp = ic.amplitude * ic.sigma_x * ic.sigma_y * pow(vx * vy, -0.5);
  S acc = 0.0;
  for (const auto& ctr : ic.centers) {
    const S dx = x - ctr[0], dy = y - ctr[1];
    acc = acc + exp(-(dx * dx) / (2.0 * vx) - (dy * dy) / (2.0 * vy));
  }
  return amp * acc;
}

double diffusion_analytic(const systems::BenchmarkSystem& sys, double x, double y, double t);

/// Spatial gradient of ln u for the analytic diffusion solution, evaluated with
/// normalized kernel weights so it stays finite where u itself underflows.
std::array<double, 2> diffusion_log_gradient(const systems::BenchmarkSystem& sys, double x, double y, double t);

struct FieldSolution {
  std::vector<double> times;
  std::vector<std::vector<double>> axes;  // spatial grids, x first
  std::vector<double> u;                  // index ((it * ny) + iy) * nx + ix
  std::map<std::string, std::vector<double>> derived;

  std::size_t nodes_per_slice() const;
  std::size_t index(std::size_t it, std::size_t ix, std::size_t iy = 0) const;
};

struct FisherGrid {
  std::size_t nx = 401;
  double dt = 0.005;
  double save_every = 0.05;
  double horizon = -1.0;            // <= 0: use the system horizon
  double lo = 0.0, hi = 0.0;        // lo >= hi: use the system domain
  std::vector<double> initial;      // optional override of u0 at the nodes
};

/// Method of lines for the Fisher-KPP equation: central second differences with
/// zero-flux ends, RK4 in time.
FieldSolution fk_fd_solve(const systems::BenchmarkSystem& sys, const FisherGrid& grid);

/// Analytic diffusion solution sampled on a space-time lattice with derived channels.
FieldSolution diffusion_field(const systems::BenchmarkSystem& sys, std::size_t nt, std::size_t nx, std::size_t ny);

// ---------------------------------------------------------------------------
// Labeled lattices and datasets

/// Oracle output flattened to labeled points. Columns are points; coordinate
/// row 0 is time.
struct Lattice {
  Eigen::MatrixXd coords;
  Eigen::MatrixXd state;       // q / theta / u
  Eigen::MatrixXd velocity;    // qdot / omega / (v1, v2)
  Eigen::MatrixXd momentum;    // p (conservative systems)
  Eigen::MatrixXd lagrangian;  // L (conservative systems)
  std::vector<std::uint8_t> held_out;  // parity split: 1 = evaluation only
  std::vector<std::uint8_t> boundary;  // 1 = on the spatial boundary
  std::map<std::string, Eigen::VectorXd> derived;

  std::size_t size() const { return static_cast<std::size_t>(coords.cols()); }
};

Lattice trajectory_lattice(const systems::BenchmarkSystem& sys, const Trajectory& traj);
Lattice field_lattice(const systems::BenchmarkSystem& sys, const FieldSolution& field);

struct LatticeResolution {
  double ode_dt = 1e-3;
  std::size_t diffusion_nt = 21, diffusion_nx = 41, diffusion_ny = 41;
  FisherGrid fisher;
};

/// Reference lattice for any system at the configured resolution.
Lattice reference_lattice(const systems::BenchmarkSystem& sys, const LatticeResolution& res = {});

struct LabeledSet {
  Eigen::MatrixXd coords;
  Eigen::MatrixXd state, velocity, momentum, lagrangian;
  std::size_t size() const { return static_cast<std::size_t>(coords.cols()); }
};

struct Counts {
  std::size_t data = 100, res = 1000, ic = 200, bc = 200;
};

/// Default point counts: 100 data / 1000 residual for ODEs, 2000 / 5000 for PDEs.
Counts default_counts(const systems::BenchmarkSystem& sys);

struct Dataset {
  LabeledSet data, ic, bc;
  Eigen::MatrixXd res;          // residual collocation coordinates
  double noise_level = 0.0;
  std::vector<std::size_t> data_indices;  // lattice columns used for `data`
};

/// Draws training points: data from the training half of the lattice, residual
/// points uniformly in [0, T] x domain, IC points on t = 0 (one point for ODEs),
/// BC points from lattice boundary nodes. Labels of `data` receive additive
/// Gaussian noise with std = noise_level * per-channel std of the clean labels.
Dataset sample_dataset(const systems::BenchmarkSystem& sys, const Lattice& lattice, const Counts& counts,
                       double noise_level, std::uint64_t seed);

/// Held-out evaluation subset (at most `max_points`, evenly strided).
std::vector<std::size_t> evaluation_indices(const Lattice& lattice, std::size_t max_points);

}  // namespace thermoforge::oracles
