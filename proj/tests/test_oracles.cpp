#include <doctest.h>

#include <cmath>

#include "checks.hpp"
#include "thermoforge/oracles.hpp"

using namespace thermoforge;
using systems::SystemId;

TEST_CASE("RK4 reproduces the harmonic solution") { CHECK(checks::rk4_harmonic_error() < 1e-8); }

TEST_CASE("RK4 on a single-point grid returns the initial state") {
  for (auto id : {SystemId::mass_spring, SystemId::double_pendulum, SystemId::damped_pendulum}) {
    const auto s = systems::make_system(id);
    const std::vector<double> t0{0.0};
    const auto traj = oracles::integrate_rk4(s, t0);
    REQUIRE(traj.states.size() == 1);
    CHECK(traj.states[0] == s.initial_state);
  }
}

TEST_CASE("double pendulum energy is conserved") { CHECK(checks::double_pendulum_energy_drift() < 1e-6); }

TEST_CASE("diffusion analytic solution") {
  const auto s = systems::make_system(SystemId::diffusion2d);
  for (double x : {-1.0, 0.0, 0.4})
    for (double y : {-0.3, 0.5}) {
      const std::vector<double> p{x, y};
      CHECK(std::abs(oracles::diffusion_analytic(s, x, y, 0.0) - systems::initial_condition(s, p)[0]) < 1e-15);
    }
  CHECK(checks::diffusion_mass_change() < 1e-6);
}

TEST_CASE("diffusion analytic solution agrees with an explicit finite-difference solve") {
  CHECK(checks::diffusion_fd_error(0.5) < 1e-3);
}

TEST_CASE("Fisher-KPP fixed points") {
  const auto s = systems::make_system(SystemId::fisher_kpp);
  for (double level : {0.0, s.constant("K")}) {
    oracles::FisherGrid g;
    g.nx = 101;
    g.initial.assign(g.nx, level);
    const auto sol = oracles::fk_fd_solve(s, g);
    for (double v : sol.u) CHECK(v == doctest::Approx(level).epsilon(1e-14));
  }
}

TEST_CASE("Fisher-KPP front speed approaches the minimal wave speed") {
  const double c = checks::fisher_minimal_speed();
  const double coarse = checks::fisher_front_speed(1001);
  const double fine = checks::fisher_front_speed(2001);
  CHECK(std::abs(fine - c) / c < 0.05);
  CHECK(std::abs(fine - coarse) / c < 0.01);
}

TEST_CASE("Fisher-KPP solver rejects unstable steps") {
  const auto s = systems::make_system(SystemId::fisher_kpp);
  oracles::FisherGrid g;
  g.dt = 0.5;
  CHECK_THROWS_AS(oracles::fk_fd_solve(s, g), oracles::CflError);
  CHECK_THROWS_AS(oracles::fk_fd_solve(systems::make_system(SystemId::diffusion2d), {}), std::invalid_argument);
}

TEST_CASE("lattices split into disjoint training and evaluation halves") {
  const auto ms = systems::make_system(SystemId::mass_spring);
  const auto lat = oracles::reference_lattice(ms);
  CHECK(lat.size() == 10001);
  std::size_t held = 0;
  for (auto h : lat.held_out) held += h;
  CHECK(held == 5000);
  CHECK(lat.lagrangian.cols() == static_cast<Eigen::Index>(lat.size()));

  const auto ds = oracles::sample_dataset(ms, lat, {}, 0.0, 3);
  for (auto i : ds.data_indices) CHECK(lat.held_out[i] == 0);

  oracles::LatticeResolution res;
  res.diffusion_nt = 5;
  res.diffusion_nx = res.diffusion_ny = 9;
  const auto field = oracles::reference_lattice(systems::make_system(SystemId::diffusion2d), res);
  CHECK(field.size() == 5u * 9u * 9u);
  std::size_t edges = 0;
  for (auto b : field.boundary) edges += b;
  CHECK(edges == 5u * 32u);
}

TEST_CASE("noiseless datasets carry clean labels and are reproducible") {
  const auto ms = systems::make_system(SystemId::mass_spring);
  const auto lat = oracles::reference_lattice(ms);
  const auto a = oracles::sample_dataset(ms, lat, {}, 0.0, 11);
  const auto b = oracles::sample_dataset(ms, lat, {}, 0.0, 11);
  CHECK(a.data.state == b.data.state);
  CHECK(a.res == b.res);
  for (std::size_t k = 0; k < a.data_indices.size(); ++k) {
    const auto j = static_cast<Eigen::Index>(a.data_indices[k]);
    CHECK(a.data.state(0, static_cast<Eigen::Index>(k)) == lat.state(0, j));
    CHECK(a.data.velocity(0, static_cast<Eigen::Index>(k)) == lat.velocity(0, j));
  }
  REQUIRE(a.ic.size() == 1);
  CHECK(a.ic.state(0, 0) == 1.0);
  CHECK_THROWS_AS(oracles::sample_dataset(ms, lat, {100000, 10, 1, 0}, 0.0, 1), std::invalid_argument);
}

TEST_CASE("label noise has the requested scale") {
  const auto ms = systems::make_system(SystemId::mass_spring);
  oracles::LatticeResolution res;
  res.ode_dt = 5e-4;
  const auto lat = oracles::reference_lattice(ms, res);
  oracles::Counts counts;
  counts.data = 10000;
  const auto clean = oracles::sample_dataset(ms, lat, counts, 0.0, 4);
  const auto noisy = oracles::sample_dataset(ms, lat, counts, 0.05, 4);
  auto check = [](const Eigen::MatrixXd& c, const Eigen::MatrixXd& n) {
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
      const Eigen::ArrayXd row = c.row(r).array();
      const double sd = std::sqrt((row - row.mean()).square().mean());
      const Eigen::ArrayXd e = (n.row(r) - c.row(r)).array();
      const double esd = std::sqrt((e - e.mean()).square().sum() / static_cast<double>(e.size() - 1));
      CHECK(std::abs(esd - 0.05 * sd) < 0.05 * 0.05 * sd);
    }
  };
  check(clean.data.state, noisy.data.state);
  check(clean.data.velocity, noisy.data.velocity);
  check(clean.data.momentum, noisy.data.momentum);
}

TEST_CASE("evaluation points are held out") {
  const auto ms = systems::make_system(SystemId::mass_spring);
  const auto lat = oracles::reference_lattice(ms);
  const auto idx = oracles::evaluation_indices(lat, 400);
  CHECK(idx.size() == 400);
  for (auto i : idx) CHECK(lat.held_out[i] == 1);
}
