#include <doctest.h>

#include <cmath>
#include <random>

#include "thermoforge/systems.hpp"

using namespace thermoforge;
using systems::FunctionalKind;
using systems::SystemId;

namespace {

std::vector<double> rate(const systems::BenchmarkSystem& s, std::vector<double> state) {
  return systems::newtonian_rhs<double>(s, state, s.constants);
}

}  // namespace

TEST_CASE("Newtonian right-hand sides") {
  const auto ms = systems::make_system(SystemId::mass_spring);
  CHECK(rate(ms, {1.0, 0.0}) == std::vector<double>{0.0, -1.0});
  const auto ip = systems::make_system(SystemId::ideal_pendulum);
  CHECK(rate(ip, {0.0, 0.0}) == std::vector<double>{0.0, 0.0});
  const auto dp = systems::make_system(SystemId::double_pendulum);
  for (double v : rate(dp, {0.0, 0.0, 0.0, 0.0})) CHECK(v == doctest::Approx(0.0));
  const auto damped = systems::make_system(SystemId::damped_pendulum);
  const auto r = rate(damped, {1.0, 1.0});
  CHECK(r[1] == doctest::Approx(-0.2 - 3.1321 * 3.1321));
  CHECK_THROWS_AS(rate(ms, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(rate(systems::make_system(SystemId::diffusion2d), {1.0, 0.0}), systems::CapabilityError);
}

TEST_CASE("closed-form functionals") {
  const auto ms = systems::make_system(SystemId::mass_spring);
  const std::vector<double> q{1.0}, p{0.0};
  CHECK(systems::hamiltonian<double>(ms, ms.constants, q, p) == doctest::Approx(0.5));

  const auto dp = systems::make_system(SystemId::double_pendulum);
  const std::vector<double> z{0.0, 0.0};
  CHECK(systems::hamiltonian<double>(dp, dp.constants, z, z) == doctest::Approx(-39.24));

  const auto damped = systems::make_system(SystemId::damped_pendulum);
  systems::LocalState<double> st;
  st.q = {0.0};
  st.v = {1.0};
  CHECK(systems::functional<double>(damped, FunctionalKind::entropy_production, damped.constants, st) ==
        doctest::Approx(0.2));

  const auto fk = systems::make_system(SystemId::fisher_kpp);
  systems::LocalState<double> f;
  f.u = 0.5;
  f.grad_u = {0.0};
  f.v = {0.0};
  const double alpha = fk.constant("alpha");
  CHECK(systems::functional<double>(fk, FunctionalKind::entropy_production, fk.constants, f) ==
        doctest::Approx(0.25 * alpha * std::log(2.0)));
}

TEST_CASE("functional capability and domain errors") {
  const auto damped = systems::make_system(SystemId::damped_pendulum);
  systems::LocalState<double> st;
  st.q = {0.0};
  st.qdot = {0.0};
  st.v = {0.0};
  CHECK_THROWS_AS(systems::functional<double>(damped, FunctionalKind::lagrangian, damped.constants, st),
                  systems::CapabilityError);
  const auto diff = systems::make_system(SystemId::diffusion2d);
  systems::LocalState<double> neg;
  neg.u = -0.1;
  neg.v = {0.0, 0.0};
  CHECK_THROWS_AS(systems::functional<double>(diff, FunctionalKind::entropy, diff.constants, neg),
                  systems::DomainError);
  CHECK_THROWS_AS(systems::parse_system("triple_pendulum"), std::invalid_argument);
}

TEST_CASE("Hamiltonian is the Legendre transform of the Lagrangian") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (auto id : {SystemId::mass_spring, SystemId::ideal_pendulum, SystemId::double_pendulum}) {
    const auto s = systems::make_system(id);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> q, qd;
      for (int i = 0; i < s.dof; ++i) {
        q.push_back(u(rng));
        qd.push_back(u(rng));
      }
      const auto p = systems::momentum<double>(s, s.constants, q, qd);
      double pqd = 0.0;
      for (int i = 0; i < s.dof; ++i) pqd += p[i] * qd[i];
      const double L = systems::lagrangian<double>(s, s.constants, q, qd);
      const double H = systems::hamiltonian<double>(s, s.constants, q, p);
      CHECK(H == doctest::Approx(pqd - L).epsilon(1e-12));
    }
  }
}

TEST_CASE("double pendulum accelerations solve the Euler-Lagrange equations") {
  // d/dt dL/dqd - dL/dq = 0 along (q, qd, qdd): checked with nested duals.
  const auto s = systems::make_system(SystemId::double_pendulum);
  using D = ad::Dual<double>;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> q{u(rng), u(rng)}, qd{u(rng), u(rng)};
    const auto qdd = systems::acceleration<double>(s, s.constants, q, qd);
    std::vector<D> c(s.constants.begin(), s.constants.end());
    std::vector<D> qq{D(q[0], qd[0]), D(q[1], qd[1])}, vv{D(qd[0], qdd[0]), D(qd[1], qdd[1])};
    const auto p = systems::momentum<D>(s, c, qq, vv);
    for (int i = 0; i < 2; ++i) {
      std::vector<D> qi;
      for (int k = 0; k < 2; ++k) qi.emplace_back(q[k], k == i ? 1.0 : 0.0);
      std::vector<D> vi(qd.begin(), qd.end());
      const double dLdq = systems::lagrangian<D>(s, c, qi, vi).d;
      CHECK(p[i].d - dLdq == doctest::Approx(0.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("initial data") {
  auto s = systems::make_system(SystemId::diffusion2d);
  s.diffusion_ic.centers = {{0.3, -0.2}};
  s.diffusion_ic.amplitude = 1.0;
  s.diffusion_ic.sigma_x = s.diffusion_ic.sigma_y = 0.1;
  CHECK(std::abs(systems::initial_condition(s, std::vector<double>{0.3, -0.2})[0] - 1.0) < 1e-10);

  const auto d = systems::make_system(SystemId::diffusion2d);
  for (double x : {0.1, 0.7, 1.3})
    CHECK(systems::initial_condition(d, std::vector<double>{x, 0.4 - x})[0] ==
          doctest::Approx(systems::initial_condition(d, std::vector<double>{-x, x - 0.4})[0]));

  const auto ms = systems::make_system(SystemId::mass_spring);
  CHECK(systems::initial_condition(ms, {}) == std::vector<double>{1.0, 0.0});
}

TEST_CASE("constants are addressable by name") {
  auto s = systems::make_system(SystemId::damped_pendulum);
  CHECK(s.constant("lambda") == 0.2);
  s.set_constant("beta", 2.0);
  CHECK(s.constants[1] == 2.0);
  CHECK_THROWS(s.constant("gamma"));
}
