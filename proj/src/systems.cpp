#include "thermoforge/systems.hpp"

#include <numbers>

namespace thermoforge::systems {

const char* system_name(SystemId id) noexcept {
  switch (id) {
    case SystemId::mass_spring: return "mass_spring";
    case SystemId::ideal_pendulum: return "ideal_pendulum";
    case SystemId::double_pendulum: return "double_pendulum";
    case SystemId::damped_pendulum: return "damped_pendulum";
    case SystemId::diffusion2d: return "diffusion2d";
    case SystemId::fisher_kpp: return "fisher_kpp";
  }
  return "?";
}

SystemId parse_system(const std::string& name) {
  for (auto id : {SystemId::mass_spring, SystemId::ideal_pendulum, SystemId::double_pendulum,
                  SystemId::damped_pendulum, SystemId::diffusion2d, SystemId::fisher_kpp})
    if (name == system_name(id)) return id;
  throw std::invalid_argument("unknown system '" + name + "'");
}

const char* functional_name(FunctionalKind k) noexcept {
  switch (k) {
    case FunctionalKind::lagrangian: return "lagrangian";
    case FunctionalKind::hamiltonian: return "hamiltonian";
    case FunctionalKind::rayleighian: return "rayleighian";
    case FunctionalKind::dissipation: return "dissipation";
    case FunctionalKind::potential: return "potential";
    case FunctionalKind::entropy: return "entropy";
    case FunctionalKind::entropy_production: return "entropy_production";
    case FunctionalKind::entropy_flux: return "entropy_flux";
  }
  return "?";
}

int BenchmarkSystem::constant_index(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

double BenchmarkSystem::constant(const std::string& name) const {
  const int i = constant_index(name);
  if (i < 0) throw std::invalid_argument(std::string(system_name(id)) + " has no constant '" + name + "'");
  return constants[static_cast<std::size_t>(i)];
}

void BenchmarkSystem::set_constant(const std::string& name, double value) {
  const int i = constant_index(name);
  if (i < 0) throw std::invalid_argument(std::string(system_name(id)) + " has no constant '" + name + "'");
  constants[static_cast<std::size_t>(i)] = value;
}

bool BenchmarkSystem::supports(FunctionalKind kind) const {
  if (conservative()) return kind == FunctionalKind::lagrangian || kind == FunctionalKind::hamiltonian;
  if (kind == FunctionalKind::lagrangian || kind == FunctionalKind::hamiltonian) return false;
  if (kind == FunctionalKind::entropy_flux) return spatial_dim > 0;
  return true;
}

void BenchmarkSystem::validate() const {
  for (std::size_t i = 0; i < constants.size(); ++i)
    if (!(constants[i] > 0.0))
      throw std::invalid_argument(std::string(system_name(id)) + ": constant '" + names[i] + "' must be > 0");
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
  if (spatial_dim == 0 && initial_state.size() != static_cast<std::size_t>(2 * dof))
    throw std::invalid_argument("initial state must have 2*dof entries");
  for (int a = 0; a < spatial_dim; ++a)
    if (!(domain_hi[static_cast<std::size_t>(a)] > domain_lo[static_cast<std::size_t>(a)]))
      throw std::invalid_argument("empty spatial domain");
}

BenchmarkSystem make_system(SystemId id) {
  BenchmarkSystem s;
  s.id = id;
  const double quarter_pi = std::numbers::pi / 4.0;
  switch (id) {
    case SystemId::mass_spring:
      s.names = {"k", "m"};
      s.constants = {1.0, 1.0};
      s.initial_state = {1.0, 0.0};
      break;
    case SystemId::ideal_pendulum:
      s.names = {"m", "g", "l"};
      s.constants = {1.0, 9.81, 1.0};
      s.initial_state = {quarter_pi, 0.0};
      break;
    case SystemId::double_pendulum:
      s.names = {"m1", "m2", "l1", "l2", "g"};
      s.constants = {1.0, 1.0, 1.0, 2.0, 9.81};
      s.dof = 2;
      s.initial_state = {quarter_pi, quarter_pi, 0.0, 0.0};
      break;
    case SystemId::damped_pendulum:
      s.names = {"lambda", "beta"};
      s.constants = {0.2, 3.1321};
      s.dissipative = true;
      s.initial_state = {1.0, 0.0};
      break;
    case SystemId::diffusion2d:
      s.names = {"Dx", "Dy"};
      s.constants = {0.2, 0.5};
      s.dissipative = true;
      s.spatial_dim = 2;
      s.horizon = 1.0;
      s.domain_lo = {-2.0, -2.0};
      s.domain_hi = {2.0, 2.0};
      break;
    case SystemId::fisher_kpp:
      s.names = {"D", "alpha", "K"};
      s.constants = {0.1, 1.0, 1.0};
      s.dissipative = true;
      s.spatial_dim = 1;
      s.horizon = 5.0;
      s.domain_lo = {-10.0};
      s.domain_hi = {10.0};
      break;
  }
  return s;
}

std::vector<double> initial_condition(const BenchmarkSystem& sys, std::span<const double> point) {
  if (sys.spatial_dim == 0) return sys.initial_state;
  if (point.size() < static_cast<std::size_t>(sys.spatial_dim))
    throw std::invalid_argument("initial_condition: point has too few coordinates");
  return {initial_density<double>(sys, point.first(static_cast<std::size_t>(sys.spatial_dim)))};
}

}  // namespace thermoforge::systems
