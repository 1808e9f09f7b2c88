#pragma once

// The six benchmark systems: constants, Newtonian right-hand sides, and the
// closed-form thermodynamic functionals each formalism evaluates. Every function
// is templated on the scalar so the same expressions serve plain evaluation,
// tape recording, and nested forward-mode differentiation.

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "thermoforge/autodiff.hpp"

namespace thermoforge::systems {

enum class SystemId { mass_spring, ideal_pendulum, double_pendulum, damped_pendulum, diffusion2d, fisher_kpp };

enum class FunctionalKind {
  lagrangian,
  hamiltonian,
  rayleighian,
  dissipation,
  potential,
  entropy,
  entropy_production,
  entropy_flux
};

class CapabilityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};
class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const char* system_name(SystemId id) noexcept;
SystemId parse_system(const std::string& name);
const char* functional_name(FunctionalKind k) noexcept;

/// Floor applied to densities before ln and division.
inline constexpr double kDensityFloor = 1e-8;

struct DiffusionInitial {
  double amplitude = 1.0;
  double sigma_x = 0.15;
  double sigma_y = 0.15;
  std::vector<std::array<double, 2>> centers = {{0.5, 0.5}, {-0.5, -0.5}};
};

/// u0(x) = background + amplitude * exp(-(x - center)^2 / (2 width^2))
struct FisherInitial {
  double background = 0.05;
  double amplitude = 0.5;
  double width = 1.0;
  double center = 0.0;
};

struct BenchmarkSystem {
  SystemId id = SystemId::mass_spring;
  std::vector<std::string> names;  // constant names, in parameter-vector order
  std::vector<double> constants;
  int dof = 1;          // generalized coordinates (ODE) or field count (PDE)
  int spatial_dim = 0;  // 0, 1 or 2
  bool dissipative = false;
  double horizon = 10.0;
  std::vector<double> domain_lo, domain_hi;  // spatial box
  std::vector<double> initial_state;         // ODE: (q..., qdot...)
  DiffusionInitial diffusion_ic;
  FisherInitial fisher_ic;

  int input_dim() const { return 1 + spatial_dim; }
  bool conservative() const { return !dissipative; }
  int constant_index(const std::string& name) const;
  double constant(const std::string& name) const;
  void set_constant(const std::string& name, double value);
  bool supports(FunctionalKind kind) const;
  void validate() const;
};

/// System with the reference constants and default horizons/domains/initial data.
BenchmarkSystem make_system(SystemId id);

template <class S>
std::vector<S> lift(std::span<const double> xs) {
  return std::vector<S>(xs.begin(), xs.end());
}

// ---------------------------------------------------------------------------
// Conservative mechanics. `c` is the constant vector in BenchmarkSystem::names order.

template <class S>
S lagrangian(const BenchmarkSystem& sys, std::span<const S> c, std::span<const S> q, std::span<const S> qd) {
  using ad::cos, std::cos;
  switch (sys.id) {
    case SystemId::mass_spring: {
      const S &k = c[0], &m = c[1];
      return 0.5 * m * qd[0] * qd[0] - 0.5 * k * q[0] * q[0];
    }
    case SystemId::ideal_pendulum: {
      const S &m = c[0], &g = c[1], &l = c[2];
      return 0.5 * m * l * l * qd[0] * qd[0] - m * g * l * (1.0 - cos(q[0]));
    }
    case SystemId::double_pendulum: {
      const S &m1 = c[0], &m2 = c[1], &l1 = c[2], &l2 = c[3], &g = c[4];
      const S M = m1 + m2;
      return 0.5 * M * l1 * l1 * qd[0] * qd[0] + 0.5 * m2 * l2 * l2 * qd[1] * qd[1] +
             m2 * l1 * l2 * qd[0] * qd[1] * cos(q[0] - q[1]) + M * g * l1 * cos(q[0]) + m2 * g * l2 * cos(q[1]);
    }
    default:
      throw CapabilityError(std::string("lagrangian not defined for ") + system_name(sys.id));
  }
}

template <class S>
S hamiltonian(const BenchmarkSystem& sys, std::span<const S> c, std::span<const S> q, std::span<const S> p) {
  using ad::cos, ad::sin, std::cos, std::sin;
  switch (sys.id) {
    case SystemId::mass_spring: {
      const S &k = c[0], &m = c[1];
      return p[0] * p[0] / (2.0 * m) + 0.5 * k * q[0] * q[0];
    }
    case SystemId::ideal_pendulum: {
      const S &m = c[0], &g = c[1], &l = c[2];
      return p[0] * p[0] / (2.0 * m * l * l) + m * g * l * (1.0 - cos(q[0]));
    }
    case SystemId::double_pendulum: {
      const S &m1 = c[0], &m2 = c[1], &l1 = c[2], &l2 = c[3], &g = c[4];
      const S dq = q[0] - q[1];
      const S sdq = sin(dq);
      const S num = l2 * l2 * m2 * p[0] * p[0] + l1 * l1 * (m1 + m2) * p[1] * p[1] -
                    2.0 * m2 * l1 * l2 * p[0] * p[1] * cos(dq);
      const S den = 2.0 * l1 * l1 * l2 * l2 * m2 * (m1 + sdq * sdq * m2);
      if (std::abs(ad::primal(den)) < 1e-12) throw SingularityError("double pendulum Hamiltonian: zero denominator");
      return num / den - m2 * g * l2 * cos(q[1]) - (m1 + m2) * g * l1 * cos(q[0]);
    }
    default:
      throw CapabilityError(std::string("hamiltonian not defined for ") + system_name(sys.id));
  }
}

/// Second-order form: accelerations qddot(q, qdot).
template <class S>
std::vector<S> acceleration(const BenchmarkSystem& sys, std::span<const S> c, std::span<const S> q,
                            std::span<const S> qd) {
  using ad::cos, ad::sin, std::cos, std::sin;
  switch (sys.id) {
    case SystemId::mass_spring:
      return {-(c[0] / c[1]) * q[0]};
    case SystemId::ideal_pendulum:
      return {-(c[1] / c[2]) * sin(q[0])};
    case SystemId::double_pendulum: {
      const S &m1 = c[0], &m2 = c[1], &l1 = c[2], &l2 = c[3], &g = c[4];
      const S d = q[0] - q[1];
      const S base = 2.0 * m1 + m2 - m2 * cos(2.0 * q[0] - 2.0 * q[1]);
      if (std::abs(ad::primal(base)) < 1e-12) throw SingularityError("double pendulum: singular mass matrix");
      const S w1 = qd[0], w2 = qd[1];
      const S a1 = (-(g * (2.0 * m1 + m2) * sin(q[0])) - m2 * g * sin(q[0] - 2.0 * q[1]) -
                    2.0 * sin(d) * m2 * (w2 * w2 * l2 + w1 * w1 * l1 * cos(d))) /
                   (l1 * base);
      const S a2 = (2.0 * sin(d) * (w1 * w1 * l1 * (m1 + m2) + g * (m1 + m2) * cos(q[0]) + w2 * w2 * l2 * m2 * cos(d))) /
                   (l2 * base);
      return {a1, a2};
    }
    case SystemId::damped_pendulum: {
      const S &lambda = c[0], &beta = c[1];
      return {-(lambda * qd[0]) - beta * beta * q[0]};
    }
    default:
      throw CapabilityError(std::string("no ODE acceleration for ") + system_name(sys.id));
  }
}

/// First-order rate of the ODE state (q..., qdot...).
template <class S>
std::vector<S> newtonian_rhs(const BenchmarkSystem& sys, std::span<const S> state, std::span<const S> c) {
  if (sys.spatial_dim != 0) throw CapabilityError("newtonian_rhs: use pde_rhs for field systems");
  const auto n = static_cast<std::size_t>(sys.dof);
  if (state.size() != 2 * n) throw std::invalid_argument("newtonian_rhs: state dimension mismatch");
  const auto acc = acceleration<S>(sys, c, state.subspan(0, n), state.subspan(n, n));
  std::vector<S> rate(state.begin() + static_cast<std::ptrdiff_t>(n), state.end());
  rate.insert(rate.end(), acc.begin(), acc.end());
  return rate;
}

/// Generalized momentum p = dL/dqdot.
template <class S>
std::vector<S> momentum(const BenchmarkSystem& sys, std::span<const S> c, std::span<const S> q,
                        std::span<const S> qd) {
  using D = ad::Dual<S>;
  const auto n = q.size();
  std::vector<S> p(n);
  std::vector<D> cq(c.begin(), c.end()), qq(q.begin(), q.end());
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<D> vv;
    for (std::size_t k = 0; k < n; ++k) vv.emplace_back(qd[k], S(k == i ? 1.0 : 0.0));
    p[i] = lagrangian<D>(sys, cq, qq, vv).d;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Field systems (pointwise densities; integration over the domain is the caller's)

template <class S>
S safe_log(const S& u) {
  using ad::log, std::log;
  return log(ad::clamp_min(u, kDensityFloor));
}

/// Reaction source F = F+ - F- with F+ = alpha u, F- = alpha u^2 / K.
template <class S>
S fisher_reaction(std::span<const S> c, const S& u) {
  const S &alpha = c[1], &K = c[2];
  return alpha * u * (1.0 - u / K);
}

/// Pointwise right-hand side of u_t for the field systems. `grad` holds
/// spatial first derivatives, `hess_diag` the pure second derivatives.
template <class S>
S pde_rhs(const BenchmarkSystem& sys, std::span<const S> c, const S& u, std::span<const S> grad,
          std::span<const S> hess_diag) {
  (void)grad;
  switch (sys.id) {
    case SystemId::diffusion2d:
      return c[0] * hess_diag[0] + c[1] * hess_diag[1];
    case SystemId::fisher_kpp:
      return c[0] * hess_diag[0] + fisher_reaction<S>(c, u);
    default:
      throw CapabilityError(std::string("pde_rhs not defined for ") + system_name(sys.id));
  }
}

/// Arguments for the functional dispatcher. Fields not used by a given
/// (system, kind) pair are ignored.
template <class S>
struct LocalState {
  std::vector<S> q, qdot, p;  // conservative ODEs; damped pendulum uses q=theta, qdot=theta_t
  std::vector<S> v, v_t;      // velocity variables: omega (damped) or (v1, v2) field velocities
  S u{}, u_t{};
  std::vector<S> grad_u;
  int axis = 0;               // entropy_flux component
};

template <class S>
S functional(const BenchmarkSystem& sys, FunctionalKind kind, std::span<const S> c, const LocalState<S>& st) {
  if (!sys.supports(kind))
    throw CapabilityError(std::string(functional_name(kind)) + " is not available for " + system_name(sys.id));
  using ad::square;
  switch (sys.id) {
    case SystemId::mass_spring:
    case SystemId::ideal_pendulum:
    case SystemId::double_pendulum:
      if (kind == FunctionalKind::lagrangian) return lagrangian<S>(sys, c, st.q, st.qdot);
      return hamiltonian<S>(sys, c, st.q, st.p);
    case SystemId::damped_pendulum: {
      const S &lambda = c[0], &beta = c[1];
      const S& theta = st.q[0];
      const S& omega = st.v[0];
      switch (kind) {
        case FunctionalKind::dissipation: return 0.5 * lambda * square(omega);
        case FunctionalKind::potential: return 0.5 * (beta * beta * square(theta) + square(omega));
        case FunctionalKind::rayleighian:
          return 0.5 * lambda * square(omega) + beta * beta * theta * st.qdot[0] + omega * st.v_t[0];
        case FunctionalKind::entropy: return -0.5 * beta * beta * square(theta) - 0.5 * square(omega);
        case FunctionalKind::entropy_production: return lambda * square(omega);
        default: break;
      }
      break;
    }
    case SystemId::diffusion2d:
    case SystemId::fisher_kpp: {
      if (ad::primal(st.u) <= 0.0)
        throw DomainError(std::string(functional_name(kind)) + ": density must be positive, got " +
                          std::to_string(ad::primal(st.u)));
      const S u = ad::clamp_min(st.u, kDensityFloor);
      const S lnu = safe_log(u);
      const bool diff = sys.id == SystemId::diffusion2d;
      auto dissipation = [&]() {
        S acc = 0.5 * u * square(st.v[0]) / c[0];
        if (diff) acc = acc + 0.5 * u * square(st.v[1]) / c[1];
        return acc;
      };
      switch (kind) {
        case FunctionalKind::potential: return u * lnu - u;
        case FunctionalKind::entropy: return -(u * lnu - u);
        case FunctionalKind::dissipation: return dissipation();
        case FunctionalKind::rayleighian: return dissipation() + st.u_t * lnu;
        case FunctionalKind::entropy_flux: return -(st.v[static_cast<std::size_t>(st.axis)] * u * lnu);
        case FunctionalKind::entropy_production: {
          if (diff) return 2.0 * dissipation();
          const S &D = c[0], &alpha = c[1], &K = c[2];
          const S dlnu = st.grad_u[0] / u;
          const S fplus = alpha * u;
          const S fminus = alpha * u * u / K;
          // (F+ - F-) ln(F+/F-) = alpha u (1 - u/K) ln(K/u)
          const S reaction = (fplus - fminus) * (safe_log(K) - lnu);
          return D * u * square(dlnu) + reaction;
        }
        default: break;
      }
      break;
    }
  }
  throw CapabilityError(std::string(functional_name(kind)) + " is not available for " + system_name(sys.id));
}

/// Initial data at a point: ODE systems return the configured state, field
/// systems the initial density at the spatial coordinates `x`.
template <class S>
S initial_density(const BenchmarkSystem& sys, std::span<const S> x) {
  using ad::exp, std::exp;
  if (sys.id == SystemId::diffusion2d) {
    const auto& ic = sys.diffusion_ic;
    S acc = 0.0;
    for (const auto& ctr : ic.centers) {
      const S dx = x[0] - ctr[0], dy = x[1] - ctr[1];
      acc = acc + ic.amplitude * exp(-(dx * dx) / (2.0 * ic.sigma_x * ic.sigma_x) -
                                     (dy * dy) / (2.0 * ic.sigma_y * ic.sigma_y));
    }
    return acc;
  }
  if (sys.id == SystemId::fisher_kpp) {
    const auto& ic = sys.fisher_ic;
    const S dx = x[0] - ic.center;
    return ic.background + ic.amplitude * exp(-(dx * dx) / (2.0 * ic.width * ic.width));
  }
  throw CapabilityError("initial_density: not a field system");
}

std::vector<double> initial_condition(const BenchmarkSystem& sys, std::span<const double> point);

}  // namespace thermoforge::systems
