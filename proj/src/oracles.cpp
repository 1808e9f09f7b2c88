#include "thermoforge/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace thermoforge::oracles {

using systems::BenchmarkSystem;
using systems::FunctionalKind;
using systems::LocalState;
using systems::SystemId;

namespace {

void fill_ode_derived(const BenchmarkSystem& sys, std::span<const double> c, Trajectory& tr) {
  const auto n = static_cast<std::size_t>(sys.dof);
  for (const auto& s : tr.states) {
    std::span<const double> q(s.data(), n), qd(s.data() + n, n);
    if (sys.conservative()) {
      const auto p = systems::momentum<double>(sys, c, q, qd);
      tr.derived["H"].push_back(systems::hamiltonian<double>(sys, c, q, p));
      tr.derived["L"].push_back(systems::lagrangian<double>(sys, c, q, qd));
    } else {
      const auto acc = systems::acceleration<double>(sys, c, q, qd);
      LocalState<double> st;
      st.q = {q[0]};
      st.qdot = {qd[0]};
      st.v = {qd[0]};
      st.v_t = {acc[0]};
      tr.derived["R"].push_back(systems::functional<double>(sys, FunctionalKind::rayleighian, c, st));
      tr.derived["S"].push_back(systems::functional<double>(sys, FunctionalKind::entropy, c, st));
      tr.derived["sigma_s"].push_back(systems::functional<double>(sys, FunctionalKind::entropy_production, c, st));
    }
  }
}

}  // namespace

std::vector<double> uniform_grid(double t0, double t1, std::size_t intervals) {
  std::vector<double> g(intervals + 1);
  for (std::size_t i = 0; i <= intervals; ++i)
    g[i] = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(intervals);
  return g;
}

Trajectory integrate_rk4(const BenchmarkSystem& sys, std::span<const double> ic, std::span<const double> t_grid,
                         std::span<const double> params) {
  if (t_grid.empty()) throw std::invalid_argument("integrate_rk4: empty time grid");
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    if (!(t_grid[i] > t_grid[i - 1])) throw std::invalid_argument("integrate_rk4: time grid must be increasing");
  if (ic.size() != static_cast<std::size_t>(2 * sys.dof)) throw std::invalid_argument("integrate_rk4: ic size");

  Trajectory tr;
  tr.times.assign(t_grid.begin(), t_grid.end());
  tr.states.reserve(t_grid.size());
  tr.states.emplace_back(ic.begin(), ic.end());
  const std::size_t d = ic.size();
  std::vector<double> tmp(d);
  auto rhs = [&](const std::vector<double>& s) { return systems::newtonian_rhs<double>(sys, s, params); };
  for (std::size_t i = 0; i + 1 < t_grid.size(); ++i) {
    const double h = t_grid[i + 1] - t_grid[i];
    const auto& s = tr.states.back();
    const auto k1 = rhs(s);
    for (std::size_t j = 0; j < d; ++j) tmp[j] = s[j] + 0.5 * h * k1[j];
    const auto k2 = rhs(tmp);
    for (std::size_t j = 0; j < d; ++j) tmp[j] = s[j] + 0.5 * h * k2[j];
    const auto k3 = rhs(tmp);
    for (std::size_t j = 0; j < d; ++j) tmp[j] = s[j] + h * k3[j];
    const auto k4 = rhs(tmp);
    std::vector<double> next(d);
    for (std::size_t j = 0; j < d; ++j) {
      next[j] = s[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
      if (!std::isfinite(next[j]))
        throw DivergenceError("integrate_rk4: non-finite state at time index " + std::to_string(i + 1));
    }
    tr.states.push_back(std::move(next));
  }
  fill_ode_derived(sys, params, tr);
  return tr;
}

Trajectory integrate_rk4(const BenchmarkSystem& sys, std::span<const double> t_grid) {
  return integrate_rk4(sys, sys.initial_state, t_grid, sys.constants);
}

double diffusion_analytic(const BenchmarkSystem& sys, double x, double y, double t) {
  if (t < 0.0) throw std::invalid_argument("diffusion_analytic: t must be >= 0");
  return diffusion_analytic<double>(sys, sys.constants, x, y, t);
}

std::size_t FieldSolution::nodes_per_slice() const {
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.size();
  return n;
}

std::size_t FieldSolution::index(std::size_t it, std::size_t ix, std::size_t iy) const {
  const std::size_t nx = axes[0].size();
  const std::size_t ny = axes.size() > 1 ? axes[1].size() : 1;
  return (it * ny + iy) * nx + ix;
}

namespace {

// Derived thermodynamic channels for a field node given u, u_t, grad u, v.
void push_field_derived(const BenchmarkSystem& sys, std::span<const double> c, double u, double u_t,
                        const std::vector<double>& grad, const std::vector<double>& v,
                        std::map<std::string, std::vector<double>>& out) {
  LocalState<double> st;
  st.u = std::max(u, systems::kDensityFloor);
  st.u_t = u_t;
  st.grad_u = grad;
  st.v = v;
  out["u_t"].push_back(u_t);
  out["R"].push_back(systems::functional<double>(sys, FunctionalKind::rayleighian, c, st));
  out["S"].push_back(systems::functional<double>(sys, FunctionalKind::entropy, c, st));
  out["sigma_s"].push_back(systems::functional<double>(sys, FunctionalKind::entropy_production, c, st));
  for (std::size_t a = 0; a < v.size(); ++a) {
    st.axis = static_cast<int>(a);
    out[a == 0 ? "Jx" : "Jy"].push_back(systems::functional<double>(sys, FunctionalKind::entropy_flux, c, st));
    out[a == 0 ? "v1" : "v2"].push_back(v[a]);
  }
}

}  // namespace

std::array<double, 2> diffusion_log_gradient(const BenchmarkSystem& sys, double x, double y, double t) {
  const auto& ic = sys.diffusion_ic;
  const double vx = ic.sigma_x * ic.sigma_x + 2.0 * sys.constants[0] * t;
  const double vy = ic.sigma_y * ic.sigma_y + 2.0 * sys.constants[1] * t;
  std::vector<double> expo;
  for (const auto& ctr : ic.centers)
    expo.push_back(-(x - ctr[0]) * (x - ctr[0]) / (2.0 * vx) - (y - ctr[1]) * (y - ctr[1]) / (2.0 * vy));
  const double top = *std::max_element(expo.begin(), expo.end());
  double sum = 0.0, gx = 0.0, gy = 0.0;
  for (std::size_t i = 0; i < expo.size(); ++i) {
    const double w = std::exp(expo[i] - top);
    sum += w;
    gx -= w * (x - ic.centers[i][0]) / vx;
    gy -= w * (y - ic.centers[i][1]) / vy;
  }
  return {gx / sum, gy / sum};
}

FieldSolution diffusion_field(const BenchmarkSystem& sys, std::size_t nt, std::size_t nx, std::size_t ny) {
  if (sys.id != SystemId::diffusion2d) throw std::invalid_argument("diffusion_field: not a diffusion system");
  if (nt < 1 || nx < 2 || ny < 2) throw std::invalid_argument("diffusion_field: lattice too small");
  FieldSolution f;
  f.times = nt == 1 ? std::vector<double>{0.0} : uniform_grid(0.0, sys.horizon, nt - 1);
  f.axes = {uniform_grid(sys.domain_lo[0], sys.domain_hi[0], nx - 1),
            uniform_grid(sys.domain_lo[1], sys.domain_hi[1], ny - 1)};
  const std::span<const double> c = sys.constants;
  using D = ad::Dual<double>;
  f.u.resize(nt * nx * ny);
  for (std::size_t it = 0; it < nt; ++it)
    for (std::size_t iy = 0; iy < ny; ++iy)
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const double t = f.times[it], x = f.axes[0][ix], y = f.axes[1][iy];
        const double u = diffusion_analytic<double>(sys, c, x, y, t);
        const double ux = diffusion_analytic<D>(sys, c, D(x, 1.0), D(y), D(t)).d;
        const double uy = diffusion_analytic<D>(sys, c, D(x), D(y, 1.0), D(t)).d;
        const double ut = diffusion_analytic<D>(sys, c, D(x), D(y), D(t, 1.0)).d;
        f.u[f.index(it, ix, iy)] = u;
        const auto g = diffusion_log_gradient(sys, x, y, t);
        const std::vector<double> v = {-c[0] * g[0], -c[1] * g[1]};
        push_field_derived(sys, c, u, ut, {ux, uy}, v, f.derived);
      }
  return f;
}

FieldSolution fk_fd_solve(const BenchmarkSystem& sys, const FisherGrid& grid) {
  if (sys.id != SystemId::fisher_kpp) throw std::invalid_argument("fk_fd_solve: not a Fisher-KPP system");
  const double lo = grid.lo < grid.hi ? grid.lo : sys.domain_lo[0];
  const double hi = grid.lo < grid.hi ? grid.hi : sys.domain_hi[0];
  const double T = grid.horizon > 0.0 ? grid.horizon : sys.horizon;
  const std::size_t nx = grid.nx;
  if (nx < 3) throw std::invalid_argument("fk_fd_solve: need at least 3 nodes");
  const double dx = (hi - lo) / static_cast<double>(nx - 1);
  const double D = sys.constant("D"), alpha = sys.constant("alpha"), K = sys.constant("K");
  // RK4 reaches about -2.78 on the negative real axis; the Laplacian's extreme eigenvalue is -4D/dx^2.
  if (grid.dt * 4.0 * D / (dx * dx) > 2.78)
    throw CflError("fk_fd_solve: dt=" + std::to_string(grid.dt) + " exceeds the RK4 diffusion limit for dx=" +
                   std::to_string(dx));
  const auto steps_per_save = static_cast<std::size_t>(std::llround(grid.save_every / grid.dt));
  const auto saves = static_cast<std::size_t>(std::llround(T / grid.save_every));
  if (steps_per_save == 0 || saves == 0) throw std::invalid_argument("fk_fd_solve: bad save interval");

  FieldSolution f;
  f.axes = {uniform_grid(lo, hi, nx - 1)};
  std::vector<double> u(nx);
  if (!grid.initial.empty()) {
    if (grid.initial.size() != nx) throw std::invalid_argument("fk_fd_solve: initial profile size");
    u = grid.initial;
  } else {
    for (std::size_t i = 0; i < nx; ++i) {
      const double x = f.axes[0][i];
      u[i] = systems::initial_density<double>(sys, std::span<const double>(&x, 1));
    }
  }

  const double inv_dx2 = 1.0 / (dx * dx);
  auto rhs = [&](const std::vector<double>& w, std::vector<double>& out) {
    for (std::size_t i = 0; i < nx; ++i) {
      const double left = i == 0 ? w[1] : w[i - 1];
      const double right = i + 1 == nx ? w[nx - 2] : w[i + 1];
      out[i] = D * (left - 2.0 * w[i] + right) * inv_dx2 + alpha * w[i] * (1.0 - w[i] / K);
    }
  };

  auto save = [&](double t) {
    f.times.push_back(t);
    f.u.insert(f.u.end(), u.begin(), u.end());
  };
  save(0.0);
  std::vector<double> k1(nx), k2(nx), k3(nx), k4(nx), tmp(nx);
  const double h = grid.dt;
  std::size_t step = 0;
  for (std::size_t s = 1; s <= saves; ++s) {
    for (std::size_t j = 0; j < steps_per_save; ++j, ++step) {
      rhs(u, k1);
      for (std::size_t i = 0; i < nx; ++i) tmp[i] = u[i] + 0.5 * h * k1[i];
      rhs(tmp, k2);
      for (std::size_t i = 0; i < nx; ++i) tmp[i] = u[i] + 0.5 * h * k2[i];
      rhs(tmp, k3);
      for (std::size_t i = 0; i < nx; ++i) tmp[i] = u[i] + h * k3[i];
      rhs(tmp, k4);
      for (std::size_t i = 0; i < nx; ++i) {
        u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if (!std::isfinite(u[i]) || std::abs(u[i]) > 10.0 * K)
          throw CflError("fk_fd_solve: solution left [-10K, 10K] at step " + std::to_string(step + 1));
      }
    }
    save(static_cast<double>(s * steps_per_save) * h);
  }

  const std::span<const double> c = sys.constants;
  std::vector<double> ut(nx);
  for (std::size_t it = 0; it < f.times.size(); ++it) {
    std::vector<double> w(f.u.begin() + static_cast<std::ptrdiff_t>(it * nx),
                          f.u.begin() + static_cast<std::ptrdiff_t>((it + 1) * nx));
    rhs(w, ut);
    for (std::size_t i = 0; i < nx; ++i) {
      const double ux = (i == 0 || i + 1 == nx) ? 0.0 : (w[i + 1] - w[i - 1]) / (2.0 * dx);
      const double ufl = std::max(w[i], systems::kDensityFloor);
      push_field_derived(sys, c, w[i], ut[i], {ux}, {-D * ux / ufl}, f.derived);
    }
  }
  return f;
}

// ---------------------------------------------------------------------------

Lattice trajectory_lattice(const BenchmarkSystem& sys, const Trajectory& traj) {
  const auto N = static_cast<Eigen::Index>(traj.times.size());
  const int n = sys.dof;
  Lattice L;
  L.coords.resize(1, N);
  L.state.resize(n, N);
  L.velocity.resize(n, N);
  if (sys.conservative()) {
    L.momentum.resize(n, N);
    L.lagrangian.resize(1, N);
  }
  const std::span<const double> c = sys.constants;
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& s = traj.states[static_cast<std::size_t>(i)];
    L.coords(0, i) = traj.times[static_cast<std::size_t>(i)];
    for (int k = 0; k < n; ++k) {
      L.state(k, i) = s[static_cast<std::size_t>(k)];
      L.velocity(k, i) = s[static_cast<std::size_t>(n + k)];
    }
    if (sys.conservative()) {
      std::span<const double> q(s.data(), static_cast<std::size_t>(n)), qd(s.data() + n, static_cast<std::size_t>(n));
      const auto p = systems::momentum<double>(sys, c, q, qd);
      for (int k = 0; k < n; ++k) L.momentum(k, i) = p[static_cast<std::size_t>(k)];
      L.lagrangian(0, i) = systems::lagrangian<double>(sys, c, q, qd);
    }
    L.held_out.push_back(static_cast<std::uint8_t>(i % 2));
    L.boundary.push_back(0);
  }
  for (const auto& [name, vals] : traj.derived) L.derived[name] = Eigen::Map<const Eigen::VectorXd>(vals.data(), N);
  return L;
}

Lattice field_lattice(const BenchmarkSystem& sys, const FieldSolution& field) {
  const std::size_t per = field.nodes_per_slice();
  const auto N = static_cast<Eigen::Index>(field.times.size() * per);
  const int d = sys.spatial_dim;
  Lattice L;
  L.coords.resize(1 + d, N);
  L.state.resize(1, N);
  L.velocity.resize(d, N);
  const std::size_t nx = field.axes[0].size();
  const std::size_t ny = d > 1 ? field.axes[1].size() : 1;
  for (std::size_t it = 0; it < field.times.size(); ++it)
    for (std::size_t iy = 0; iy < ny; ++iy)
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const auto idx = field.index(it, ix, iy);
        const auto col = static_cast<Eigen::Index>(idx);
        L.coords(0, col) = field.times[it];
        L.coords(1, col) = field.axes[0][ix];
        if (d > 1) L.coords(2, col) = field.axes[1][iy];
        L.state(0, col) = field.u[idx];
        L.velocity(0, col) = field.derived.at("v1")[idx];
        if (d > 1) L.velocity(1, col) = field.derived.at("v2")[idx];
        L.held_out.push_back(static_cast<std::uint8_t>((it + ix + iy) % 2));
        const bool edge = ix == 0 || ix + 1 == nx || (d > 1 && (iy == 0 || iy + 1 == ny));
        L.boundary.push_back(edge ? 1 : 0);
      }
  for (const auto& [name, vals] : field.derived) L.derived[name] = Eigen::Map<const Eigen::VectorXd>(vals.data(), N);
  return L;
}

Counts default_counts(const BenchmarkSystem& sys) {
  Counts c;
  if (sys.spatial_dim > 0) {
    c.data = 2000;
    c.res = 5000;
  }
  return c;
}

Lattice reference_lattice(const BenchmarkSystem& sys, const LatticeResolution& res) {
  switch (sys.id) {
    case SystemId::diffusion2d:
      return field_lattice(sys, diffusion_field(sys, res.diffusion_nt, res.diffusion_nx, res.diffusion_ny));
    case SystemId::fisher_kpp:
      return field_lattice(sys, fk_fd_solve(sys, res.fisher));
    default: {
      const auto steps = static_cast<std::size_t>(std::llround(sys.horizon / res.ode_dt));
      const auto grid = uniform_grid(0.0, sys.horizon, steps);
      return trajectory_lattice(sys, integrate_rk4(sys, grid));
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd pick(const Eigen::MatrixXd& M, const std::vector<std::size_t>& idx) {
  if (M.size() == 0) return {};
  Eigen::MatrixXd out(M.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = M.col(static_cast<Eigen::Index>(idx[j]));
  return out;
}

LabeledSet pick_set(const Lattice& L, const std::vector<std::size_t>& idx) {
  LabeledSet s;
  s.coords = pick(L.coords, idx);
  s.state = pick(L.state, idx);
  s.velocity = pick(L.velocity, idx);
  s.momentum = pick(L.momentum, idx);
  s.lagrangian = pick(L.lagrangian, idx);
  return s;
}

void add_noise(Eigen::MatrixXd& M, double level, std::mt19937_64& rng) {
  if (M.size() == 0 || level == 0.0) return;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    const double mean = M.row(r).mean();
    const double sd = std::sqrt((M.row(r).array() - mean).square().mean());
    for (Eigen::Index j = 0; j < M.cols(); ++j) M(r, j) += level * sd * normal(rng);
  }
}

}  // namespace

Dataset sample_dataset(const BenchmarkSystem& sys, const Lattice& lattice, const Counts& counts, double noise_level,
                       std::uint64_t seed) {
  if (noise_level < 0.0) throw std::invalid_argument("sample_dataset: noise level must be >= 0");
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.noise_level = noise_level;

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < lattice.size(); ++i)
    if (!lattice.held_out[i]) pool.push_back(i);
  if (counts.data > pool.size())
    throw std::invalid_argument("sample_dataset: n_data=" + std::to_string(counts.data) + " exceeds the " +
                                std::to_string(pool.size()) + " available lattice points");
  for (std::size_t i = 0; i < counts.data; ++i) {
    std::uniform_int_distribution<std::size_t> pickd(i, pool.size() - 1);
    std::swap(pool[i], pool[pickd(rng)]);
  }
  ds.data_indices.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(counts.data));
  ds.data = pick_set(lattice, ds.data_indices);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int in_dim = sys.input_dim();
  auto uniform_coord = [&](int axis) {
    if (axis == 0) return sys.horizon * unit(rng);
    const auto a = static_cast<std::size_t>(axis - 1);
    return sys.domain_lo[a] + (sys.domain_hi[a] - sys.domain_lo[a]) * unit(rng);
  };
  ds.res.resize(in_dim, static_cast<Eigen::Index>(counts.res));
  for (Eigen::Index j = 0; j < ds.res.cols(); ++j)
    for (int a = 0; a < in_dim; ++a) ds.res(a, j) = uniform_coord(a);

  const std::span<const double> c = sys.constants;
  if (sys.spatial_dim == 0) {
    if (counts.ic > 0) {
      const auto n = static_cast<std::size_t>(sys.dof);
      const auto& s = sys.initial_state;
      ds.ic.coords = Eigen::MatrixXd::Zero(1, 1);
      ds.ic.state.resize(sys.dof, 1);
      ds.ic.velocity.resize(sys.dof, 1);
      for (std::size_t k = 0; k < n; ++k) {
        ds.ic.state(static_cast<Eigen::Index>(k), 0) = s[k];
        ds.ic.velocity(static_cast<Eigen::Index>(k), 0) = s[n + k];
      }
      if (sys.conservative()) {
        std::span<const double> q(s.data(), n), qd(s.data() + n, n);
        const auto p = systems::momentum<double>(sys, c, q, qd);
        ds.ic.momentum = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(n));
        ds.ic.lagrangian = Eigen::MatrixXd::Constant(1, 1, systems::lagrangian<double>(sys, c, q, qd));
      }
    }
  } else {
    const int d = sys.spatial_dim;
    ds.ic.coords.resize(in_dim, static_cast<Eigen::Index>(counts.ic));
    ds.ic.state.resize(1, static_cast<Eigen::Index>(counts.ic));
    ds.ic.velocity.resize(d, static_cast<Eigen::Index>(counts.ic));
    using D = ad::Dual<double>;
    for (Eigen::Index j = 0; j < ds.ic.coords.cols(); ++j) {
      ds.ic.coords(0, j) = 0.0;
      std::vector<double> x(static_cast<std::size_t>(d));
      for (int a = 0; a < d; ++a) x[static_cast<std::size_t>(a)] = ds.ic.coords(1 + a, j) = uniform_coord(1 + a);
      const double u = systems::initial_density<double>(sys, x);
      ds.ic.state(0, j) = u;
      for (int a = 0; a < d; ++a) {
        std::vector<D> xd;
        for (int b = 0; b < d; ++b) xd.emplace_back(x[static_cast<std::size_t>(b)], a == b ? 1.0 : 0.0);
        const double ua = systems::initial_density<D>(sys, xd).d;
        ds.ic.velocity(a, j) = sys.id == SystemId::diffusion2d
                                   ? -c[static_cast<std::size_t>(a)] * diffusion_log_gradient(sys, x[0], x[1], 0.0)[a]
                                   : -c[static_cast<std::size_t>(a)] * ua / std::max(u, systems::kDensityFloor);
      }
    }
    std::vector<std::size_t> edge;
    for (std::size_t i = 0; i < lattice.size(); ++i)
      if (lattice.boundary[i]) edge.push_back(i);
    std::vector<std::size_t> chosen;
    if (!edge.empty()) {
      std::uniform_int_distribution<std::size_t> pickb(0, edge.size() - 1);
      for (std::size_t i = 0; i < counts.bc; ++i) chosen.push_back(edge[pickb(rng)]);
    }
    ds.bc = pick_set(lattice, chosen);
  }

  std::mt19937_64 noise_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  add_noise(ds.data.state, noise_level, noise_rng);
  add_noise(ds.data.velocity, noise_level, noise_rng);
  add_noise(ds.data.momentum, noise_level, noise_rng);
  add_noise(ds.data.lagrangian, noise_level, noise_rng);
  return ds;
}

std::vector<std::size_t> evaluation_indices(const Lattice& lattice, std::size_t max_points) {
  std::vector<std::size_t> held;
  for (std::size_t i = 0; i < lattice.size(); ++i)
    if (lattice.held_out[i]) held.push_back(i);
  if (max_points == 0 || held.size() <= max_points) return held;
  std::vector<std::size_t> out;
  const double stride = static_cast<double>(held.size()) / static_cast<double>(max_points);
  for (std::size_t k = 0; k < max_points; ++k) out.push_back(held[static_cast<std::size_t>(static_cast<double>(k) * stride)]);
  return out;
}

}  // namespace thermoforge::oracles
