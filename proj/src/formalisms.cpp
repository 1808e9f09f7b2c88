#include "thermoforge/formalisms.hpp"

#include <algorithm>
#include <cmath>

namespace thermoforge::formalisms {

using ad::Dual;
using ad::Value;
using oracles::Dataset;
using oracles::LabeledSet;
using systems::BenchmarkSystem;
using systems::FunctionalKind;
using systems::kDensityFloor;
using systems::SystemId;

const char* formalism_name(FormalismKind k) noexcept {
  switch (k) {
    case FormalismKind::NM: return "NM";
    case FormalismKind::LM: return "LM";
    case FormalismKind::HM: return "HM";
    case FormalismKind::OVP: return "OVP";
    case FormalismKind::EIT: return "EIT";
  }
  return "?";
}

FormalismKind parse_formalism(const std::string& name) {
  for (auto k : {FormalismKind::NM, FormalismKind::LM, FormalismKind::HM, FormalismKind::OVP, FormalismKind::EIT})
    if (name == formalism_name(k)) return k;
  throw ConfigurationError("unknown formalism '" + name + "'");
}

bool compatible(FormalismKind kind, const BenchmarkSystem& sys) noexcept {
  switch (kind) {
    case FormalismKind::NM: return true;
    case FormalismKind::LM:
    case FormalismKind::HM: return sys.conservative();
    case FormalismKind::OVP:
    case FormalismKind::EIT: return sys.dissipative;
  }
  return false;
}

void require_compatible(FormalismKind kind, const BenchmarkSystem& sys) {
  if (compatible(kind, sys)) return;
  const bool conservative_only = kind == FormalismKind::LM || kind == FormalismKind::HM;
  throw ConfigurationError(std::string(formalism_name(kind)) + " valid for " +
                           (conservative_only ? "conservative" : "dissipative") + " systems only (" +
                           systems::system_name(sys.id) + " is " + (sys.dissipative ? "dissipative" : "conservative") +
                           ")");
}

NetLayout net_layout(FormalismKind kind, const BenchmarkSystem& sys) {
  require_compatible(kind, sys);
  const int fields = sys.spatial_dim == 0 ? sys.dof : 1;
  switch (kind) {
    case FormalismKind::NM:
    case FormalismKind::LM: return {fields, 0};
    case FormalismKind::HM: return {2 * sys.dof, 0};
    case FormalismKind::OVP:
    case FormalismKind::EIT: return {fields, sys.spatial_dim == 0 ? sys.dof : sys.spatial_dim};
  }
  return {};
}

JetPlan jet_plan(FormalismKind kind, const BenchmarkSystem& sys, PointSet set) {
  JetPlan plan;
  const int d = sys.spatial_dim;
  const bool two_net = kind == FormalismKind::OVP || kind == FormalismKind::EIT;
  if (set != PointSet::res) {
    if (d == 0 && (kind == FormalismKind::LM || (kind == FormalismKind::NM && set == PointSet::ic)))
      plan.state.first = {0};
    return plan;
  }
  if (d == 0) {
    plan.state.first = {0};
    if (kind == FormalismKind::NM || kind == FormalismKind::LM) plan.state.second = {{0, 0}};
    if (two_net) plan.velocity.first = {0};
    return plan;
  }
  for (int a = 0; a <= d; ++a) plan.state.first.push_back(a);
  if (kind == FormalismKind::NM)
    for (int a = 1; a <= d; ++a) plan.state.second.emplace_back(a, a);
  if (two_net)
    for (int a = 1; a <= d; ++a) plan.velocity.first.push_back(a);
  return plan;
}

// ---------------------------------------------------------------------------
// Fields

NetField::NetField(net::MLPSpec s, net::NetParams p, std::vector<double> sh, std::vector<double> sc)
    : spec(std::move(s)), params(std::move(p)), shift(std::move(sh)), scale(std::move(sc)) {}

net::JetTrace NetField::trace(const Eigen::MatrixXd& coords, const net::JetRequest& request) const {
  return net::jet_forward(spec, params, coords, request, shift, scale);
}

Eigen::MatrixXd NetField::jets(const Eigen::MatrixXd& coords, const net::JetRequest& request) const {
  return trace(coords, request).output;
}

void normalization_for(const BenchmarkSystem& sys, std::vector<double>& shift, std::vector<double>& scale) {
  shift = {0.5 * sys.horizon};
  scale = {0.5 * sys.horizon};
  for (int a = 0; a < sys.spatial_dim; ++a) {
    const auto i = static_cast<std::size_t>(a);
    shift.push_back(0.5 * (sys.domain_lo[i] + sys.domain_hi[i]));
    scale.push_back(0.5 * (sys.domain_hi[i] - sys.domain_lo[i]));
  }
}

FunctionField::FunctionField(int input_dim, int output_dim, PointFunction f)
    : in_(input_dim), out_(output_dim), f_(std::move(f)) {}

Eigen::MatrixXd FunctionField::jets(const Eigen::MatrixXd& coords, const net::JetRequest& request) const {
  using D = Dual<double>;
  request.validate(in_);
  const auto n = static_cast<int>(coords.cols());
  const int K = request.components();
  Eigen::MatrixXd out(out_, static_cast<Eigen::Index>(n) * K);
  std::vector<DDouble> x(static_cast<std::size_t>(in_));
  auto eval = [&](int p, int k, int i, int j) {
    for (int a = 0; a < in_; ++a) {
      const double xa = coords(a, p);
      x[static_cast<std::size_t>(a)] = DDouble(D(xa, a == i ? 1.0 : 0.0), D(a == j ? 1.0 : 0.0, 0.0));
    }
    const auto y = f_(x);
    if (static_cast<int>(y.size()) != out_) throw std::invalid_argument("FunctionField: wrong output width");
    for (int c = 0; c < out_; ++c) {
      const auto& yc = y[static_cast<std::size_t>(c)];
      out(c, static_cast<Eigen::Index>(k) * n + p) = j >= 0 ? yc.d.d : (i >= 0 ? yc.v.d : yc.v.v);
    }
  };
  for (int p = 0; p < n; ++p) {
    eval(p, 0, -1, -1);
    for (int axis : request.first) eval(p, request.slot(axis), axis, -1);
    for (auto [i, j] : request.second) eval(p, request.slot(i, j), i, j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Residual algebra on jets (generic scalar)

namespace {

template <class T>
struct Jets {
  const T* data = nullptr;
  int out = 0;
  int n = 0;
  const net::JetRequest* req = nullptr;

  const T& at(int ch, int k, int p) const {
    return data[(static_cast<std::size_t>(k) * static_cast<std::size_t>(n) + static_cast<std::size_t>(p)) *
                    static_cast<std::size_t>(out) +
                static_cast<std::size_t>(ch)];
  }
  const T& val(int ch, int p) const { return at(ch, 0, p); }
  const T& d(int ch, int axis, int p) const { return at(ch, req->slot(axis), p); }
  const T& dd(int ch, int i, int j, int p) const { return at(ch, req->slot(i, j), p); }
};

template <class T>
struct SetJets {
  Jets<T> state, velocity;
  int n = 0;
};

template <class T>
std::vector<T> nm_rows(const BenchmarkSystem& sys, std::span<const T> c, const SetJets<T>& j, int p) {
  const auto& s = j.state;
  if (sys.spatial_dim == 0) {
    const int n = sys.dof;
    std::vector<T> q, qd;
    for (int i = 0; i < n; ++i) {
      q.push_back(s.val(i, p));
      qd.push_back(s.d(i, 0, p));
    }
    const auto acc = systems::acceleration<T>(sys, c, q, qd);
    std::vector<T> rows;
    for (int i = 0; i < n; ++i) rows.push_back(s.dd(i, 0, 0, p) - acc[static_cast<std::size_t>(i)]);
    return rows;
  }
  std::vector<T> grad, hess;
  for (int a = 1; a <= sys.spatial_dim; ++a) {
    grad.push_back(s.d(0, a, p));
    hess.push_back(s.dd(0, a, a, p));
  }
  const T u = s.val(0, p);
  return {s.d(0, 0, p) - systems::pde_rhs<T>(sys, c, u, grad, hess)};
}

template <class T>
std::vector<T> lm_rows(const BenchmarkSystem& sys, std::span<const T> c, const SetJets<T>& j, int p) {
  using D = Dual<T>;
  using DD = Dual<D>;
  const auto& s = j.state;
  const int n = sys.dof;
  std::vector<DD> cdd(c.begin(), c.end());
  std::vector<D> cd(c.begin(), c.end());
  std::vector<T> rows;
  for (int i = 0; i < n; ++i) {
    // outer tangent: time; inner tangent: qdot_i
    std::vector<DD> q, qd;
    std::vector<D> qi, qdi;
    for (int k = 0; k < n; ++k) {
      q.emplace_back(D(s.val(k, p)), D(s.d(k, 0, p)));
      qd.emplace_back(D(s.d(k, 0, p), T(k == i ? 1.0 : 0.0)), D(s.dd(k, 0, 0, p)));
      qi.emplace_back(s.val(k, p), T(k == i ? 1.0 : 0.0));
      qdi.emplace_back(s.d(k, 0, p));
    }
    const DD L = systems::lagrangian<DD>(sys, cdd, q, qd);
    const D Lq = systems::lagrangian<D>(sys, cd, qi, qdi);
    rows.push_back(L.d.d - Lq.d);
  }
  return rows;
}

template <class T>
struct HmRows {
  std::vector<T> f1, f2;
  T cons{};
};

template <class T>
HmRows<T> hm_rows(const BenchmarkSystem& sys, std::span<const T> c, const SetJets<T>& j, int p) {
  using D = Dual<T>;
  const auto& s = j.state;
  const int n = sys.dof;
  std::vector<D> cd(c.begin(), c.end());
  HmRows<T> r;
  auto seeded = [&](int which, int i, bool along_path) {
    std::vector<D> q, pp;
    for (int k = 0; k < n; ++k) {
      const T dq = along_path ? s.d(k, 0, p) : T(which == 0 && k == i ? 1.0 : 0.0);
      const T dp = along_path ? s.d(n + k, 0, p) : T(which == 1 && k == i ? 1.0 : 0.0);
      q.emplace_back(s.val(k, p), dq);
      pp.emplace_back(s.val(n + k, p), dp);
    }
    return systems::hamiltonian<D>(sys, cd, q, pp).d;
  };
  for (int i = 0; i < n; ++i) {
    r.f1.push_back(s.d(i, 0, p) - seeded(1, i, false));
    r.f2.push_back(s.d(n + i, 0, p) + seeded(0, i, false));
  }
  r.cons = seeded(0, 0, true);
  return r;
}

template <class T>
T fisher_source(std::span<const T> c, const T& u) {
  return systems::fisher_reaction<T>(c, u);
}

/// Continuity row u_t + div(u v) - source, shared by OVP and EIT.
template <class T>
T continuity_row(const BenchmarkSystem& sys, std::span<const T> c, const SetJets<T>& j, int p) {
  const T u = j.state.val(0, p);
  T acc = j.state.d(0, 0, p);
  for (int a = 1; a <= sys.spatial_dim; ++a) {
    const T va = j.velocity.val(a - 1, p);
    acc = acc + j.state.d(0, a, p) * va + u * j.velocity.d(a - 1, a, p);
  }
  if (sys.id == SystemId::fisher_kpp) acc = acc - fisher_source<T>(c, u);
  return acc;
}

template <class T>
std::vector<T> ovp_rows(const BenchmarkSystem& sys, std::span<const T> c, const SetJets<T>& j, int p) {
  if (sys.spatial_dim == 0) {
    const T &lambda = c[0], &beta = c[1];
    const T theta = j.state.val(0, p), theta_t = j.state.d(0, 0, p);
    const T omega = j.velocity.val(0, p), omega_t = j.velocity.d(0, 0, p);
    return {lambda * omega + beta * beta * theta + omega_t, theta_t - omega};
  }
  const T u = j.state.val(0, p);
  std::vector<T> rows;
  for (int a = 1; a <= sys.spatial_dim; ++a)
    rows.push_back(u * j.velocity.val(a - 1, p) / c[static_cast<std::size_t>(a - 1)] + j.state.d(0, a, p));
  rows.push_back(continuity_row<T>(sys, c, j, p));
  return rows;
}

template <class T>
std::vector<T> eit_rows(const BenchmarkSystem& sys, std::span<const T> c, const SetJets<T>& j, int p) {
  using D = Dual<T>;
  using ad::log, std::log;
  if (sys.spatial_dim == 0) {
    const T &lambda = c[0], &beta = c[1];
    const T theta = j.state.val(0, p), theta_t = j.state.d(0, 0, p);
    const T omega = j.velocity.val(0, p), omega_t = j.velocity.d(0, 0, p);
    const T dS = -(beta * beta * theta * theta_t) - omega * omega_t;
    const T sigma = lambda * omega * omega;
    return {dS - sigma, omega_t + beta * beta * theta + lambda * omega, theta_t - omega};
  }
  const int d = sys.spatial_dim;
  const T u = j.state.val(0, p);
  const T ub = ad::clamp_min(u, kDensityFloor);
  const T lnu = log(ub);
  auto entropy = [](const D& w) { return -(w * log(w) - w); };
  // dS/dt and div J_s through the chain rule on the clamped density
  T balance = entropy(ad::clamp_min(D(u, j.state.d(0, 0, p)), kDensityFloor)).d;
  for (int a = 1; a <= d; ++a) {
    const D w = ad::clamp_min(D(u, j.state.d(0, a, p)), kDensityFloor);
    const D v(j.velocity.val(a - 1, p), j.velocity.d(a - 1, a, p));
    balance = balance + (-(v * w * log(w))).d;
  }
  T sigma{};
  if (sys.id == SystemId::diffusion2d) {
    sigma = T(0.0);
    for (int a = 1; a <= d; ++a) {
      const T va = j.velocity.val(a - 1, p);
      sigma = sigma + ub * va * va / c[static_cast<std::size_t>(a - 1)];
    }
  } else {
    const T &Dc = c[0], &alpha = c[1], &K = c[2];
    const T g = j.state.d(0, 1, p) / ub;
    const T fplus = alpha * ub, fminus = alpha * ub * ub / K;
    sigma = Dc * ub * g * g + (fplus - fminus) * (log(ad::clamp_min(K, kDensityFloor)) - lnu);
  }
  std::vector<T> rows{balance - sigma};
  // Constitutive relation v = -D grad ln u in the division-free form shared with OVP.
  for (int a = 1; a <= d; ++a)
    rows.push_back(u * j.velocity.val(a - 1, p) / c[static_cast<std::size_t>(a - 1)] + j.state.d(0, a, p));
  rows.push_back(continuity_row<T>(sys, c, j, p));
  return rows;
}

template <class T>
struct Terms {
  T data{}, res{}, ic{}, bc{}, lag{}, cons{};
};

template <class T>
T sq(const T& x) {
  return x * x;
}

template <class T>
T labeled_term(FormalismKind kind, const BenchmarkSystem& sys, const SetJets<T>& j, const LabeledSet& set,
               PointSet which) {
  T acc(0.0);
  if (j.n == 0) return acc;
  const bool ode = sys.spatial_dim == 0;
  const int n = ode ? sys.dof : 1;
  for (int p = 0; p < j.n; ++p) {
    switch (kind) {
      case FormalismKind::NM:
        for (int i = 0; i < n; ++i) {
          acc = acc + sq(j.state.val(i, p) - set.state(i, p));
          if (ode && which == PointSet::ic) acc = acc + sq(j.state.d(i, 0, p) - set.velocity(i, p));
        }
        break;
      case FormalismKind::LM:
        for (int i = 0; i < n; ++i)
          acc = acc + sq(j.state.val(i, p) - set.state(i, p)) + sq(j.state.d(i, 0, p) - set.velocity(i, p));
        break;
      case FormalismKind::HM:
        for (int i = 0; i < n; ++i)
          acc = acc + sq(j.state.val(i, p) - set.state(i, p)) + sq(j.state.val(n + i, p) - set.momentum(i, p));
        break;
      case FormalismKind::OVP:
      case FormalismKind::EIT:
        for (int i = 0; i < j.state.out; ++i) acc = acc + sq(j.state.val(i, p) - set.state(i, p));
        // Field initial and boundary conditions constrain the density only.
        if (ode || which == PointSet::data)
          for (int i = 0; i < j.velocity.out; ++i) acc = acc + sq(j.velocity.val(i, p) - set.velocity(i, p));
        break;
    }
  }
  return acc * (1.0 / j.n);
}

template <class T>
T lag_term(const BenchmarkSystem& sys, std::span<const T> c, const SetJets<T>& j, const LabeledSet& set) {
  T acc(0.0);
  if (j.n == 0) return acc;
  for (int p = 0; p < j.n; ++p) {
    std::vector<T> q, qd;
    for (int i = 0; i < sys.dof; ++i) {
      q.push_back(j.state.val(i, p));
      qd.push_back(j.state.d(i, 0, p));
    }
    acc = acc + sq(systems::lagrangian<T>(sys, c, q, qd) - set.lagrangian(0, p));
  }
  return acc * (1.0 / j.n);
}

template <class T>
std::pair<T, T> residual_term(FormalismKind kind, const BenchmarkSystem& sys, std::span<const T> c,
                              const SetJets<T>& j) {
  T acc(0.0), cons(0.0);
  if (j.n == 0) return {acc, cons};
  for (int p = 0; p < j.n; ++p) {
    std::vector<T> rows;
    switch (kind) {
      case FormalismKind::NM: rows = nm_rows<T>(sys, c, j, p); break;
      case FormalismKind::LM: rows = lm_rows<T>(sys, c, j, p); break;
      case FormalismKind::HM: {
        auto h = hm_rows<T>(sys, c, j, p);
        rows = std::move(h.f1);
        rows.insert(rows.end(), h.f2.begin(), h.f2.end());
        cons = cons + sq(h.cons);
        break;
      }
      case FormalismKind::OVP: rows = ovp_rows<T>(sys, c, j, p); break;
      case FormalismKind::EIT: rows = eit_rows<T>(sys, c, j, p); break;
    }
    for (const auto& r : rows) acc = acc + sq(r);
  }
  return {acc * (1.0 / j.n), cons * (1.0 / j.n)};
}

template <class T>
Terms<T> assemble(FormalismKind kind, const BenchmarkSystem& sys, std::span<const T> c, const Dataset& ds,
                  const SetJets<T>& data, const SetJets<T>& ic, const SetJets<T>& bc, const SetJets<T>& res) {
  Terms<T> t;
  t.data = labeled_term<T>(kind, sys, data, ds.data, PointSet::data);
  t.ic = labeled_term<T>(kind, sys, ic, ds.ic, PointSet::ic);
  t.bc = labeled_term<T>(kind, sys, bc, ds.bc, PointSet::bc);
  auto [r, cons] = residual_term<T>(kind, sys, c, res);
  t.res = r;
  t.cons = cons;
  if (kind == FormalismKind::LM) t.lag = lag_term<T>(sys, c, data, ds.data);
  else t.lag = T(0.0);
  return t;
}

template <class T>
T weighted_total(FormalismKind kind, const LossWeights& w, const Terms<T>& t) {
  T total = w.data * t.data + w.res * t.res + w.ic * t.ic + w.bc * t.bc;
  if (kind == FormalismKind::LM) total = total + w.lag * t.lag;
  if (kind == FormalismKind::HM) total = total + w.cons * t.cons;
  return total;
}

LossBreakdown to_breakdown(FormalismKind kind, const LossWeights& w, const Terms<double>& t) {
  LossBreakdown b;
  b.data = t.data;
  b.res = t.res;
  b.ic = t.ic;
  b.bc = t.bc;
  b.lag = t.lag;
  b.cons = t.cons;
  b.total = weighted_total<double>(kind, w, t);
  return b;
}

const Eigen::MatrixXd& set_coords(const Dataset& ds, PointSet s) {
  switch (s) {
    case PointSet::data: return ds.data.coords;
    case PointSet::ic: return ds.ic.coords;
    case PointSet::bc: return ds.bc.coords;
    case PointSet::res: return ds.res;
  }
  return ds.res;
}

void check_sets(const LossWeights& w, const Dataset& ds) {
  if (w.data > 0.0 && ds.data.size() == 0) throw ConfigurationError("data point set is empty");
  if (w.res > 0.0 && ds.res.cols() == 0) throw ConfigurationError("residual point set is empty");
}

constexpr PointSet kSets[] = {PointSet::data, PointSet::ic, PointSet::bc, PointSet::res};

/// Jets of the context's fields on every point set, held as plain matrices.
struct PlainJets {
  Eigen::MatrixXd state[4], velocity[4];
  JetPlan plans[4];
  SetJets<double> views[4];
};

void fill_plain(FormalismKind kind, const ResidualContext& ctx, const Dataset& ds, PlainJets& pj) {
  const auto& sys = *ctx.system;
  const auto layout = net_layout(kind, sys);
  if (!ctx.state) throw std::invalid_argument("residual context has no state field");
  if (layout.velocity_outputs > 0 && !ctx.velocity)
    throw std::invalid_argument(std::string(formalism_name(kind)) + " needs a velocity field");
  for (int s = 0; s < 4; ++s) {
    const auto& X = set_coords(ds, kSets[s]);
    const int n = static_cast<int>(X.cols());
    pj.plans[s] = jet_plan(kind, sys, kSets[s]);
    auto& v = pj.views[s];
    v.n = n;
    if (n == 0) continue;
    pj.state[s] = ctx.state->jets(X, pj.plans[s].state);
    v.state = {pj.state[s].data(), static_cast<int>(pj.state[s].rows()), n, &pj.plans[s].state};
    if (layout.velocity_outputs > 0) {
      pj.velocity[s] = ctx.velocity->jets(X, pj.plans[s].velocity);
      v.velocity = {pj.velocity[s].data(), static_cast<int>(pj.velocity[s].rows()), n, &pj.plans[s].velocity};
    }
  }
}

/// Jets at a single point for the pointwise residual API.
struct PointJets {
  Eigen::MatrixXd state, velocity;
  JetPlan plan;
  SetJets<double> view;
};

void point_jets(FormalismKind kind, const ResidualContext& ctx, std::span<const double> point, PointJets& pj) {
  const auto& sys = *ctx.system;
  require_compatible(kind, sys);
  if (point.size() != static_cast<std::size_t>(sys.input_dim()))
    throw std::invalid_argument("residual point has " + std::to_string(point.size()) + " coordinates, expected " +
                                std::to_string(sys.input_dim()));
  Eigen::MatrixXd X = Eigen::Map<const Eigen::VectorXd>(point.data(), static_cast<Eigen::Index>(point.size()));
  pj.plan = jet_plan(kind, sys, PointSet::res);
  if (!ctx.state) throw std::invalid_argument("residual context has no state field");
  pj.state = ctx.state->jets(X, pj.plan.state);
  pj.view.n = 1;
  pj.view.state = {pj.state.data(), static_cast<int>(pj.state.rows()), 1, &pj.plan.state};
  if (net_layout(kind, sys).velocity_outputs > 0) {
    if (!ctx.velocity) throw std::invalid_argument(std::string(formalism_name(kind)) + " needs a velocity field");
    pj.velocity = ctx.velocity->jets(X, pj.plan.velocity);
    pj.view.velocity = {pj.velocity.data(), static_cast<int>(pj.velocity.rows()), 1, &pj.plan.velocity};
  }
}

}  // namespace

std::vector<double> nm_residual(const ResidualContext& ctx, std::span<const double> point) {
  PointJets pj;
  point_jets(FormalismKind::NM, ctx, point, pj);
  return nm_rows<double>(*ctx.system, ctx.constants, pj.view, 0);
}

std::vector<double> lm_residual(const ResidualContext& ctx, std::span<const double> point) {
  PointJets pj;
  point_jets(FormalismKind::LM, ctx, point, pj);
  return lm_rows<double>(*ctx.system, ctx.constants, pj.view, 0);
}

HamiltonianResidual hm_residual(const ResidualContext& ctx, std::span<const double> point) {
  PointJets pj;
  point_jets(FormalismKind::HM, ctx, point, pj);
  auto r = hm_rows<double>(*ctx.system, ctx.constants, pj.view, 0);
  return {std::move(r.f1), std::move(r.f2), r.cons};
}

std::vector<double> ovp_residual(const ResidualContext& ctx, std::span<const double> point) {
  PointJets pj;
  point_jets(FormalismKind::OVP, ctx, point, pj);
  return ovp_rows<double>(*ctx.system, ctx.constants, pj.view, 0);
}

std::vector<double> eit_residual(const ResidualContext& ctx, std::span<const double> point) {
  PointJets pj;
  point_jets(FormalismKind::EIT, ctx, point, pj);
  return eit_rows<double>(*ctx.system, ctx.constants, pj.view, 0);
}

double lagrangian_value_loss(const ResidualContext& ctx, const LabeledSet& set) {
  require_compatible(FormalismKind::LM, *ctx.system);
  if (set.size() == 0) return 0.0;
  const auto plan = jet_plan(FormalismKind::LM, *ctx.system, PointSet::data);
  const Eigen::MatrixXd J = ctx.state->jets(set.coords, plan.state);
  SetJets<double> v;
  v.n = static_cast<int>(set.size());
  v.state = {J.data(), static_cast<int>(J.rows()), v.n, &plan.state};
  return lag_term<double>(*ctx.system, ctx.constants, v, set);
}

LossBreakdown composite_loss(FormalismKind kind, const LossWeights& weights, const ResidualContext& ctx,
                             const Dataset& ds) {
  require_compatible(kind, *ctx.system);
  check_sets(weights, ds);
  PlainJets pj;
  fill_plain(kind, ctx, ds, pj);
  const auto t = assemble<double>(kind, *ctx.system, ctx.constants, ds, pj.views[0], pj.views[1], pj.views[2],
                                  pj.views[3]);
  return to_breakdown(kind, weights, t);
}

// ---------------------------------------------------------------------------
// Model

namespace {

bool positive_parameter(const std::string& name) {
  return name == "lambda" || name == "D" || name == "Dx" || name == "Dy";
}

}  // namespace

double PhysicalParams::value(std::size_t i) const {
  if (!free[i]) return reference[i];
  return positive[i] ? std::exp(raw[i]) : raw[i];
}

std::vector<double> PhysicalParams::values() const {
  std::vector<double> v(names.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = value(i);
  return v;
}

std::size_t PhysicalParams::free_count() const {
  return static_cast<std::size_t>(std::count(free.begin(), free.end(), std::uint8_t{1}));
}

PhysicalParams make_physical(const BenchmarkSystem& sys, const std::vector<std::string>& free_names, double init) {
  PhysicalParams p;
  p.names = sys.names;
  p.reference = sys.constants;
  p.free.assign(sys.names.size(), 0);
  p.raw = sys.constants;
  for (const auto& n : sys.names) p.positive.push_back(positive_parameter(n) ? 1 : 0);
  for (const auto& name : free_names) {
    const int i = sys.constant_index(name);
    if (i < 0)
      throw ConfigurationError(std::string(systems::system_name(sys.id)) + " has no constant '" + name + "'");
    const auto k = static_cast<std::size_t>(i);
    if (p.positive[k] && !(init > 0.0))
      throw ConfigurationError("initial value of '" + name + "' must be > 0");
    p.free[k] = 1;
    p.raw[k] = p.positive[k] ? std::log(init) : init;
  }
  return p;
}

ResidualContext Model::context() const {
  ResidualContext ctx;
  ctx.system = &system;
  ctx.constants = physical.values();
  ctx.state = &state;
  ctx.velocity = velocity ? &*velocity : nullptr;
  return ctx;
}

std::size_t Model::theta_size() const {
  return state.spec.parameter_count() + (velocity ? velocity->spec.parameter_count() : 0);
}

std::vector<double> Model::theta() const {
  auto t = net::flatten(state.params);
  if (velocity) {
    const auto v = net::flatten(velocity->params);
    t.insert(t.end(), v.begin(), v.end());
  }
  return t;
}

void Model::set_theta(std::span<const double> theta) {
  if (theta.size() != theta_size()) throw std::invalid_argument("set_theta: wrong length");
  const std::size_t ns = state.spec.parameter_count();
  state.params = net::unflatten(state.spec, theta.first(ns));
  if (velocity) velocity->params = net::unflatten(velocity->spec, theta.subspan(ns));
}

Model make_model(FormalismKind kind, const BenchmarkSystem& sys, const ModelOptions& opts, std::uint64_t seed) {
  require_compatible(kind, sys);
  const auto layout = net_layout(kind, sys);
  Model m;
  m.kind = kind;
  m.system = sys;
  std::vector<double> shift, scale;
  normalization_for(sys, shift, scale);
  net::MLPSpec spec{sys.input_dim(), layout.state_outputs, opts.hidden, opts.activation};
  spec.validate();
  m.state = NetField(spec, net::init(spec, seed), shift, scale);
  if (layout.velocity_outputs > 0) {
    net::MLPSpec vs{sys.input_dim(), layout.velocity_outputs, opts.hidden, opts.activation};
    m.velocity = NetField(vs, net::init(vs, seed ^ 0x5851f42d4c957f2dULL), shift, scale);
  }
  m.physical = make_physical(sys, opts.free_params, opts.init_value);
  return m;
}

LossBreakdown model_loss(const Model& model, const LossWeights& weights, const Dataset& ds) {
  return composite_loss(model.kind, weights, model.context(), ds);
}

LossBreakdown loss_and_gradient(const Model& model, const LossWeights& weights, const Dataset& ds,
                                LossGradient& grad) {
  const auto& sys = model.system;
  require_compatible(model.kind, sys);
  check_sets(weights, ds);
  thread_local ad::Tape tape;
  tape.clear();
  ad::ActiveTape guard(tape);

  const auto& ph = model.physical;
  std::vector<Value> raw(ph.names.size()), c(ph.names.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (ph.free[i]) {
      raw[i] = Value::variable(ph.raw[i]);
      c[i] = ph.positive[i] ? ad::exp(raw[i]) : raw[i];
    } else {
      c[i] = Value(ph.reference[i]);
    }
  }

  struct Role {
    net::JetTrace trace;
    std::vector<Value> vars;
  };
  Role st[4], ve[4];
  JetPlan plans[4];
  SetJets<Value> views[4];
  auto lift = [](const net::JetTrace& tr, std::vector<Value>& vars) {
    const auto size = static_cast<std::size_t>(tr.output.size());
    vars.resize(size);
    const double* src = tr.output.data();
    for (std::size_t i = 0; i < size; ++i) vars[i] = Value::variable(src[i]);
  };
  for (int s = 0; s < 4; ++s) {
    const auto& X = set_coords(ds, kSets[s]);
    const int n = static_cast<int>(X.cols());
    plans[s] = jet_plan(model.kind, sys, kSets[s]);
    views[s].n = n;
    if (n == 0) continue;
    st[s].trace = model.state.trace(X, plans[s].state);
    lift(st[s].trace, st[s].vars);
    views[s].state = {st[s].vars.data(), model.state.spec.output_dim, n, &plans[s].state};
    if (model.velocity) {
      ve[s].trace = model.velocity->trace(X, plans[s].velocity);
      lift(ve[s].trace, ve[s].vars);
      views[s].velocity = {ve[s].vars.data(), model.velocity->spec.output_dim, n, &plans[s].velocity};
    }
  }

  const auto t = assemble<Value>(model.kind, sys, c, ds, views[0], views[1], views[2], views[3]);
  const Value total = weighted_total<Value>(model.kind, weights, t);

  grad.theta.assign(model.theta_size(), 0.0);
  grad.physical.assign(ph.names.size(), 0.0);
  if (!total.is_constant()) {
    const auto adj = tape.adjoints(total.index());
    auto back = [&](const NetField& f, const Role& r, std::span<double> out) {
      if (r.vars.empty()) return;
      Eigen::MatrixXd G(r.trace.output.rows(), r.trace.output.cols());
      double* g = G.data();
      for (std::size_t i = 0; i < r.vars.size(); ++i) g[i] = adj[static_cast<std::size_t>(r.vars[i].index())];
      net::jet_backward(f.spec, f.params, r.trace, G, out);
    };
    const std::size_t ns = model.state.spec.parameter_count();
    std::span<double> gs(grad.theta.data(), ns);
    std::span<double> gv(grad.theta.data() + ns, grad.theta.size() - ns);
    for (int s = 0; s < 4; ++s) {
      back(model.state, st[s], gs);
      if (model.velocity) back(*model.velocity, ve[s], gv);
    }
    for (std::size_t i = 0; i < raw.size(); ++i)
      if (ph.free[i]) grad.physical[i] = adj[static_cast<std::size_t>(raw[i].index())];
  }

  Terms<double> td{t.data.value(), t.res.value(), t.ic.value(), t.bc.value(), t.lag.value(), t.cons.value()};
  return to_breakdown(model.kind, weights, td);
}

// ---------------------------------------------------------------------------
// Predictions

Prediction predict(const Model& model, const Eigen::MatrixXd& coords) {
  const auto& sys = model.system;
  const auto c = model.physical.values();
  const std::span<const double> cs = c;
  const auto n = coords.cols();
  Prediction out;
  auto add = [&](const std::string& name, Eigen::Index p, double v) {
    auto& vec = out.functionals[name];
    if (vec.size() == 0) vec = Eigen::VectorXd::Zero(n);
    vec(p) = v;
  };

  if (sys.spatial_dim == 0) {
    const int dof = sys.dof;
    net::JetRequest req;
    req.first = {0};
    if (sys.dissipative && model.kind == FormalismKind::NM) req.second = {{0, 0}};
    const Eigen::MatrixXd S = model.state.jets(coords, req);
    Eigen::MatrixXd V;
    if (model.velocity) V = model.velocity->jets(coords, req);
    auto at = [&](const Eigen::MatrixXd& M, int ch, int k, Eigen::Index p) { return M(ch, k * n + p); };
    out.state.resize(dof, n);
    out.velocity.resize(dof, n);
    for (Eigen::Index p = 0; p < n; ++p) {
      std::vector<double> q(static_cast<std::size_t>(dof)), qd(q.size()), mom(q.size());
      for (int i = 0; i < dof; ++i) q[static_cast<std::size_t>(i)] = at(S, i, 0, p);
      if (sys.conservative()) {
        if (model.kind == FormalismKind::HM) {
          using D = Dual<double>;
          std::vector<D> cd(c.begin(), c.end());
          for (int i = 0; i < dof; ++i) mom[static_cast<std::size_t>(i)] = at(S, dof + i, 0, p);
          for (int i = 0; i < dof; ++i) {
            std::vector<D> qq(q.begin(), q.end()), pp;
            for (int k = 0; k < dof; ++k) pp.emplace_back(mom[static_cast<std::size_t>(k)], k == i ? 1.0 : 0.0);
            qd[static_cast<std::size_t>(i)] = systems::hamiltonian<D>(sys, cd, qq, pp).d;
          }
        } else {
          for (int i = 0; i < dof; ++i) qd[static_cast<std::size_t>(i)] = at(S, i, 1, p);
          mom = systems::momentum<double>(sys, cs, q, qd);
        }
        add("H", p, systems::hamiltonian<double>(sys, cs, q, mom));
        add("L", p, systems::lagrangian<double>(sys, cs, q, qd));
      } else {
        const double theta_t = at(S, 0, 1, p);
        double omega, omega_t;
        if (model.velocity) {
          omega = at(V, 0, 0, p);
          omega_t = at(V, 0, 1, p);
        } else {
          omega = theta_t;
          omega_t = at(S, 0, 2, p);
        }
        qd[0] = omega;
        systems::LocalState<double> ls;
        ls.q = {q[0]};
        ls.qdot = {theta_t};
        ls.v = {omega};
        ls.v_t = {omega_t};
        add("R", p, systems::functional<double>(sys, FunctionalKind::rayleighian, cs, ls));
        add("S", p, systems::functional<double>(sys, FunctionalKind::entropy, cs, ls));
        add("sigma_s", p, systems::functional<double>(sys, FunctionalKind::entropy_production, cs, ls));
      }
      for (int i = 0; i < dof; ++i) {
        out.state(i, p) = q[static_cast<std::size_t>(i)];
        out.velocity(i, p) = qd[static_cast<std::size_t>(i)];
      }
    }
    return out;
  }

  const int d = sys.spatial_dim;
  net::JetRequest req;
  for (int a = 0; a <= d; ++a) req.first.push_back(a);
  const Eigen::MatrixXd S = model.state.jets(coords, req);
  Eigen::MatrixXd V;
  if (model.velocity) V = model.velocity->jets(coords, net::JetRequest::value_only());
  out.state.resize(1, n);
  out.velocity.resize(d, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    const double u = S(0, p);
    const double ub = std::max(u, kDensityFloor);
    systems::LocalState<double> ls;
    ls.u = ub;
    ls.u_t = S(0, n + p);
    for (int a = 1; a <= d; ++a) ls.grad_u.push_back(S(0, a * n + p));
    for (int a = 0; a < d; ++a)
      ls.v.push_back(model.velocity ? V(a, p) : -c[static_cast<std::size_t>(a)] * ls.grad_u[static_cast<std::size_t>(a)] / ub);
    out.state(0, p) = u;
    for (int a = 0; a < d; ++a) out.velocity(a, p) = ls.v[static_cast<std::size_t>(a)];
    add("u_t", p, ls.u_t);
    add("R", p, systems::functional<double>(sys, FunctionalKind::rayleighian, cs, ls));
    add("S", p, systems::functional<double>(sys, FunctionalKind::entropy, cs, ls));
    add("sigma_s", p, systems::functional<double>(sys, FunctionalKind::entropy_production, cs, ls));
    for (int a = 0; a < d; ++a) {
      ls.axis = a;
      add(a == 0 ? "Jx" : "Jy", p, systems::functional<double>(sys, FunctionalKind::entropy_flux, cs, ls));
    }
  }
  return out;
}

}  // namespace thermoforge::formalisms
