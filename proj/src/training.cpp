#include "thermoforge/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

namespace thermoforge::training {

using formalisms::ConfigurationError;
using formalisms::FormalismKind;
using formalisms::Model;

NonFiniteGradient::NonFiniteGradient(std::size_t i, double value)
    : std::runtime_error("non-finite gradient entry " + std::to_string(value) + " at index " + std::to_string(i)),
      index(i) {}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad, const AdamHyper& h) {
  if (params.size() != grad.size()) throw std::invalid_argument("adam_step: params and grad differ in length");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: optimizer state has wrong length");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i])) throw NonFiniteGradient(i, grad[i]);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
  }
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t run_seed(std::uint64_t base, FormalismKind kind, std::size_t noise_index, std::size_t run_index) noexcept {
  std::uint64_t s = splitmix64(base);
  s = splitmix64(s ^ static_cast<std::uint64_t>(kind));
  s = splitmix64(s ^ static_cast<std::uint64_t>(noise_index));
  return splitmix64(s ^ static_cast<std::uint64_t>(run_index));
}

double l2_relative_error(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("l2_relative_error: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    num += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    den += truth[i] * truth[i];
  }
  if (den == 0.0) throw std::domain_error("l2_relative_error: truth has zero norm");
  return std::sqrt(num) / std::sqrt(den);
}

double param_relative_error(double estimate, double truth) {
  if (truth == 0.0) throw std::domain_error("param_relative_error: truth is zero");
  return std::abs(estimate - truth) / std::abs(truth);
}

GeometricMean geometric_mean(std::span<const double> errors) {
  if (errors.empty()) throw std::invalid_argument("geometric_mean: empty input");
  GeometricMean g;
  double acc = 0.0;
  for (double e : errors) {
    if (!(e >= 1e-16)) {
      e = 1e-16;
      ++g.floored;
    }
    acc += std::log(e);
  }
  g.value = std::exp(acc / static_cast<double>(errors.size()));
  return g;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  system.validate();
  formalisms::require_compatible(formalism, system);
  if (epochs < 1) throw ConfigurationError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigurationError("learning_rate must be > 0");
  if (noise_level < 0.0) throw ConfigurationError("noise_level must be >= 0");
  for (const auto& name : inverse_params)
    if (system.constant_index(name) < 0)
      throw ConfigurationError(std::string(systems::system_name(system.id)) + " has no constant '" + name + "'");
  if (hidden.empty()) throw ConfigurationError("at least one hidden layer is required");
  for (int w : hidden)
    if (w < 1) throw ConfigurationError("hidden widths must be >= 1");
  if (counts.res == 0 && weights.res > 0.0) throw ConfigurationError("n_res must be >= 1");
  if (counts.data == 0 && weights.data > 0.0) throw ConfigurationError("n_data must be >= 1");
}

std::map<std::string, double> parameter_estimates(const Model& model) {
  std::map<std::string, double> out;
  const auto& ph = model.physical;
  for (std::size_t i = 0; i < ph.names.size(); ++i)
    if (ph.free[i]) out[ph.names[i]] = ph.value(i);
  const auto v = ph.values();
  auto ratio = [&](const char* num, const char* den, const char* key) {
    const int a = model.system.constant_index(num), b = model.system.constant_index(den);
    if (a < 0 || b < 0) return;
    if (!ph.free[static_cast<std::size_t>(a)] && !ph.free[static_cast<std::size_t>(b)]) return;
    out[key] = v[static_cast<std::size_t>(a)] / v[static_cast<std::size_t>(b)];
  };
  if (model.system.id == systems::SystemId::mass_spring) ratio("k", "m", "k/m");
  if (model.system.id == systems::SystemId::ideal_pendulum) ratio("g", "l", "g/l");
  return out;
}

std::map<std::string, double> reference_values(const systems::BenchmarkSystem& sys) {
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < sys.names.size(); ++i) out[sys.names[i]] = sys.constants[i];
  if (sys.id == systems::SystemId::mass_spring) out["k/m"] = sys.constant("k") / sys.constant("m");
  if (sys.id == systems::SystemId::ideal_pendulum) out["g/l"] = sys.constant("g") / sys.constant("l");
  return out;
}

Metrics evaluate(const Model& model, const oracles::Lattice& lattice, std::size_t max_points) {
  const auto idx = oracles::evaluation_indices(lattice, max_points);
  Metrics m;
  m.points = idx.size();
  if (idx.empty()) return m;
  Eigen::MatrixXd X(lattice.coords.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j)
    X.col(static_cast<Eigen::Index>(j)) = lattice.coords.col(static_cast<Eigen::Index>(idx[j]));
  const auto pred = formalisms::predict(model, X);

  std::vector<double> p, t;
  for (std::size_t j = 0; j < idx.size(); ++j)
    for (Eigen::Index r = 0; r < lattice.state.rows(); ++r) {
      p.push_back(pred.state(r, static_cast<Eigen::Index>(j)));
      t.push_back(lattice.state(r, static_cast<Eigen::Index>(idx[j])));
    }
  m.l2_relative_error = l2_relative_error(p, t);
  double se = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) se += (p[i] - t[i]) * (p[i] - t[i]);
  m.rmse = std::sqrt(se / static_cast<double>(p.size()));

  double vse = 0.0;
  for (std::size_t j = 0; j < idx.size(); ++j)
    for (Eigen::Index r = 0; r < lattice.velocity.rows(); ++r) {
      const double d = pred.velocity(r, static_cast<Eigen::Index>(j)) - lattice.velocity(r, static_cast<Eigen::Index>(idx[j]));
      vse += d * d;
    }
  m.mse["velocity"] = vse / static_cast<double>(idx.size() * static_cast<std::size_t>(lattice.velocity.rows()));

  for (const auto& [name, values] : pred.functionals) {
    const auto it = lattice.derived.find(name);
    if (it == lattice.derived.end()) continue;
    double acc = 0.0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const double d = values(static_cast<Eigen::Index>(j)) - it->second(static_cast<Eigen::Index>(idx[j]));
      acc += d * d;
    }
    m.mse[name] = acc / static_cast<double>(idx.size());
  }
  return m;
}

TrainResult train(const TrainConfig& cfg, const oracles::Lattice* lattice) {
  cfg.validate();
  oracles::Lattice own;
  if (!lattice) {
    own = oracles::reference_lattice(cfg.system, cfg.resolution);
    lattice = &own;
  }
  TrainResult r;
  r.seed = cfg.seed;
  r.dataset = oracles::sample_dataset(cfg.system, *lattice, cfg.counts, cfg.noise_level, splitmix64(cfg.seed ^ 0x1ULL));
  formalisms::ModelOptions opts;
  opts.hidden = cfg.hidden;
  opts.activation = cfg.activation;
  opts.free_params = cfg.inverse_params;
  opts.init_value = cfg.inverse_init;
  r.model = formalisms::make_model(cfg.formalism, cfg.system, opts, splitmix64(cfg.seed ^ 0x2ULL));
  Model& model = r.model;

  const std::size_t nt = model.theta_size();
  std::vector<std::size_t> free_idx;
  for (std::size_t i = 0; i < model.physical.names.size(); ++i)
    if (model.physical.free[i]) free_idx.push_back(i);
  std::vector<double> flat = model.theta();
  for (auto i : free_idx) flat.push_back(model.physical.raw[i]);
  std::vector<double> g(flat.size());
  AdamState adam;
  AdamHyper hyper;
  hyper.lr = cfg.learning_rate;
  formalisms::LossGradient lg;
  r.history.reserve(cfg.epochs);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    formalisms::LossBreakdown b;
    try {
      b = formalisms::loss_and_gradient(model, cfg.weights, r.dataset, lg);
    } catch (const ad::AutodiffError& e) {
      r.aborted = true;
      r.abort_reason = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    } catch (const systems::SingularityError& e) {
      r.aborted = true;
      r.abort_reason = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    if (!std::isfinite(b.total) || b.total > cfg.abort_threshold) {
      r.aborted = true;
      r.abort_reason = "epoch " + std::to_string(epoch) + ": loss " + std::to_string(b.total) + " exceeds threshold";
      break;
    }
    r.history.push_back({b.total, b.data, b.res, b.ic, b.bc, b.lag, b.cons});
    std::vector<double> ph;
    for (auto i : free_idx) ph.push_back(model.physical.value(i));
    r.param_history.push_back(std::move(ph));

    std::copy(lg.theta.begin(), lg.theta.end(), g.begin());
    for (std::size_t k = 0; k < free_idx.size(); ++k) g[nt + k] = lg.physical[free_idx[k]];
    try {
      adam_step(adam, flat, g, hyper);
    } catch (const NonFiniteGradient& e) {
      r.aborted = true;
      r.abort_reason = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    model.set_theta(std::span<const double>(flat.data(), nt));
    for (std::size_t k = 0; k < free_idx.size(); ++k) model.physical.raw[free_idx[k]] = flat[nt + k];
  }

  r.estimates = parameter_estimates(model);
  const auto ref = reference_values(cfg.system);
  for (const auto& [name, est] : r.estimates) r.relative_errors[name] = param_relative_error(est, ref.at(name));
  if (!r.aborted) r.metrics = evaluate(model, *lattice, cfg.eval_points);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = sd = 0.0;
  if (xs.empty()) return;
  mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  sd = std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace

CellReport aggregate_cell(const std::vector<const RunRecord*>& runs, const systems::BenchmarkSystem& sys) {
  CellReport c;
  if (runs.empty()) return c;
  c.formalism = runs.front()->formalism;
  c.noise_level = runs.front()->noise_level;
  c.runs = runs.size();
  const auto ref = reference_values(sys);
  std::map<std::string, std::vector<double>> est, est_clean, rel;
  std::vector<double> l2;
  std::map<std::string, std::vector<double>> fmse;
  for (const auto* rr : runs) {
    const auto& r = rr->result;
    if (r.aborted) {
      ++c.aborted;
      continue;
    }
    for (const auto& [name, v] : r.estimates) {
      est[name].push_back(v);
      rel[name].push_back(r.relative_errors.at(name));
      const bool flipped = name == "beta" && (v > 0.0) != (ref.at(name) > 0.0);
      if (flipped) ++c.params[name].outliers;
      else est_clean[name].push_back(v);
    }
    l2.push_back(r.metrics.l2_relative_error);
    for (const auto& [name, v] : r.metrics.mse) fmse[name].push_back(v);
  }
  for (auto& [name, values] : est) {
    auto& ps = c.params[name];
    ps.count = values.size();
    mean_std(values, ps.mean, ps.std);
    mean_std(est_clean[name], ps.mean_no_outliers, ps.std_no_outliers);
    ps.relative_error = geometric_mean(rel[name]);
  }
  if (!l2.empty()) c.l2_relative_error = geometric_mean(l2);
  for (auto& [name, values] : fmse) c.functional_mse[name] = geometric_mean(values);
  return c;
}

SuiteReport run_suite(const SuiteConfig& cfg, const std::function<void(const RunRecord&)>& on_done) {
  if (cfg.runs < 1) throw ConfigurationError("runs must be >= 1");
  if (cfg.formalisms.empty()) throw ConfigurationError("suite needs at least one formalism");
  if (cfg.noise_levels.empty()) throw ConfigurationError("suite needs at least one noise level");
  for (auto k : cfg.formalisms) {
    auto c = cfg.base;
    c.formalism = k;
    c.validate();
  }
  const auto lattice = oracles::reference_lattice(cfg.base.system, cfg.base.resolution);

  SuiteReport report;
  for (auto k : cfg.formalisms)
    for (std::size_t ni = 0; ni < cfg.noise_levels.size(); ++ni)
      for (std::size_t run = 0; run < cfg.runs; ++run) {
        RunRecord rec;
        rec.formalism = k;
        rec.noise_index = ni;
        rec.noise_level = cfg.noise_levels[ni];
        rec.run = run;
        report.runs.push_back(std::move(rec));
      }

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= report.runs.size()) return;
      auto& rec = report.runs[i];
      try {
        auto c = cfg.base;
        c.formalism = rec.formalism;
        c.noise_level = rec.noise_level;
        c.seed = run_seed(cfg.base.seed, rec.formalism, rec.noise_index, rec.run);
        rec.result = train(c, &lattice);
        if (on_done) on_done(rec);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, report.runs.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  for (auto k : cfg.formalisms)
    for (std::size_t ni = 0; ni < cfg.noise_levels.size(); ++ni) {
      std::vector<const RunRecord*> cell;
      for (const auto& rec : report.runs)
        if (rec.formalism == k && rec.noise_index == ni) cell.push_back(&rec);
      report.cells.push_back(aggregate_cell(cell, cfg.base.system));
    }
  return report;
}

}  // namespace thermoforge::training
