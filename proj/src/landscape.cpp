#include "thermoforge/landscape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>

#include "thermoforge/training.hpp"

namespace thermoforge::landscape {

std::vector<FilterGroup> filter_groups(std::span<const net::MLPSpec> specs, std::span<const double> theta) {
  std::vector<FilterGroup> groups;
  std::size_t base = 0;
  for (const auto& spec : specs) {
    for (const auto& s : net::layer_slices(spec)) {
      const auto fan_in = static_cast<std::size_t>(s.fan_in);
      for (int r = 0; r < s.fan_out; ++r)
        groups.push_back({base + s.weight_offset + static_cast<std::size_t>(r) * fan_in, fan_in, 0.0});
      groups.push_back({base + s.bias_offset, static_cast<std::size_t>(s.fan_out), 0.0});
    }
    base += spec.parameter_count();
  }
  if (base != theta.size()) throw std::invalid_argument("filter_groups: theta length does not match the specs");
  for (auto& g : groups) {
    double acc = 0.0;
    for (std::size_t i = 0; i < g.length; ++i) acc += theta[g.offset + i] * theta[g.offset + i];
    g.theta_norm = std::sqrt(acc);
  }
  return groups;
}

Direction filter_normalized_direction(std::span<const net::MLPSpec> specs, std::span<const double> theta,
                                      std::uint64_t seed) {
  Direction d;
  d.seed = seed;
  d.groups = filter_groups(specs, theta);
  d.values.resize(theta.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : d.values) v = normal(rng);
  for (const auto& g : d.groups) {
    double acc = 0.0;
    for (std::size_t i = 0; i < g.length; ++i) acc += d.values[g.offset + i] * d.values[g.offset + i];
    const double norm = std::sqrt(acc);
    const double factor = (g.theta_norm == 0.0 || norm == 0.0) ? 0.0 : g.theta_norm / norm;
    for (std::size_t i = 0; i < g.length; ++i) d.values[g.offset + i] *= factor;
  }
  return d;
}

Direction filter_normalized_direction(const net::MLPSpec& spec, const net::NetParams& params, std::uint64_t seed) {
  const auto flat = net::flatten(params);
  return filter_normalized_direction(std::span<const net::MLPSpec>(&spec, 1), flat, seed);
}

LandscapeGrid landscape_grid(const LossFn& loss, std::span<const double> theta, std::span<const double> delta,
                             std::span<const double> mu, double half_range, std::size_t resolution,
                             std::size_t jobs) {
  if (resolution < 3 || resolution % 2 == 0) throw std::invalid_argument("landscape_grid: resolution must be odd and >= 3");
  if (!(half_range > 0.0)) throw std::invalid_argument("landscape_grid: half_range must be > 0");
  if (delta.size() != theta.size() || mu.size() != theta.size())
    throw std::invalid_argument("landscape_grid: direction length mismatch");
  LandscapeGrid g;
  const auto k = static_cast<long>(resolution / 2);
  g.spacing = half_range / static_cast<double>(k);
  for (long i = -k; i <= k; ++i) g.alphas.push_back(static_cast<double>(i) * g.spacing);
  g.alphas[static_cast<std::size_t>(k)] = 0.0;
  g.betas = g.alphas;
  const auto n = static_cast<Eigen::Index>(resolution);
  g.losses.resize(n, n);
  g.flagged.assign(resolution * resolution, 0);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    std::vector<double> p(theta.size());
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= resolution) return;
      for (std::size_t j = 0; j < resolution; ++j) {
        const double a = g.alphas[i], b = g.betas[j];
        for (std::size_t q = 0; q < p.size(); ++q) p[q] = theta[q] + a * delta[q] + b * mu[q];
        double v;
        try {
          v = loss(p);
        } catch (const std::exception&) {
          v = std::numeric_limits<double>::quiet_NaN();
        }
        g.losses(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        if (!std::isfinite(v)) g.flagged[i * resolution + j] = 1;
      }
    }
  };
  const std::size_t nj = std::max<std::size_t>(1, std::min(jobs, resolution));
  if (nj == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nj; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  g.flagged_count = static_cast<std::size_t>(std::count(g.flagged.begin(), g.flagged.end(), std::uint8_t{1}));
  g.center = g.losses(k, k);
  return g;
}

FlatnessScore hessian_frobenius(const LandscapeGrid& grid) {
  const auto n = grid.losses.rows();
  if (n < 5 || grid.losses.cols() != n) throw std::invalid_argument("hessian_frobenius: resolution must be >= 5");
  const double h = grid.spacing;
  if (!(h > 0.0)) throw std::invalid_argument("hessian_frobenius: non-uniform or zero spacing");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  FlatnessScore s;
  s.l_aa = s.l_ab = s.l_ba = s.l_bb = Eigen::MatrixXd::Constant(n, n, nan);
  const auto& f = grid.losses;
  auto bad = [&](Eigen::Index i, Eigen::Index j) {
    return grid.flagged.empty() ? !std::isfinite(f(i, j))
                                : grid.flagged[static_cast<std::size_t>(i * n + j)] != 0;
  };
  double acc = 0.0;
  for (Eigen::Index i = 1; i + 1 < n; ++i)
    for (Eigen::Index j = 1; j + 1 < n; ++j) {
      bool skip = false;
      for (int di = -1; di <= 1 && !skip; ++di)
        for (int dj = -1; dj <= 1 && !skip; ++dj) skip = bad(i + di, j + dj);
      if (skip) {
        ++s.excluded;
        continue;
      }
      const double laa = (f(i + 1, j) - 2.0 * f(i, j) + f(i - 1, j)) / (h * h);
      const double lbb = (f(i, j + 1) - 2.0 * f(i, j) + f(i, j - 1)) / (h * h);
      const double lab = (f(i + 1, j + 1) - f(i + 1, j - 1) - f(i - 1, j + 1) + f(i - 1, j - 1)) / (4.0 * h * h);
      s.l_aa(i, j) = laa;
      s.l_bb(i, j) = lbb;
      s.l_ab(i, j) = s.l_ba(i, j) = lab;
      acc += laa * laa + 2.0 * lab * lab + lbb * lbb;
      ++s.used;
    }
  s.mean_frobenius_sq = s.used ? acc / static_cast<double>(s.used) : nan;
  return s;
}

std::vector<net::MLPSpec> model_specs(const formalisms::Model& model) {
  std::vector<net::MLPSpec> specs{model.state.spec};
  if (model.velocity) specs.push_back(model.velocity->spec);
  return specs;
}

LossFn model_loss_fn(const formalisms::Model& model, const formalisms::LossWeights& weights,
                     const oracles::Dataset& ds) {
  return [&model, weights, &ds](std::span<const double> theta) {
    formalisms::Model m = model;
    m.set_theta(theta);
    return formalisms::model_loss(m, weights, ds).total;
  };
}

std::uint64_t pair_seed(std::uint64_t base, std::size_t pair, int which) noexcept {
  return training::splitmix64(training::splitmix64(base) ^ (2 * static_cast<std::uint64_t>(pair) +
                                                           static_cast<std::uint64_t>(which)));
}

LandscapeReport model_landscape(const formalisms::Model& model, const formalisms::LossWeights& weights,
                                const oracles::Dataset& ds, double half_range, std::size_t resolution,
                                std::size_t pairs, std::uint64_t base_seed, std::size_t jobs) {
  if (pairs < 1) throw std::invalid_argument("model_landscape: need at least one direction pair");
  const auto specs = model_specs(model);
  const auto theta = model.theta();
  const auto loss = model_loss_fn(model, weights, ds);
  LandscapeReport rep;
  std::vector<double> scores;
  for (std::size_t k = 0; k < pairs; ++k) {
    PairResult pr;
    pr.delta_seed = pair_seed(base_seed, k, 0);
    pr.mu_seed = pair_seed(base_seed, k, 1);
    const auto d = filter_normalized_direction(specs, theta, pr.delta_seed);
    const auto m = filter_normalized_direction(specs, theta, pr.mu_seed);
    pr.grid = landscape_grid(loss, theta, d.values, m.values, half_range, resolution, jobs);
    pr.score = hessian_frobenius(pr.grid);
    scores.push_back(pr.score.mean_frobenius_sq);
    rep.pairs.push_back(std::move(pr));
  }
  auto sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  rep.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  double acc = 0.0;
  for (double s : scores) acc += s;
  rep.mean = acc / static_cast<double>(n);
  double var = 0.0;
  for (double s : scores) var += (s - rep.mean) * (s - rep.mean);
  rep.std = std::sqrt(var / static_cast<double>(n));
  return rep;
}

}  // namespace thermoforge::landscape
