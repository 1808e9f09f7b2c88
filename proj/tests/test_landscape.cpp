#include <doctest.h>

#include <cmath>

#include "thermoforge/landscape.hpp"

using namespace thermoforge;

namespace {

// Loss depending only on the first two coordinates through f(a, b).
landscape::LandscapeGrid grid_of(const std::function<double(double, double)>& f, double half, std::size_t res) {
  const std::vector<double> theta{0.0, 0.0}, delta{1.0, 0.0}, mu{0.0, 1.0};
  return landscape::landscape_grid([&](std::span<const double> x) { return f(x[0], x[1]); }, theta, delta, mu, half,
                                   res);
}

}  // namespace

TEST_CASE("quadratic fixtures give exact flatness scores") {
  const auto bowl = landscape::hessian_frobenius(grid_of([](double a, double b) { return a * a + b * b; }, 1.0, 11));
  CHECK(bowl.mean_frobenius_sq == doctest::Approx(8.0).epsilon(1e-10));
  CHECK(bowl.used == 81);
  const auto saddle = landscape::hessian_frobenius(grid_of([](double a, double b) { return a * b; }, 1.0, 11));
  CHECK(saddle.mean_frobenius_sq == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("cubic fixture") {
  const auto g = grid_of([](double a, double) { return a * a * a; }, 1.0, 21);
  const auto s = landscape::hessian_frobenius(g);
  double want = 0.0;
  int n = 0;
  for (int i = 1; i < 20; ++i)
    for (int j = 1; j < 20; ++j) {
      const double a = -1.0 + 0.1 * i;
      CHECK(s.l_aa(i, j) == doctest::Approx(6.0 * a).epsilon(1e-9));
      want += 36.0 * a * a;
      ++n;
    }
  CHECK(s.mean_frobenius_sq == doctest::Approx(want / n).epsilon(1e-10));
}

TEST_CASE("second derivatives are exact for cubic polynomials") {
  auto f = [](double a, double b) { return 1 + 2 * a - b + 3 * a * b * b - a * a * a + 0.5 * b * b * b + a * a * b; };
  const auto g = grid_of(f, 0.7, 9);
  const auto s = landscape::hessian_frobenius(g);
  for (int i = 1; i < 8; ++i)
    for (int j = 1; j < 8; ++j) {
      const double a = g.alphas[i], b = g.betas[j];
      CHECK(s.l_aa(i, j) == doctest::Approx(-6 * a + 2 * b).epsilon(1e-10));
      CHECK(s.l_bb(i, j) == doctest::Approx(6 * a + 3 * b).epsilon(1e-10));
      CHECK(s.l_ab(i, j) == doctest::Approx(6 * b + 2 * a).epsilon(1e-10));
    }
}

TEST_CASE("grid construction") {
  const auto g = grid_of([](double a, double b) { return 3 + a - b; }, 2.0, 5);
  CHECK(g.alphas == std::vector<double>{-2, -1, 0, 1, 2});
  CHECK(g.center == 3.0);
  CHECK(g.losses(2, 2) == 3.0);
  CHECK(g.spacing == 1.0);
  CHECK_THROWS_AS(grid_of([](double, double) { return 0.0; }, 1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(grid_of([](double, double) { return 0.0; }, 0.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(landscape::hessian_frobenius(grid_of([](double, double) { return 0.0; }, 1.0, 3)),
                  std::invalid_argument);

  const std::vector<double> theta{0.5, -1.0, 2.0}, zero(3, 0.0);
  const auto flat = landscape::landscape_grid([](std::span<const double> x) { return x[0] * x[1] + x[2]; }, theta,
                                              zero, zero, 1.0, 5);
  CHECK((flat.losses.array() == flat.center).all());

  // f(a, b) = a^2 |delta|^2 + b^2 |mu|^2 for an orthogonal pair around theta.
  const std::vector<double> d{0.0, 2.0, 0.0}, m{1.0, 0.0, 1.0};
  const auto q = landscape::landscape_grid(
      [&](std::span<const double> x) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += (x[k] - theta[k]) * (x[k] - theta[k]);
        return s;
      },
      theta, d, m, 1.0, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(q.losses(i, j) == doctest::Approx(q.alphas[i] * q.alphas[i] * 4 + q.betas[j] * q.betas[j] * 2));
}

TEST_CASE("non-finite points are flagged and excluded") {
  const auto g = grid_of([](double a, double b) { return a > 0.55 && b > 0.55 ? NAN : a * a + b * b; }, 1.0, 11);
  CHECK(g.flagged_count == 9);
  const auto s = landscape::hessian_frobenius(g);
  CHECK(s.excluded > 0);
  CHECK(s.used + s.excluded == 81);
  CHECK(s.mean_frobenius_sq == doctest::Approx(8.0).epsilon(1e-10));

  const auto t = grid_of([](double a, double) -> double {
    if (a > 0.9) throw std::runtime_error("blow-up");
    return a;
  }, 1.0, 11);
  CHECK(t.flagged_count == 11);
}

TEST_CASE("filter-normalized directions") {
  net::MLPSpec spec{2, 1, {4, 3}, net::Activation::tanh};
  auto p = net::init(spec, 5);
  p.biases[0].setConstant(0.5);
  const auto theta = net::flatten(p);
  const std::vector<net::MLPSpec> specs{spec};
  const auto dir = landscape::filter_normalized_direction(specs, theta, 17);
  // Groups: 4 + 3 + 1 weight rows and 3 bias vectors.
  CHECK(dir.groups.size() == 11);
  for (const auto& g : dir.groups) {
    double dn = 0, tn = 0;
    for (std::size_t k = g.offset; k < g.offset + g.length; ++k) {
      dn += dir.values[k] * dir.values[k];
      tn += theta[k] * theta[k];
    }
    if (tn == 0.0)
      CHECK(dn == 0.0);
    else
      CHECK(std::sqrt(dn) / std::sqrt(tn) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(landscape::filter_normalized_direction(specs, theta, 17).values == dir.values);
  CHECK(landscape::filter_normalized_direction(specs, theta, 18).values != dir.values);

  // Scaling a group scales its direction component by the same factor.
  auto scaled = theta;
  const auto& g0 = dir.groups[0];
  for (std::size_t k = g0.offset; k < g0.offset + g0.length; ++k) scaled[k] *= 3.0;
  const auto dir3 = landscape::filter_normalized_direction(specs, scaled, 17);
  for (std::size_t k = g0.offset; k < g0.offset + g0.length; ++k)
    CHECK(dir3.values[k] == doctest::Approx(3.0 * dir.values[k]));
}

TEST_CASE("landscapes of trained-model losses are reproducible") {
  const auto sys = systems::make_system(systems::SystemId::mass_spring);
  formalisms::ModelOptions opts;
  opts.hidden = {6, 6};
  const auto model = formalisms::make_model(formalisms::FormalismKind::LM, sys, opts, 4);
  oracles::LatticeResolution res;
  res.ode_dt = 1e-2;
  const auto lat = oracles::reference_lattice(sys, res);
  const auto ds = oracles::sample_dataset(sys, lat, {20, 30, 1, 0}, 0.0, 1);
  const auto a = landscape::model_landscape(model, {}, ds, 0.5, 7, 3, 11, 1);
  const auto b = landscape::model_landscape(model, {}, ds, 0.5, 7, 3, 11, 2);
  REQUIRE(a.pairs.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(a.pairs[k].score.mean_frobenius_sq == b.pairs[k].score.mean_frobenius_sq);
    CHECK(a.pairs[k].grid.center == doctest::Approx(formalisms::model_loss(model, {}, ds).total).epsilon(1e-14));
  }
  CHECK(a.pairs[0].delta_seed != a.pairs[1].delta_seed);
  CHECK(a.median >= 0.0);
}

TEST_CASE("flatness score covariance") {
  auto f = [](std::span<const double> x) { return 1.5 * x[0] * x[0] + x[0] * x[1] + 0.25 * x[1] * x[1]; };
  const std::vector<double> theta{0.2, -0.4}, d{1.0, 0.5}, m{-0.5, 1.0}, d3{3.0, 1.5};
  const auto base = landscape::hessian_frobenius(landscape::landscape_grid(f, theta, d, m, 0.5, 9));
  const auto scaled = landscape::hessian_frobenius(landscape::landscape_grid(f, theta, d3, m, 0.5, 9));
  for (int i = 1; i < 8; ++i)
    for (int j = 1; j < 8; ++j) {
      CHECK(scaled.l_aa(i, j) == doctest::Approx(9.0 * base.l_aa(i, j)).epsilon(1e-9));
      CHECK(scaled.l_bb(i, j) == doctest::Approx(base.l_bb(i, j)).epsilon(1e-9));
    }

  auto shifted = [&](std::span<const double> x) { return f(x) + 12.5; };
  const auto moved = landscape::hessian_frobenius(landscape::landscape_grid(shifted, theta, d, m, 0.5, 9));
  CHECK(moved.mean_frobenius_sq == doctest::Approx(base.mean_frobenius_sq).epsilon(1e-9));
}
