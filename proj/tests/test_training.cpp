#include <doctest.h>

#include <cmath>

#include "thermoforge/training.hpp"

using namespace thermoforge;
using formalisms::FormalismKind;
using systems::SystemId;

namespace {

training::TrainConfig small_config(SystemId id, FormalismKind kind, std::size_t epochs) {
  training::TrainConfig cfg;
  cfg.system = systems::make_system(id);
  cfg.formalism = kind;
  cfg.epochs = epochs;
  cfg.hidden = {16, 16};
  cfg.counts = {20, 40, 8, 8};
  cfg.eval_points = 200;
  cfg.resolution.ode_dt = 1e-2;
  cfg.resolution.diffusion_nt = 5;
  cfg.resolution.diffusion_nx = cfg.resolution.diffusion_ny = 11;
  cfg.resolution.fisher.nx = 101;
  cfg.resolution.fisher.dt = 0.01;
  cfg.resolution.fisher.save_every = 0.5;
  cfg.seed = 99;
  return cfg;
}

// Scalar Adam written out independently of the library.
struct ScalarAdam {
  double m = 0, v = 0, lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  int t = 0;
  double step(double x, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    return x - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace

TEST_CASE("Adam first step and zero gradient") {
  training::AdamState st;
  std::vector<double> theta{1.0};
  const std::vector<double> g{2.0};
  training::adam_step(st, theta, g, {});
  CHECK(theta[0] == doctest::Approx(1.0 - 1e-3 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
  CHECK(theta[0] == doctest::Approx(0.999));

  training::AdamState z;
  std::vector<double> p{0.3, -2.0};
  const std::vector<double> zero{0.0, 0.0};
  training::adam_step(z, p, zero, {});
  CHECK(p == std::vector<double>{0.3, -2.0});

  std::vector<double> bad{1.0};
  const std::vector<double> nan{std::nan("")};
  training::AdamState s2;
  CHECK_THROWS_AS(training::adam_step(s2, bad, nan, {}), training::NonFiniteGradient);
}

TEST_CASE("Adam matches a scalar reference on a quadratic") {
  training::AdamState st;
  std::vector<double> theta{0.0};
  ScalarAdam ref{.lr = 0.1};
  double x = 0.0;
  std::vector<double> losses;
  for (int k = 0; k < 50; ++k) {
    const std::vector<double> g{2 * (theta[0] - 3)};
    training::adam_step(st, theta, g, {.lr = 0.1});
    x = ref.step(x, 2 * (x - 3));
    CHECK(theta[0] == doctest::Approx(x).epsilon(1e-14));
    losses.push_back((theta[0] - 3) * (theta[0] - 3));
  }
  CHECK(std::abs(theta[0] - 3) < 0.5);
  // Monotone until the iterate first overshoots the minimum near step 40.
  for (std::size_t k = 5; k < 40; ++k) CHECK(losses[k] <= losses[k - 1]);
  CHECK(losses[40] > losses[39]);
}

TEST_CASE("error metrics") {
  const std::vector<double> truth{1.0, -2.0, 3.0};
  const std::vector<double> scaled{1.1, -2.2, 3.3}, zero{0, 0, 0};
  CHECK(training::l2_relative_error(truth, truth) == 0.0);
  CHECK(training::l2_relative_error(scaled, truth) == doctest::Approx(0.1));
  CHECK(training::l2_relative_error(zero, truth) == doctest::Approx(1.0));
  CHECK_THROWS_AS(training::l2_relative_error(truth, zero), std::domain_error);
  const std::vector<double> shorter{1.0};
  CHECK_THROWS_AS(training::l2_relative_error(shorter, truth), std::invalid_argument);

  CHECK(training::param_relative_error(0.2, 0.2) == 0.0);
  CHECK(training::param_relative_error(0.0, 0.2) == doctest::Approx(1.0));
  CHECK(training::param_relative_error(-3.1321, 3.1321) == doctest::Approx(2.0));
  CHECK_THROWS_AS(training::param_relative_error(1.0, 0.0), std::domain_error);

  const std::vector<double> pair{1e-2, 1e-4}, one{0.37}, same{0.2, 0.2, 0.2, 0.2};
  CHECK(training::geometric_mean(pair).value == doctest::Approx(1e-3));
  CHECK(training::geometric_mean(one).value == doctest::Approx(0.37));
  CHECK(training::geometric_mean(same).value == doctest::Approx(0.2));
  const std::vector<double> with_zero{0.0, 1e-16};
  const auto g = training::geometric_mean(with_zero);
  CHECK(g.floored == 1);
  CHECK(g.value == doctest::Approx(1e-16));
  CHECK_THROWS_AS(training::geometric_mean(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("run seeds are distinct and stable") {
  const auto a = training::run_seed(0, FormalismKind::NM, 0, 0);
  CHECK(a == training::run_seed(0, FormalismKind::NM, 0, 0));
  CHECK(a != training::run_seed(0, FormalismKind::NM, 0, 1));
  CHECK(a != training::run_seed(0, FormalismKind::LM, 0, 0));
  CHECK(a != training::run_seed(0, FormalismKind::NM, 1, 0));
  CHECK(a != training::run_seed(1, FormalismKind::NM, 0, 0));
}

TEST_CASE("configuration contract") {
  auto cfg = small_config(SystemId::mass_spring, FormalismKind::NM, 0);
  CHECK_THROWS_AS(training::train(cfg), formalisms::ConfigurationError);
  cfg.epochs = 1;
  const auto r = training::train(cfg);
  CHECK(r.history.size() == 1);
  CHECK(r.param_history.size() == 1);
  auto bad = small_config(SystemId::diffusion2d, FormalismKind::LM, 1);
  CHECK_THROWS_AS(training::train(bad), formalisms::ConfigurationError);
  auto unknown = small_config(SystemId::mass_spring, FormalismKind::NM, 1);
  unknown.inverse_params = {"gamma"};
  CHECK_THROWS_AS(training::train(unknown), formalisms::ConfigurationError);
}

TEST_CASE("training is deterministic") {
  for (auto [id, kind] : {std::pair{SystemId::mass_spring, FormalismKind::HM},
                          std::pair{SystemId::damped_pendulum, FormalismKind::EIT},
                          std::pair{SystemId::diffusion2d, FormalismKind::OVP}}) {
    auto cfg = small_config(id, kind, 15);
    const auto a = training::train(cfg);
    const auto b = training::train(cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) CHECK(a.history[e].total == b.history[e].total);
    CHECK(a.model.theta() == b.model.theta());
    CHECK(a.metrics.l2_relative_error == b.metrics.l2_relative_error);
  }
}

TEST_CASE("training reduces the loss and tracks free parameters") {
  auto cfg = small_config(SystemId::damped_pendulum, FormalismKind::NM, 300);
  cfg.inverse_params = {"lambda", "beta"};
  cfg.learning_rate = 3e-3;
  const auto r = training::train(cfg);
  REQUIRE_FALSE(r.aborted);
  CHECK(r.history.back().total < 0.5 * r.history.front().total);
  REQUIRE(r.param_history.front().size() == 2);
  CHECK(r.param_history.front()[0] == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(r.estimates.count("lambda") == 1);
  CHECK(r.relative_errors.count("beta") == 1);
}

TEST_CASE("loss blow-up aborts the run") {
  auto cfg = small_config(SystemId::mass_spring, FormalismKind::NM, 20);
  cfg.abort_threshold = 1e-12;
  const auto r = training::train(cfg);
  CHECK(r.aborted);
  CHECK(r.abort_reason.find("exceeds threshold") != std::string::npos);
}

TEST_CASE("mass-spring Newtonian model learns the trajectory") {
  auto cfg = small_config(SystemId::mass_spring, FormalismKind::NM, 3000);
  cfg.hidden = {32, 32};
  cfg.counts = {100, 200, 1, 0};
  cfg.learning_rate = 3e-3;
  const auto r = training::train(cfg);
  REQUIRE_FALSE(r.aborted);
  CHECK(r.metrics.l2_relative_error < 5e-2);
}

TEST_CASE("suites") {
  training::SuiteConfig s;
  s.base = small_config(SystemId::damped_pendulum, FormalismKind::NM, 5);
  s.formalisms = {FormalismKind::NM};
  s.runs = 1;
  const auto one = training::run_suite(s);
  REQUIRE(one.runs.size() == 1);
  REQUIRE(one.cells.size() == 1);
  CHECK(one.cells[0].runs == 1);

  s.formalisms = {FormalismKind::OVP, FormalismKind::EIT};
  s.noise_levels = {0.0, 0.05};
  s.runs = 2;
  s.jobs = 2;
  const auto a = training::run_suite(s);
  s.jobs = 1;
  const auto b = training::run_suite(s);
  REQUIRE(a.runs.size() == 8);
  CHECK(a.cells.size() == 4);
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    CHECK(a.runs[i].formalism == b.runs[i].formalism);
    CHECK(a.runs[i].result.seed == b.runs[i].result.seed);
    CHECK(a.runs[i].result.history.back().total == b.runs[i].result.history.back().total);
  }
}

TEST_CASE("sign-flipped estimates are counted as outliers") {
  const auto sys = systems::make_system(SystemId::damped_pendulum);
  std::vector<training::RunRecord> recs(3);
  const double betas[] = {3.1, 3.2, -3.1};
  for (std::size_t i = 0; i < 3; ++i) {
    recs[i].formalism = FormalismKind::NM;
    recs[i].run = i;
    recs[i].result.estimates = {{"beta", betas[i]}};
    recs[i].result.relative_errors = {{"beta", training::param_relative_error(betas[i], 3.1321)}};
    recs[i].result.metrics.l2_relative_error = 0.01;
  }
  std::vector<const training::RunRecord*> ptrs{&recs[0], &recs[1], &recs[2]};
  const auto cell = training::aggregate_cell(ptrs, sys);
  const auto& b = cell.params.at("beta");
  CHECK(b.outliers == 1);
  CHECK(b.count == 3);
  CHECK(b.mean == doctest::Approx((3.1 + 3.2 - 3.1) / 3));
  CHECK(b.mean_no_outliers == doctest::Approx(3.15));
}
