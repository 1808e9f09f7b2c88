#include <doctest.h>

#include "thermoforge/config.hpp"

using namespace thermoforge;

namespace {

std::string issues_of(const std::string& text) {
  try {
    config::parse_config(text);
  } catch (const config::ConfigError& e) {
    return e.what();
  }
  return "";
}

const char* kMinimal = "[system]\nname = damped_pendulum\n[formalism]\nkind = NM, EIT\n";

}  // namespace

TEST_CASE("minimal config takes defaults") {
  const auto cfg = config::parse_config(kMinimal);
  const auto& b = cfg.suite.base;
  CHECK(b.system.id == systems::SystemId::damped_pendulum);
  CHECK(cfg.suite.formalisms.size() == 2);
  CHECK(b.epochs == 20000);
  CHECK(b.learning_rate == 1e-3);
  CHECK(b.hidden == std::vector<int>{64, 64, 64});
  CHECK(cfg.suite.noise_levels == std::vector<double>{0.0});
  CHECK(cfg.suite.runs == 10);
  CHECK(b.counts.data == 100);
  CHECK(b.counts.res == 1000);

  const auto pde = config::parse_config("[system]\nname = diffusion2d\n[formalism]\nkind = OVP\n[training]\nn_res = 64\n");
  CHECK(pde.suite.base.counts.data == 2000);
  CHECK(pde.suite.base.counts.res == 64);
  CHECK(pde.suite.base.counts.ic == 200);
}

TEST_CASE("invalid configs are rejected with located messages") {
  CHECK(issues_of("").find("system.name") != std::string::npos);
  CHECK(issues_of("# only a comment\n").find("formalism.kind") != std::string::npos);

  const auto lm = issues_of("[system]\nname = diffusion2d\n[formalism]\nkind = LM\n");
  CHECK(lm.find("LM valid for conservative systems only") != std::string::npos);

  const auto unknown = issues_of(std::string(kMinimal) + "[training]\nepochs = 10\nepohcs = 3\n");
  CHECK(unknown.find("line 7") != std::string::npos);
  CHECK(unknown.find("unknown key") != std::string::npos);

  CHECK(issues_of(std::string(kMinimal) + "[training]\nepochs = 0\n").find("epochs") != std::string::npos);
  CHECK(issues_of(std::string(kMinimal) + "[training]\nepochs = ten\n").find("line 6") != std::string::npos);
  CHECK(issues_of(std::string(kMinimal) + "[noise]\nnoise_level = -0.1\n").find(">= 0") != std::string::npos);
  CHECK(issues_of(std::string(kMinimal) + "[landscape]\nresolution = 4\n").find("odd") != std::string::npos);
  CHECK(issues_of(std::string(kMinimal) + "[bogus]\n").find("unknown section") != std::string::npos);
  CHECK(issues_of("[system]\nname = mass_spring\nname = damped_pendulum\n").find("duplicate") != std::string::npos);

  // Every problem is reported, not only the first.
  const auto many = issues_of("[training]\nepochs = x\nlearning_rate = y\n");
  CHECK(many.find("line 2") != std::string::npos);
  CHECK(many.find("line 3") != std::string::npos);
}

TEST_CASE("system overrides") {
  const auto cfg = config::parse_config(
      "[system]\nname = mass_spring\nk = 4\nhorizon = 5\ninitial_state = 2, 0\n[formalism]\nkind = HM\n");
  const auto& s = cfg.suite.base.system;
  CHECK(s.constant("k") == 4.0);
  CHECK(s.horizon == 5.0);
  CHECK(s.initial_state == std::vector<double>{2.0, 0.0});
}

TEST_CASE("normalized text echoes settings and seeds follow the suite") {
  const auto cfg = config::parse_config(std::string(kMinimal) +
                                        "[noise]\nnoise_level = 0, 0.05\n[training]\nruns = 2\nseed = 7\n");
  const auto text = config::normalized(cfg);
  CHECK(text.find("noise_level = 0, 0.05") != std::string::npos);
  CHECK(text.find("kind = NM, EIT") != std::string::npos);
  CHECK(text.find("seed = 7") != std::string::npos);

  const auto seeds = config::run_seeds(cfg);
  REQUIRE(seeds.size() == 8);
  CHECK(seeds[3] == training::run_seed(7, formalisms::FormalismKind::NM, 1, 1));
  CHECK(seeds[4] == training::run_seed(7, formalisms::FormalismKind::EIT, 0, 0));

  CHECK(config::normalized(config::parse_config(text)) == text);
  CHECK(config::config_hash(config::parse_config(text)) == config::config_hash(cfg));
  auto other = cfg;
  other.suite.base.epochs = 5;
  CHECK(config::config_hash(other) != config::config_hash(cfg));
  other = cfg;
  other.suite.jobs = 4;
  CHECK(config::config_hash(other) == config::config_hash(cfg));
}
