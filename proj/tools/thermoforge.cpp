// thermoforge <oracle|train|suite|landscape|report> --config <path> [--out <dir>] [--jobs N] [--seed N]

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "thermoforge/bundle.hpp"
#include "thermoforge/config.hpp"
#include "thermoforge/landscape.hpp"
#include "thermoforge/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace thermoforge;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kAllAborted = 3;

struct Options {
  std::string config;
  std::string out;
  std::size_t jobs = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

fs::path output_root(const Options& o, const config::RunConfig& cfg) {
  if (!o.out.empty()) return o.out;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv("THERMOFORGE_OUT"); env && *env) return env;
  return "thermoforge_out";
}

std::string hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json manifest(const std::string& command, const config::RunConfig& cfg) {
  json m;
  m["tool"] = "thermoforge";
  m["version"] = "0.1.0";
  m["command"] = command;
  m["config_hash"] = hex(config::config_hash(cfg));
  m["config"] = config::normalized(cfg);
  m["seeds"] = config::run_seeds(cfg);
  m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  m["compiler"] = __VERSION__;
  return m;
}

void write_run(bundle::Writer& w, const training::RunRecord& rec) {
  const std::string dir =
      "runs/" + bundle::cell_name(rec.formalism, rec.noise_level) + "/" + bundle::run_name(rec.run) + "/";
  w.write(dir + "history.csv", bundle::history_csv(rec.result));
  w.write(dir + "params.bin", bundle::params_blob(rec.result.model));
}

void progress(const training::RunRecord& rec) {
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  const auto& r = rec.result;
  std::cerr << "[" << formalisms::formalism_name(rec.formalism) << " noise=" << rec.noise_level << " run=" << rec.run
            << "] " << (r.aborted ? "aborted: " + r.abort_reason
                                  : "final loss " + bundle::format_number(r.history.back().total) +
                                        ", L2 " + bundle::format_number(r.metrics.l2_relative_error))
            << "\n";
}

int cmd_oracle(const config::RunConfig& cfg, const fs::path& root) {
  const auto& sys = cfg.suite.base.system;
  bundle::Writer w(root);
  const auto lattice = oracles::reference_lattice(sys, cfg.suite.base.resolution);
  w.write(std::string("oracle/") + systems::system_name(sys.id) + ".csv", bundle::oracle_csv(sys, lattice));
  w.finish(manifest("oracle", cfg));
  return kOk;
}

int cmd_suite(config::RunConfig cfg, const fs::path& root, bool single) {
  if (single) {
    cfg.suite.formalisms.resize(1);
    cfg.suite.noise_levels.resize(1);
    cfg.suite.runs = 1;
  }
  const auto report = training::run_suite(cfg.suite, progress);
  bundle::Writer w(root);
  for (const auto& rec : report.runs) write_run(w, rec);
  w.write_json("report.json", bundle::report_json(report, cfg.suite.base.system));
  w.finish(manifest(single ? "train" : "suite", cfg));
  for (const auto& rec : report.runs)
    if (!rec.result.aborted) return kOk;
  std::cerr << "every run aborted\n";
  return kAllAborted;
}

int cmd_landscape(config::RunConfig cfg, const fs::path& root) {
  cfg.suite.noise_levels.resize(1);
  cfg.suite.runs = 1;
  const auto report = training::run_suite(cfg.suite, progress);
  bundle::Writer w(root);
  bool any = false;
  for (const auto& rec : report.runs) {
    write_run(w, rec);
    if (rec.result.aborted) continue;
    any = true;
    const auto& ls = cfg.landscape;
    const auto rep = landscape::model_landscape(rec.result.model, cfg.suite.base.weights, rec.result.dataset,
                                                ls.half_range, ls.resolution, ls.pairs, ls.seed, cfg.suite.jobs);
    const std::string name =
        "landscape/" + bundle::cell_name(rec.formalism, rec.noise_level) + "_" + bundle::run_name(rec.run);
    w.write(name + ".csv", bundle::landscape_csv(rep));
    w.write_json(name + ".flatness.json", bundle::flatness_json(rep));
    std::cerr << "[" << formalisms::formalism_name(rec.formalism) << "] flatness median "
              << bundle::format_number(rep.median) << "\n";
  }
  w.write_json("report.json", bundle::report_json(report, cfg.suite.base.system));
  w.finish(manifest("landscape", cfg));
  return any ? kOk : kAllAborted;
}

int cmd_report(const fs::path& root) {
  std::ifstream in(root / "report.json");
  if (!in) {
    std::cerr << "no report.json under " << root.string() << "\n";
    return 1;
  }
  const json doc = json::parse(in);
  std::cout << bundle::render_report(doc);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benchmark of formalism-specific physics-informed losses"};
  app.require_subcommand(1, 1);
  Options opt;
  std::string chosen;
  for (const char* name : {"oracle", "train", "suite", "landscape", "report"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config, "configuration file");
    sub->add_option("--out", opt.out, "output directory (default: [output] dir, then $THERMOFORGE_OUT)");
    sub->add_option("--jobs", opt.jobs, "parallel runs");
    sub->add_option("--seed", opt.seed, "base seed");
    sub->callback([&chosen, name]() { chosen = name; });
  }
  app.get_subcommand("oracle")->description("write reference solutions on the evaluation lattice");
  app.get_subcommand("train")->description("train one model (first formalism and noise level)");
  app.get_subcommand("suite")->description("train every (formalism, noise, run) cell");
  app.get_subcommand("landscape")->description("train one model per formalism and compute loss landscapes");
  app.get_subcommand("report")->description("print report.json as a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  opt.seed_set = app.get_subcommand(chosen)->count("--seed") > 0;
  if (opt.config.empty() || !fs::exists(opt.config)) {
    std::cerr << "config not found" << (opt.config.empty() ? "" : ": " + opt.config) << "\n";
    return kConfigError;
  }
  config::RunConfig cfg;
  try {
    cfg = config::load_config(opt.config);
  } catch (const config::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kConfigError;
  }
  if (opt.jobs > 0) cfg.suite.jobs = opt.jobs;
  if (opt.seed_set) cfg.suite.base.seed = opt.seed;
  const fs::path root = output_root(opt, cfg);

  try {
    if (chosen == "oracle") return cmd_oracle(cfg, root);
    if (chosen == "train") return cmd_suite(cfg, root, true);
    if (chosen == "suite") return cmd_suite(cfg, root, false);
    if (chosen == "landscape") return cmd_landscape(cfg, root);
    return cmd_report(root);
  } catch (const formalisms::ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
