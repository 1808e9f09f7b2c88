#include "thermoforge/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace thermoforge::config {

using formalisms::FormalismKind;

std::string Issue::str() const {
  std::string s;
  if (line > 0) s += "line " + std::to_string(line) + ": ";
  if (!key.empty()) s += "key '" + key + "': ";
  return s + message;
}

namespace {

std::string join_issues(const std::vector<Issue>& issues) {
  std::string s = "invalid configuration";
  for (const auto& i : issues) s += "\n  " + i.str();
  return s;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

bool parse_uint(const std::string& s, std::uint64_t& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct Entry {
  std::string value;
  int line;
};

using Sections = std::map<std::string, std::map<std::string, Entry>>;

const std::vector<std::string> kSections = {"system", "formalism", "training", "noise", "landscape", "output"};

Sections tokenize(const std::string& text, std::vector<Issue>& issues) {
  Sections out;
  for (const auto& s : kSections) out[s];
  std::istringstream in(text);
  std::string raw, section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto cut = raw.find_first_of("#;");
    std::string s = trim(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        issues.push_back({line, "", "malformed section header '" + s + "'"});
        continue;
      }
      section = trim(s.substr(1, s.size() - 2));
      if (!out.count(section)) {
        issues.push_back({line, "", "unknown section [" + section + "]"});
        section = "?";
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      issues.push_back({line, "", "expected 'key = value'"});
      continue;
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (section.empty()) {
      issues.push_back({line, key, "appears before any section"});
      continue;
    }
    if (section == "?") continue;
    if (out[section].count(key)) {
      issues.push_back({line, section + "." + key, "duplicate key (first set on line " +
                                                       std::to_string(out[section][key].line) + ")"});
      continue;
    }
    out[section][key] = {value, line};
  }
  return out;
}

class Reader {
 public:
  Reader(Sections& s, std::vector<Issue>& issues) : s_(s), issues_(issues) {}

  const Entry* find(const std::string& sec, const std::string& key) {
    auto& m = s_[sec];
    auto it = m.find(key);
    if (it == m.end()) return nullptr;
    used_.insert(sec + "." + key);
    return &it->second;
  }

  void real(const std::string& sec, const std::string& key, double& out) {
    if (const auto* e = find(sec, key))
      if (!parse_double(e->value, out)) bad(*e, sec, key, "expected a number, got '" + e->value + "'");
  }
  template <class U>
  void integer(const std::string& sec, const std::string& key, U& out) {
    if (const auto* e = find(sec, key)) {
      std::uint64_t v;
      if (!parse_uint(e->value, v)) bad(*e, sec, key, "expected a non-negative integer, got '" + e->value + "'");
      else out = static_cast<U>(v);
    }
  }
  void reals(const std::string& sec, const std::string& key, std::vector<double>& out) {
    if (const auto* e = find(sec, key)) {
      std::vector<double> v;
      for (const auto& item : split_list(e->value)) {
        double x;
        if (!parse_double(item, x)) {
          bad(*e, sec, key, "expected a list of numbers, got '" + e->value + "'");
          return;
        }
        v.push_back(x);
      }
      out = std::move(v);
    }
  }
  void bad(const Entry& e, const std::string& sec, const std::string& key, const std::string& msg) {
    issues_.push_back({e.line, sec + "." + key, msg});
  }
  void unknown_keys() {
    for (const auto& [sec, m] : s_)
      for (const auto& [key, e] : m)
        if (!used_.count(sec + "." + key)) issues_.push_back({e.line, sec + "." + key, "unknown key"});
  }

 private:
  Sections& s_;
  std::vector<Issue>& issues_;
  std::set<std::string> used_;
};

}  // namespace

ConfigError::ConfigError(std::vector<Issue> is) : std::runtime_error(join_issues(is)), issues(std::move(is)) {}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  std::vector<Issue> issues;
  Sections sec = tokenize(text, issues);
  Reader rd(sec, issues);
  RunConfig cfg;
  auto& base = cfg.suite.base;
  cfg.suite.jobs = std::max(1u, std::thread::hardware_concurrency());

  // [system]
  bool have_system = false;
  if (const auto* e = rd.find("system", "name")) {
    try {
      base.system = systems::make_system(systems::parse_system(e->value));
      base.counts = oracles::default_counts(base.system);
      have_system = true;
    } catch (const std::invalid_argument& ex) {
      rd.bad(*e, "system", "name", ex.what());
    }
  } else {
    issues.push_back({0, "system.name", "is required"});
  }
  if (have_system) {
    auto& sys = base.system;
    for (const auto& n : sys.names) {
      double v = sys.constant(n);
      rd.real("system", n, v);
      sys.set_constant(n, v);
    }
    rd.real("system", "horizon", sys.horizon);
    if (sys.spatial_dim > 0) {
      const auto* lo = rd.find("system", "domain_lo");
      const auto* hi = rd.find("system", "domain_hi");
      auto read_box = [&](const Entry* e, const char* key, std::vector<double>& out) {
        if (!e) return;
        std::vector<double> v;
        rd.reals("system", key, v);
        if (v.size() != static_cast<std::size_t>(sys.spatial_dim))
          rd.bad(*e, "system", key, "needs " + std::to_string(sys.spatial_dim) + " entries");
        else
          out = v;
      };
      read_box(lo, "domain_lo", sys.domain_lo);
      read_box(hi, "domain_hi", sys.domain_hi);
    } else if (const auto* e = rd.find("system", "initial_state")) {
      std::vector<double> v;
      rd.reals("system", "initial_state", v);
      if (v.size() != static_cast<std::size_t>(2 * sys.dof))
        rd.bad(*e, "system", "initial_state", "needs " + std::to_string(2 * sys.dof) + " entries");
      else
        sys.initial_state = v;
    }
    try {
      sys.validate();
    } catch (const std::invalid_argument& ex) {
      issues.push_back({0, "system", ex.what()});
    }
  }

  // [formalism]
  if (const auto* e = rd.find("formalism", "kind")) {
    for (const auto& name : split_list(e->value)) {
      try {
        const auto k = formalisms::parse_formalism(name);
        if (have_system && !formalisms::compatible(k, base.system)) {
          try {
            formalisms::require_compatible(k, base.system);
          } catch (const formalisms::ConfigurationError& ex) {
            rd.bad(*e, "formalism", "kind", ex.what());
          }
        }
        cfg.suite.formalisms.push_back(k);
      } catch (const formalisms::ConfigurationError& ex) {
        rd.bad(*e, "formalism", "kind", ex.what());
      }
    }
    if (cfg.suite.formalisms.empty() && split_list(e->value).empty())
      rd.bad(*e, "formalism", "kind", "is empty");
  } else {
    issues.push_back({0, "formalism.kind", "is required"});
  }
  if (!cfg.suite.formalisms.empty()) base.formalism = cfg.suite.formalisms.front();

  // [training]
  rd.integer("training", "epochs", base.epochs);
  rd.real("training", "learning_rate", base.learning_rate);
  rd.integer("training", "seed", base.seed);
  if (const auto* e = rd.find("training", "hidden")) {
    std::vector<int> h;
    for (const auto& item : split_list(e->value)) {
      std::uint64_t w;
      if (!parse_uint(item, w) || w == 0) {
        rd.bad(*e, "training", "hidden", "expected positive layer widths, got '" + e->value + "'");
        h.clear();
        break;
      }
      h.push_back(static_cast<int>(w));
    }
    if (!h.empty()) base.hidden = h;
  }
  if (const auto* e = rd.find("training", "activation")) {
    try {
      base.activation = net::parse_activation(e->value);
    } catch (const std::invalid_argument& ex) {
      rd.bad(*e, "training", "activation", ex.what());
    }
  }
  rd.integer("training", "n_data", base.counts.data);
  rd.integer("training", "n_res", base.counts.res);
  rd.integer("training", "n_ic", base.counts.ic);
  rd.integer("training", "n_bc", base.counts.bc);
  rd.real("training", "w_data", base.weights.data);
  rd.real("training", "w_res", base.weights.res);
  rd.real("training", "w_ic", base.weights.ic);
  rd.real("training", "w_bc", base.weights.bc);
  rd.real("training", "w_lag", base.weights.lag);
  rd.real("training", "w_cons", base.weights.cons);
  if (const auto* e = rd.find("training", "inverse_params")) base.inverse_params = split_list(e->value);
  rd.real("training", "inverse_init", base.inverse_init);
  rd.real("training", "abort_threshold", base.abort_threshold);
  rd.integer("training", "runs", cfg.suite.runs);
  rd.integer("training", "jobs", cfg.suite.jobs);
  rd.integer("training", "eval_points", base.eval_points);
  rd.real("training", "ode_dt", base.resolution.ode_dt);
  rd.integer("training", "diffusion_nt", base.resolution.diffusion_nt);
  rd.integer("training", "diffusion_nx", base.resolution.diffusion_nx);
  rd.integer("training", "diffusion_ny", base.resolution.diffusion_ny);
  rd.integer("training", "fisher_nx", base.resolution.fisher.nx);
  rd.real("training", "fisher_dt", base.resolution.fisher.dt);

  // [noise]
  rd.reals("noise", "noise_level", cfg.suite.noise_levels);
  if (cfg.suite.noise_levels.empty()) issues.push_back({0, "noise.noise_level", "needs at least one value"});
  for (double v : cfg.suite.noise_levels)
    if (v < 0.0) issues.push_back({0, "noise.noise_level", "must be >= 0"});
  base.noise_level = cfg.suite.noise_levels.empty() ? 0.0 : cfg.suite.noise_levels.front();

  // [landscape]
  rd.real("landscape", "half_range", cfg.landscape.half_range);
  rd.integer("landscape", "resolution", cfg.landscape.resolution);
  rd.integer("landscape", "pairs", cfg.landscape.pairs);
  rd.integer("landscape", "seed", cfg.landscape.seed);
  if (!(cfg.landscape.half_range > 0.0)) issues.push_back({0, "landscape.half_range", "must be > 0"});
  if (cfg.landscape.resolution < 5 || cfg.landscape.resolution % 2 == 0)
    issues.push_back({0, "landscape.resolution", "must be odd and >= 5"});
  if (cfg.landscape.pairs < 1) issues.push_back({0, "landscape.pairs", "must be >= 1"});

  // [output]
  if (const auto* e = rd.find("output", "dir")) {
    std::filesystem::path p(e->value);
    cfg.output_dir = p.is_absolute() ? p : base_dir / p;
  }

  rd.unknown_keys();

  if (cfg.suite.runs < 1) issues.push_back({0, "training.runs", "must be >= 1"});
  if (cfg.suite.jobs < 1) issues.push_back({0, "training.jobs", "must be >= 1"});
  if (have_system && !cfg.suite.formalisms.empty()) {
    try {
      for (auto k : cfg.suite.formalisms)
        if (formalisms::compatible(k, base.system)) {
          auto c = base;
          c.formalism = k;
          c.validate();
        }
    } catch (const std::exception& ex) {
      issues.push_back({0, "training", ex.what()});
    }
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({{0, "", "config not found: " + path.string()}});
  std::stringstream ss;
  ss << in.rdbuf();
  auto cfg = parse_config(ss.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  cfg.source = path;
  return cfg;
}

std::vector<Issue> validate_config(const std::filesystem::path& path) {
  try {
    load_config(path);
  } catch (const ConfigError& e) {
    return e.issues;
  }
  return {};
}

std::string normalized(const RunConfig& cfg) {
  const auto& b = cfg.suite.base;
  const auto& sys = b.system;
  std::ostringstream o;
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
    return s;
  };
  o << "[system]\nname = " << systems::system_name(sys.id) << "\n";
  for (std::size_t i = 0; i < sys.names.size(); ++i) o << sys.names[i] << " = " << fmt(sys.constants[i]) << "\n";
  o << "horizon = " << fmt(sys.horizon) << "\n";
  if (sys.spatial_dim > 0)
    o << "domain_lo = " << list(sys.domain_lo) << "\ndomain_hi = " << list(sys.domain_hi) << "\n";
  else
    o << "initial_state = " << list(sys.initial_state) << "\n";
  o << "\n[formalism]\nkind = ";
  for (std::size_t i = 0; i < cfg.suite.formalisms.size(); ++i)
    o << (i ? ", " : "") << formalisms::formalism_name(cfg.suite.formalisms[i]);
  o << "\n\n[training]\n";
  o << "epochs = " << b.epochs << "\nlearning_rate = " << fmt(b.learning_rate) << "\nseed = " << b.seed << "\n";
  o << "hidden = ";
  for (std::size_t i = 0; i < b.hidden.size(); ++i) o << (i ? ", " : "") << b.hidden[i];
  o << "\nactivation = " << net::activation_name(b.activation) << "\n";
  o << "n_data = " << b.counts.data << "\nn_res = " << b.counts.res << "\nn_ic = " << b.counts.ic
    << "\nn_bc = " << b.counts.bc << "\n";
  o << "w_data = " << fmt(b.weights.data) << "\nw_res = " << fmt(b.weights.res) << "\nw_ic = " << fmt(b.weights.ic)
    << "\nw_bc = " << fmt(b.weights.bc) << "\nw_lag = " << fmt(b.weights.lag) << "\nw_cons = " << fmt(b.weights.cons)
    << "\n";
  o << "inverse_params = ";
  for (std::size_t i = 0; i < b.inverse_params.size(); ++i) o << (i ? ", " : "") << b.inverse_params[i];
  o << "\ninverse_init = " << fmt(b.inverse_init) << "\nabort_threshold = " << fmt(b.abort_threshold) << "\n";
  o << "runs = " << cfg.suite.runs << "\neval_points = " << b.eval_points << "\n";
  o << "ode_dt = " << fmt(b.resolution.ode_dt) << "\ndiffusion_nt = " << b.resolution.diffusion_nt
    << "\ndiffusion_nx = " << b.resolution.diffusion_nx << "\ndiffusion_ny = " << b.resolution.diffusion_ny
    << "\nfisher_nx = " << b.resolution.fisher.nx << "\nfisher_dt = " << fmt(b.resolution.fisher.dt) << "\n";
  o << "\n[noise]\nnoise_level = " << list(cfg.suite.noise_levels) << "\n";
  o << "\n[landscape]\nhalf_range = " << fmt(cfg.landscape.half_range) << "\nresolution = " << cfg.landscape.resolution
    << "\npairs = " << cfg.landscape.pairs << "\nseed = " << cfg.landscape.seed << "\n";
  return o.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : normalized(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint64_t> run_seeds(const RunConfig& cfg) {
  std::vector<std::uint64_t> out;
  for (auto k : cfg.suite.formalisms)
    for (std::size_t ni = 0; ni < cfg.suite.noise_levels.size(); ++ni)
      for (std::size_t r = 0; r < cfg.suite.runs; ++r)
        out.push_back(training::run_seed(cfg.suite.base.seed, k, ni, r));
  return out;
}

}  // namespace thermoforge::config
