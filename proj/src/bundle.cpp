#include "thermoforge/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace thermoforge::bundle {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

namespace {

void row(std::ostringstream& o, const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) o << (i ? "," : "") << format_number(v[i]);
  o << "\n";
}

}  // namespace

std::string oracle_csv(const systems::BenchmarkSystem& sys, const oracles::Lattice& L) {
  std::ostringstream o;
  std::vector<std::string> derived;
  if (sys.spatial_dim == 0) {
    o << "t";
    for (int i = 0; i < 2 * sys.dof; ++i) o << ",state_" << i;
    derived = sys.conservative() ? std::vector<std::string>{"H", "L"} : std::vector<std::string>{"R", "S", "sigma_s"};
  } else {
    o << "t,x";
    if (sys.spatial_dim > 1) o << ",y";
    o << ",u,v1";
    if (sys.spatial_dim > 1) o << ",v2";
    derived = {"u_t", "R", "S", "sigma_s", "Jx"};
    if (sys.spatial_dim > 1) derived.push_back("Jy");
  }
  for (const auto& d : derived) o << "," << d;
  o << "\n";
  for (Eigen::Index j = 0; j < L.coords.cols(); ++j) {
    std::vector<double> v;
    for (Eigen::Index r = 0; r < L.coords.rows(); ++r) v.push_back(L.coords(r, j));
    for (Eigen::Index r = 0; r < L.state.rows(); ++r) v.push_back(L.state(r, j));
    for (Eigen::Index r = 0; r < L.velocity.rows(); ++r) v.push_back(L.velocity(r, j));
    for (const auto& d : derived) v.push_back(L.derived.at(d)(j));
    row(o, v);
  }
  return o.str();
}

std::string history_csv(const training::TrainResult& r) {
  std::ostringstream o;
  o << "epoch,total,data,res,ic,bc,lag,cons";
  const auto& ph = r.model.physical;
  for (std::size_t i = 0; i < ph.names.size(); ++i)
    if (ph.free[i]) o << "," << ph.names[i];
  o << "\n";
  for (std::size_t e = 0; e < r.history.size(); ++e) {
    const auto& h = r.history[e];
    o << e;
    for (double x : {h.total, h.data, h.res, h.ic, h.bc, h.lag, h.cons}) o << "," << format_number(x);
    for (double x : r.param_history[e]) o << "," << format_number(x);
    o << "\n";
  }
  return o.str();
}

std::string params_blob(const formalisms::Model& model) {
  net::Snapshot snap;
  snap.nets.emplace_back(model.state.spec, model.state.params);
  if (model.velocity) snap.nets.emplace_back(model.velocity->spec, model.velocity->params);
  std::ostringstream o(std::ios::binary);
  net::write_snapshot(o, snap);
  return o.str();
}

std::string landscape_csv(const landscape::LandscapeReport& rep) {
  std::ostringstream o;
  o << "pair,alpha,beta,loss\n";
  for (std::size_t k = 0; k < rep.pairs.size(); ++k) {
    const auto& g = rep.pairs[k].grid;
    for (std::size_t i = 0; i < g.alphas.size(); ++i)
      for (std::size_t j = 0; j < g.betas.size(); ++j)
        o << k << "," << format_number(g.alphas[i]) << "," << format_number(g.betas[j]) << ","
          << format_number(g.losses(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) << "\n";
  }
  return o.str();
}

std::string cell_name(formalisms::FormalismKind kind, double noise) {
  std::ostringstream o;
  o << formalisms::formalism_name(kind) << "_noise" << format_number(noise);
  return o.str();
}

std::string run_name(std::size_t run) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "run_%02zu", run);
  return buf;
}

namespace {

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json geo_json(const training::GeometricMean& g) { return {{"value", finite_or_null(g.value)}, {"floored", g.floored}}; }

}  // namespace

json run_json(const training::RunRecord& rec) {
  const auto& r = rec.result;
  json j;
  j["formalism"] = formalisms::formalism_name(rec.formalism);
  j["noise_level"] = rec.noise_level;
  j["run"] = rec.run;
  j["seed"] = r.seed;
  j["epochs_completed"] = r.history.size();
  j["aborted"] = r.aborted;
  j["abort_reason"] = r.abort_reason;
  j["initial_loss"] = r.history.empty() ? json(nullptr) : finite_or_null(r.history.front().total);
  j["final_loss"] = r.history.empty() ? json(nullptr) : finite_or_null(r.history.back().total);
  j["l2_relative_error"] = finite_or_null(r.metrics.l2_relative_error);
  j["rmse"] = finite_or_null(r.metrics.rmse);
  json mse = json::object();
  for (const auto& [k, v] : r.metrics.mse) mse[k] = finite_or_null(v);
  j["mse"] = mse;
  json est = json::object(), rel = json::object();
  for (const auto& [k, v] : r.estimates) est[k] = finite_or_null(v);
  for (const auto& [k, v] : r.relative_errors) rel[k] = finite_or_null(v);
  j["estimates"] = est;
  j["relative_errors"] = rel;
  j["path"] = "runs/" + cell_name(rec.formalism, rec.noise_level) + "/" + run_name(rec.run);
  return j;
}

json cell_json(const training::CellReport& c) {
  json j;
  j["formalism"] = formalisms::formalism_name(c.formalism);
  j["noise_level"] = c.noise_level;
  j["runs"] = c.runs;
  j["aborted"] = c.aborted;
  j["l2_relative_error_geomean"] = geo_json(c.l2_relative_error);
  json f = json::object();
  for (const auto& [k, g] : c.functional_mse) f[k] = geo_json(g);
  j["mse_geomean"] = f;
  json p = json::object();
  for (const auto& [k, s] : c.params)
    p[k] = {{"mean", finite_or_null(s.mean)},
            {"std", finite_or_null(s.std)},
            {"mean_no_outliers", finite_or_null(s.mean_no_outliers)},
            {"std_no_outliers", finite_or_null(s.std_no_outliers)},
            {"count", s.count},
            {"outliers", s.outliers},
            {"relative_error_geomean", geo_json(s.relative_error)}};
  j["params"] = p;
  return j;
}

json report_json(const training::SuiteReport& rep, const systems::BenchmarkSystem& sys) {
  json j;
  j["system"] = systems::system_name(sys.id);
  json truth = json::object();
  for (const auto& [k, v] : training::reference_values(sys)) truth[k] = v;
  j["reference"] = truth;
  j["cells"] = json::array();
  for (const auto& c : rep.cells) j["cells"].push_back(cell_json(c));
  j["runs"] = json::array();
  for (const auto& r : rep.runs) j["runs"].push_back(run_json(r));
  if (rep.runs.size() == 1) {
    const auto& r = j["runs"][0];
    j["l2_relative_error"] = r["l2_relative_error"];
    j["rmse"] = r["rmse"];
  }
  return j;
}

json flatness_json(const landscape::LandscapeReport& rep) {
  json j;
  j["pairs"] = json::array();
  for (const auto& p : rep.pairs)
    j["pairs"].push_back({{"delta_seed", p.delta_seed},
                          {"mu_seed", p.mu_seed},
                          {"mean_frobenius_sq", finite_or_null(p.score.mean_frobenius_sq)},
                          {"points_used", p.score.used},
                          {"points_excluded", p.score.excluded},
                          {"flagged", p.grid.flagged_count},
                          {"center_loss", finite_or_null(p.grid.center)},
                          {"spacing", p.grid.spacing}});
  j["median"] = finite_or_null(rep.median);
  j["mean"] = finite_or_null(rep.mean);
  j["std"] = finite_or_null(rep.std);
  return j;
}

std::string render_report(const json& report) {
  std::ostringstream o;
  o << "system: " << report.value("system", std::string("?")) << "\n\n";
  auto num = [](const json& v) {
    if (v.is_null()) return std::string("-");
    std::ostringstream s;
    s << std::setprecision(4) << std::scientific << v.get<double>();
    return s.str();
  };
  o << std::left << std::setw(6) << "model" << std::setw(8) << "noise" << std::setw(10) << "runs" << std::setw(14)
    << "L2 (geo)" << "parameters\n";
  std::map<std::string, std::vector<std::pair<double, std::string>>> orderings;
  for (const auto& c : report.at("cells")) {
    const std::string f = c.at("formalism");
    std::ostringstream runs;
    runs << c.at("runs").get<int>() - c.at("aborted").get<int>() << "/" << c.at("runs").get<int>();
    o << std::setw(6) << f << std::setw(8) << num(c.at("noise_level")).substr(0, 6) << std::setw(10) << runs.str()
      << std::setw(14) << num(c.at("l2_relative_error_geomean").at("value"));
    for (const auto& [name, p] : c.at("params").items()) {
      o << name << " = " << num(p.at("mean")) << " +- " << num(p.at("std"));
      if (p.at("outliers").get<int>() > 0)
        o << " (no outliers: " << num(p.at("mean_no_outliers")) << " +- " << num(p.at("std_no_outliers")) << ", "
          << p.at("outliers").get<int>() << " excluded)";
      o << "; ";
    }
    o << "\n";
    for (const auto& [name, g] : c.at("mse_geomean").items())
      if (!g.at("value").is_null())
        orderings[name].emplace_back(g.at("value").get<double>(), f + "@" + num(c.at("noise_level")));
  }
  if (!orderings.empty()) o << "\norderings by geometric-mean MSE, ascending:\n";
  for (auto& [name, v] : orderings) {
    std::sort(v.begin(), v.end());
    o << "  " << name << ": ";
    for (std::size_t i = 0; i < v.size(); ++i) o << (i ? " < " : "") << v[i].second << " (" << num(v[i].first) << ")";
    o << "\n";
  }
  return o.str();
}

Writer::Writer(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

void Writer::write(const std::string& relative, const std::string& content) {
  atomic_write(root_ / relative, content);
  files_.push_back(relative);
}

void Writer::write_json(const std::string& relative, const json& doc) { write(relative, doc.dump(2) + "\n"); }

void Writer::finish(json extra) {
  auto files = files_;
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  extra["files"] = files;
  atomic_write(root_ / "manifest.json", extra.dump(2) + "\n");
}

}  // namespace thermoforge::bundle
