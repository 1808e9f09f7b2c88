#pragma once

// Output bundle: CSV/JSON/binary artifacts written atomically under one root,
// with manifest.json written last.
//
//   oracle/<system>.csv
//   runs/<cell>/<run>/history.csv      epoch,total,data,res,ic,bc,lag,cons[,<free param>...]
//   runs/<cell>/<run>/params.bin       network snapshot (see net.hpp)
//   report.json
//   landscape/<model>.csv              pair,alpha,beta,loss
//   landscape/<model>.flatness.json
//   manifest.json

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "thermoforge/landscape.hpp"
#include "thermoforge/oracles.hpp"
#include "thermoforge/training.hpp"

namespace thermoforge::bundle {

/// Fixed 17-significant-digit rendering used in every CSV.
std::string format_number(double x);

/// Writes `content` to a sibling temporary file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& content);

/// Oracle lattice columns: ODE `t,state_0..,H,L` (conservative) or
/// `t,state_0..,R,S,sigma_s` (dissipative), where the state lists q then qdot;
/// fields `t,x[,y],u,v1[,v2],u_t,R,S,sigma_s,Jx[,Jy]`.
std::string oracle_csv(const systems::BenchmarkSystem& sys, const oracles::Lattice& lattice);

std::string history_csv(const training::TrainResult& r);
std::string params_blob(const formalisms::Model& model);
std::string landscape_csv(const landscape::LandscapeReport& rep);

std::string cell_name(formalisms::FormalismKind kind, double noise);
std::string run_name(std::size_t run);

nlohmann::json run_json(const training::RunRecord& rec);
nlohmann::json cell_json(const training::CellReport& cell);
nlohmann::json report_json(const training::SuiteReport& rep, const systems::BenchmarkSystem& sys);
nlohmann::json flatness_json(const landscape::LandscapeReport& rep);

/// Human-readable table of a report.json document.
std::string render_report(const nlohmann::json& report);

class Writer {
 public:
  explicit Writer(std::filesystem::path root);
  void write(const std::string& relative, const std::string& content);
  void write_json(const std::string& relative, const nlohmann::json& doc);
  /// manifest.json with the file list and `extra` fields; call last.
  void finish(nlohmann::json extra);
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  std::vector<std::string> files_;
};

}  // namespace thermoforge::bundle
