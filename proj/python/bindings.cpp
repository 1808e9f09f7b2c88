#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "thermoforge/config.hpp"
#include "thermoforge/landscape.hpp"
#include "thermoforge/oracles.hpp"
#include "thermoforge/training.hpp"

namespace py = pybind11;
using namespace thermoforge;

namespace {

py::dict constants_of(const systems::BenchmarkSystem& s) {
  py::dict d;
  for (std::size_t i = 0; i < s.names.size(); ++i) d[py::str(s.names[i])] = s.constants[i];
  return d;
}

py::dict flatness(const Eigen::MatrixXd& losses, double half_range) {
  if (losses.rows() != losses.cols()) throw std::invalid_argument("flatness: losses must be square");
  const auto n = static_cast<std::size_t>(losses.rows());
  if (n < 5 || n % 2 == 0) throw std::invalid_argument("flatness: grid size must be odd and >= 5");
  landscape::LandscapeGrid g;
  g.spacing = 2.0 * half_range / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) g.alphas.push_back(-half_range + g.spacing * static_cast<double>(i));
  g.betas = g.alphas;
  g.losses = losses;
  g.flagged.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (!std::isfinite(losses(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))) {
        g.flagged[i * n + j] = 1;
        ++g.flagged_count;
      }
  g.center = losses(static_cast<Eigen::Index>(n / 2), static_cast<Eigen::Index>(n / 2));
  const auto s = landscape::hessian_frobenius(g);
  py::dict d;
  d["mean_frobenius_sq"] = s.mean_frobenius_sq;
  d["used"] = s.used;
  d["excluded"] = s.excluded;
  d["l_aa"] = s.l_aa;
  d["l_ab"] = s.l_ab;
  d["l_bb"] = s.l_bb;
  return d;
}

py::dict train(const std::filesystem::path& config_path, std::optional<std::uint64_t> seed) {
  auto cfg = config::load_config(config_path);
  auto tc = cfg.suite.base;
  if (seed) tc.seed = *seed;
  training::TrainResult r;
  {
    py::gil_scoped_release release;
    r = training::train(tc);
  }
  py::dict d;
  const auto rows = static_cast<Eigen::Index>(r.history.size());
  Eigen::MatrixXd h(rows, 7);
  for (Eigen::Index e = 0; e < rows; ++e) {
    const auto& l = r.history[static_cast<std::size_t>(e)];
    h.row(e) << l.total, l.data, l.res, l.ic, l.bc, l.lag, l.cons;
  }
  d["history"] = h;
  d["history_columns"] = std::vector<std::string>{"total", "data", "res", "ic", "bc", "lag", "cons"};
  d["l2_relative_error"] = r.metrics.l2_relative_error;
  d["rmse"] = r.metrics.rmse;
  d["mse"] = r.metrics.mse;
  d["estimates"] = r.estimates;
  d["relative_errors"] = r.relative_errors;
  d["aborted"] = r.aborted;
  d["abort_reason"] = r.abort_reason;
  d["seed"] = r.seed;
  d["theta"] = r.model.theta();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "thermoforge core bindings";

  py::register_exception<config::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<formalisms::ConfigurationError>(m, "ConfigurationError", PyExc_ValueError);

  m.def("systems", [] {
    std::vector<std::string> out;
    for (auto id : {systems::SystemId::mass_spring, systems::SystemId::ideal_pendulum,
                    systems::SystemId::double_pendulum, systems::SystemId::damped_pendulum,
                    systems::SystemId::diffusion2d, systems::SystemId::fisher_kpp})
      out.emplace_back(systems::system_name(id));
    return out;
  });

  m.def(
      "system_info",
      [](const std::string& name) {
        const auto s = systems::make_system(systems::parse_system(name));
        py::dict d;
        d["name"] = name;
        d["constants"] = constants_of(s);
        d["dissipative"] = s.dissipative;
        d["spatial_dim"] = s.spatial_dim;
        d["horizon"] = s.horizon;
        d["domain_lo"] = s.domain_lo;
        d["domain_hi"] = s.domain_hi;
        d["initial_state"] = s.initial_state;
        return d;
      },
      py::arg("name"));

  m.def(
      "compatible",
      [](const std::string& formalism, const std::string& system) {
        return formalisms::compatible(formalisms::parse_formalism(formalism),
                                      systems::make_system(systems::parse_system(system)));
      },
      py::arg("formalism"), py::arg("system"));

  m.def(
      "integrate",
      [](const std::string& system, const std::vector<double>& times) {
        const auto s = systems::make_system(systems::parse_system(system));
        const auto tr = oracles::integrate_rk4(s, times);
        Eigen::MatrixXd states(static_cast<Eigen::Index>(tr.states.size()),
                               static_cast<Eigen::Index>(tr.states.empty() ? 0 : tr.states[0].size()));
        for (std::size_t i = 0; i < tr.states.size(); ++i)
          for (std::size_t k = 0; k < tr.states[i].size(); ++k)
            states(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = tr.states[i][k];
        return py::make_tuple(states, tr.derived);
      },
      py::arg("system"), py::arg("times"),
      "RK4 reference trajectory: (states (n, 2*dof) as (q, qdot), derived channels).");

  m.def(
      "diffusion_analytic",
      [](double x, double y, double t) {
        return oracles::diffusion_analytic(systems::make_system(systems::SystemId::diffusion2d), x, y, t);
      },
      py::arg("x"), py::arg("y"), py::arg("t"));

  m.def("l2_relative_error", [](const std::vector<double>& p, const std::vector<double>& t) {
    return training::l2_relative_error(p, t);
  });
  m.def("param_relative_error", &training::param_relative_error, py::arg("estimate"), py::arg("truth"));
  m.def("geometric_mean", [](const std::vector<double>& e) {
    const auto g = training::geometric_mean(e);
    return py::make_tuple(g.value, g.floored);
  });

  m.def("flatness", &flatness, py::arg("losses"), py::arg("half_range"),
        "Hessian flatness score of a square loss grid over [-half_range, half_range]^2.");

  m.def(
      "validate_config",
      [](const std::filesystem::path& p) {
        std::vector<std::string> out;
        for (const auto& i : config::validate_config(p)) out.push_back(i.str());
        return out;
      },
      py::arg("path"));
  m.def(
      "normalized_config", [](const std::filesystem::path& p) { return config::normalized(config::load_config(p)); },
      py::arg("path"));

  m.def("train", &train, py::arg("config"), py::arg("seed") = py::none(),
        "Train the first formalism and noise level of a config file.");
}
