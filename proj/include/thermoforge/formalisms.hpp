#pragma once

// Residuals and composite losses for the five formalisms.
//
// Networks enter through `Field`, which maps coordinate batches to jets (value
// plus requested input derivatives). Residual algebra runs on those jets with a
// generic scalar, so the same code gives plain loss values and, on the tape,
// the gradient with respect to network parameters and trainable constants.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "thermoforge/net.hpp"
#include "thermoforge/oracles.hpp"
#include "thermoforge/systems.hpp"

namespace thermoforge::formalisms {

class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class FormalismKind { NM, LM, HM, OVP, EIT };

const char* formalism_name(FormalismKind k) noexcept;
FormalismKind parse_formalism(const std::string& name);

/// Whether a formalism is defined for a system (LM/HM: conservative only;
/// OVP/EIT: dissipative only; NM: all).
bool compatible(FormalismKind kind, const systems::BenchmarkSystem& sys) noexcept;
void require_compatible(FormalismKind kind, const systems::BenchmarkSystem& sys);

struct LossWeights {
  double data = 1.0, res = 1.0, ic = 1.0, bc = 1.0;
  double lag = 1.0;   // LM: Lagrangian value mismatch at data points
  double cons = 1.0;  // HM: dH/dt at residual points
};

/// Output widths of the state and velocity networks (velocity 0 = absent).
struct NetLayout {
  int state_outputs = 1;
  int velocity_outputs = 0;
};
NetLayout net_layout(FormalismKind kind, const systems::BenchmarkSystem& sys);

enum class PointSet { data, ic, bc, res };

struct JetPlan {
  net::JetRequest state, velocity;
};
/// Derivatives each net must supply on a point set.
JetPlan jet_plan(FormalismKind kind, const systems::BenchmarkSystem& sys, PointSet set);

// ---------------------------------------------------------------------------
// Fields

class Field {
 public:
  virtual ~Field() = default;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  /// output_dim x (n*K) jet matrix laid out like net::JetTrace::output.
  virtual Eigen::MatrixXd jets(const Eigen::MatrixXd& coords, const net::JetRequest& request) const = 0;
};

class NetField final : public Field {
 public:
  NetField() = default;
  NetField(net::MLPSpec spec, net::NetParams params, std::vector<double> shift, std::vector<double> scale);

  int input_dim() const override { return spec.input_dim; }
  int output_dim() const override { return spec.output_dim; }
  Eigen::MatrixXd jets(const Eigen::MatrixXd& coords, const net::JetRequest& request) const override;
  net::JetTrace trace(const Eigen::MatrixXd& coords, const net::JetRequest& request) const;

  net::MLPSpec spec;
  net::NetParams params;
  std::vector<double> shift, scale;  // fixed input normalization
};

/// Input normalization mapping [0, T] x domain onto [-1, 1] per axis.
void normalization_for(const systems::BenchmarkSystem& sys, std::vector<double>& shift, std::vector<double>& scale);

using DDouble = ad::Dual<ad::Dual<double>>;
using PointFunction = std::function<std::vector<DDouble>(std::span<const DDouble>)>;

/// Closed-form field; derivatives by nested forward mode.
class FunctionField final : public Field {
 public:
  FunctionField(int input_dim, int output_dim, PointFunction f);
  int input_dim() const override { return in_; }
  int output_dim() const override { return out_; }
  Eigen::MatrixXd jets(const Eigen::MatrixXd& coords, const net::JetRequest& request) const override;

 private:
  int in_, out_;
  PointFunction f_;
};

struct ResidualContext {
  const systems::BenchmarkSystem* system = nullptr;
  std::vector<double> constants;  // physical parameters seen by the residuals
  const Field* state = nullptr;
  const Field* velocity = nullptr;
};

// ---------------------------------------------------------------------------
// Pointwise residuals (point = (t, x...))

/// Second-order ODE form qddot - a(q, qdot), or u_t - F[u] for fields.
std::vector<double> nm_residual(const ResidualContext& ctx, std::span<const double> point);
/// Euler-Lagrange rows d/dt dL/dqdot - dL/dq.
std::vector<double> lm_residual(const ResidualContext& ctx, std::span<const double> point);

struct HamiltonianResidual {
  std::vector<double> f1;  // qdot - dH/dp
  std::vector<double> f2;  // pdot + dH/dq
  double conservation = 0.0;  // dH/dt along the predicted path
};
HamiltonianResidual hm_residual(const ResidualContext& ctx, std::span<const double> point);

/// Stationarity rows, then the kinematic (ODE) or continuity (field) row.
std::vector<double> ovp_residual(const ResidualContext& ctx, std::span<const double> point);
/// Entropy balance row, constitutive rows, then the kinematic/continuity row.
std::vector<double> eit_residual(const ResidualContext& ctx, std::span<const double> point);

/// Mean squared mismatch between L(q, qdot) of the state field and labels.
double lagrangian_value_loss(const ResidualContext& ctx, const oracles::LabeledSet& set);

struct LossBreakdown {
  double total = 0.0;
  double data = 0.0, res = 0.0, ic = 0.0, bc = 0.0, lag = 0.0, cons = 0.0;
};

/// Weighted sum of mean squared terms. An empty data or residual set with a
/// positive weight is a configuration error; empty IC/BC sets are skipped.
LossBreakdown composite_loss(FormalismKind kind, const LossWeights& weights, const ResidualContext& ctx,
                             const oracles::Dataset& ds);

// ---------------------------------------------------------------------------
// Trainable model

struct PhysicalParams {
  std::vector<std::string> names;
  std::vector<double> reference;  // values used for constants that are not free
  std::vector<std::uint8_t> free;
  std::vector<std::uint8_t> positive;  // exp-parameterized
  std::vector<double> raw;             // trainable coordinates

  std::vector<double> values() const;
  double value(std::size_t i) const;
  std::size_t free_count() const;
};

/// Constants named in `free_names` become trainable with physical start value `init`.
PhysicalParams make_physical(const systems::BenchmarkSystem& sys, const std::vector<std::string>& free_names,
                             double init = 1.0);

struct Model {
  FormalismKind kind = FormalismKind::NM;
  systems::BenchmarkSystem system;
  NetField state;
  std::optional<NetField> velocity;
  PhysicalParams physical;

  ResidualContext context() const;
  std::size_t theta_size() const;
  std::vector<double> theta() const;  // state net then velocity net, canonical flat order
  void set_theta(std::span<const double> theta);
};

struct ModelOptions {
  std::vector<int> hidden = {64, 64, 64};
  net::Activation activation = net::Activation::tanh;
  std::vector<std::string> free_params;
  double init_value = 1.0;
};

Model make_model(FormalismKind kind, const systems::BenchmarkSystem& sys, const ModelOptions& opts,
                 std::uint64_t seed);

struct LossGradient {
  std::vector<double> theta;     // same order as Model::theta()
  std::vector<double> physical;  // d/d raw coordinate, zero for fixed constants
};

LossBreakdown model_loss(const Model& model, const LossWeights& weights, const oracles::Dataset& ds);
LossBreakdown loss_and_gradient(const Model& model, const LossWeights& weights, const oracles::Dataset& ds,
                                LossGradient& grad);

// ---------------------------------------------------------------------------
// Predictions on evaluation points

/// Model predictions of the physical state and functionals at coordinates.
/// Channel names follow the lattice `derived` map (H, L, R, S, sigma_s, Jx, Jy)
/// plus "state" rows (q / theta / u) and "velocity" rows.
struct Prediction {
  Eigen::MatrixXd state, velocity;
  std::map<std::string, Eigen::VectorXd> functionals;
};
Prediction predict(const Model& model, const Eigen::MatrixXd& coords);

}  // namespace thermoforge::formalisms
