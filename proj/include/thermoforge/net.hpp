#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "thermoforge/autodiff.hpp"

namespace thermoforge::net {

enum class Activation : std::uint32_t { tanh = 0, sine = 1 };

const char* activation_name(Activation a) noexcept;
Activation parse_activation(const std::string& name);

struct MLPSpec {
  int input_dim = 1;
  int output_dim = 1;
  std::vector<int> hidden = {64, 64, 64};
  Activation activation = Activation::tanh;

  /// Layer widths including input and output: {in, h1, ..., out}.
  std::vector<int> widths() const;
  std::size_t parameter_count() const;
  void validate() const;

  bool operator==(const MLPSpec&) const = default;
};

/// Weights are (fan_out x fan_in). The canonical flat order is layer-major,
/// weights before bias, weights row-major.
struct NetParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  std::size_t size() const;
  bool operator==(const NetParams& o) const;
};

/// Offset of layer `l`'s weight block and bias block in the flat vector.
struct LayerSlice {
  std::size_t weight_offset;
  std::size_t bias_offset;
  int fan_in;
  int fan_out;
};
std::vector<LayerSlice> layer_slices(const MLPSpec& spec);

/// Xavier-uniform weights, zero biases; deterministic per seed.
NetParams init(const MLPSpec& spec, std::uint64_t seed);
NetParams zeros(const MLPSpec& spec);

std::vector<double> flatten(const NetParams& params);
NetParams unflatten(const MLPSpec& spec, std::span<const double> flat);

// ---------------------------------------------------------------------------
// Scalar evaluation on any scalar type (double, Value, Dual<...>)

template <class S>
S activate(Activation a, const S& z) {
  using ad::sin, ad::tanh, std::sin, std::tanh;
  return a == Activation::tanh ? tanh(z) : sin(z);
}

/// Straight-line forward pass with the parameters themselves as scalars of type S.
template <class S>
std::vector<S> forward_flat(const MLPSpec& spec, std::span<const S> flat, std::span<const S> input) {
  if (static_cast<int>(input.size()) != spec.input_dim)
    throw std::invalid_argument("forward: input has " + std::to_string(input.size()) + " entries, expected " +
                                std::to_string(spec.input_dim));
  if (flat.size() != spec.parameter_count())
    throw std::invalid_argument("forward: parameter vector has wrong length");
  const auto slices = layer_slices(spec);
  std::vector<S> a(input.begin(), input.end());
  for (std::size_t l = 0; l < slices.size(); ++l) {
    const auto& s = slices[l];
    std::vector<S> z(static_cast<std::size_t>(s.fan_out));
    for (int i = 0; i < s.fan_out; ++i) {
      S acc = flat[s.bias_offset + static_cast<std::size_t>(i)];
      for (int j = 0; j < s.fan_in; ++j)
        acc = acc + flat[s.weight_offset + static_cast<std::size_t>(i * s.fan_in + j)] * a[static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(i)] = acc;
    }
    if (l + 1 < slices.size())
      for (auto& zi : z) zi = activate(spec.activation, zi);
    a = std::move(z);
  }
  return a;
}

/// Forward pass with fixed (double) parameters on differentiable inputs.
template <class S>
std::vector<S> forward(const NetParams& params, const MLPSpec& spec, std::span<const S> input) {
  const auto flat = flatten(params);
  if (flat.size() != spec.parameter_count()) throw std::invalid_argument("forward: params do not match spec");
  std::vector<S> lifted;
  lifted.reserve(flat.size());
  for (double w : flat) lifted.emplace_back(w);
  return forward_flat<S>(spec, lifted, input);
}

// ---------------------------------------------------------------------------
// Batched Taylor jets
//
// A jet holds, per output channel and point, the value plus requested first and
// second partial derivatives with respect to the (network) inputs. Jets are
// propagated through the layers in closed form; jet_backward gives the
// parameter gradient for any adjoint on the output jet.

struct JetRequest {
  std::vector<int> first;                    // input axes for first derivatives
  std::vector<std::pair<int, int>> second;   // (i, j) with i <= j; both must appear in `first`

  static JetRequest value_only() { return {}; }

  int components() const { return 1 + static_cast<int>(first.size() + second.size()); }
  /// Component slot of d/dx_axis, or -1.
  int slot(int axis) const;
  /// Component slot of d2/dx_i dx_j (order-insensitive), or -1.
  int slot(int i, int j) const;
  void validate(int input_dim) const;
};

/// Forward pass cache. Matrix columns are grouped by component:
/// columns [k*n, (k+1)*n) hold component k for all n points.
struct JetTrace {
  int points = 0;
  JetRequest request;
  std::vector<Eigen::MatrixXd> activations;  // per layer input, width x (n*K)
  std::vector<Eigen::MatrixXd> preacts;      // per hidden layer pre-activation jets
  Eigen::MatrixXd output;                    // output_dim x (n*K)

  double value(int channel, int point) const { return output(channel, point); }
  double component(int channel, int k, int point) const { return output(channel, k * points + point); }
};

/// `inputs` is input_dim x n. `input_scale[a]` divides axis a before the first
/// layer (network sees (x - input_shift)/input_scale); derivatives are with
/// respect to the unscaled inputs.
JetTrace jet_forward(const MLPSpec& spec, const NetParams& params, const Eigen::MatrixXd& inputs,
                     const JetRequest& request, std::span<const double> input_shift = {},
                     std::span<const double> input_scale = {});

/// Accumulates d(loss)/d(theta) into `flat_grad` (canonical order) given
/// `output_adjoint` = d(loss)/d(output jet), same shape as trace.output.
void jet_backward(const MLPSpec& spec, const NetParams& params, const JetTrace& trace,
                  const Eigen::MatrixXd& output_adjoint, std::span<double> flat_grad);

// ---------------------------------------------------------------------------
// Snapshot files
//
// Little-endian layout:
//   char[4]  magic "TFNP"
//   u32      format version (1)
//   u32      net count N
//   N x { u32 input_dim, u32 output_dim, u32 hidden_count, u32 widths[hidden_count],
//         u32 activation id, u64 parameter count P, f64 params[P] }

struct Snapshot {
  std::vector<std::pair<MLPSpec, NetParams>> nets;
};

void write_snapshot(std::ostream& out, const Snapshot& snap);
Snapshot read_snapshot(std::istream& in);

}  // namespace thermoforge::net
