#include "thermoforge/net.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>

namespace thermoforge::net {

const char* activation_name(Activation a) noexcept { return a == Activation::tanh ? "tanh" : "sine"; }

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "sine" || name == "sin") return Activation::sine;
  throw std::invalid_argument("unknown activation '" + name + "' (expected tanh or sine)");
}

std::vector<int> MLPSpec::widths() const {
  std::vector<int> w;
  w.reserve(hidden.size() + 2);
  w.push_back(input_dim);
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(output_dim);
  return w;
}

std::size_t MLPSpec::parameter_count() const {
  const auto w = widths();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l)
    n += static_cast<std::size_t>(w[l]) * static_cast<std::size_t>(w[l + 1]) + static_cast<std::size_t>(w[l + 1]);
  return n;
}

void MLPSpec::validate() const {
  for (int w : widths())
    if (w < 1) throw std::invalid_argument("MLPSpec: every layer width must be >= 1");
}

std::size_t NetParams::size() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  return n;
}

bool NetParams::operator==(const NetParams& o) const {
  if (weights.size() != o.weights.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != o.weights[l].rows() || weights[l].cols() != o.weights[l].cols()) return false;
    if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
  }
  return true;
}

std::vector<LayerSlice> layer_slices(const MLPSpec& spec) {
  const auto w = spec.widths();
  std::vector<LayerSlice> out;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    LayerSlice s{off, off + static_cast<std::size_t>(w[l]) * static_cast<std::size_t>(w[l + 1]), w[l], w[l + 1]};
    off = s.bias_offset + static_cast<std::size_t>(w[l + 1]);
    out.push_back(s);
  }
  return out;
}

NetParams zeros(const MLPSpec& spec) {
  spec.validate();
  NetParams p;
  const auto w = spec.widths();
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    p.weights.emplace_back(Eigen::MatrixXd::Zero(w[l + 1], w[l]));
    p.biases.emplace_back(Eigen::VectorXd::Zero(w[l + 1]));
  }
  return p;
}

NetParams init(const MLPSpec& spec, std::uint64_t seed) {
  NetParams p = zeros(spec);
  std::mt19937_64 rng(seed);
  for (auto& W : p.weights) {
    const double bound = std::sqrt(6.0 / static_cast<double>(W.rows() + W.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = dist(rng);
  }
  return p;
}

std::vector<double> flatten(const NetParams& params) {
  std::vector<double> flat;
  flat.reserve(params.size());
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& W = params.weights[l];
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) flat.push_back(W(i, j));
    const auto& b = params.biases[l];
    flat.insert(flat.end(), b.data(), b.data() + b.size());
  }
  return flat;
}

NetParams unflatten(const MLPSpec& spec, std::span<const double> flat) {
  if (flat.size() != spec.parameter_count())
    throw std::invalid_argument("unflatten: vector has " + std::to_string(flat.size()) + " entries, spec needs " +
                                std::to_string(spec.parameter_count()));
  NetParams p = zeros(spec);
  const auto slices = layer_slices(spec);
  for (std::size_t l = 0; l < slices.size(); ++l) {
    const auto& s = slices[l];
    for (int i = 0; i < s.fan_out; ++i)
      for (int j = 0; j < s.fan_in; ++j)
        p.weights[l](i, j) = flat[s.weight_offset + static_cast<std::size_t>(i * s.fan_in + j)];
    for (int i = 0; i < s.fan_out; ++i) p.biases[l](i) = flat[s.bias_offset + static_cast<std::size_t>(i)];
  }
  return p;
}

// ---------------------------------------------------------------------------

int JetRequest::slot(int axis) const {
  for (std::size_t k = 0; k < first.size(); ++k)
    if (first[k] == axis) return 1 + static_cast<int>(k);
  return -1;
}

int JetRequest::slot(int i, int j) const {
  if (i > j) std::swap(i, j);
  for (std::size_t k = 0; k < second.size(); ++k) {
    auto [a, b] = second[k];
    if (a > b) std::swap(a, b);
    if (a == i && b == j) return 1 + static_cast<int>(first.size() + k);
  }
  return -1;
}

void JetRequest::validate(int input_dim) const {
  for (int a : first)
    if (a < 0 || a >= input_dim) throw std::invalid_argument("JetRequest: axis out of range");
  for (auto [i, j] : second)
    if (slot(i) < 0 || slot(j) < 0)
      throw std::invalid_argument("JetRequest: second-order pair needs both axes in the first-order list");
}

namespace {

struct ActDerivs {
  Eigen::ArrayXXd f, s1, s2, s3;
};

ActDerivs act_derivs(Activation a, const Eigen::ArrayXXd& z, bool need_third) {
  ActDerivs d;
  if (a == Activation::tanh) {
    d.f = z.tanh();
    d.s1 = 1.0 - d.f.square();
    d.s2 = -2.0 * d.f * d.s1;
    if (need_third) d.s3 = d.s1 * (4.0 * d.f.square() - 2.0 * d.s1);
  } else {
    d.f = z.sin();
    d.s1 = z.cos();
    d.s2 = -d.f;
    if (need_third) d.s3 = -d.s1;
  }
  return d;
}

}  // namespace

JetTrace jet_forward(const MLPSpec& spec, const NetParams& params, const Eigen::MatrixXd& inputs,
                     const JetRequest& request, std::span<const double> input_shift,
                     std::span<const double> input_scale) {
  if (inputs.rows() != spec.input_dim) throw std::invalid_argument("jet_forward: input rows != input_dim");
  request.validate(spec.input_dim);
  const int n = static_cast<int>(inputs.cols());
  const int K = request.components();
  const int nf = static_cast<int>(request.first.size());

  JetTrace tr;
  tr.points = n;
  tr.request = request;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(spec.input_dim, static_cast<Eigen::Index>(n) * K);
  for (int a = 0; a < spec.input_dim; ++a) {
    const double shift = input_shift.empty() ? 0.0 : input_shift[static_cast<std::size_t>(a)];
    const double scale = input_scale.empty() ? 1.0 : input_scale[static_cast<std::size_t>(a)];
    A.row(a).head(n) = (inputs.row(a).array() - shift) / scale;
  }
  for (int k = 0; k < nf; ++k) {
    const int a = request.first[static_cast<std::size_t>(k)];
    const double scale = input_scale.empty() ? 1.0 : input_scale[static_cast<std::size_t>(a)];
    A.row(a).segment(static_cast<Eigen::Index>(1 + k) * n, n).setConstant(1.0 / scale);
  }

  const std::size_t L = params.weights.size();
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd Z = params.weights[l] * A;
    Z.leftCols(n).colwise() += params.biases[l];
    tr.activations.push_back(std::move(A));
    if (l + 1 == L) {
      tr.output = std::move(Z);
      break;
    }
    const Eigen::Index w = Z.rows();
    const auto d = act_derivs(spec.activation, Z.leftCols(n).array(), false);
    Eigen::MatrixXd Anext(w, Z.cols());
    Anext.leftCols(n) = d.f.matrix();
    for (int k = 0; k < nf; ++k)
      Anext.middleCols(static_cast<Eigen::Index>(1 + k) * n, n) =
          (d.s1 * Z.middleCols(static_cast<Eigen::Index>(1 + k) * n, n).array()).matrix();
    for (std::size_t p = 0; p < request.second.size(); ++p) {
      const auto [i, j] = request.second[p];
      const auto ci = static_cast<Eigen::Index>(request.slot(i)) * n;
      const auto cj = static_cast<Eigen::Index>(request.slot(j)) * n;
      const auto cij = static_cast<Eigen::Index>(1 + nf + static_cast<int>(p)) * n;
      Anext.middleCols(cij, n) = (d.s2 * Z.middleCols(ci, n).array() * Z.middleCols(cj, n).array() +
                                  d.s1 * Z.middleCols(cij, n).array())
                                     .matrix();
    }
    tr.preacts.push_back(std::move(Z));
    A = std::move(Anext);
  }
  return tr;
}

void jet_backward(const MLPSpec& spec, const NetParams& params, const JetTrace& tr,
                  const Eigen::MatrixXd& output_adjoint, std::span<double> flat_grad) {
  if (output_adjoint.rows() != tr.output.rows() || output_adjoint.cols() != tr.output.cols())
    throw std::invalid_argument("jet_backward: adjoint shape does not match the forward output");
  if (flat_grad.size() != spec.parameter_count()) throw std::invalid_argument("jet_backward: gradient length");
  const int n = tr.points;
  const auto& req = tr.request;
  const int nf = static_cast<int>(req.first.size());
  const auto slices = layer_slices(spec);

  Eigen::MatrixXd G = output_adjoint;
  for (std::size_t l = params.weights.size(); l-- > 0;) {
    const auto& s = slices[l];
    const Eigen::MatrixXd dW = G * tr.activations[l].transpose();
    const Eigen::VectorXd db = G.leftCols(n).rowwise().sum();
    for (int i = 0; i < s.fan_out; ++i) {
      double* row = flat_grad.data() + s.weight_offset + static_cast<std::size_t>(i * s.fan_in);
      for (int j = 0; j < s.fan_in; ++j) row[j] += dW(i, j);
      flat_grad[s.bias_offset + static_cast<std::size_t>(i)] += db(i);
    }
    if (l == 0) break;

    const Eigen::MatrixXd dA = params.weights[l].transpose() * G;
    const Eigen::MatrixXd& Z = tr.preacts[l - 1];
    const bool second = !req.second.empty();
    const auto d = act_derivs(spec.activation, Z.leftCols(n).array(), second);
    Eigen::MatrixXd dZ(dA.rows(), dA.cols());

    auto blk = [n](const Eigen::MatrixXd& M, int k) {
      return M.middleCols(static_cast<Eigen::Index>(k) * n, n).array();
    };

    Eigen::ArrayXXd dz0 = blk(dA, 0) * d.s1;
    for (int k = 1; k <= nf; ++k) dz0 += blk(dA, k) * d.s2 * blk(Z, k);
    for (std::size_t p = 0; p < req.second.size(); ++p) {
      const auto [i, j] = req.second[p];
      const int ki = req.slot(i), kj = req.slot(j), kij = 1 + nf + static_cast<int>(p);
      dz0 += blk(dA, kij) * (d.s3 * blk(Z, ki) * blk(Z, kj) + d.s2 * blk(Z, kij));
    }
    dZ.leftCols(n) = dz0.matrix();

    for (int k = 1; k <= nf; ++k) {
      const int axis = req.first[static_cast<std::size_t>(k - 1)];
      Eigen::ArrayXXd dzk = blk(dA, k) * d.s1;
      for (std::size_t p = 0; p < req.second.size(); ++p) {
        const auto [i, j] = req.second[p];
        const int kij = 1 + nf + static_cast<int>(p);
        if (i == axis && j == axis)
          dzk += 2.0 * blk(dA, kij) * d.s2 * blk(Z, k);
        else if (i == axis)
          dzk += blk(dA, kij) * d.s2 * blk(Z, req.slot(j));
        else if (j == axis)
          dzk += blk(dA, kij) * d.s2 * blk(Z, req.slot(i));
      }
      dZ.middleCols(static_cast<Eigen::Index>(k) * n, n) = dzk.matrix();
    }
    for (std::size_t p = 0; p < req.second.size(); ++p) {
      const int kij = 1 + nf + static_cast<int>(p);
      dZ.middleCols(static_cast<Eigen::Index>(kij) * n, n) = (blk(dA, kij) * d.s1).matrix();
    }
    G = std::move(dZ);
  }
}

// ---------------------------------------------------------------------------

namespace {

template <class T>
void put(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw std::runtime_error("snapshot: truncated file");
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

void write_snapshot(std::ostream& out, const Snapshot& snap) {
  out.write("TFNP", 4);
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(snap.nets.size()));
  for (const auto& [spec, params] : snap.nets) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.input_dim));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.output_dim));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.hidden.size()));
    for (int h : spec.hidden) put<std::uint32_t>(out, static_cast<std::uint32_t>(h));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.activation));
    const auto flat = flatten(params);
    put<std::uint64_t>(out, flat.size());
    for (double w : flat) put<double>(out, w);
  }
}

Snapshot read_snapshot(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "TFNP", 4) != 0) throw std::runtime_error("snapshot: bad magic");
  if (get<std::uint32_t>(in) != 1) throw std::runtime_error("snapshot: unsupported version");
  const auto count = get<std::uint32_t>(in);
  Snapshot snap;
  for (std::uint32_t k = 0; k < count; ++k) {
    MLPSpec spec;
    spec.input_dim = static_cast<int>(get<std::uint32_t>(in));
    spec.output_dim = static_cast<int>(get<std::uint32_t>(in));
    spec.hidden.resize(get<std::uint32_t>(in));
    for (auto& h : spec.hidden) h = static_cast<int>(get<std::uint32_t>(in));
    const auto act = get<std::uint32_t>(in);
    if (act > 1) throw std::runtime_error("snapshot: unknown activation id");
    spec.activation = static_cast<Activation>(act);
    const auto n = get<std::uint64_t>(in);
    if (n != spec.parameter_count()) throw std::runtime_error("snapshot: parameter count does not match dims");
    std::vector<double> flat(n);
    for (auto& w : flat) w = get<double>(in);
    snap.nets.emplace_back(spec, unflatten(spec, flat));
  }
  return snap;
}

}  // namespace thermoforge::net
