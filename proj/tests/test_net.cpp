#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "thermoforge/net.hpp"

using namespace thermoforge;
using ad::Dual;
using ad::Value;

TEST_CASE("initialization") {
  net::MLPSpec spec{1, 1, {2}, net::Activation::tanh};
  const auto p = net::init(spec, 7);
  for (const auto& b : p.biases) CHECK(b.isZero());
  CHECK(net::flatten(net::init(spec, 7)) == net::flatten(p));
  CHECK(net::flatten(net::init(spec, 8)) != net::flatten(p));

  net::MLPSpec wide{2, 1, {64, 64, 64}, net::Activation::tanh};
  CHECK(wide.parameter_count() == 8577);
  CHECK(net::flatten(net::init(wide, 1)).size() == 8577);
}

TEST_CASE("invalid specs are rejected") {
  CHECK_THROWS_AS((net::MLPSpec{0, 1, {4}, net::Activation::tanh}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((net::MLPSpec{1, 1, {0}, net::Activation::tanh}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(net::parse_activation("relu"), std::invalid_argument);
}

TEST_CASE("forward pass") {
  net::MLPSpec spec{1, 1, {3}, net::Activation::tanh};
  const auto z = net::zeros(spec);
  const std::vector<double> x{0.4};
  CHECK(net::forward<double>(z, spec, x)[0] == 0.0);

  net::MLPSpec linear{1, 1, {}, net::Activation::tanh};
  const std::vector<double> flat{2.0, 1.0};
  const std::vector<double> three{3.0};
  CHECK(net::forward_flat<double>(linear, flat, three)[0] == doctest::Approx(7.0));

  net::MLPSpec small{1, 1, {8}, net::Activation::tanh};
  const auto p = net::init(small, 3);
  double ref = p.biases[1](0);
  for (int i = 0; i < 8; ++i) ref += p.weights[1](0, i) * std::tanh(p.weights[0](i, 0) * 0.5 + p.biases[0](i));
  const std::vector<double> half{0.5};
  CHECK(std::abs(net::forward<double>(p, small, half)[0] - ref) < 1e-12);
}

TEST_CASE("flat layout") {
  net::MLPSpec spec{1, 1, {2}, net::Activation::tanh};
  auto p = net::init(spec, 11);
  CHECK(net::unflatten(spec, net::flatten(p)) == p);
  const auto zf = net::flatten(net::zeros(spec));
  CHECK(std::all_of(zf.begin(), zf.end(), [](double v) { return v == 0.0; }));

  // W1 (2) | b1 (2) | W2 (2) | b2 (1): the last bias sits at index 6 of 7.
  const auto slices = net::layer_slices(spec);
  REQUIRE(zf.size() == 7);
  CHECK(slices[1].bias_offset == 6);
  p.biases[1](0) = 42.0;
  CHECK(net::flatten(p)[6] == 42.0);
  CHECK_THROWS_AS(net::unflatten(spec, std::vector<double>(6)), std::invalid_argument);
}

TEST_CASE("snapshot round trip") {
  net::Snapshot snap;
  net::MLPSpec a{2, 3, {5, 4}, net::Activation::sine};
  net::MLPSpec b{1, 1, {3}, net::Activation::tanh};
  snap.nets.emplace_back(a, net::init(a, 1));
  snap.nets.emplace_back(b, net::init(b, 2));
  std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
  net::write_snapshot(ss, snap);
  CHECK(ss.str().substr(0, 4) == "TFNP");
  const auto back = net::read_snapshot(ss);
  REQUIRE(back.nets.size() == 2);
  CHECK(back.nets[0].first == a);
  CHECK(back.nets[0].second == snap.nets[0].second);
  CHECK(back.nets[1].second == snap.nets[1].second);

  std::stringstream junk("XXXX");
  CHECK_THROWS(net::read_snapshot(junk));
}

namespace {

struct JetCase {
  net::MLPSpec spec;
  net::NetParams params;
  Eigen::MatrixXd inputs;
  net::JetRequest request;
  std::vector<double> shift, scale;
};

JetCase jet_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  JetCase c;
  c.spec = {static_cast<int>(1 + seed % 3), static_cast<int>(1 + seed % 2), {6, 5},
            seed % 2 ? net::Activation::sine : net::Activation::tanh};
  c.params = net::init(c.spec, seed);
  std::normal_distribution<double> n01;
  for (auto& b : c.params.biases)
    for (auto& v : b.reshaped()) v = 0.1 * n01(rng);
  const int d = c.spec.input_dim;
  c.inputs = Eigen::MatrixXd::Random(d, 4);
  for (int a = 0; a < d; ++a) {
    c.shift.push_back(0.1 * a);
    c.scale.push_back(1.0 + 0.5 * a);
    c.request.first.push_back(a);
  }
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) c.request.second.emplace_back(i, j);
  return c;
}

// Straight-line evaluation including the input normalization.
template <class S>
std::vector<S> reference(const JetCase& c, std::span<const S> theta, std::span<const S> x) {
  std::vector<S> z;
  for (std::size_t a = 0; a < x.size(); ++a) z.push_back((x[a] - c.shift[a]) / c.scale[a]);
  return net::forward_flat<S>(c.spec, theta, z);
}

}  // namespace

TEST_CASE("jets agree with nested forward mode") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const auto c = jet_case(seed);
    const auto tr = net::jet_forward(c.spec, c.params, c.inputs, c.request, c.shift, c.scale);
    const auto theta = net::flatten(c.params);
    const int d = c.spec.input_dim;
    for (int p = 0; p < c.inputs.cols(); ++p) {
      for (const auto& [i, j] : c.request.second) {
        using DD = Dual<Dual<double>>;
        std::vector<DD> x;
        for (int a = 0; a < d; ++a)
          x.emplace_back(Dual<double>(c.inputs(a, p), a == i ? 1.0 : 0.0), Dual<double>(a == j ? 1.0 : 0.0, 0.0));
        const std::vector<DD> th(theta.begin(), theta.end());
        const auto y = reference<DD>(c, th, x);
        for (int ch = 0; ch < c.spec.output_dim; ++ch) {
          CHECK(tr.value(ch, p) == doctest::Approx(y[ch].v.v).epsilon(1e-12));
          CHECK(tr.component(ch, c.request.slot(i), p) == doctest::Approx(y[ch].v.d).epsilon(1e-10));
          CHECK(tr.component(ch, c.request.slot(j), p) == doctest::Approx(y[ch].d.v).epsilon(1e-10));
          CHECK(tr.component(ch, c.request.slot(i, j), p) == doctest::Approx(y[ch].d.d).epsilon(1e-10));
        }
      }
    }
  }
}

TEST_CASE("jet backward matches the tape gradient") {
  for (std::uint64_t seed = 21; seed <= 30; ++seed) {
    const auto c = jet_case(seed);
    const auto tr = net::jet_forward(c.spec, c.params, c.inputs, c.request, c.shift, c.scale);
    Eigen::MatrixXd adj = Eigen::MatrixXd::Random(tr.output.rows(), tr.output.cols());
    std::vector<double> got(c.spec.parameter_count(), 0.0);
    net::jet_backward(c.spec, c.params, tr, adj, got);

    // Same scalar on the tape: sum over jet entries of adj * entry.
    const auto theta = net::flatten(c.params);
    const int d = c.spec.input_dim, n = tr.points;
    const auto want = ad::gradient(
        [&](const std::vector<Value>& th) {
          Value acc = 0.0;
          for (int p = 0; p < n; ++p) {
            std::vector<Value> xv;
            for (int a = 0; a < d; ++a) xv.emplace_back(c.inputs(a, p));
            auto field = [&](const auto& in) {
              using S = typename std::decay_t<decltype(in)>::value_type;
              const std::vector<S> ts(th.begin(), th.end());
              return reference<S>(c, ts, in);
            };
            for (int ch = 0; ch < c.spec.output_dim; ++ch) {
              auto chan = [&](const auto& in) { return field(in)[ch]; };
              acc += adj(ch, p) * ad::input_derivative(chan, xv, std::span<const int>{});
              for (int a = 0; a < d; ++a) {
                const int ax[] = {a};
                acc += adj(ch, c.request.slot(a) * n + p) * ad::input_derivative(chan, xv, ax);
              }
              for (const auto& [i, j] : c.request.second) {
                const int ax[] = {i, j};
                acc += adj(ch, c.request.slot(i, j) * n + p) * ad::input_derivative(chan, xv, ax);
              }
            }
          }
          return acc;
        },
        theta);
    for (std::size_t k = 0; k < want.size(); ++k) CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-9));
  }
}

TEST_CASE("jet requests are validated") {
  net::MLPSpec spec{2, 1, {4}, net::Activation::tanh};
  const auto p = net::init(spec, 1);
  net::JetRequest bad;
  bad.second.emplace_back(0, 1);
  CHECK_THROWS_AS(net::jet_forward(spec, p, Eigen::MatrixXd::Zero(2, 3), bad), std::invalid_argument);
  CHECK_THROWS_AS(net::jet_forward(spec, p, Eigen::MatrixXd::Zero(3, 3), {}), std::invalid_argument);
}
