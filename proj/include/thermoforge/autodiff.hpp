#pragma once

// Scalar differentiation engine: a reverse-mode tape of primitive operations,
// with a forward-mode Dual<T> that nests over it (forward-over-reverse).
//
//   Value                 reverse-mode scalar recorded on the thread's active Tape
//   Dual<Value>           one forward tangent over the tape (second order overall)
//   Dual<Dual<Value>>     two nested tangents (third order overall)
//
// Dual<T> also works over plain double for tape-free directional derivatives.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace thermoforge::ad {

/// Raised for non-finite intermediates and domain violations (e.g. ln of x <= 0).
class AutodiffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Primitive : std::uint8_t { variable, add, mul, neg, recip, sin, cos, tanh, exp, ln, pow };

const char* primitive_name(Primitive op) noexcept;

struct Node {
  Primitive op;
  std::int32_t parent[2];
  double partial[2];
};

/// Append-only record of primitive operations. Parents always precede children,
/// so one backward pass over the node list is a valid reverse sweep.
class Tape {
 public:
  std::int32_t push_variable();
  std::int32_t push(Primitive op, double result, std::int32_t a, double da, std::int32_t b = -1, double db = 0.0);

  /// Reverse sweep seeded with d(output)/d(output) = 1. Returns adjoints for all nodes.
  std::vector<double> adjoints(std::int32_t output) const;
  void adjoints_into(std::int32_t output, std::vector<double>& adj) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  void clear() noexcept { nodes_.clear(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

 private:
  std::vector<Node> nodes_;
};

/// Binds a tape as the calling thread's recording target for its lifetime.
class ActiveTape {
 public:
  explicit ActiveTape(Tape& tape) noexcept;
  ~ActiveTape();
  ActiveTape(const ActiveTape&) = delete;
  ActiveTape& operator=(const ActiveTape&) = delete;

  static Tape* current() noexcept;

 private:
  Tape* previous_;
};

class Value {
 public:
  constexpr Value() noexcept = default;
  constexpr Value(double constant) noexcept : value_(constant) {}  // NOLINT(implicit)

  /// New independent variable on the active tape.
  static Value variable(double x);

  constexpr double value() const noexcept { return value_; }
  constexpr std::int32_t index() const noexcept { return index_; }
  constexpr bool is_constant() const noexcept { return index_ < 0; }

  Value& operator+=(const Value& o);
  Value& operator-=(const Value& o);
  Value& operator*=(const Value& o);
  Value& operator/=(const Value& o);

  // Internal: wraps an existing tape node.
  static constexpr Value from_node(double x, std::int32_t index) noexcept {
    Value v(x);
    v.index_ = index;
    return v;
  }

 private:
  double value_ = 0.0;
  std::int32_t index_ = -1;
};

Value operator+(const Value& a, const Value& b);
Value operator-(const Value& a, const Value& b);
Value operator*(const Value& a, const Value& b);
Value operator/(const Value& a, const Value& b);
Value operator-(const Value& a);
Value recip(const Value& a);
Value sin(const Value& a);
Value cos(const Value& a);
Value tanh(const Value& a);
Value exp(const Value& a);
Value log(const Value& a);
Value pow(const Value& a, double exponent);

inline double recip(double x) { return 1.0 / x; }

/// Gradient of `out` with respect to each of `vars` (one reverse sweep).
std::vector<double> gradient_of(const Value& out, std::span<const Value> vars);

// ---------------------------------------------------------------------------
// Forward mode

template <class T>
struct Dual {
  T v{};
  T d{};

  constexpr Dual() = default;
  constexpr Dual(double c) : v(c), d(0.0) {}  // NOLINT(implicit)
  constexpr Dual(T value, T tangent) : v(std::move(value)), d(std::move(tangent)) {}
  template <class U>
    requires(!std::is_same_v<U, double> && std::is_constructible_v<T, const U&>)
  constexpr Dual(const U& value) : v(value), d(0.0) {}  // NOLINT(implicit)

  Dual& operator+=(const Dual& o) { return *this = *this + o; }
  Dual& operator-=(const Dual& o) { return *this = *this - o; }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }
  Dual& operator/=(const Dual& o) { return *this = *this / o; }
};

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.v + b.v, a.d + b.d};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.v - b.v, a.d - b.d};
}
template <class T>
Dual<T> operator-(const Dual<T>& a) {
  return {-a.v, -a.d};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <class T>
Dual<T> recip(const Dual<T>& a) {
  using ad::recip;
  T r = recip(a.v);
  return {r, -(r * r) * a.d};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  return a * recip(b);
}
template <class T>
Dual<T> operator+(const Dual<T>& a, double b) { return a + Dual<T>(b); }
template <class T>
Dual<T> operator+(double a, const Dual<T>& b) { return Dual<T>(a) + b; }
template <class T>
Dual<T> operator-(const Dual<T>& a, double b) { return a - Dual<T>(b); }
template <class T>
Dual<T> operator-(double a, const Dual<T>& b) { return Dual<T>(a) - b; }
template <class T>
Dual<T> operator*(const Dual<T>& a, double b) { return {a.v * b, a.d * b}; }
template <class T>
Dual<T> operator*(double a, const Dual<T>& b) { return {b.v * a, b.d * a}; }
template <class T>
Dual<T> operator/(const Dual<T>& a, double b) { return a * (1.0 / b); }
template <class T>
Dual<T> operator/(double a, const Dual<T>& b) { return a * recip(b); }

template <class T>
Dual<T> sin(const Dual<T>& a) {
  using std::cos, std::sin;
  return {sin(a.v), cos(a.v) * a.d};
}
template <class T>
Dual<T> cos(const Dual<T>& a) {
  using std::cos, std::sin;
  return {cos(a.v), -(sin(a.v) * a.d)};
}
template <class T>
Dual<T> tanh(const Dual<T>& a) {
  using std::tanh;
  T t = tanh(a.v);
  return {t, (1.0 - t * t) * a.d};
}
template <class T>
Dual<T> exp(const Dual<T>& a) {
  using std::exp;
  T e = exp(a.v);
  return {e, e * a.d};
}
template <class T>
Dual<T> log(const Dual<T>& a) {
  using std::log;
  using ad::recip;
  return {log(a.v), recip(a.v) * a.d};
}
template <class T>
Dual<T> pow(const Dual<T>& a, double c) {
  using std::pow;
  if (c == 0.0) return Dual<T>(1.0);
  return {pow(a.v, c), (c * pow(a.v, c - 1.0)) * a.d};
}

// ---------------------------------------------------------------------------
// Scalar helpers shared by double, Value, and Dual<...>

inline double primal(double x) { return x; }
inline double primal(const Value& x) { return x.value(); }
template <class T>
double primal(const Dual<T>& x) {
  return primal(x.v);
}

template <class T>
T square(const T& x) {
  return x * x;
}

/// max(x, floor) evaluated on the innermost primal; below the floor the result is
/// the constant floor (zero derivative).
template <class T>
T clamp_min(const T& x, double floor) {
  return primal(x) < floor ? T(floor) : x;
}

// ---------------------------------------------------------------------------
// Differentiation drivers

/// Gradient of a scalar function of n variables at `point`. `f` receives a
/// std::vector<Value> and returns a Value.
template <class F>
std::vector<double> gradient(F&& f, std::span<const double> point) {
  Tape tape;
  ActiveTape bind(tape);
  std::vector<Value> vars;
  vars.reserve(point.size());
  for (double x : point) vars.push_back(Value::variable(x));
  Value out = f(vars);
  return gradient_of(out, vars);
}

/// Partial derivative of g with respect to the listed input axes (at most two),
/// returned as a live Value on the active tape. `g` must be callable with
/// std::vector<S> for S in {Value, Dual<Value>, Dual<Dual<Value>>}.
template <class G>
Value input_derivative(G&& g, std::span<const Value> inputs, std::span<const int> axes) {
  const int n = static_cast<int>(inputs.size());
  for (int a : axes)
    if (a < 0 || a >= n)
      throw std::invalid_argument("input_derivative: axis " + std::to_string(a) + " out of range [0, " +
                                  std::to_string(n) + ")");
  if (axes.size() > 2) throw std::invalid_argument("input_derivative: at most two axes supported");

  if (axes.empty()) {
    std::vector<Value> x(inputs.begin(), inputs.end());
    return g(x);
  }
  if (axes.size() == 1) {
    std::vector<Dual<Value>> x;
    x.reserve(n);
    for (int k = 0; k < n; ++k) x.emplace_back(inputs[k], Value(k == axes[0] ? 1.0 : 0.0));
    return g(x).d;
  }
  using D2 = Dual<Dual<Value>>;
  std::vector<D2> x;
  x.reserve(n);
  for (int k = 0; k < n; ++k) {
    Dual<Value> inner(inputs[k], Value(k == axes[0] ? 1.0 : 0.0));
    Dual<Value> outer_tangent(Value(k == axes[1] ? 1.0 : 0.0), Value(0.0));
    x.emplace_back(inner, outer_tangent);
  }
  return g(x).d.d;
}

/// d^order/de^order f(point + e * direction) at e = 0, order in {1, 2}.
template <class F>
double directional_derivative(F&& f, std::span<const double> point, std::span<const double> direction, int order) {
  if (order != 1 && order != 2) throw std::invalid_argument("directional_derivative: order must be 1 or 2");
  if (point.size() != direction.size()) throw std::invalid_argument("directional_derivative: size mismatch");
  if (order == 1) {
    std::vector<Dual<double>> x;
    for (std::size_t i = 0; i < point.size(); ++i) x.emplace_back(point[i], direction[i]);
    return f(x).d;
  }
  std::vector<Dual<Dual<double>>> x;
  for (std::size_t i = 0; i < point.size(); ++i)
    x.emplace_back(Dual<double>(point[i], direction[i]), Dual<double>(direction[i], 0.0));
  return f(x).d.d;
}

}  // namespace thermoforge::ad
