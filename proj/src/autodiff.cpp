#include "thermoforge/autodiff.hpp"

#include <cmath>

namespace thermoforge::ad {

namespace {

thread_local Tape* g_active = nullptr;

Tape& require_tape(const char* what) {
  if (g_active == nullptr) throw AutodiffError(std::string("no active tape while recording '") + what + "'");
  return *g_active;
}

[[noreturn]] void fail(Primitive op, std::size_t index, const std::string& detail) {
  throw AutodiffError(std::string("primitive '") + primitive_name(op) + "' at node " + std::to_string(index) + ": " +
                      detail);
}

// Records a unary node unless the operand is a constant.
Value unary(Primitive op, const Value& a, double result, double partial) {
  if (!std::isfinite(result)) {
    const std::size_t at = g_active ? g_active->size() : 0;
    fail(op, at, "non-finite result " + std::to_string(result) + " from argument " + std::to_string(a.value()));
  }
  if (a.is_constant()) return Value(result);
  const auto idx = require_tape(primitive_name(op)).push(op, result, a.index(), partial);
  return Value::from_node(result, idx);
}

}  // namespace

const char* primitive_name(Primitive op) noexcept {
  switch (op) {
    case Primitive::variable: return "variable";
    case Primitive::add: return "add";
    case Primitive::mul: return "mul";
    case Primitive::neg: return "neg";
    case Primitive::recip: return "recip";
    case Primitive::sin: return "sin";
    case Primitive::cos: return "cos";
    case Primitive::tanh: return "tanh";
    case Primitive::exp: return "exp";
    case Primitive::ln: return "ln";
    case Primitive::pow: return "pow";
  }
  return "?";
}

std::int32_t Tape::push_variable() {
  nodes_.push_back(Node{Primitive::variable, {-1, -1}, {0.0, 0.0}});
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

std::int32_t Tape::push(Primitive op, double result, std::int32_t a, double da, std::int32_t b, double db) {
  if (!std::isfinite(result)) fail(op, nodes_.size(), "non-finite result");
  nodes_.push_back(Node{op, {a, b}, {da, db}});
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

std::vector<double> Tape::adjoints(std::int32_t output) const {
  std::vector<double> adj;
  adjoints_into(output, adj);
  return adj;
}

void Tape::adjoints_into(std::int32_t output, std::vector<double>& adj) const {
  adj.assign(nodes_.size(), 0.0);
  if (output < 0) return;
  adj[static_cast<std::size_t>(output)] = 1.0;
  for (std::int32_t i = output; i >= 0; --i) {
    const double g = adj[static_cast<std::size_t>(i)];
    if (g == 0.0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.parent[0] >= 0) adj[static_cast<std::size_t>(n.parent[0])] += g * n.partial[0];
    if (n.parent[1] >= 0) adj[static_cast<std::size_t>(n.parent[1])] += g * n.partial[1];
  }
}

ActiveTape::ActiveTape(Tape& tape) noexcept : previous_(g_active) { g_active = &tape; }
ActiveTape::~ActiveTape() { g_active = previous_; }
Tape* ActiveTape::current() noexcept { return g_active; }

Value Value::variable(double x) {
  if (!std::isfinite(x)) throw AutodiffError("variable: non-finite initial value " + std::to_string(x));
  return from_node(x, require_tape("variable").push_variable());
}

Value& Value::operator+=(const Value& o) { return *this = *this + o; }
Value& Value::operator-=(const Value& o) { return *this = *this - o; }
Value& Value::operator*=(const Value& o) { return *this = *this * o; }
Value& Value::operator/=(const Value& o) { return *this = *this / o; }

Value operator+(const Value& a, const Value& b) {
  const double r = a.value() + b.value();
  if (a.is_constant() && b.is_constant()) return unary(Primitive::add, a, r, 0.0);
  if (a.is_constant() && a.value() == 0.0) return b;
  if (b.is_constant() && b.value() == 0.0) return a;
  Tape& t = require_tape("add");
  const auto idx = t.push(Primitive::add, r, a.index(), 1.0, b.index(), 1.0);
  return Value::from_node(r, idx);
}

Value operator-(const Value& a) { return unary(Primitive::neg, a, -a.value(), -1.0); }

Value operator-(const Value& a, const Value& b) {
  if (b.is_constant()) return a + Value(-b.value());
  return a + (-b);
}

Value operator*(const Value& a, const Value& b) {
  const double r = a.value() * b.value();
  if (a.is_constant() && b.is_constant()) return unary(Primitive::mul, a, r, 0.0);
  // Exact zero annihilates regardless of the other factor's derivative.
  if ((a.is_constant() && a.value() == 0.0) || (b.is_constant() && b.value() == 0.0)) return Value(0.0);
  if (a.is_constant() && a.value() == 1.0) return b;
  if (b.is_constant() && b.value() == 1.0) return a;
  Tape& t = require_tape("mul");
  if (!std::isfinite(r)) fail(Primitive::mul, t.size(), "non-finite product");
  const auto idx = t.push(Primitive::mul, r, a.index(), b.value(), b.index(), a.value());
  return Value::from_node(r, idx);
}

Value recip(const Value& a) {
  if (a.value() == 0.0) fail(Primitive::recip, g_active ? g_active->size() : 0, "division by zero");
  const double r = 1.0 / a.value();
  return unary(Primitive::recip, a, r, -r * r);
}

Value operator/(const Value& a, const Value& b) { return a * recip(b); }

Value sin(const Value& a) { return unary(Primitive::sin, a, std::sin(a.value()), std::cos(a.value())); }
Value cos(const Value& a) { return unary(Primitive::cos, a, std::cos(a.value()), -std::sin(a.value())); }

Value tanh(const Value& a) {
  const double t = std::tanh(a.value());
  return unary(Primitive::tanh, a, t, 1.0 - t * t);
}

Value exp(const Value& a) {
  const double e = std::exp(a.value());
  return unary(Primitive::exp, a, e, e);
}

Value log(const Value& a) {
  if (!(a.value() > 0.0))
    fail(Primitive::ln, g_active ? g_active->size() : 0, "non-positive argument " + std::to_string(a.value()));
  return unary(Primitive::ln, a, std::log(a.value()), 1.0 / a.value());
}

Value pow(const Value& a, double exponent) {
  if (exponent == 0.0) return Value(1.0);
  if (exponent == 1.0) return a;
  const double r = std::pow(a.value(), exponent);
  return unary(Primitive::pow, a, r, exponent * std::pow(a.value(), exponent - 1.0));
}

std::vector<double> gradient_of(const Value& out, std::span<const Value> vars) {
  std::vector<double> grad(vars.size(), 0.0);
  if (out.is_constant()) return grad;
  Tape& t = require_tape("gradient");
  const auto adj = t.adjoints(out.index());
  for (std::size_t i = 0; i < vars.size(); ++i)
    if (!vars[i].is_constant()) grad[i] = adj[static_cast<std::size_t>(vars[i].index())];
  return grad;
}

}  // namespace thermoforge::ad
