#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <concepts>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mdm/error.hpp"

namespace mdm {

/// Built-in real functions available in state expressions and ITL terms.
enum class Fn { Add, Sub, Mul, Div, Abs, Sqrt, Pow, Sin, Cos, Min, Max };

/// Built-in binary predicates.
enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };

struct FnInfo {
  Fn fn;
  std::string_view name;
  std::size_t min_arity;
  std::size_t max_arity;
  bool infix;
  int precedence;  // infix only
};

inline constexpr std::array<FnInfo, 11> kFunctions{{
    {Fn::Add, "+", 2, 2, true, 1},
    {Fn::Sub, "-", 1, 2, true, 1},
    {Fn::Mul, "*", 2, 2, true, 2},
    {Fn::Div, "/", 2, 2, true, 2},
    {Fn::Abs, "abs", 1, 1, false, 0},
    {Fn::Sqrt, "sqrt", 1, 1, false, 0},
    {Fn::Pow, "pow", 2, 2, false, 0},
    {Fn::Sin, "sin", 1, 1, false, 0},
    {Fn::Cos, "cos", 1, 1, false, 0},
    {Fn::Min, "min", 2, 2, false, 0},
    {Fn::Max, "max", 2, 2, false, 0},
}};

inline const FnInfo& function_info(Fn fn) { return kFunctions[static_cast<std::size_t>(fn)]; }

/// Looks up a call-syntax function (`abs`, `sqrt`, ...). Infix operators are not returned.
inline std::optional<Fn> function_by_name(std::string_view name) {
  for (const auto& info : kFunctions) {
    if (!info.infix && info.name == name) return info.fn;
  }
  return std::nullopt;
}

inline bool arity_ok(Fn fn, std::size_t n) {
  const auto& info = function_info(fn);
  return n >= info.min_arity && n <= info.max_arity;
}

inline std::string_view cmp_symbol(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "!=";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
  }
  return "?";
}

inline bool compare(CmpOp op, double a, double b) {
  switch (op) {
    case CmpOp::Eq: return a == b;
    case CmpOp::Ne: return a != b;
    case CmpOp::Lt: return a < b;
    case CmpOp::Le: return a <= b;
    case CmpOp::Gt: return a > b;
    case CmpOp::Ge: return a >= b;
  }
  return false;
}

/// Applies a built-in. Any non-finite result is a domain error, as is x/0.
inline double apply_function(Fn fn, std::span<const double> args) {
  if (!arity_ok(fn, args.size())) {
    throw EvalError("arity mismatch: '" + std::string(function_info(fn).name) + "' applied to " +
                    std::to_string(args.size()) + " argument(s)");
  }
  double r = 0.0;
  switch (fn) {
    case Fn::Add: r = args[0] + args[1]; break;
    case Fn::Sub: r = args.size() == 1 ? -args[0] : args[0] - args[1]; break;
    case Fn::Mul: r = args[0] * args[1]; break;
    case Fn::Div:
      if (args[1] == 0.0) throw EvalError("domain error: division by zero");
      r = args[0] / args[1];
      break;
    case Fn::Abs: r = std::fabs(args[0]); break;
    case Fn::Sqrt:
      if (args[0] < 0.0) throw EvalError("domain error: sqrt of negative value");
      r = std::sqrt(args[0]);
      break;
    case Fn::Pow: r = std::pow(args[0], args[1]); break;
    case Fn::Sin: r = std::sin(args[0]); break;
    case Fn::Cos: r = std::cos(args[0]); break;
    case Fn::Min: r = std::fmin(args[0], args[1]); break;
    case Fn::Max: r = std::fmax(args[0], args[1]); break;
  }
  if (!std::isfinite(r)) {
    throw EvalError("domain error: '" + std::string(function_info(fn).name) + "' produced a non-finite value");
  }
  return r;
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

/// State expression: constant, variable, or built-in applied to arguments.
struct SExpr {
  enum class Kind { Const, Var, Apply };

  Kind kind = Kind::Const;
  double value = 0.0;
  std::string name;
  Fn fn = Fn::Add;
  std::vector<SExpr> args;

  static SExpr constant(double v) {
    SExpr e;
    e.value = v;
    return e;
  }
  static SExpr var(std::string n) {
    SExpr e;
    e.kind = Kind::Var;
    e.name = std::move(n);
    return e;
  }
  static SExpr apply(Fn f, std::vector<SExpr> a) {
    SExpr e;
    e.kind = Kind::Apply;
    e.fn = f;
    e.args = std::move(a);
    return e;
  }

  friend bool operator==(const SExpr&, const SExpr&) = default;
};

/// Boolean expression over states; `After`/`Duration` nodes make it a guard.
///
/// Layout by kind:
///   Compare          terms = {lhs, rhs}
///   Not              subs  = {operand}
///   And, Or          subs  = {lhs, rhs}
///   After, Duration  subs  = {condition}, terms = {length}
struct BoolExpr {
  enum class Kind { True, False, Compare, Not, And, Or, After, Duration };

  Kind kind = Kind::True;
  CmpOp op = CmpOp::Eq;
  std::vector<SExpr> terms;
  std::vector<BoolExpr> subs;

  static BoolExpr truth(bool v) {
    BoolExpr b;
    b.kind = v ? Kind::True : Kind::False;
    return b;
  }
  static BoolExpr cmp(CmpOp op, SExpr lhs, SExpr rhs) {
    BoolExpr b;
    b.kind = Kind::Compare;
    b.op = op;
    b.terms = {std::move(lhs), std::move(rhs)};
    return b;
  }
  static BoolExpr negate(BoolExpr x) {
    BoolExpr b;
    b.kind = Kind::Not;
    b.subs = {std::move(x)};
    return b;
  }
  static BoolExpr conj(BoolExpr l, BoolExpr r) { return binary(Kind::And, std::move(l), std::move(r)); }
  static BoolExpr disj(BoolExpr l, BoolExpr r) { return binary(Kind::Or, std::move(l), std::move(r)); }
  static BoolExpr after(BoolExpr cond, SExpr length) { return interval(Kind::After, std::move(cond), std::move(length)); }
  static BoolExpr duration(BoolExpr cond, SExpr length) {
    return interval(Kind::Duration, std::move(cond), std::move(length));
  }

  bool is_interval() const { return kind == Kind::After || kind == Kind::Duration; }

  /// True when no `after`/`duration` occurs anywhere inside.
  bool is_pure() const {
    if (is_interval()) return false;
    for (const auto& s : subs) {
      if (!s.is_pure()) return false;
    }
    return true;
  }

  friend bool operator==(const BoolExpr&, const BoolExpr&) = default;

 private:
  static BoolExpr binary(Kind k, BoolExpr l, BoolExpr r) {
    BoolExpr b;
    b.kind = k;
    b.subs = {std::move(l), std::move(r)};
    return b;
  }
  static BoolExpr interval(Kind k, BoolExpr cond, SExpr length) {
    BoolExpr b;
    b.kind = k;
    b.subs = {std::move(cond)};
    b.terms = {std::move(length)};
    return b;
  }
};

using Guard = BoolExpr;

template <class L>
concept VariableLookup = requires(const L& lookup, std::string_view name) {
  { lookup(name) } -> std::convertible_to<double>;
};

/// Strict left-to-right evaluation; `lookup` resolves variable names.
template <VariableLookup Lookup>
double evaluate(const SExpr& e, const Lookup& lookup) {
  switch (e.kind) {
    case SExpr::Kind::Const: return e.value;
    case SExpr::Kind::Var: return lookup(e.name);
    case SExpr::Kind::Apply: {
      std::array<double, 2> small{};
      std::vector<double> big;
      std::span<double> vals;
      if (e.args.size() <= small.size()) {
        vals = std::span<double>(small.data(), e.args.size());
      } else {
        big.resize(e.args.size());
        vals = big;
      }
      for (std::size_t i = 0; i < e.args.size(); ++i) vals[i] = evaluate(e.args[i], lookup);
      return apply_function(e.fn, vals);
    }
  }
  return 0.0;
}

/// Evaluates a pure boolean expression. Both operands of `&&`/`||` are
/// always evaluated, so an error on either side propagates.
template <VariableLookup Lookup>
bool evaluate(const BoolExpr& b, const Lookup& lookup) {
  switch (b.kind) {
    case BoolExpr::Kind::True: return true;
    case BoolExpr::Kind::False: return false;
    case BoolExpr::Kind::Compare: {
      const double l = evaluate(b.terms[0], lookup);
      const double r = evaluate(b.terms[1], lookup);
      return compare(b.op, l, r);
    }
    case BoolExpr::Kind::Not: return !evaluate(b.subs[0], lookup);
    case BoolExpr::Kind::And: {
      const bool l = evaluate(b.subs[0], lookup);
      const bool r = evaluate(b.subs[1], lookup);
      return l && r;
    }
    case BoolExpr::Kind::Or: {
      const bool l = evaluate(b.subs[0], lookup);
      const bool r = evaluate(b.subs[1], lookup);
      return l || r;
    }
    case BoolExpr::Kind::After:
    case BoolExpr::Kind::Duration:
      throw EvalError("interval expression cannot be evaluated on a single state");
  }
  return false;
}

/// Calls `fn(name)` for every variable occurrence, left to right.
template <class F>
void for_each_var(const SExpr& e, F&& fn) {
  if (e.kind == SExpr::Kind::Var) fn(e.name);
  for (const auto& a : e.args) for_each_var(a, fn);
}

template <class F>
void for_each_var(const BoolExpr& b, F&& fn) {
  for (const auto& t : b.terms) for_each_var(t, fn);
  for (const auto& s : b.subs) for_each_var(s, fn);
}

// ---------------------------------------------------------------------------
// Printing. The output is accepted by the parser and reproduces the same tree.

namespace detail {

inline int sexpr_precedence(const SExpr& e) {
  if (e.kind != SExpr::Kind::Apply) return 4;
  const auto& info = function_info(e.fn);
  if (!info.infix) return 4;
  if (e.args.size() == 1) return 3;  // unary minus
  return info.precedence;
}

}  // namespace detail

inline std::string to_string(const SExpr& e) {
  switch (e.kind) {
    case SExpr::Kind::Const: return format_number(e.value);
    case SExpr::Kind::Var: return e.name;
    case SExpr::Kind::Apply: break;
  }
  const auto& info = function_info(e.fn);
  if (!info.infix) {
    std::string out(info.name);
    out += '(';
    for (std::size_t i = 0; i < e.args.size(); ++i) {
      if (i) out += ", ";
      out += to_string(e.args[i]);
    }
    return out + ')';
  }
  if (e.args.size() == 1) {
    const auto& a = e.args[0];
    const bool bare = a.kind == SExpr::Kind::Var ||
                      (a.kind == SExpr::Kind::Apply && !function_info(a.fn).infix);
    return bare ? "-" + to_string(a) : "-(" + to_string(a) + ")";
  }
  const int prec = info.precedence;
  std::string l = to_string(e.args[0]);
  std::string r = to_string(e.args[1]);
  if (detail::sexpr_precedence(e.args[0]) < prec) l = "(" + l + ")";
  if (detail::sexpr_precedence(e.args[1]) <= prec) r = "(" + r + ")";
  return l + " " + std::string(info.name) + " " + r;
}

namespace detail {

inline int bool_precedence(const BoolExpr& b) {
  switch (b.kind) {
    case BoolExpr::Kind::Or: return 1;
    case BoolExpr::Kind::And: return 2;
    case BoolExpr::Kind::Not: return 3;
    case BoolExpr::Kind::Compare: return 3;
    default: return 4;
  }
}

}  // namespace detail

inline std::string to_string(const BoolExpr& b) {
  using K = BoolExpr::Kind;
  switch (b.kind) {
    case K::True: return "true";
    case K::False: return "false";
    case K::Compare:
      return to_string(b.terms[0]) + " " + std::string(cmp_symbol(b.op)) + " " + to_string(b.terms[1]);
    case K::Not: {
      const auto& x = b.subs[0];
      const std::string inner = to_string(x);
      return detail::bool_precedence(x) >= 4 || x.kind == K::Not ? "!" + inner : "!(" + inner + ")";
    }
    case K::And:
    case K::Or: {
      const int prec = detail::bool_precedence(b);
      std::string l = to_string(b.subs[0]);
      std::string r = to_string(b.subs[1]);
      if (detail::bool_precedence(b.subs[0]) < prec) l = "(" + l + ")";
      if (detail::bool_precedence(b.subs[1]) <= prec) r = "(" + r + ")";
      return l + (b.kind == K::And ? " && " : " || ") + r;
    }
    case K::After:
    case K::Duration:
      return std::string(b.kind == K::After ? "after(" : "duration(") + to_string(b.subs[0]) + ", " +
             to_string(b.terms[0]) + ")";
  }
  return "?";
}

}  // namespace mdm
