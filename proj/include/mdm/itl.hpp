#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mdm/cfg_exec.hpp"
#include "mdm/error.hpp"
#include "mdm/expr.hpp"
#include "mdm/parser.hpp"
#include "mdm/state.hpp"

namespace mdm {

/// ITL term: constant, temporal variable (read at the first state of the
/// interval), the interval length `l`, or a built-in function.
struct Term {
  enum class Kind { Const, Var, Length, Apply };

  Kind kind = Kind::Const;
  double value = 0.0;
  std::string name;
  Fn fn = Fn::Add;
  std::vector<Term> args;

  static Term constant(double v) {
    Term t;
    t.value = v;
    return t;
  }
  static Term var(std::string n) {
    Term t;
    t.kind = Kind::Var;
    t.name = std::move(n);
    return t;
  }
  static Term length() {
    Term t;
    t.kind = Kind::Length;
    return t;
  }
  static Term apply(Fn f, std::vector<Term> a) {
    Term t;
    t.kind = Kind::Apply;
    t.fn = f;
    t.args = std::move(a);
    return t;
  }

  bool uses_length() const {
    if (kind == Kind::Length) return true;
    for (const auto& a : args) {
      if (a.uses_length()) return true;
    }
    return false;
  }

  friend bool operator==(const Term&, const Term&) = default;
};

/// Core ITL formula. `\/`, `->`, `[]` and `<>` are sugar expanded by the
/// builders below, so only these six kinds ever occur.
///   Pred   terms = {lhs, rhs}
///   Not    subs  = {operand}
///   And, Chop  subs = {lhs, rhs}
struct Formula {
  enum class Kind { True, False, Pred, Not, And, Chop };

  Kind kind = Kind::True;
  CmpOp op = CmpOp::Eq;
  std::vector<Term> terms;
  std::vector<Formula> subs;

  friend bool operator==(const Formula&, const Formula&) = default;
};

namespace itl {

inline Formula tt() { return {}; }

inline Formula ff() {
  Formula f;
  f.kind = Formula::Kind::False;
  return f;
}

inline Formula pred(CmpOp op, Term lhs, Term rhs) {
  Formula f;
  f.kind = Formula::Kind::Pred;
  f.op = op;
  f.terms = {std::move(lhs), std::move(rhs)};
  return f;
}

inline Formula negate(Formula x) {
  Formula f;
  f.kind = Formula::Kind::Not;
  f.subs = {std::move(x)};
  return f;
}

inline Formula conj(Formula a, Formula b) {
  Formula f;
  f.kind = Formula::Kind::And;
  f.subs = {std::move(a), std::move(b)};
  return f;
}

inline Formula chop(Formula a, Formula b) {
  Formula f;
  f.kind = Formula::Kind::Chop;
  f.subs = {std::move(a), std::move(b)};
  return f;
}

inline Formula disj(Formula a, Formula b) { return negate(conj(negate(std::move(a)), negate(std::move(b)))); }

inline Formula implies(Formula a, Formula b) { return negate(conj(std::move(a), negate(std::move(b)))); }

/// Some sub-interval satisfies x: tt ; (x ; tt).
inline Formula diamond(Formula x) { return chop(tt(), chop(std::move(x), tt())); }

/// Every sub-interval satisfies x: ~<>~x.
inline Formula box(Formula x) { return negate(diamond(negate(std::move(x)))); }

}  // namespace itl

// ---------------------------------------------------------------------------
// Printing

namespace detail {

inline constexpr std::string_view kLengthName = "l";

inline SExpr term_to_sexpr(const Term& t) {
  switch (t.kind) {
    case Term::Kind::Const: return SExpr::constant(t.value);
    case Term::Kind::Var: return SExpr::var(t.name);
    case Term::Kind::Length: return SExpr::var(std::string(kLengthName));
    case Term::Kind::Apply: {
      std::vector<SExpr> args;
      for (const auto& a : t.args) args.push_back(term_to_sexpr(a));
      return SExpr::apply(t.fn, std::move(args));
    }
  }
  return {};
}

inline Term sexpr_to_term(const SExpr& e) {
  switch (e.kind) {
    case SExpr::Kind::Const: return Term::constant(e.value);
    case SExpr::Kind::Var: return e.name == kLengthName ? Term::length() : Term::var(e.name);
    case SExpr::Kind::Apply: {
      std::vector<Term> args;
      for (const auto& a : e.args) args.push_back(sexpr_to_term(a));
      return Term::apply(e.fn, std::move(args));
    }
  }
  return {};
}

inline bool is_tt(const Formula& f) { return f.kind == Formula::Kind::True; }

// Pattern views of the sugar, used so printed text reads as written.
inline const Formula* as_diamond(const Formula& f) {
  if (f.kind == Formula::Kind::Chop && is_tt(f.subs[0]) && f.subs[1].kind == Formula::Kind::Chop &&
      is_tt(f.subs[1].subs[1])) {
    return &f.subs[1].subs[0];
  }
  return nullptr;
}

inline const Formula* as_box(const Formula& f) {
  if (f.kind != Formula::Kind::Not) return nullptr;
  const Formula* inner = as_diamond(f.subs[0]);
  if (inner && inner->kind == Formula::Kind::Not) return &inner->subs[0];
  return nullptr;
}

class FormulaPrinter {
 public:
  // Binding strength, loosest first.
  enum Level { kImplies = 1, kChop, kOr, kAnd, kUnary, kAtom };

  std::string print(const Formula& f, int min_level) {
    const int lv = level(f);
    std::string s = body(f);
    return lv < min_level ? "(" + s + ")" : s;
  }

 private:
  static bool is_implies_shape(const Formula& f) {
    return f.kind == Formula::Kind::Not && f.subs[0].kind == Formula::Kind::And &&
           f.subs[0].subs[1].kind == Formula::Kind::Not;
  }
  // ~(~a /\ ~b) reads as a disjunction unless ~a is itself sugar.
  static bool is_or(const Formula& f) {
    if (!is_implies_shape(f) || f.subs[0].subs[0].kind != Formula::Kind::Not) return false;
    const Formula& left = f.subs[0].subs[0];
    return !as_box(left) && !is_implies_shape(left);
  }
  static bool is_implies(const Formula& f) { return is_implies_shape(f); }

  // Operand of a prefix operator; comparisons get parentheses for legibility.
  std::string operand(const Formula& f) {
    if (f.kind == Formula::Kind::Pred) return "(" + body(f) + ")";
    return print(f, kUnary);
  }

  int level(const Formula& f) const {
    switch (f.kind) {
      case Formula::Kind::True:
      case Formula::Kind::False:
      case Formula::Kind::Pred: return kAtom;
      case Formula::Kind::Not:
        if (as_box(f)) return kUnary;
        if (is_or(f)) return kOr;
        if (is_implies(f)) return kImplies;
        return kUnary;
      case Formula::Kind::And: return kAnd;
      case Formula::Kind::Chop: return as_diamond(f) ? kUnary : kChop;
    }
    return kAtom;
  }

  std::string body(const Formula& f) {
    switch (f.kind) {
      case Formula::Kind::True: return "tt";
      case Formula::Kind::False: return "ff";
      case Formula::Kind::Pred:
        return to_string(term_to_sexpr(f.terms[0])) + " " + std::string(cmp_symbol(f.op)) + " " +
               to_string(term_to_sexpr(f.terms[1]));
      case Formula::Kind::Not:
        if (const Formula* x = as_box(f)) return "[]" + operand(*x);
        if (is_or(f)) return print(f.subs[0].subs[0].subs[0], kOr) + " \\/ " + print(f.subs[0].subs[1].subs[0], kAnd);
        if (is_implies(f)) return print(f.subs[0].subs[0], kChop) + " -> " + print(f.subs[0].subs[1].subs[0], kImplies);
        return "~" + operand(f.subs[0]);
      case Formula::Kind::And: return print(f.subs[0], kAnd) + " /\\ " + print(f.subs[1], kUnary);
      case Formula::Kind::Chop:
        if (const Formula* x = as_diamond(f)) return "<>" + operand(*x);
        return print(f.subs[0], kOr) + " ; " + print(f.subs[1], kChop);
    }
    return "?";
  }
};

}  // namespace detail

/// Concrete syntax that parses back to the same formula.
inline std::string to_string(const Formula& f) { return detail::FormulaPrinter().print(f, 0); }

inline std::string to_string(const Term& t) { return to_string(detail::term_to_sexpr(t)); }

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline const std::set<std::string, std::less<>>& itl_keywords() {
  static const std::set<std::string, std::less<>> k = {"tt", "ff", "let", "prop"};
  return k;
}

/// Formula grammar, loosest first:
///   implies := chop ('->' implies)?
///   chop    := or (';' chop)?
///   or      := and ('\/' and)*
///   and     := unary ('/\' unary)*
///   unary   := '~' unary | '[]' unary | '<>' unary | atom
///   atom    := 'tt' | 'ff' | '(' implies ')' | term CMP term
class FormulaParser {
 public:
  FormulaParser(TokenCursor& cur, const std::map<std::string, std::string, std::less<>>& lets)
      : cur_(cur), lets_(lets) {}

  Formula formula() {
    Formula lhs = chop();
    if (cur_.accept_punct("->")) return itl::implies(std::move(lhs), formula());
    return lhs;
  }

 private:
  Formula chop() {
    Formula lhs = disjunction();
    if (cur_.accept_punct(";")) return itl::chop(std::move(lhs), chop());
    return lhs;
  }

  Formula disjunction() {
    Formula lhs = conjunction();
    while (cur_.accept_punct("\\/")) lhs = itl::disj(std::move(lhs), conjunction());
    return lhs;
  }

  Formula conjunction() {
    Formula lhs = unary();
    while (cur_.accept_punct("/\\")) lhs = itl::conj(std::move(lhs), unary());
    return lhs;
  }

  Formula unary() {
    if (cur_.accept_punct("~")) return itl::negate(unary());
    if (cur_.accept_punct("[]")) return itl::box(unary());
    if (cur_.accept_punct("<>")) return itl::diamond(unary());
    return atom();
  }

  Formula atom() {
    if (cur_.accept_keyword("tt")) return itl::tt();
    if (cur_.accept_keyword("ff")) return itl::ff();
    if (cur_.is_punct("(")) {
      const auto m = cur_.mark();
      try {
        cur_.next();
        Formula inner = formula();
        cur_.expect_punct(")");
        if (!cmp_from_token(cur_.peek()) && !is_arith_punct(cur_.peek())) return inner;
      } catch (const ParseError&) {
      }
      cur_.reset(m);
    }
    Term lhs = term();
    auto op = cmp_from_token(cur_.peek());
    if (!op) cur_.fail("expected comparison operator");
    cur_.next();
    Term rhs = term();
    return itl::pred(*op, std::move(lhs), std::move(rhs));
  }

  Term term() {
    Term t = sexpr_to_term(ArithParser(cur_, itl_keywords()).additive());
    bind(t);
    return t;
  }

  void bind(Term& t) const {
    if (t.kind == Term::Kind::Var) {
      if (auto it = lets_.find(t.name); it != lets_.end()) t.name = it->second;
    }
    for (auto& a : t.args) bind(a);
  }

  TokenCursor& cur_;
  const std::map<std::string, std::string, std::less<>>& lets_;
};

}  // namespace detail

/// Parses one formula; sugar is expanded into the core connectives.
inline Formula parse_formula(std::string_view text) {
  detail::TokenCursor cur(text, "");
  const std::map<std::string, std::string, std::less<>> none;
  Formula f = detail::FormulaParser(cur, none).formula();
  if (!cur.at_end()) cur.fail("unexpected token after formula");
  return f;
}

struct Property {
  std::string name;
  Formula formula;
  SourceSpan span;
};

/// Contents of a `.itl` file: `let a = v;` bindings, which rename variables in
/// every later property, and `prop P { formula }` blocks.
struct PropertyFile {
  std::map<std::string, std::string, std::less<>> lets;
  std::vector<Property> props;

  const Property* find(std::string_view name) const {
    for (const auto& p : props) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }
};

inline PropertyFile parse_property_file(std::string_view text, const std::string& file = "") {
  detail::TokenCursor cur(text, file);
  PropertyFile out;
  const auto& kw = detail::itl_keywords();
  while (!cur.at_end()) {
    const SourceSpan span = cur.peek().span;
    if (cur.accept_keyword("let")) {
      std::string name = cur.expect_ident(kw);
      if (name == detail::kLengthName) throw ParseError(span, "'l' denotes the interval length and cannot be bound");
      cur.expect_punct("=");
      std::string target = cur.expect_ident(kw);
      if (target == detail::kLengthName) throw ParseError(span, "'l' denotes the interval length and cannot be bound");
      if (auto it = out.lets.find(target); it != out.lets.end()) target = it->second;
      cur.expect_punct(";");
      out.lets[name] = target;
    } else if (cur.accept_keyword("prop")) {
      Property p;
      p.span = span;
      p.name = cur.expect_ident(kw);
      if (out.find(p.name)) throw ParseError(span, "duplicate property '" + p.name + "'");
      cur.expect_punct("{");
      p.formula = detail::FormulaParser(cur, out.lets).formula();
      cur.expect_punct("}");
      out.props.push_back(std::move(p));
    } else {
      cur.fail("expected 'let' or 'prop'");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Value of a term over a non-empty interval: variables read the first
/// state, `l` is last ts minus first ts.
inline double interp_term(const Term& t, std::span<const State> interval) {
  if (interval.empty()) throw EvalError("term evaluated over an empty interval");
  switch (t.kind) {
    case Term::Kind::Const: return t.value;
    case Term::Kind::Var: return interval.front().get(t.name);
    case Term::Kind::Length: return interval.back().ts() - interval.front().ts();
    case Term::Kind::Apply: {
      std::vector<double> args;
      for (const auto& a : t.args) args.push_back(interp_term(a, interval));
      return apply_function(t.fn, args);
    }
  }
  return 0.0;
}

/// Truth of a formula on every sub-interval [i, j] of one trace, one bit row
/// per start index.
class IntervalTable {
 public:
  IntervalTable() = default;
  explicit IntervalTable(std::size_t n) { resize(n); }

  void resize(std::size_t n) {
    n_ = n;
    words_ = (n + 63) / 64;
    bits_.assign(n_ * words_, 0);
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t words() const noexcept { return words_; }

  bool get(std::size_t i, std::size_t j) const { return (bits_[i * words_ + j / 64] >> (j % 64)) & 1U; }
  void set(std::size_t i, std::size_t j) { bits_[i * words_ + j / 64] |= std::uint64_t{1} << (j % 64); }

  std::uint64_t* row(std::size_t i) { return bits_.data() + i * words_; }
  const std::uint64_t* row(std::size_t i) const { return bits_.data() + i * words_; }

  /// Sets bits [from, n) of row i and clears the rest.
  void fill_from(std::size_t i, std::size_t from) {
    std::uint64_t* r = row(i);
    for (std::size_t w = 0; w < words_; ++w) r[w] = span_mask(w, from);
  }

  /// Sets bits [lo, hi) of row i, leaving the others.
  void fill_range(std::size_t i, std::size_t lo, std::size_t hi) {
    std::uint64_t* r = row(i);
    for (std::size_t w = lo / 64; w < words_ && w * 64 < hi; ++w) r[w] |= span_mask(w, lo) & ~span_mask(w, hi);
  }

  void clear_row(std::size_t i) {
    std::uint64_t* r = row(i);
    for (std::size_t w = 0; w < words_; ++w) r[w] = 0;
  }

  /// Bits of word w that lie in [from, n).
  std::uint64_t span_mask(std::size_t w, std::size_t from) const {
    const std::size_t lo = w * 64;
    if (from >= lo + 64 || lo >= n_) return 0;
    std::uint64_t m = ~std::uint64_t{0};
    if (from > lo) m <<= (from - lo);
    const std::size_t hi = std::min(n_, lo + 64) - lo;  // bits [0, hi) valid
    if (hi < 64) m &= (std::uint64_t{1} << hi) - 1;
    return m;
  }

 private:
  std::size_t n_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> bits_;
};

/// Checks one formula against traces of one schema.
///
/// Every sub-formula is evaluated bottom-up on all O(n²) sub-intervals at
/// once, rows packed as bit sets. Chops whose right side is `tt` or whose
/// left side ignores the interval end (`tt`, predicates without `l`, and
/// their boolean combinations) cost O(n) row operations; that covers `<>`
/// and `[]`. Not thread-safe: keep
/// one checker per thread.
class FormulaChecker {
 public:
  FormulaChecker(const Formula& f, std::shared_ptr<const Schema> schema) : schema_(std::move(schema)) {
    length_slot_ = schema_->size();
    root_ = add(f);
    tables_.resize(nodes_.size());
    frame_.resize(schema_->size() + 1);
  }

  /// Truth on the whole trace.
  bool check(std::span<const State> trace) {
    if (trace.empty()) throw EvalError("formula evaluated over an empty trace");
    run(trace, true);
    return tables_[root_].get(0, trace.size() - 1);
  }

  /// Truth on every sub-interval; entry (i, j) covers states i..j.
  const IntervalTable& evaluate(std::span<const State> trace) {
    run(trace, false);
    return tables_[root_];
  }

 private:
  struct Node {
    Formula::Kind kind = Formula::Kind::True;
    std::size_t lhs = 0;
    std::size_t rhs = 0;
    Rpn pred;
    bool uses_length = false;
    bool uniform = false;  // truth on (i, j) does not depend on j
  };

  std::size_t add(const Formula& f) {
    Node n;
    n.kind = f.kind;
    if (f.kind == Formula::Kind::Pred) {
      const auto slot_of = [&](std::string_view name) -> std::size_t {
        if (name == kLengthVar) return length_slot_;
        return schema_->slot(name);
      };
      BoolExpr cmp = BoolExpr::cmp(f.op, lower(f.terms[0]), lower(f.terms[1]));
      n.pred = Rpn::compile_with(cmp, slot_of);
      n.uses_length = f.terms[0].uses_length() || f.terms[1].uses_length();
      has_length_ = has_length_ || n.uses_length;
    } else if (!f.subs.empty()) {
      n.lhs = add(f.subs[0]);
      if (f.subs.size() > 1) n.rhs = add(f.subs[1]);
    }
    switch (f.kind) {
      case Formula::Kind::True:
      case Formula::Kind::False: n.uniform = true; break;
      case Formula::Kind::Pred: n.uniform = !n.uses_length; break;
      case Formula::Kind::Not: n.uniform = nodes_[n.lhs].uniform; break;
      case Formula::Kind::And: n.uniform = nodes_[n.lhs].uniform && nodes_[n.rhs].uniform; break;
      case Formula::Kind::Chop: n.uniform = false; break;
    }
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  // Terms become state expressions where `l` reads a slot past the schema.
  static constexpr std::string_view kLengthVar = "#length";

  static SExpr lower(const Term& t) {
    switch (t.kind) {
      case Term::Kind::Const: return SExpr::constant(t.value);
      case Term::Kind::Var: return SExpr::var(t.name);
      case Term::Kind::Length: return SExpr::var(std::string(kLengthVar));
      case Term::Kind::Apply: {
        std::vector<SExpr> args;
        for (const auto& a : t.args) args.push_back(lower(a));
        return SExpr::apply(t.fn, std::move(args));
      }
    }
    return {};
  }

  void run(std::span<const State> trace, bool whole_only) {
    for (const auto& s : trace) {
      if (s.values().size() != schema_->size()) throw EvalError("trace does not match the checker's schema");
    }
    if (has_length_) {
      const std::size_t n = trace.size();
      need_.resize(nodes_.size());
      need_[root_].resize(n);
      if (whole_only) {
        if (n) need_[root_].set(0, n - 1);
      } else {
        for (std::size_t i = 0; i < n; ++i) need_[root_].fill_from(i, i);
      }
      for (std::size_t id = nodes_.size(); id-- > 0;) propagate_need(id, n);
    }
    for (std::size_t id = 0; id < nodes_.size(); ++id) compute(id, trace);
  }

  // Entries of each child that the entries needed of `id` depend on. Only
  // predicates over `l` use this, to skip intervals nobody reads; every other
  // table is filled completely.
  void propagate_need(std::size_t id, std::size_t n) {
    const Node& node = nodes_[id];
    const IntervalTable& need = need_[id];
    switch (node.kind) {
      case Formula::Kind::True:
      case Formula::Kind::False:
      case Formula::Kind::Pred: return;
      case Formula::Kind::Not: need_[node.lhs] = need; return;
      case Formula::Kind::And:
        need_[node.lhs] = need;
        need_[node.rhs] = need;
        return;
      case Formula::Kind::Chop: break;
    }
    IntervalTable& a = need_[node.lhs];
    IntervalTable& b = need_[node.rhs];
    a.resize(n);
    b.resize(n);
    const std::size_t W = need.words();
    // (i, j) reads lhs on (i, k) for k < j and rhs on (k+1, j).
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t* r = need.row(i);
      for (std::size_t w = W; w-- > 0;) {
        if (!r[w]) continue;
        const std::size_t last = w * 64 + 63 - static_cast<std::size_t>(std::countl_zero(r[w]));
        a.fill_range(i, i, last);
        break;
      }
    }
    std::vector<std::uint64_t> acc(W, 0);
    for (std::size_t k = 0; k < n; ++k) {
      std::uint64_t* r = b.row(k);
      for (std::size_t w = 0; w < W; ++w) r[w] = acc[w] & b.span_mask(w, k);
      for (std::size_t w = 0; w < W; ++w) acc[w] |= need.row(k)[w];
    }
  }

  void compute(std::size_t id, std::span<const State> trace) {
    const std::size_t n = trace.size();
    const Node& node = nodes_[id];
    IntervalTable& out = tables_[id];
    out.resize(n);
    const std::size_t W = out.words();
    switch (node.kind) {
      case Formula::Kind::True:
        for (std::size_t i = 0; i < n; ++i) out.fill_from(i, i);
        break;
      case Formula::Kind::False: break;
      case Formula::Kind::Pred:
        for (std::size_t i = 0; i < n; ++i) {
          const auto first = trace[i].values();
          std::copy(first.begin(), first.end(), frame_.begin());
          if (!node.uses_length) {
            frame_[length_slot_] = 0.0;
            if (node.pred.test(frame_)) out.fill_from(i, i);
            continue;
          }
          const std::uint64_t* wanted = need_[id].row(i);
          for (std::size_t w = i / 64; w < W; ++w) {
            for (std::uint64_t bits = wanted[w]; bits; bits &= bits - 1) {
              const std::size_t j = w * 64 + static_cast<std::size_t>(std::countr_zero(bits));
              frame_[length_slot_] = trace[j].ts() - trace[i].ts();
              if (node.pred.test(frame_)) out.set(i, j);
            }
          }
        }
        break;
      case Formula::Kind::Not: {
        const IntervalTable& a = tables_[node.lhs];
        for (std::size_t i = 0; i < n; ++i) {
          std::uint64_t* r = out.row(i);
          const std::uint64_t* x = a.row(i);
          for (std::size_t w = 0; w < W; ++w) r[w] = ~x[w] & out.span_mask(w, i);
        }
        break;
      }
      case Formula::Kind::And: {
        const IntervalTable& a = tables_[node.lhs];
        const IntervalTable& b = tables_[node.rhs];
        for (std::size_t i = 0; i < n; ++i) {
          std::uint64_t* r = out.row(i);
          for (std::size_t w = 0; w < W; ++w) r[w] = a.row(i)[w] & b.row(i)[w];
        }
        break;
      }
      case Formula::Kind::Chop: chop(node, out, n); break;
    }
  }

  // (i, j) holds iff some k in [i, j) has lhs on (i, k) and rhs on (k+1, j).
  void chop(const Node& node, IntervalTable& out, std::size_t n) {
    const IntervalTable& a = tables_[node.lhs];
    const IntervalTable& b = tables_[node.rhs];
    const std::size_t W = out.words();
    if (nodes_[node.lhs].uniform) {
      // lhs holds on all of row i or on none of it, so row i is the union
      // of rhs rows i+1 .. n-1 when it holds.
      std::vector<std::uint64_t> acc(W, 0);
      for (std::size_t i = n; i-- > 0;) {
        std::uint64_t* r = out.row(i);
        if (a.get(i, i)) {
          for (std::size_t w = 0; w < W; ++w) r[w] = acc[w];
        }
        for (std::size_t w = 0; w < W; ++w) acc[w] |= b.row(i)[w];
      }
      return;
    }
    if (nodes_[node.rhs].kind == Formula::Kind::True) {
      // Row i is every j past the first k where lhs holds on (i, k).
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t* x = a.row(i);
        for (std::size_t w = 0; w < W; ++w) {
          if (!x[w]) continue;
          const std::size_t k = w * 64 + static_cast<std::size_t>(std::countr_zero(x[w]));
          if (k + 1 < n) out.fill_from(i, k + 1);
          break;
        }
      }
      return;
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t* r = out.row(i);
      const std::uint64_t* x = a.row(i);
      for (std::size_t w = 0; w < W; ++w) {
        std::uint64_t bits = x[w];
        while (bits) {
          const std::size_t k = w * 64 + static_cast<std::size_t>(std::countr_zero(bits));
          bits &= bits - 1;
          if (k + 1 >= n) break;
          const std::uint64_t* y = b.row(k + 1);
          for (std::size_t v = 0; v < W; ++v) r[v] |= y[v];
        }
      }
    }
  }

  std::shared_ptr<const Schema> schema_;
  std::vector<Node> nodes_;
  std::vector<IntervalTable> tables_;
  std::vector<IntervalTable> need_;
  bool has_length_ = false;
  std::vector<double> frame_;
  std::size_t length_slot_ = 0;
  std::size_t root_ = 0;
};

/// Truth of φ on a whole finite interval. Chop splits without sharing a
/// state: φ ; ψ holds when some prefix σ_0..σ_k satisfies φ and the rest
/// σ_{k+1}.. satisfies ψ, both parts non-empty.
inline bool interp_formula(const Formula& f, std::span<const State> interval) {
  if (interval.empty()) throw EvalError("formula evaluated over an empty interval");
  FormulaChecker checker(f, interval.front().schema_ptr());
  return checker.check(interval);
}

}  // namespace mdm
