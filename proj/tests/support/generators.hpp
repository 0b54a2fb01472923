#pragma once

// Random ASTs for property tests. Every generated loop is bounded by a
// dedicated counter that the loop body never writes, so programs terminate
// after at most `max_iterations` iterations per loop entry.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mdm/itl.hpp"
#include "mdm/model.hpp"
#include "mdm/state.hpp"

namespace gen {

class Random {
 public:
  explicit Random(std::uint64_t seed) : rng_(seed) {}

  int between(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool chance(double p) { return std::bernoulli_distribution(p)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  std::uint64_t bits() { return rng_(); }

  template <class T>
  const T& pick(const std::vector<T>& xs) {
    return xs[static_cast<std::size_t>(between(0, static_cast<int>(xs.size()) - 1))];
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Constants whose shortest decimal form re-parses exactly and stays short.
inline double nice_constant(Random& r) {
  static const std::vector<double> cs = {0, 1, 2, 3, 5, 10, 0.5, 0.25, 1.5, 0.1, 100, 1e-3};
  return r.pick(cs);
}

/// Arithmetic over `vars`. Division and sqrt get guarded operands, so the
/// only way to trap is overflow.
inline mdm::SExpr sexpr(Random& r, const std::vector<std::string>& vars, int depth) {
  using mdm::Fn;
  using mdm::SExpr;
  if (depth <= 0 || r.chance(0.3)) {
    if (!vars.empty() && r.chance(0.6)) return SExpr::var(r.pick(vars));
    return SExpr::constant(nice_constant(r));
  }
  auto sub = [&] { return sexpr(r, vars, depth - 1); };
  switch (r.between(0, 9)) {
    case 0: return SExpr::apply(Fn::Add, {sub(), sub()});
    case 1: return SExpr::apply(Fn::Sub, {sub(), sub()});
    case 2: return SExpr::apply(Fn::Sub, {sub()});
    case 3: return SExpr::apply(Fn::Mul, {sub(), SExpr::constant(nice_constant(r))});
    case 4: {
      auto den = SExpr::apply(Fn::Add, {SExpr::apply(Fn::Abs, {sub()}), SExpr::constant(1)});
      return SExpr::apply(Fn::Div, {sub(), std::move(den)});
    }
    case 5: return SExpr::apply(Fn::Sqrt, {SExpr::apply(Fn::Abs, {sub()})});
    case 6: return SExpr::apply(Fn::Min, {sub(), sub()});
    case 7: return SExpr::apply(Fn::Max, {sub(), sub()});
    case 8: return SExpr::apply(r.chance(0.5) ? Fn::Sin : Fn::Cos, {sub()});
    default: return SExpr::apply(Fn::Add, {sub(), SExpr::constant(nice_constant(r))});
  }
}

inline mdm::CmpOp cmp_op(Random& r) { return static_cast<mdm::CmpOp>(r.between(0, 5)); }

inline mdm::BoolExpr bexpr(Random& r, const std::vector<std::string>& vars, int depth) {
  using mdm::BoolExpr;
  if (depth <= 0 || r.chance(0.4)) {
    if (r.chance(0.08)) return BoolExpr::truth(r.chance(0.5));
    return BoolExpr::cmp(cmp_op(r), sexpr(r, vars, 1), sexpr(r, vars, 1));
  }
  switch (r.between(0, 2)) {
    case 0: return BoolExpr::negate(bexpr(r, vars, depth - 1));
    case 1: return BoolExpr::conj(bexpr(r, vars, depth - 1), bexpr(r, vars, depth - 1));
    default: return BoolExpr::disj(bexpr(r, vars, depth - 1), bexpr(r, vars, depth - 1));
  }
}

/// Guard with `after` / `duration` leaves over pure conditions.
inline mdm::Guard guard(Random& r, const std::vector<std::string>& vars, int depth) {
  using mdm::BoolExpr;
  if (depth <= 0 || r.chance(0.4)) {
    if (r.chance(0.5)) {
      static const std::vector<double> lengths = {0, 1, 2, 3, 5, 10, 20};
      auto len = mdm::SExpr::constant(r.pick(lengths));
      auto cond = bexpr(r, vars, 1);
      return r.chance(0.5) ? BoolExpr::after(std::move(cond), std::move(len))
                           : BoolExpr::duration(std::move(cond), std::move(len));
    }
    return bexpr(r, vars, 1);
  }
  switch (r.between(0, 2)) {
    case 0: return BoolExpr::negate(guard(r, vars, depth - 1));
    case 1: return BoolExpr::conj(guard(r, vars, depth - 1), guard(r, vars, depth - 1));
    default: return BoolExpr::disj(guard(r, vars, depth - 1), guard(r, vars, depth - 1));
  }
}

/// Knobs for statement generation.
struct StmtShape {
  std::vector<std::string> writable;  // targets of plain assignments
  std::vector<std::string> readable;  // superset of writable
  std::vector<std::string> counters;  // one per loop nesting level
  std::vector<std::string> modules;   // callable module names
  int max_iterations = 20;
  bool loops = true;
  bool clamp = false;  // wrap assigned values in max(-1e6, min(1e6, e))
};

namespace detail {

inline mdm::Stmt stmt(Random& r, const StmtShape& s, int depth, int loop_level);

// stmt (; stmt)*, right-nested as the parser builds it.
inline mdm::Stmt block(Random& r, const StmtShape& s, int depth, int loop_level) {
  const int n = r.between(1, 3);
  std::vector<mdm::Stmt> xs;
  for (int i = 0; i < n; ++i) xs.push_back(stmt(r, s, depth, loop_level));
  mdm::Stmt out = std::move(xs.back());
  for (int i = n - 2; i >= 0; --i) out = mdm::Stmt::seq(std::move(xs[static_cast<std::size_t>(i)]), std::move(out));
  return out;
}

inline mdm::Stmt stmt(Random& r, const StmtShape& s, int depth, int loop_level) {
  using mdm::Stmt;
  const bool can_nest = depth > 1;
  const bool can_loop = s.loops && can_nest && loop_level < static_cast<int>(s.counters.size());
  int choice = r.between(0, 9);
  if (!can_nest && choice >= 6) choice = r.between(0, 5);
  if (choice == 9 && !can_loop) choice = 7;
  if (choice == 5 && s.modules.empty()) choice = 0;
  if (s.writable.empty() && choice <= 3) choice = 4;

  switch (choice) {
    case 0:
    case 1:
    case 2:
    case 3: {
      auto e = sexpr(r, s.readable, 3);
      if (s.clamp) {
        using mdm::SExpr;
        e = SExpr::apply(mdm::Fn::Max, {SExpr::constant(-1e6), SExpr::apply(mdm::Fn::Min, {SExpr::constant(1e6), e})});
      }
      return Stmt::assign(r.pick(s.writable), std::move(e));
    }
    case 4: return Stmt::skip();
    case 5: return Stmt::call(r.pick(s.modules));
    case 6:
    case 7:
      return Stmt::branch(bexpr(r, s.readable, 2), block(r, s, depth - 1, loop_level),
                          r.chance(0.3) ? Stmt::skip() : block(r, s, depth - 1, loop_level));
    case 8: return block(r, s, depth - 1, loop_level);
    default: {
      // k := 0; while k < n [&& c] do { body; k := k + 1 }
      const std::string& k = s.counters[static_cast<std::size_t>(loop_level)];
      auto kvar = mdm::SExpr::var(k);
      mdm::BoolExpr cond = mdm::BoolExpr::cmp(mdm::CmpOp::Lt, kvar,
                                              mdm::SExpr::constant(r.between(0, s.max_iterations)));
      if (r.chance(0.3)) cond = mdm::BoolExpr::conj(std::move(cond), bexpr(r, s.readable, 1));
      auto bump = Stmt::assign(k, mdm::SExpr::apply(mdm::Fn::Add, {kvar, mdm::SExpr::constant(1)}));
      auto body = Stmt::seq(block(r, s, depth - 1, loop_level + 1), std::move(bump));
      return Stmt::seq(Stmt::assign(k, mdm::SExpr::constant(0)), Stmt::loop(std::move(cond), std::move(body)));
    }
  }
}

}  // namespace detail

/// Statement tree of nesting depth at most `depth`.
inline mdm::Stmt stmts(Random& r, const StmtShape& s, int depth) { return detail::block(r, s, depth, 0); }

/// A program: data variables, loop counters, and loop-free modules that
/// may call earlier modules.
struct Program {
  std::vector<std::string> data;
  std::vector<std::string> counters;
  std::vector<mdm::ModuleDef> modules;
  mdm::Stmt body;

  std::vector<std::string> all_vars() const {
    auto out = data;
    out.insert(out.end(), counters.begin(), counters.end());
    return out;
  }
};

inline std::vector<mdm::ModuleDef> modules(Random& r, const std::vector<std::string>& data, int count,
                                           bool clamp = false) {
  std::vector<mdm::ModuleDef> out;
  for (int i = 0; i < count; ++i) {
    mdm::ModuleDef m;
    m.name = "mod" + std::to_string(i);
    std::vector<std::string> shuffled = data;
    std::shuffle(shuffled.begin(), shuffled.end(), r.engine());
    const int n_out = r.between(1, std::min<int>(2, static_cast<int>(data.size())));
    m.outputs.assign(shuffled.begin(), shuffled.begin() + n_out);
    for (auto it = shuffled.begin() + n_out; it != shuffled.end(); ++it) {
      if (r.chance(0.5)) m.inputs.push_back(*it);
    }
    std::sort(m.outputs.begin(), m.outputs.end());
    std::sort(m.inputs.begin(), m.inputs.end());

    StmtShape s;
    s.writable = m.outputs;
    s.readable = m.outputs;
    s.readable.insert(s.readable.end(), m.inputs.begin(), m.inputs.end());
    s.loops = false;
    s.clamp = clamp;
    // A callee's footprint must fit inside the caller's declared sets.
    for (const auto& prev : out) {
      auto within = [&](const std::vector<std::string>& xs, const std::vector<std::string>& in) {
        return std::all_of(xs.begin(), xs.end(),
                           [&](const auto& x) { return std::find(in.begin(), in.end(), x) != in.end(); });
      };
      if (within(prev.outputs, m.outputs) && within(prev.inputs, s.readable)) s.modules.push_back(prev.name);
    }
    m.body.body = stmts(r, s, 3);
    out.push_back(std::move(m));
  }
  return out;
}

inline Program program(Random& r, int depth = 5, int max_iterations = 20) {
  Program p;
  p.data = {"a", "b", "c"};
  p.counters = {"k0", "k1", "k2"};
  p.modules = modules(r, p.data, r.between(0, 2));
  StmtShape s;
  s.writable = p.data;
  s.readable = p.all_vars();
  s.counters = p.counters;
  for (const auto& m : p.modules) s.modules.push_back(m.name);
  s.max_iterations = max_iterations;
  p.body = stmts(r, s, depth);
  return p;
}

// ---------------------------------------------------------------------------
// Whole models

struct ModelShape {
  int max_depth = 3;      // mode nesting
  int max_top = 3;
  int max_children = 3;
  int stmt_depth = 3;
  int max_iterations = 5;
  bool sensors = true;
  bool mode_guards = true;  // guards may read __mode_d
};

namespace detail {

struct ModeBuilder {
  Random& r;
  const ModelShape& shape;
  StmtShape stmts_shape;
  int next_name = 0;
  int max_depth_seen = 0;

  mdm::Mode make(int depth) {
    mdm::Mode m;
    m.name = "M" + std::to_string(next_name++);
    max_depth_seen = std::max(max_depth_seen, depth + 1);
    if (depth + 1 >= shape.max_depth || r.chance(0.55)) {
      static const std::vector<std::int64_t> periods = {1, 2, 3, 5, 10};
      m.period = r.pick(periods);
      m.cfg = mdm::Cfg{stmts(r, stmts_shape, shape.stmt_depth)};
    } else {
      const int n = r.between(1, shape.max_children);
      std::int64_t l = 1;
      for (int i = 0; i < n; ++i) {
        m.submodes.push_back(make(depth + 1));
        l = std::lcm(l, m.submodes.back().period);
      }
      m.period = l * r.between(1, 2);
      m.submodes[static_cast<std::size_t>(r.between(0, n - 1))].initial = true;
    }
    return m;
  }
};

inline void collect(std::vector<mdm::Mode>& ms, std::vector<mdm::Mode*>& out) {
  for (auto& m : ms) {
    out.push_back(&m);
    collect(m.submodes, out);
  }
}

}  // namespace detail

/// A model that passes validation and never traps: loops are bounded, and
/// division or sqrt only see guarded operands.
inline mdm::ModelDef model(Random& r, const ModelShape& shape = {}) {
  mdm::ModelDef md;
  std::vector<std::string> data = {"x0", "x1", "x2"};
  std::vector<std::string> counters = {"k0", "k1"};
  for (const auto& v : data) {
    mdm::VarDecl d;
    d.name = v;
    d.lo = static_cast<double>(r.between(-2, 2));
    d.hi = d.lo + static_cast<double>(r.between(0, 3));
    md.vars.push_back(d);
  }
  for (const auto& v : counters) md.vars.push_back(mdm::VarDecl{v, 0, 0, false, {}});
  std::vector<std::string> readable = data;
  readable.insert(readable.end(), counters.begin(), counters.end());
  if (shape.sensors) {
    md.vars.push_back(mdm::VarDecl{"s0", -1, 1, true, {}});
    readable.push_back("s0");
  }
  md.modules = modules(r, data, r.between(0, 2), true);

  detail::ModeBuilder b{r, shape, {}, 0, 0};
  b.stmts_shape.writable = data;
  b.stmts_shape.readable = readable;
  b.stmts_shape.counters = counters;
  b.stmts_shape.max_iterations = shape.max_iterations;
  b.stmts_shape.clamp = true;
  for (const auto& m : md.modules) b.stmts_shape.modules.push_back(m.name);

  const int tops = r.between(1, shape.max_top);
  for (int i = 0; i < tops; ++i) md.top_modes.push_back(b.make(0));
  md.top_modes[static_cast<std::size_t>(r.between(0, tops - 1))].initial = true;

  std::vector<mdm::Mode*> all;
  detail::collect(md.top_modes, all);
  std::vector<std::string> guard_vars = readable;
  if (shape.mode_guards) {
    for (int d = 0; d < b.max_depth_seen; ++d) guard_vars.push_back(mdm::mode_var(static_cast<std::size_t>(d)));
  }
  // Globally distinct priorities satisfy the per-chain uniqueness rule.
  std::vector<std::int64_t> priorities(all.size() * 3);
  std::iota(priorities.begin(), priorities.end(), -3);
  std::shuffle(priorities.begin(), priorities.end(), r.engine());
  std::size_t next_priority = 0;
  for (auto* m : all) {
    if (r.chance(0.2)) m->code = r.between(0, 9);
    const int n = r.between(0, 2);
    for (int i = 0; i < n; ++i) {
      mdm::Transition t;
      t.source = m->name;
      t.target = r.pick(all)->name;
      t.priority = priorities[next_priority++];
      t.guard = guard(r, guard_vars, 2);
      m->transitions.push_back(std::move(t));
    }
  }
  return md;
}

// ---------------------------------------------------------------------------
// Traces

/// States over `schema` with integer ts steps in [0, max_gap] and values of
/// `vars` drawn from {lo..hi}.
inline mdm::Trace trace(Random& r, const std::shared_ptr<const mdm::Schema>& schema,
                        const std::vector<std::string>& vars, std::size_t length, int max_gap, int lo, int hi) {
  mdm::Trace out;
  double ts = 0;
  for (std::size_t i = 0; i < length; ++i) {
    mdm::State s(schema);
    if (i) ts += r.between(0, max_gap);
    s[mdm::Schema::ts_slot()] = ts;
    for (const auto& v : vars) s.set(v, r.between(lo, hi));
    out.push_back(std::move(s));
  }
  return out;
}

/// Random ITL formula over the core connectives.
inline mdm::Formula formula(Random& r, const std::vector<mdm::Formula>& atoms, int depth) {
  if (depth <= 0 || r.chance(0.25)) return r.pick(atoms);
  switch (r.between(0, 5)) {
    case 0: return mdm::itl::negate(formula(r, atoms, depth - 1));
    case 1: return mdm::itl::conj(formula(r, atoms, depth - 1), formula(r, atoms, depth - 1));
    case 2:
    case 3: return mdm::itl::chop(formula(r, atoms, depth - 1), formula(r, atoms, depth - 1));
    case 4: return mdm::itl::box(formula(r, atoms, depth - 1));
    default: return mdm::itl::diamond(formula(r, atoms, depth - 1));
  }
}

}  // namespace gen
