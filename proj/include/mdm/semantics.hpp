#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mdm/cfg_exec.hpp"
#include "mdm/environment.hpp"
#include "mdm/error.hpp"
#include "mdm/expr.hpp"
#include "mdm/model.hpp"
#include "mdm/state.hpp"

namespace mdm {

enum class Phase { Begin, Execute, End };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Begin: return "Begin";
    case Phase::Execute: return "Execute";
    case Phase::End: return "End";
  }
  return "?";
}

enum class Rule { Enter, Detect, Execute, Continue, Repeat, Switch };

inline std::string_view to_string(Rule r) {
  switch (r) {
    case Rule::Enter: return "enter";
    case Rule::Detect: return "detect";
    case Rule::Execute: return "execute";
    case Rule::Continue: return "continue";
    case Rule::Repeat: return "repeat";
    case Rule::Switch: return "switch";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Guards over traces

namespace detail {

inline std::vector<bool> eval_at_each(const BoolExpr& b, const Trace& trace) {
  std::vector<bool> out;
  out.reserve(trace.size());
  for (const auto& s : trace) out.push_back(eval_bexpr(b, s));
  return out;
}

}  // namespace detail

/// Interprets a guard over Σ by direct quantification over every index.
///
/// Pure parts are read at the last state. For `duration(b, l)` and
/// `after(b, l)` with ν = l at the last state σ_n, a witness i < n needs
/// ts_i + ν <= ts_n and ts_{i+1} + ν >= ts_n; `duration` then needs b on all of
/// σ_i..σ_n, `after` needs b at σ_i. Both operands of && and || are always
/// evaluated so that evaluation errors do not depend on short-circuiting.
inline bool eval_guard(const Guard& g, const Trace& trace) {
  using K = BoolExpr::Kind;
  if (trace.empty()) throw EvalError("guard evaluated over an empty trace");
  switch (g.kind) {
    case K::True: return true;
    case K::False: return false;
    case K::Compare: return eval_bexpr(g, trace.back());
    case K::Not: return !eval_guard(g.subs[0], trace);
    case K::And: {
      const bool a = eval_guard(g.subs[0], trace);
      const bool b = eval_guard(g.subs[1], trace);
      return a && b;
    }
    case K::Or: {
      const bool a = eval_guard(g.subs[0], trace);
      const bool b = eval_guard(g.subs[1], trace);
      return a || b;
    }
    case K::After:
    case K::Duration: {
      const std::size_t n = trace.size() - 1;
      const double nu = eval_sexpr(g.terms[0], trace.back());
      const std::vector<bool> b = detail::eval_at_each(g.subs[0], trace);
      const double tsn = trace[n].ts();
      for (std::size_t i = 0; i < n; ++i) {
        if (!(trace[i].ts() + nu <= tsn && trace[i + 1].ts() + nu >= tsn)) continue;
        if (g.kind == K::After) {
          if (b[i]) return true;
        } else if (std::all_of(b.begin() + static_cast<std::ptrdiff_t>(i), b.end(), [](bool v) { return v; })) {
          return true;
        }
      }
      return false;
    }
  }
  return false;
}

/// Guard compiled against a schema. Pure sub-trees become a single Rpn;
/// interval nodes refer to a cache slot owned by the configuration.
class CompiledGuard {
 public:
  struct Node {
    enum class Kind { Pure, Not, And, Or, After, Duration };
    Kind kind = Kind::Pure;
    Rpn code;  // Pure: the expression; After/Duration: the condition
    Rpn length;
    std::size_t lhs = 0;
    std::size_t rhs = 0;
    std::size_t cache = 0;
  };

  CompiledGuard() = default;

  CompiledGuard(const Guard& g, const Schema& schema, std::size_t& next_cache) {
    root_ = add(g, schema, next_cache);
  }

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::size_t root() const noexcept { return root_; }

 private:
  std::size_t add(const Guard& g, const Schema& schema, std::size_t& next_cache) {
    using K = BoolExpr::Kind;
    Node node;
    if (g.is_pure()) {
      node.code = Rpn::compile(g, schema);
    } else if (g.kind == K::Not) {
      node.kind = Node::Kind::Not;
      node.lhs = add(g.subs[0], schema, next_cache);
    } else if (g.kind == K::And || g.kind == K::Or) {
      node.kind = g.kind == K::And ? Node::Kind::And : Node::Kind::Or;
      node.lhs = add(g.subs[0], schema, next_cache);
      node.rhs = add(g.subs[1], schema, next_cache);
    } else {
      node.kind = g.kind == K::After ? Node::Kind::After : Node::Kind::Duration;
      if (!g.subs[0].is_pure()) throw ModelError("interval expression nested inside another");
      node.code = Rpn::compile(g.subs[0], schema);
      node.length = Rpn::compile(g.terms[0], schema);
      node.cache = next_cache++;
    }
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
  }

  std::vector<Node> nodes_;
  std::size_t root_ = 0;
};

/// Per-run memo for interval guards: truth of each condition at every state
/// that can no longer change, i.e. all but the last.
///
/// Valid only while the trace grows by appending and only its last state is
/// ever replaced, which is how the rules use it. Timestamps must be
/// non-decreasing, so the window of witnesses is found by binary search.
class GuardMonitor {
 public:
  explicit GuardMonitor(std::size_t slots = 0) : caches_(slots) {}

  void clear() {
    for (auto& c : caches_) c = {};
  }

  bool eval(const CompiledGuard& g, const Trace& trace) {
    if (trace.empty()) throw EvalError("guard evaluated over an empty trace");
    return eval_node(g, g.root(), trace);
  }

 private:
  struct Cache {
    std::vector<std::uint32_t> true_prefix{0};  // number of true states before index j
    std::ptrdiff_t last_false = -1;           // among finalized states
    std::size_t size() const { return true_prefix.size() - 1; }
  };

  bool eval_node(const CompiledGuard& g, std::size_t id, const Trace& trace) {
    using NK = CompiledGuard::Node::Kind;
    const auto& node = g.nodes()[id];
    switch (node.kind) {
      case NK::Pure: return node.code.test(trace.back().values());
      case NK::Not: return !eval_node(g, node.lhs, trace);
      case NK::And: {
        const bool a = eval_node(g, node.lhs, trace);
        const bool b = eval_node(g, node.rhs, trace);
        return a && b;
      }
      case NK::Or: {
        const bool a = eval_node(g, node.lhs, trace);
        const bool b = eval_node(g, node.rhs, trace);
        return a || b;
      }
      case NK::After:
      case NK::Duration: return eval_interval(node, trace);
    }
    return false;
  }

  bool eval_interval(const CompiledGuard::Node& node, const Trace& trace) {
    const std::size_t n = trace.size() - 1;
    Cache& c = caches_.at(node.cache);
    if (c.size() > n) c = {};
    while (c.size() < n) {
      const std::size_t j = c.size();
      const bool v = node.code.test(trace[j].values());
      c.true_prefix.push_back(c.true_prefix.back() + (v ? 1 : 0));
      if (!v) c.last_false = static_cast<std::ptrdiff_t>(j);
    }
    const auto& last = trace[n].values();
    const bool b_last = node.code.test(last);
    const double nu = node.length.eval(last);
    const double tsn = trace[n].ts();

    // Witnesses i in [0, n) form a contiguous range [lo, hi].
    std::size_t a = 0, b = n;  // first i with !(ts_i + nu <= tsn)
    while (a < b) {
      const std::size_t mid = a + (b - a) / 2;
      if (trace[mid].ts() + nu <= tsn) a = mid + 1; else b = mid;
    }
    const std::size_t hi_end = a;
    a = 0;
    b = n;  // first i with ts_{i+1} + nu >= tsn
    while (a < b) {
      const std::size_t mid = a + (b - a) / 2;
      if (trace[mid + 1].ts() + nu >= tsn) b = mid; else a = mid + 1;
    }
    const std::size_t lo = a;
    if (lo >= hi_end) return false;
    const std::size_t hi = hi_end - 1;
    if (node.kind == CompiledGuard::Node::Kind::After) {
      return c.true_prefix[hi + 1] - c.true_prefix[lo] > 0;
    }
    const std::ptrdiff_t last_false = b_last ? c.last_false : static_cast<std::ptrdiff_t>(n);
    return static_cast<std::ptrdiff_t>(hi) > last_false;
  }

  std::vector<Cache> caches_;
};

// ---------------------------------------------------------------------------
// Compiled model

/// A validated model with per-mode code and guards compiled against one
/// schema. Immutable and shareable across concurrent simulations.
class CompiledModel {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  struct Edge {
    const Transition* source;
    std::size_t target;
    std::int64_t priority;
    CompiledGuard guard;
  };

  struct Node {
    const Mode* mode;
    std::size_t parent;
    std::size_t depth;
    std::vector<std::size_t> chain;  // top mode .. this mode
    std::size_t initial_child = npos;
    InstrSeq code;
    std::vector<Edge> edges;

    bool leaf() const { return mode->is_leaf(); }
    const std::string& name() const { return mode->name; }
    std::int64_t period() const { return mode->period; }
  };

  /// Throws ModelError listing the violations when the model is invalid.
  static std::shared_ptr<const CompiledModel> make(ModelDef md, std::uint64_t divergence_cap = kDefaultDivergenceCap) {
    return std::shared_ptr<const CompiledModel>(new CompiledModel(std::move(md), divergence_cap));
  }

  const ModelDef& def() const noexcept { return md_; }
  const std::shared_ptr<const Schema>& schema() const noexcept { return schema_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t initial_top() const noexcept { return initial_top_; }
  std::size_t guard_slots() const noexcept { return guard_slots_; }
  std::uint64_t divergence_cap() const noexcept { return divergence_cap_; }

  std::size_t require(std::string_view name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].name() == name) return i;
    }
    throw ModelError("unknown mode '" + std::string(name) + "'");
  }

  /// Modes of the chain of `leaf` whose period boundary coincides with the
  /// k-th period of `leaf`.
  std::vector<std::size_t> upmodes(std::size_t leaf, std::int64_t k) const {
    std::vector<std::size_t> out;
    const Node& m = nodes_.at(leaf);
    for (std::size_t id : m.chain) {
      const std::int64_t ratio = nodes_[id].period() / m.period();
      if (ratio > 0 && k % ratio == 0) out.push_back(id);
    }
    return out;
  }

  /// Writes the code of each mode in `id`'s chain into the mode slots.
  void write_mode_codes(State& s, std::size_t id) const {
    const auto& chain = nodes_.at(id).chain;
    for (std::size_t d = 0; d < schema_->mode_depth(); ++d) {
      s[schema_->mode_slot(d)] = d < chain.size() ? static_cast<double>(nodes_[chain[d]].mode->code) : -1.0;
    }
  }

 private:
  CompiledModel(ModelDef md, std::uint64_t cap) : md_(std::move(md)), divergence_cap_(cap) {
    const auto report = validate(md_);
    if (!report.empty()) {
      std::string msg = "invalid model:";
      for (const auto& v : report) msg += "\n  " + v.to_string();
      throw ModelError(msg);
    }
    const ModeTable table(md_);
    std::vector<std::string> vars;
    for (const auto& v : md_.vars) vars.push_back(v.name);
    schema_ = Schema::make(std::move(vars), table.max_depth());

    for (const auto& e : table.entries()) {
      Node n{e.mode, e.parent, e.depth, {}, npos, {}, {}};
      nodes_.push_back(std::move(n));
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      n.chain = table.chain(i);
      if (n.leaf()) {
        n.code = compile(*n.mode->cfg, md_.modules, *schema_);
      } else {
        for (std::size_t j = 0; j < nodes_.size(); ++j) {
          if (nodes_[j].parent == i && nodes_[j].mode->initial) n.initial_child = j;
        }
      }
      for (const auto& t : n.mode->transitions) {
        n.edges.push_back({&t, table.require(t.target), t.priority, CompiledGuard(t.guard, *schema_, guard_slots_)});
      }
      if (n.parent == npos && n.mode->initial) initial_top_ = i;
    }
  }

  ModelDef md_;
  std::shared_ptr<const Schema> schema_;
  std::vector<Node> nodes_;
  std::size_t initial_top_ = 0;
  std::size_t guard_slots_ = 0;
  std::uint64_t divergence_cap_;
};

// ---------------------------------------------------------------------------
// Configurations and rules

/// (md, m, l, pc, k, Σ) plus the run's guard memo.
struct Configuration {
  std::shared_ptr<const CompiledModel> model;
  std::size_t current = 0;
  Phase phase = Phase::Begin;
  ProgramCounter pc;
  std::int64_t k = 1;
  Trace trace;
  GuardMonitor monitor;
  std::uint64_t executes = 0;         // applications of the execute rule so far
  std::uint64_t hook_violations = 0;  // non-sensor writes undone after sampling

  const std::string& current_name() const { return model->node(current).name(); }
  const State& state() const { return trace.back(); }
};

/// Start configuration: the initial top mode, phase Begin, k = 1, and a trace
/// holding σ₀ tagged with the codes of the initial descent chain.
inline Configuration initial_configuration(std::shared_ptr<const CompiledModel> model, const Valuation& sigma0) {
  const Schema& schema = *model->schema();
  State s(model->schema());
  for (const auto& v : model->def().vars) {
    auto it = sigma0.find(v.name);
    if (it == sigma0.end()) throw ModelError("initial state does not assign '" + v.name + "'");
    s.set(v.name, it->second);
  }
  for (const auto& [name, value] : sigma0) {
    if (name == kTimestamp) {
      if (value != 0.0) throw ModelError("initial state must have ts = 0");
    } else if (!is_reserved_name(name) && !schema.find(name)) {
      throw ModelError("initial state assigns undeclared variable '" + name + "'");
    }
  }
  std::size_t leaf = model->initial_top();
  while (!model->node(leaf).leaf()) leaf = model->node(leaf).initial_child;
  model->write_mode_codes(s, leaf);

  Configuration c{model, model->initial_top(), Phase::Begin, {}, 1, {}, GuardMonitor(model->guard_slots()), 0, 0};
  c.pc = model->node(c.current).leaf() ? ProgramCounter::start() : ProgramCounter::bottom();
  c.trace.push_back(std::move(s));
  return c;
}

inline Configuration initial_configuration(const ModelDef& md, const Valuation& sigma0) {
  return initial_configuration(CompiledModel::make(md), sigma0);
}

/// Rules whose premises hold in `c`, checked one by one from the model
/// definition and the definitional guard interpretation. For any reachable
/// configuration this has exactly one element.
inline std::vector<Rule> applicable_rules(const Configuration& c) {
  std::vector<Rule> out;
  const auto& node = c.model->node(c.current);
  const bool leaf = node.leaf();
  const bool bottom = c.pc.kind == ProgramCounter::Kind::Bottom;
  const bool exit = c.pc.kind == ProgramCounter::Kind::Exit;
  if (c.phase == Phase::Begin && !leaf && bottom) out.push_back(Rule::Enter);
  if (c.phase == Phase::Begin && leaf && c.pc.kind == ProgramCounter::Kind::Start) out.push_back(Rule::Detect);
  if (c.phase == Phase::Execute && leaf && !bottom && !exit) out.push_back(Rule::Execute);
  if (c.phase == Phase::End && leaf && !bottom && !exit) out.push_back(Rule::Continue);
  if (c.phase == Phase::End && leaf && exit) {
    const auto& md = c.model->def();
    const auto ups = mdm::upmodes(md, node.name(), static_cast<std::uint64_t>(c.k));
    bool any = false;
    for (const auto& t : outs(md, ups)) any = eval_guard(t.guard, c.trace) || any;
    out.push_back(any ? Rule::Switch : Rule::Repeat);
  }
  return out;
}

namespace detail {

inline void enter_mode(Configuration& c, std::size_t id) {
  c.current = id;
  c.pc = c.model->node(id).leaf() ? ProgramCounter::start() : ProgramCounter::bottom();
}

}  // namespace detail

/// Applies the single rule whose premise holds and returns it.
///
/// Errors from the instruction code (ExecError) and from guard or expression
/// evaluation (EvalError) propagate; an ill-formed configuration raises
/// std::logic_error.
inline Rule step(Configuration& c, EnvironmentHook& env, StepBudget budget = kUnbounded) {
  const CompiledModel& model = *c.model;
  const auto& node = model.node(c.current);
  const bool bottom = c.pc.kind == ProgramCounter::Kind::Bottom;

  if (node.leaf() == bottom) {
    throw std::logic_error("configuration of mode " + node.name() + " has pc = " + c.pc.to_string());
  }

  switch (c.phase) {
    case Phase::Begin: {
      if (!node.leaf()) {
        detail::enter_mode(c, node.initial_child);
        return Rule::Enter;
      }
      if (c.pc.kind != ProgramCounter::Kind::Start) {
        throw std::logic_error("leaf mode " + node.name() + " at Begin with pc = " + c.pc.to_string());
      }
      State& last = c.trace.back();
      State sampled = env.sampling(last);
      if (sampled.values().size() != last.values().size()) {
        throw std::logic_error("environment hook changed the state layout");
      }
      const Schema& schema = *model.schema();
      bool violated = false;
      for (std::size_t slot = 0; slot < schema.size(); ++slot) {
        if (sampled[slot] == last[slot]) continue;
        const VarDecl* v = slot >= schema.first_var_slot() ? find_var(model.def(), schema.name(slot)) : nullptr;
        if (v && v->sensor) continue;
        sampled[slot] = last[slot];
        violated = true;
      }
      if (violated) ++c.hook_violations;
      last = std::move(sampled);
      c.phase = Phase::Execute;
      return Rule::Detect;
    }
    case Phase::Execute: {
      if (c.pc.kind == ProgramCounter::Kind::Exit) {
        throw std::logic_error("execute phase with pc = Exit");
      }
      auto [pc, next] = execute(node.code, c.pc, c.trace.back(), budget, model.divergence_cap());
      next[Schema::ts_slot()] = c.trace.back().ts() + static_cast<double>(node.period());
      model.write_mode_codes(next, c.current);
      c.trace.push_back(std::move(next));
      c.pc = pc;
      c.phase = Phase::End;
      ++c.executes;
      return Rule::Execute;
    }
    case Phase::End: {
      if (c.pc.kind != ProgramCounter::Kind::Exit) {
        c.phase = Phase::Execute;
        return Rule::Continue;
      }
      const CompiledModel::Edge* best = nullptr;
      for (std::size_t id : model.upmodes(c.current, c.k)) {
        for (const auto& e : model.node(id).edges) {
          if (c.monitor.eval(e.guard, c.trace) && (!best || e.priority > best->priority)) best = &e;
        }
      }
      c.phase = Phase::Begin;
      if (!best) {
        c.pc = ProgramCounter::start();
        ++c.k;
        return Rule::Repeat;
      }
      detail::enter_mode(c, best->target);
      c.k = 1;
      return Rule::Switch;
    }
  }
  throw std::logic_error("unknown phase");
}

/// Steps until `periods` applications of the execute rule have occurred in
/// total. Failures are rethrown as SimulationError naming the mode and the
/// 1-based period.
inline void run_until(Configuration& c, EnvironmentHook& env, std::uint64_t periods, StepBudget budget = kUnbounded) {
  while (c.executes < periods) {
    try {
      step(c, env, budget);
    } catch (const SimulationError&) {
      throw;
    } catch (const Error& e) {
      throw SimulationError(c.current_name(), c.executes + 1, e.what());
    }
  }
}

/// Runs a fresh simulation for `periods` periods; the trace has periods + 1
/// states.
inline Trace run(std::shared_ptr<const CompiledModel> model, const Valuation& sigma0, EnvironmentHook& env,
                 std::uint64_t periods, StepBudget budget = kUnbounded) {
  Configuration c = initial_configuration(std::move(model), sigma0);
  run_until(c, env, periods, budget);
  return std::move(c.trace);
}

inline Trace run(const ModelDef& md, const Valuation& sigma0, EnvironmentHook& env, std::uint64_t periods,
                 StepBudget budget = kUnbounded) {
  return run(CompiledModel::make(md), sigma0, env, periods, budget);
}

// ---------------------------------------------------------------------------
// Trace export

inline void write_trace_csv(std::ostream& out, const Trace& trace) {
  if (trace.empty()) return;
  const auto& names = trace.front().schema().names();
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  out << '\n';
  for (const auto& s : trace) {
    const auto v = s.values();
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << format_number(v[i]);
    out << '\n';
  }
}

/// One JSON object per state, keys in column order.
inline void write_trace_jsonl(std::ostream& out, const Trace& trace) {
  for (const auto& s : trace) {
    const auto& names = s.schema().names();
    const auto v = s.values();
    out << '{';
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << '"' << names[i] << "\":" << format_number(v[i]);
    out << "}\n";
  }
}

}  // namespace mdm
