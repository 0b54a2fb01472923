#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mdm/error.hpp"
#include "mdm/expr.hpp"
#include "mdm/state.hpp"

namespace mdm {

/// CFG statement. `Seq` is binary; chains parse right-nested.
///
/// Layout by kind:
///   Assign  name = variable, expr
///   Call    name = module
///   Seq     body = {first, second}
///   While   cond, body = {loop body}
///   If      cond, body = {then, else}
struct Stmt {
  enum class Kind { Assign, Call, Skip, Seq, While, If };

  Kind kind = Kind::Skip;
  std::string name;
  SExpr expr;
  BoolExpr cond;
  std::vector<Stmt> body;

  static Stmt skip() { return Stmt{}; }
  static Stmt assign(std::string var, SExpr e) {
    Stmt s;
    s.kind = Kind::Assign;
    s.name = std::move(var);
    s.expr = std::move(e);
    return s;
  }
  static Stmt call(std::string module) {
    Stmt s;
    s.kind = Kind::Call;
    s.name = std::move(module);
    return s;
  }
  static Stmt seq(Stmt a, Stmt b) {
    Stmt s;
    s.kind = Kind::Seq;
    s.body = {std::move(a), std::move(b)};
    return s;
  }
  static Stmt loop(BoolExpr c, Stmt b) {
    Stmt s;
    s.kind = Kind::While;
    s.cond = std::move(c);
    s.body = {std::move(b)};
    return s;
  }
  static Stmt branch(BoolExpr c, Stmt then_part, Stmt else_part) {
    Stmt s;
    s.kind = Kind::If;
    s.cond = std::move(c);
    s.body = {std::move(then_part), std::move(else_part)};
    return s;
  }

  friend bool operator==(const Stmt&, const Stmt&) = default;
};

struct Cfg {
  Stmt body;
  friend bool operator==(const Cfg&, const Cfg&) = default;
};

struct VarDecl {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
  bool sensor = false;
  SourceSpan span;
  friend bool operator==(const VarDecl&, const VarDecl&) = default;
};

struct Transition {
  std::string source;
  Guard guard;
  std::int64_t priority = 0;
  std::string target;
  SourceSpan span;
  friend bool operator==(const Transition&, const Transition&) = default;
};

/// A mode is a leaf iff it carries a CFG; otherwise its body is `submodes`.
struct Mode {
  std::string name;
  std::int64_t period = 1;
  bool initial = false;
  /// Numeric code written into `__mode_<depth>`; the parser defaults it to
  /// the declaration index among siblings.
  std::int64_t code = 0;
  std::optional<Cfg> cfg;
  std::vector<Mode> submodes;
  std::vector<Transition> transitions;
  SourceSpan span;

  bool is_leaf() const noexcept { return cfg.has_value(); }

  friend bool operator==(const Mode&, const Mode&) = default;
};

struct ModuleDef {
  std::string name;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  Cfg body;
  SourceSpan span;
  friend bool operator==(const ModuleDef&, const ModuleDef&) = default;
};

struct ModelDef {
  std::vector<VarDecl> vars;
  std::vector<Mode> top_modes;
  std::vector<ModuleDef> modules;
  friend bool operator==(const ModelDef&, const ModelDef&) = default;
};

// ---------------------------------------------------------------------------
// Statement queries

template <class F>
void for_each_stmt(const Stmt& s, F&& fn) {
  fn(s);
  for (const auto& b : s.body) for_each_stmt(b, fn);
}

/// Variables read by `s` (expressions and conditions), without following calls.
inline std::set<std::string> read_vars(const Stmt& s) {
  std::set<std::string> out;
  for_each_stmt(s, [&](const Stmt& x) {
    auto add = [&](const std::string& n) { out.insert(n); };
    if (x.kind == Stmt::Kind::Assign) for_each_var(x.expr, add);
    if (x.kind == Stmt::Kind::While || x.kind == Stmt::Kind::If) for_each_var(x.cond, add);
  });
  return out;
}

/// Variables assigned by `s`, without following calls.
inline std::set<std::string> assigned_vars(const Stmt& s) {
  std::set<std::string> out;
  for_each_stmt(s, [&](const Stmt& x) {
    if (x.kind == Stmt::Kind::Assign) out.insert(x.name);
  });
  return out;
}

inline std::set<std::string> called_modules(const Stmt& s) {
  std::set<std::string> out;
  for_each_stmt(s, [&](const Stmt& x) {
    if (x.kind == Stmt::Kind::Call) out.insert(x.name);
  });
  return out;
}

inline const ModuleDef* find_module(const ModelDef& md, std::string_view name) {
  for (const auto& m : md.modules) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

inline const VarDecl* find_var(const ModelDef& md, std::string_view name) {
  for (const auto& v : md.vars) {
    if (v.name == name) return &v;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Mode hierarchy

/// Flattened view of the mode forest in pre-order, with parent links.
class ModeTable {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  struct Entry {
    const Mode* mode;
    std::size_t parent;
    std::size_t depth;
  };

  explicit ModeTable(const ModelDef& md) {
    for (const auto& m : md.top_modes) add(m, npos, 0);
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].mode->name == name) return i;
    }
    return std::nullopt;
  }

  std::size_t require(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw ModelError("unknown mode '" + std::string(name) + "'");
  }

  /// Indices from the top mode down to `id`. Stops on a parent cycle.
  std::vector<std::size_t> chain(std::size_t id) const {
    std::vector<std::size_t> out;
    for (std::size_t i = id; i != npos && out.size() <= entries_.size(); i = entries_[i].parent) out.push_back(i);
    std::reverse(out.begin(), out.end());
    return out;
  }

  std::size_t max_depth() const {
    std::size_t d = 0;
    for (const auto& e : entries_) d = std::max(d, e.depth + 1);
    return d;
  }

 private:
  void add(const Mode& m, std::size_t parent, std::size_t depth) {
    const std::size_t id = entries_.size();
    entries_.push_back({&m, parent, depth});
    for (const auto& c : m.submodes) add(c, id, depth + 1);
  }

  std::vector<Entry> entries_;
};

/// Contains(md): (a, b) iff b is an immediate sub-mode of a.
inline std::set<std::pair<std::string, std::string>> contains_relation(const ModelDef& md) {
  std::set<std::pair<std::string, std::string>> out;
  std::function<void(const Mode&)> walk = [&](const Mode& m) {
    for (const auto& c : m.submodes) {
      out.emplace(m.name, c.name);
      walk(c);
    }
  };
  for (const auto& m : md.top_modes) walk(m);
  return out;
}

inline const std::vector<Mode>& top_modes(const ModelDef& md) { return md.top_modes; }

inline const Mode& find_mode(const ModelDef& md, std::string_view name) {
  ModeTable table(md);
  return *table.entries()[table.require(name)].mode;
}

/// Names of the modes from a top mode down to `m` (inclusive).
inline std::vector<std::string> supermodes(const ModelDef& md, std::string_view m) {
  ModeTable table(md);
  std::vector<std::string> out;
  for (auto i : table.chain(table.require(m))) out.push_back(table.entries()[i].mode->name);
  return out;
}

/// Members of supermodes(md, m) whose period divides evenly into the count:
/// k mod (period(mi) / period(m)) = 0.
inline std::set<std::string> upmodes(const ModelDef& md, std::string_view m, std::uint64_t k) {
  if (k == 0) throw ModelError("period count must be positive");
  ModeTable table(md);
  const auto id = table.require(m);
  const auto base = table.entries()[id].mode->period;
  std::set<std::string> out;
  for (auto i : table.chain(id)) {
    const Mode& mi = *table.entries()[i].mode;
    if (base <= 0) continue;
    const auto ratio = mi.period / base;
    if (ratio > 0 && k % static_cast<std::uint64_t>(ratio) == 0) out.insert(mi.name);
  }
  return out;
}

/// The unique initial child of a non-leaf mode.
inline const Mode& submode(const Mode& m) {
  if (m.submodes.empty()) throw ModelError("mode '" + m.name + "' has no sub-modes");
  const Mode* found = nullptr;
  for (const auto& c : m.submodes) {
    if (!c.initial) continue;
    if (found) throw ModelError("mode '" + m.name + "' has more than one initial sub-mode");
    found = &c;
  }
  if (!found) throw ModelError("mode '" + m.name + "' has no initial sub-mode");
  return *found;
}

inline const Mode& submode(const ModelDef& md, std::string_view m) { return submode(find_mode(md, m)); }

/// All transitions whose source is in `modes`, in hierarchy pre-order.
inline std::vector<Transition> outs(const ModelDef& md, const std::set<std::string>& modes) {
  std::vector<Transition> out;
  ModeTable table(md);
  for (const auto& e : table.entries()) {
    for (const auto& t : e.mode->transitions) {
      if (modes.count(t.source)) out.push_back(t);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  SourceSpan span;
  std::string message;

  std::string to_string() const { return span.to_string() + ": " + message; }
};

using ValidationReport = std::vector<Violation>;

namespace detail {

class Validator {
 public:
  explicit Validator(const ModelDef& md) : md_(md), table_(md) {}

  ValidationReport run() {
    check_names();
    check_vars();
    check_modes();
    check_priorities();
    check_modules();
    return std::move(report_);
  }

 private:
  void add(const SourceSpan& span, std::string msg) { report_.push_back({span, std::move(msg)}); }

  bool var_known(const std::string& n) const {
    if (n == kTimestamp) return true;
    if (n == kModeAlias) return true;
    if (n.starts_with(kModePrefix)) {
      const std::string digits = n.substr(kModePrefix.size());
      if (digits.empty() || digits.size() > 3 || digits.find_first_not_of("0123456789") != std::string::npos) return false;
      const unsigned long d = std::stoul(digits);
      return std::to_string(d) == digits && d < table_.max_depth();
    }
    return find_var(md_, n) != nullptr;
  }

  void check_names() {
    std::map<std::string, const Mode*> modes;
    for (const auto& e : table_.entries()) {
      auto [it, fresh] = modes.emplace(e.mode->name, e.mode);
      if (!fresh) add(e.mode->span, "duplicate mode name '" + e.mode->name + "'");
    }
    std::set<std::string> seen;
    for (const auto& m : md_.modules) {
      if (!seen.insert(m.name).second) add(m.span, "duplicate module name '" + m.name + "'");
    }
    seen.clear();
    for (const auto& v : md_.vars) {
      if (!seen.insert(v.name).second) add(v.span, "duplicate variable name '" + v.name + "'");
    }
  }

  void check_vars() {
    for (const auto& v : md_.vars) {
      if (is_reserved_name(v.name)) add(v.span, "variable name '" + v.name + "' is reserved");
      if (!(v.lo <= v.hi)) add(v.span, "empty initial range for '" + v.name + "'");
    }
  }

  void check_expr_vars(const SourceSpan& span, const SExpr& e, const std::string& where) {
    for_each_var(e, [&](const std::string& n) {
      if (!var_known(n)) add(span, "unknown variable '" + n + "' in " + where);
    });
  }

  void check_bool(const SourceSpan& span, const BoolExpr& b, const std::string& where, bool guard) {
    for_each_var(b, [&](const std::string& n) {
      if (!var_known(n)) add(span, "unknown variable '" + n + "' in " + where);
    });
    check_bool_shape(span, b, where, guard);
  }

  void check_bool_shape(const SourceSpan& span, const BoolExpr& b, const std::string& where, bool guard) {
    if (b.is_interval()) {
      if (!guard) add(span, "interval expression in pure boolean context (" + where + ")");
      else if (!b.subs[0].is_pure()) add(span, "interval expression inside pure boolean (" + where + ")");
    }
    for (const auto& s : b.subs) check_bool_shape(span, s, where, guard && !b.is_interval());
    check_arity(span, b, where);
  }

  void check_arity(const SourceSpan& span, const BoolExpr& b, const std::string& where) {
    for (const auto& t : b.terms) check_arity(span, t, where);
  }

  void check_arity(const SourceSpan& span, const SExpr& e, const std::string& where) {
    if (e.kind == SExpr::Kind::Apply && !arity_ok(e.fn, e.args.size())) {
      add(span, "arity mismatch for '" + std::string(function_info(e.fn).name) + "' in " + where);
    }
    for (const auto& a : e.args) check_arity(span, a, where);
  }

  void check_stmt(const SourceSpan& span, const Stmt& s, const std::string& where) {
    for_each_stmt(s, [&](const Stmt& x) {
      switch (x.kind) {
        case Stmt::Kind::Assign:
          if (is_reserved_name(x.name)) add(span, "assignment to reserved variable '" + x.name + "' in " + where);
          else if (!find_var(md_, x.name)) add(span, "assignment to undeclared variable '" + x.name + "' in " + where);
          check_expr_vars(span, x.expr, where);
          check_arity(span, x.expr, where);
          break;
        case Stmt::Kind::Call:
          if (!find_module(md_, x.name)) add(span, "call to unknown module '" + x.name + "' in " + where);
          break;
        case Stmt::Kind::While:
        case Stmt::Kind::If: check_bool(span, x.cond, where, false); break;
        default: break;
      }
    });
  }

  void check_modes() {
    std::size_t initial_tops = 0;
    for (const auto& m : md_.top_modes) initial_tops += m.initial ? 1 : 0;
    if (md_.top_modes.empty()) add({}, "model has no modes");
    else if (initial_tops != 1)
      add(md_.top_modes.front().span,
          "expected exactly one initial top mode, found " + std::to_string(initial_tops));

    for (const auto& e : table_.entries()) {
      const Mode& m = *e.mode;
      const std::string where = "mode '" + m.name + "'";
      if (m.period < 1) add(m.span, "period of mode '" + m.name + "' must be at least 1");
      if (m.is_leaf()) {
        if (!m.submodes.empty()) add(m.span, where + " has both a CFG and sub-modes");
        check_stmt(m.span, m.cfg->body, where);
      } else {
        if (m.submodes.empty()) add(m.span, where + " has neither a CFG nor sub-modes");
        std::size_t initial = 0;
        for (const auto& c : m.submodes) {
          initial += c.initial ? 1 : 0;
          if (c.period >= 1 && m.period >= 1 && m.period % c.period != 0) {
            add(c.span, "period " + std::to_string(m.period) + " of mode '" + m.name +
                            "' is not a multiple of period " + std::to_string(c.period) + " of sub-mode '" +
                            c.name + "'");
          }
        }
        if (!m.submodes.empty() && initial != 1)
          add(m.span, where + " must have exactly one initial sub-mode, found " + std::to_string(initial));
      }
      for (const auto& t : m.transitions) {
        if (t.source != m.name)
          add(t.span, "transition source '" + t.source + "' does not match owning mode '" + m.name + "'");
        if (!table_.find(t.target)) add(t.span, "transition target '" + t.target + "' does not exist");
        check_bool(t.span, t.guard, "guard of transition " + m.name + " -> " + t.target, true);
      }
    }
  }

  void check_priorities() {
    for (std::size_t id = 0; id < table_.entries().size(); ++id) {
      const Mode& leaf = *table_.entries()[id].mode;
      if (!leaf.submodes.empty()) continue;
      std::map<std::int64_t, const Transition*> seen;
      std::set<std::int64_t> reported;
      for (auto i : table_.chain(id)) {
        for (const auto& t : table_.entries()[i].mode->transitions) {
          auto [it, fresh] = seen.emplace(t.priority, &t);
          if (!fresh && reported.insert(t.priority).second) {
            add(t.span, "duplicate priority " + std::to_string(t.priority) + " in chain of " + leaf.name);
          }
        }
      }
    }
  }

  void check_modules() {
    for (const auto& m : md_.modules) {
      const std::string where = "module '" + m.name + "'";
      std::set<std::string> in(m.inputs.begin(), m.inputs.end());
      std::set<std::string> out(m.outputs.begin(), m.outputs.end());
      for (const auto& n : m.inputs)
        if (!var_known(n)) add(m.span, "unknown input variable '" + n + "' of " + where);
      for (const auto& n : m.outputs)
        if (!var_known(n)) add(m.span, "unknown output variable '" + n + "' of " + where);
      for (const auto& n : read_vars(m.body.body)) {
        if (!in.count(n) && !out.count(n)) add(m.span, where + " reads '" + n + "' outside its in/out sets");
      }
      for (const auto& n : assigned_vars(m.body.body)) {
        if (!out.count(n)) add(m.span, where + " writes '" + n + "' outside its out set");
      }
      check_stmt(m.span, m.body.body, where);
    }
    check_recursion();
  }

  void check_recursion() {
    enum class Mark { White, Grey, Black };
    std::map<std::string, Mark> mark;
    std::vector<std::string> stack;
    std::set<std::string> reported;
    std::function<void(const ModuleDef&)> visit = [&](const ModuleDef& m) {
      mark[m.name] = Mark::Grey;
      stack.push_back(m.name);
      for (const auto& callee : called_modules(m.body.body)) {
        const ModuleDef* c = find_module(md_, callee);
        if (!c) continue;
        if (mark[callee] == Mark::Grey) {
          auto from = std::find(stack.begin(), stack.end(), callee);
          std::string cycle;
          for (auto it = from; it != stack.end(); ++it) cycle += *it + " -> ";
          cycle += callee;
          if (reported.insert(callee).second) add(m.span, "recursive module call: " + cycle);
        } else if (mark[callee] == Mark::White) {
          visit(*c);
        }
      }
      stack.pop_back();
      mark[m.name] = Mark::Black;
    };
    for (const auto& m : md_.modules) mark.emplace(m.name, Mark::White);
    for (const auto& m : md_.modules) {
      if (mark[m.name] == Mark::White) visit(m);
    }
  }

  const ModelDef& md_;
  ModeTable table_;
  ValidationReport report_;
};

}  // namespace detail

/// Static well-formedness check. Violations are returned, never thrown.
inline ValidationReport validate(const ModelDef& md) { return detail::Validator(md).run(); }

}  // namespace mdm
