#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mdm/error.hpp"
#include "mdm/expr.hpp"
#include "mdm/model.hpp"
#include "mdm/state.hpp"

namespace mdm {

/// Expression compiled to postfix form over schema slots. Booleans live on
/// the value stack as 0.0 / 1.0.
class Rpn {
 public:
  struct Op {
    enum class Code : std::uint8_t { Const, Load, Apply, Cmp, Not, And, Or };
    Code code;
    std::uint8_t arity = 0;
    Fn fn = Fn::Add;
    CmpOp cmp = CmpOp::Eq;
    std::size_t slot = 0;
    double value = 0.0;
  };

  static Rpn compile(const SExpr& e, const Schema& schema) {
    return compile_with(e, [&](std::string_view n) { return schema.slot(n); });
  }

  static Rpn compile(const BoolExpr& b, const Schema& schema) {
    return compile_with(b, [&](std::string_view n) { return schema.slot(n); });
  }

  /// `slot_of` maps a variable name to its index in the slot array.
  template <class Expr, class SlotOf>
  static Rpn compile_with(const Expr& e, const SlotOf& slot_of) {
    Rpn r;
    r.emit(e, slot_of);
    return r;
  }

  double eval(std::span<const double> slots) const {
#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wmaybe-uninitialized"
#endif
    std::array<double, 32> small;  // every read follows a write
    std::vector<double> big;
    double* stack = small.data();
    if (max_depth_ > small.size()) {
      big.resize(max_depth_);
      stack = big.data();
    }
    std::size_t sp = 0;
    for (const auto& op : ops_) {
      switch (op.code) {
        case Op::Code::Const: stack[sp++] = op.value; break;
        case Op::Code::Load: stack[sp++] = slots[op.slot]; break;
        case Op::Code::Apply: {
          sp -= op.arity;
          stack[sp] = apply_function(op.fn, std::span<const double>(stack + sp, op.arity));
          ++sp;
          break;
        }
        case Op::Code::Cmp:
          --sp;
          stack[sp - 1] = compare(op.cmp, stack[sp - 1], stack[sp]) ? 1.0 : 0.0;
          break;
        case Op::Code::Not: stack[sp - 1] = stack[sp - 1] != 0.0 ? 0.0 : 1.0; break;
        case Op::Code::And:
          --sp;
          stack[sp - 1] = (stack[sp - 1] != 0.0 && stack[sp] != 0.0) ? 1.0 : 0.0;
          break;
        case Op::Code::Or:
          --sp;
          stack[sp - 1] = (stack[sp - 1] != 0.0 || stack[sp] != 0.0) ? 1.0 : 0.0;
          break;
      }
    }
    return stack[0];
#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC diagnostic pop
#endif
  }

  bool test(std::span<const double> slots) const { return eval(slots) != 0.0; }

  const std::vector<Op>& ops() const noexcept { return ops_; }

 private:
  void push(Op op, int delta) {
    ops_.push_back(op);
    depth_ += delta;
    max_depth_ = std::max(max_depth_, depth_);
  }

  template <class SlotOf>
  void emit(const SExpr& e, const SlotOf& slot_of) {
    switch (e.kind) {
      case SExpr::Kind::Const: push({Op::Code::Const, 0, Fn::Add, CmpOp::Eq, 0, e.value}, 1); break;
      case SExpr::Kind::Var: push({Op::Code::Load, 0, Fn::Add, CmpOp::Eq, slot_of(e.name), 0.0}, 1); break;
      case SExpr::Kind::Apply: {
        if (!arity_ok(e.fn, e.args.size())) {
          throw EvalError("arity mismatch for '" + std::string(function_info(e.fn).name) + "'");
        }
        for (const auto& a : e.args) emit(a, slot_of);
        const int n = static_cast<int>(e.args.size());
        push({Op::Code::Apply, static_cast<std::uint8_t>(n), e.fn, CmpOp::Eq, 0, 0.0}, 1 - n);
        break;
      }
    }
  }

  template <class SlotOf>
  void emit(const BoolExpr& b, const SlotOf& slot_of) {
    using K = BoolExpr::Kind;
    switch (b.kind) {
      case K::True: push({Op::Code::Const, 0, Fn::Add, CmpOp::Eq, 0, 1.0}, 1); break;
      case K::False: push({Op::Code::Const, 0, Fn::Add, CmpOp::Eq, 0, 0.0}, 1); break;
      case K::Compare:
        emit(b.terms[0], slot_of);
        emit(b.terms[1], slot_of);
        push({Op::Code::Cmp, 2, Fn::Add, b.op, 0, 0.0}, -1);
        break;
      case K::Not:
        emit(b.subs[0], slot_of);
        push({Op::Code::Not, 1, Fn::Add, CmpOp::Eq, 0, 0.0}, 0);
        break;
      case K::And:
      case K::Or:
        emit(b.subs[0], slot_of);
        emit(b.subs[1], slot_of);
        push({b.kind == K::And ? Op::Code::And : Op::Code::Or, 2, Fn::Add, CmpOp::Eq, 0, 0.0}, -1);
        break;
      case K::After:
      case K::Duration: throw EvalError("interval expression in pure boolean context");
    }
  }

  std::vector<Op> ops_;
  std::size_t depth_ = 0;
  std::size_t max_depth_ = 0;
};

struct Instr {
  enum class Op { Assign, Jump, JumpIfFalse, Nop };
  Op op = Op::Nop;
  std::size_t slot = 0;    // Assign
  std::size_t target = 0;  // Jump, JumpIfFalse
  Rpn code;                // Assign value or JumpIfFalse condition
  std::string text;        // source form, for disassembly
};

/// Linear code for one CFG. Entry is index 0, exit is index size().
struct InstrSeq {
  std::vector<Instr> instrs;

  std::size_t size() const noexcept { return instrs.size(); }
  std::size_t exit() const noexcept { return instrs.size(); }
};

/// Location in a CFG: Start, Exit, a node index, or Bottom for non-leaf modes.
struct ProgramCounter {
  enum class Kind { Start, Exit, Node, Bottom };
  Kind kind = Kind::Start;
  std::size_t node = 0;

  static constexpr ProgramCounter start() { return {Kind::Start, 0}; }
  static constexpr ProgramCounter exit() { return {Kind::Exit, 0}; }
  static constexpr ProgramCounter bottom() { return {Kind::Bottom, 0}; }
  static constexpr ProgramCounter at(std::size_t i) { return {Kind::Node, i}; }

  std::string to_string() const {
    switch (kind) {
      case Kind::Start: return "Start";
      case Kind::Exit: return "Exit";
      case Kind::Bottom: return "Bottom";
      case Kind::Node: return "Node(" + std::to_string(node) + ")";
    }
    return "?";
  }

  friend bool operator==(const ProgramCounter&, const ProgramCounter&) = default;
};

/// Instruction budget for one call of execute; nullopt means unbounded.
using StepBudget = std::optional<std::uint64_t>;
inline constexpr StepBudget kUnbounded = std::nullopt;

/// Hard cap for unbounded execution.
inline constexpr std::uint64_t kDefaultDivergenceCap = 1'000'000;

namespace detail {

class CfgCompiler {
 public:
  CfgCompiler(const std::vector<ModuleDef>& modules, const Schema& schema) : modules_(modules), schema_(schema) {}

  InstrSeq run(const Stmt& body) {
    emit(body, nullptr);
    return std::move(seq_);
  }

 private:
  std::size_t here() const { return seq_.instrs.size(); }

  void emit(const Stmt& s, const ModuleDef* within) {
    switch (s.kind) {
      case Stmt::Kind::Skip: seq_.instrs.push_back({Instr::Op::Nop, 0, 0, {}, "skip"}); break;
      case Stmt::Kind::Assign: {
        if (is_reserved_name(s.name)) throw ModelError("assignment to reserved variable '" + s.name + "'");
        if (within) {
          const auto& outs = within->outputs;
          if (std::find(outs.begin(), outs.end(), s.name) == outs.end()) {
            throw ModelError("module '" + within->name + "' writes '" + s.name + "' outside its out set");
          }
        }
        Instr in{Instr::Op::Assign, schema_.slot(s.name), 0, Rpn::compile(s.expr, schema_),
                 s.name + " := " + to_string(s.expr)};
        seq_.instrs.push_back(std::move(in));
        break;
      }
      case Stmt::Kind::Seq:
        emit(s.body[0], within);
        emit(s.body[1], within);
        break;
      case Stmt::Kind::If: {
        const std::size_t branch = here();
        seq_.instrs.push_back({Instr::Op::JumpIfFalse, 0, 0, Rpn::compile(s.cond, schema_), to_string(s.cond)});
        emit(s.body[0], within);
        const std::size_t skip_else = here();
        seq_.instrs.push_back({Instr::Op::Jump, 0, 0, {}, ""});
        seq_.instrs[branch].target = here();
        emit(s.body[1], within);
        seq_.instrs[skip_else].target = here();
        break;
      }
      case Stmt::Kind::While: {
        const std::size_t top = here();
        seq_.instrs.push_back({Instr::Op::JumpIfFalse, 0, 0, Rpn::compile(s.cond, schema_), to_string(s.cond)});
        emit(s.body[0], within);
        seq_.instrs.push_back({Instr::Op::Jump, 0, top, {}, ""});
        seq_.instrs[top].target = here();
        break;
      }
      case Stmt::Kind::Call: {
        const ModuleDef* m = find(s.name);
        if (!m) throw ModelError("call to unknown module '" + s.name + "'");
        if (std::find(active_.begin(), active_.end(), s.name) != active_.end()) {
          throw ModelError("recursive module call through '" + s.name + "'");
        }
        active_.push_back(s.name);
        emit(m->body.body, m);
        active_.pop_back();
        break;
      }
    }
  }

  const ModuleDef* find(const std::string& name) const {
    for (const auto& m : modules_) {
      if (m.name == name) return &m;
    }
    return nullptr;
  }

  const std::vector<ModuleDef>& modules_;
  const Schema& schema_;
  InstrSeq seq_;
  std::vector<std::string> active_;
};

}  // namespace detail

/// Compiles a CFG to linear code, inlining module calls.
///
/// While loops become a JumpIfFalse over the body plus a back Jump; If
/// becomes a JumpIfFalse / Jump diamond. Throws ModelError on unknown or
/// recursive modules, writes to reserved variables, and module writes
/// outside the out set; EvalError on unknown variables.
inline InstrSeq compile(const Cfg& cfg, const std::vector<ModuleDef>& modules, const Schema& schema) {
  return detail::CfgCompiler(modules, schema).run(cfg.body);
}

/// Runs compiled code from `pc` for at most `budget` instructions.
///
/// Every instruction costs one step. Returns Exit when the end is reached,
/// otherwise Node(i) for the next unexecuted instruction. `ts` is never
/// written here. Unbounded runs trap after `divergence_cap` steps.
inline std::pair<ProgramCounter, State> execute(const InstrSeq& code, ProgramCounter pc, State sigma,
                                                StepBudget budget,
                                                std::uint64_t divergence_cap = kDefaultDivergenceCap) {
  if (budget && *budget == 0) throw std::invalid_argument("step budget must be positive");
  std::size_t i = 0;
  switch (pc.kind) {
    case ProgramCounter::Kind::Bottom: throw std::invalid_argument("execute called with pc = Bottom");
    case ProgramCounter::Kind::Exit: return {ProgramCounter::exit(), std::move(sigma)};
    case ProgramCounter::Kind::Start: i = 0; break;
    case ProgramCounter::Kind::Node:
      if (pc.node >= code.size()) throw std::invalid_argument("pc outside instruction sequence");
      i = pc.node;
      break;
  }
  const std::uint64_t limit = budget ? *budget : divergence_cap;
  std::uint64_t steps = 0;
  auto slots = sigma.values();
  while (i < code.size()) {
    if (steps == limit) {
      if (budget) return {ProgramCounter::at(i), std::move(sigma)};
      throw ExecError(i, "divergence: no exit after " + std::to_string(divergence_cap) + " steps");
    }
    const Instr& in = code.instrs[i];
    try {
      switch (in.op) {
        case Instr::Op::Nop: ++i; break;
        case Instr::Op::Assign:
          slots[in.slot] = in.code.eval(slots);
          ++i;
          break;
        case Instr::Op::Jump: i = in.target; break;
        case Instr::Op::JumpIfFalse: i = in.code.test(slots) ? i + 1 : in.target; break;
      }
    } catch (const EvalError& e) {
      throw ExecError(i, e.what());
    }
    ++steps;
  }
  return {ProgramCounter::exit(), std::move(sigma)};
}

/// One instruction per line: `index: OPCODE operands`.
inline std::string disassemble(const InstrSeq& code) {
  std::ostringstream out;
  for (std::size_t i = 0; i < code.size(); ++i) {
    const Instr& in = code.instrs[i];
    out << i << ": ";
    switch (in.op) {
      case Instr::Op::Nop: out << "NOP"; break;
      case Instr::Op::Assign: out << "ASSIGN " << in.text; break;
      case Instr::Op::Jump: out << "JUMP " << in.target; break;
      case Instr::Op::JumpIfFalse: out << "JUMP_IF_FALSE " << in.text << " -> " << in.target; break;
    }
    out << '\n';
  }
  out << code.exit() << ": EXIT\n";
  return out.str();
}

}  // namespace mdm
