#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mdm/error.hpp"
#include "mdm/expr.hpp"
#include "mdm/model.hpp"

namespace mdm {

namespace detail {

struct Token {
  enum class Kind { Ident, Number, Punct, End };
  Kind kind = Kind::End;
  std::string text;
  double number = 0.0;
  SourceSpan span;
};

inline bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

/// Splits UTF-8 text into tokens. `#` starts a comment running to end of line.
/// Two-character operators are matched before single characters.
inline std::vector<Token> tokenize(std::string_view text, const std::string& file) {
  static constexpr std::array<std::string_view, 11> two = {":=", "!=", "<=", ">=", "&&", "||",
                                                          "->", "/\\", "\\/", "[]", "<>"};
  static constexpr std::string_view one = "{}()[],;=<>+-*/!:~";
  std::vector<Token> out;
  int line = 1;
  int col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k, ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < text.size()) {
    const char c = text[i];
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      advance(1);
      continue;
    }
    if (c == '#') {
      while (i < text.size() && text[i] != '\n') advance(1);
      continue;
    }
    Token tok;
    tok.span = {file, line, col};
    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < text.size() && is_ident_char(text[j])) ++j;
      tok.kind = Token::Kind::Ident;
      tok.text = std::string(text.substr(i, j - i));
      advance(j - i);
    } else if (is_digit(c)) {
      std::size_t j = i;
      while (j < text.size() && is_digit(text[j])) ++j;
      if (j < text.size() && text[j] == '.') {
        ++j;
        while (j < text.size() && is_digit(text[j])) ++j;
      }
      if (j < text.size() && (text[j] == 'e' || text[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < text.size() && (text[k] == '+' || text[k] == '-')) ++k;
        if (k < text.size() && is_digit(text[k])) {
          while (k < text.size() && is_digit(text[k])) ++k;
          j = k;
        }
      }
      tok.kind = Token::Kind::Number;
      tok.text = std::string(text.substr(i, j - i));
      auto [ptr, ec] = std::from_chars(text.data() + i, text.data() + j, tok.number);
      if (ec != std::errc() || !std::isfinite(tok.number)) {
        throw ParseError(tok.span, "malformed number '" + tok.text + "'");
      }
      advance(j - i);
    } else {
      std::string_view rest = text.substr(i);
      bool matched = false;
      for (auto op : two) {
        if (rest.starts_with(op)) {
          tok.kind = Token::Kind::Punct;
          tok.text = std::string(op);
          advance(op.size());
          matched = true;
          break;
        }
      }
      if (!matched) {
        if (one.find(c) == std::string_view::npos) {
          throw ParseError(tok.span, std::string("unexpected character '") + c + "'");
        }
        tok.kind = Token::Kind::Punct;
        tok.text = std::string(1, c);
        advance(1);
      }
    }
    out.push_back(std::move(tok));
  }
  Token end;
  end.span = {file, line, col};
  out.push_back(std::move(end));
  return out;
}

inline const std::set<std::string, std::less<>>& model_keywords() {
  static const std::set<std::string, std::less<>> kw = {
      "var",  "sensor", "in",   "mode", "period", "initial", "code", "cfg",   "on",   "priority", "goto",
      "module", "out", "call", "skip", "if",     "then",    "else", "while", "do",   "true",     "false",
      "after", "duration"};
  return kw;
}

/// Token stream with lookahead and backtracking. Shared by the model and
/// property parsers.
class TokenCursor {
 public:
  TokenCursor(std::string_view text, std::string file) : tokens_(tokenize(text, file)) {}

  const Token& peek(std::size_t ahead = 0) const {
    return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
  }
  bool at_end() const { return peek().kind == Token::Kind::End; }

  bool is_punct(std::string_view p, std::size_t ahead = 0) const {
    const auto& t = peek(ahead);
    return t.kind == Token::Kind::Punct && t.text == p;
  }
  bool is_keyword(std::string_view k, std::size_t ahead = 0) const {
    const auto& t = peek(ahead);
    return t.kind == Token::Kind::Ident && t.text == k;
  }

  bool accept_punct(std::string_view p) {
    if (!is_punct(p)) return false;
    ++pos_;
    return true;
  }
  bool accept_keyword(std::string_view k) {
    if (!is_keyword(k)) return false;
    ++pos_;
    return true;
  }

  const Token& next() {
    const Token& t = peek();
    if (pos_ < tokens_.size() - 1) ++pos_;
    return t;
  }

  void expect_punct(std::string_view p) {
    if (!accept_punct(p)) fail("expected '" + std::string(p) + "'");
  }
  void expect_keyword(std::string_view k) {
    if (!accept_keyword(k)) fail("expected '" + std::string(k) + "'");
  }

  std::string expect_ident(const std::set<std::string, std::less<>>& reserved) {
    const auto& t = peek();
    if (t.kind != Token::Kind::Ident) fail("expected identifier");
    if (reserved.count(t.text)) fail("'" + t.text + "' is a keyword");
    return next().text;
  }

  double expect_number() {
    bool neg = accept_punct("-");
    const auto& t = peek();
    if (t.kind != Token::Kind::Number) fail("expected number");
    double v = next().number;
    return neg ? -v : v;
  }

  std::int64_t expect_integer() {
    const SourceSpan span = peek().span;
    double v = expect_number();
    if (v != std::floor(v) || std::fabs(v) > 9.0e15) throw ParseError(span, "expected integer");
    return static_cast<std::int64_t>(v);
  }

  [[noreturn]] void fail(const std::string& msg) const {
    const auto& t = peek();
    std::string found = t.kind == Token::Kind::End ? "end of input" : "'" + t.text + "'";
    throw ParseError(t.span, msg + ", found " + found);
  }

  std::size_t mark() const { return pos_; }
  void reset(std::size_t m) { pos_ = m; }

 private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

inline std::optional<CmpOp> cmp_from_token(const Token& t) {
  if (t.kind != Token::Kind::Punct) return std::nullopt;
  if (t.text == "=") return CmpOp::Eq;
  if (t.text == "!=") return CmpOp::Ne;
  if (t.text == "<") return CmpOp::Lt;
  if (t.text == "<=") return CmpOp::Le;
  if (t.text == ">") return CmpOp::Gt;
  if (t.text == ">=") return CmpOp::Ge;
  return std::nullopt;
}

inline bool is_arith_punct(const Token& t) {
  return t.kind == Token::Kind::Punct && (t.text == "+" || t.text == "-" || t.text == "*" || t.text == "/");
}

/// Arithmetic grammar shared by state expressions and ITL terms:
///   additive := unary (('+' | '-') unary)*   ... with '*' '/' binding tighter
///   unary    := '-' NUMBER | '-' unary | primary
///   primary  := NUMBER | IDENT | IDENT '(' args ')' | '(' additive ')'
class ArithParser {
 public:
  ArithParser(TokenCursor& cur, const std::set<std::string, std::less<>>& reserved)
      : cur_(cur), reserved_(reserved) {}

  SExpr additive() {
    SExpr lhs = multiplicative();
    while (cur_.is_punct("+") || cur_.is_punct("-")) {
      Fn fn = cur_.next().text == "+" ? Fn::Add : Fn::Sub;
      lhs = SExpr::apply(fn, {std::move(lhs), multiplicative()});
    }
    return lhs;
  }

 private:
  SExpr multiplicative() {
    SExpr lhs = unary();
    while (cur_.is_punct("*") || cur_.is_punct("/")) {
      Fn fn = cur_.next().text == "*" ? Fn::Mul : Fn::Div;
      lhs = SExpr::apply(fn, {std::move(lhs), unary()});
    }
    return lhs;
  }

  SExpr unary() {
    if (cur_.is_punct("-")) {
      if (cur_.peek(1).kind == Token::Kind::Number) {
        cur_.next();
        return SExpr::constant(-cur_.next().number);
      }
      cur_.next();
      return SExpr::apply(Fn::Sub, {unary()});
    }
    return primary();
  }

  SExpr primary() {
    const Token& t = cur_.peek();
    if (t.kind == Token::Kind::Number) return SExpr::constant(cur_.next().number);
    if (cur_.accept_punct("(")) {
      SExpr e = additive();
      cur_.expect_punct(")");
      return e;
    }
    if (t.kind == Token::Kind::Ident && cur_.is_punct("(", 1)) {
      const SourceSpan span = t.span;
      const std::string name = cur_.next().text;
      auto fn = function_by_name(name);
      if (!fn) throw ParseError(span, "unknown function '" + name + "'");
      cur_.expect_punct("(");
      std::vector<SExpr> args;
      if (!cur_.is_punct(")")) {
        args.push_back(additive());
        while (cur_.accept_punct(",")) args.push_back(additive());
      }
      cur_.expect_punct(")");
      if (!arity_ok(*fn, args.size())) {
        throw ParseError(span, "arity mismatch: '" + name + "' expects " +
                                   std::to_string(function_info(*fn).min_arity) + " argument(s), got " +
                                   std::to_string(args.size()));
      }
      return SExpr::apply(*fn, std::move(args));
    }
    if (t.kind == Token::Kind::Ident) return SExpr::var(cur_.expect_ident(reserved_));
    cur_.fail("expected expression");
  }

  TokenCursor& cur_;
  const std::set<std::string, std::less<>>& reserved_;
};

/// Recursive-descent parser for `.mdm` text.
class ModelParser {
 public:
  ModelParser(std::string_view text, std::string file) : cur_(text, std::move(file)) {}

  ModelDef model() {
    ModelDef md;
    std::set<std::string> mode_names, module_names, var_names;
    std::vector<bool> explicit_codes;
    while (!cur_.at_end()) {
      if (cur_.accept_punct(";")) continue;
      const SourceSpan span = cur_.peek().span;
      if (cur_.is_keyword("var") || cur_.is_keyword("sensor")) {
        VarDecl v = var_decl();
        if (!var_names.insert(v.name).second) throw ParseError(span, "duplicate variable name '" + v.name + "'");
        md.vars.push_back(std::move(v));
      } else if (cur_.is_keyword("mode")) {
        bool explicit_code = false;
        md.top_modes.push_back(mode(mode_names, explicit_code));
        explicit_codes.push_back(explicit_code);
      } else if (cur_.is_keyword("module")) {
        ModuleDef m = module();
        if (!module_names.insert(m.name).second)
          throw ParseError(span, "duplicate module name '" + m.name + "'");
        md.modules.push_back(std::move(m));
      } else {
        cur_.fail("expected 'var', 'mode' or 'module'");
      }
    }
    if (md.top_modes.empty()) throw ParseError(cur_.peek().span, "expected at least one mode");
    assign_default_codes(md.top_modes, explicit_codes);
    return md;
  }

  BoolExpr guard_only() {
    BoolExpr g = boolean(true);
    if (!cur_.at_end()) cur_.fail("unexpected trailing input");
    return g;
  }

  SExpr sexpr_only() {
    SExpr e = arith();
    if (!cur_.at_end()) cur_.fail("unexpected trailing input");
    return e;
  }

  Stmt stmts_only() {
    Stmt s = stmts();
    if (!cur_.at_end()) cur_.fail("unexpected trailing input");
    return s;
  }

 private:
  SExpr arith() { return ArithParser(cur_, model_keywords()).additive(); }

  std::string ident() { return cur_.expect_ident(model_keywords()); }

  VarDecl var_decl() {
    VarDecl v;
    v.span = cur_.peek().span;
    v.sensor = cur_.accept_keyword("sensor");
    cur_.expect_keyword("var");
    v.name = ident();
    if (cur_.accept_keyword("in")) {
      cur_.expect_punct("[");
      v.lo = cur_.expect_number();
      cur_.expect_punct(",");
      v.hi = cur_.expect_number();
      cur_.expect_punct("]");
    }
    cur_.expect_punct(";");
    return v;
  }

  Mode mode(std::set<std::string>& names, bool& explicit_code) {
    Mode m;
    m.span = cur_.peek().span;
    cur_.expect_keyword("mode");
    const SourceSpan name_span = cur_.peek().span;
    m.name = ident();
    if (!names.insert(m.name).second) throw ParseError(name_span, "duplicate mode name '" + m.name + "'");
    cur_.expect_punct("{");
    bool has_period = false;
    std::vector<bool> child_explicit;
    while (!cur_.accept_punct("}")) {
      if (cur_.accept_punct(";")) continue;
      const SourceSpan span = cur_.peek().span;
      if (cur_.accept_keyword("period")) {
        m.period = cur_.expect_integer();
        has_period = true;
      } else if (cur_.accept_keyword("initial")) {
        m.initial = true;
      } else if (cur_.accept_keyword("code")) {
        m.code = cur_.expect_integer();
        explicit_code = true;
      } else if (cur_.accept_keyword("cfg")) {
        if (m.cfg) throw ParseError(span, "mode '" + m.name + "' has more than one cfg");
        cur_.expect_punct("{");
        m.cfg = Cfg{stmts()};
        cur_.expect_punct("}");
      } else if (cur_.is_keyword("mode")) {
        bool child = false;
        m.submodes.push_back(mode(names, child));
        child_explicit.push_back(child);
      } else if (cur_.accept_keyword("on")) {
        Transition t;
        t.span = span;
        t.source = m.name;
        t.guard = boolean(true);
        cur_.expect_keyword("priority");
        t.priority = cur_.expect_integer();
        cur_.expect_keyword("goto");
        t.target = ident();
        m.transitions.push_back(std::move(t));
      } else if (cur_.at_end()) {
        cur_.fail("expected '}'");
      } else {
        cur_.fail("expected mode item");
      }
    }
    if (!has_period) throw ParseError(m.span, "mode '" + m.name + "' has no period");
    if (m.cfg && !m.submodes.empty())
      throw ParseError(m.span, "mode '" + m.name + "' has both a cfg and sub-modes");
    if (!m.cfg && m.submodes.empty())
      throw ParseError(m.span, "mode '" + m.name + "' needs a cfg or at least one sub-mode");
    assign_default_codes(m.submodes, child_explicit);
    return m;
  }

  // Modes without a `code` item get their index among siblings.
  static void assign_default_codes(std::vector<Mode>& siblings, const std::vector<bool>& explicit_code) {
    for (std::size_t i = 0; i < siblings.size(); ++i) {
      if (!explicit_code[i]) siblings[i].code = static_cast<std::int64_t>(i);
    }
  }

  ModuleDef module() {
    ModuleDef m;
    m.span = cur_.peek().span;
    cur_.expect_keyword("module");
    m.name = ident();
    cur_.expect_punct("(");
    cur_.expect_keyword("in");
    cur_.expect_punct(":");
    m.inputs = ident_list();
    cur_.expect_punct(";");
    cur_.expect_keyword("out");
    cur_.expect_punct(":");
    m.outputs = ident_list();
    cur_.expect_punct(")");
    cur_.expect_punct("{");
    m.body = Cfg{stmts()};
    cur_.expect_punct("}");
    return m;
  }

  std::vector<std::string> ident_list() {
    std::vector<std::string> out;
    if (cur_.peek().kind != Token::Kind::Ident || model_keywords().count(cur_.peek().text)) return out;
    out.push_back(ident());
    while (cur_.accept_punct(",")) out.push_back(ident());
    return out;
  }

  // stmts := stmt (';' stmt)* [';']
  Stmt stmts() {
    Stmt first = stmt();
    if (cur_.accept_punct(";")) {
      if (cur_.is_punct("}") || cur_.at_end()) return first;
      return Stmt::seq(std::move(first), stmts());
    }
    return first;
  }

  Stmt stmt() {
    if (cur_.accept_keyword("skip")) return Stmt::skip();
    if (cur_.accept_keyword("call")) return Stmt::call(ident());
    if (cur_.accept_punct("{")) {
      Stmt s = stmts();
      cur_.expect_punct("}");
      return s;
    }
    if (cur_.accept_keyword("if")) {
      BoolExpr c = boolean(false);
      cur_.expect_keyword("then");
      Stmt t = block();
      Stmt e = Stmt::skip();
      if (cur_.accept_keyword("else")) e = block();
      return Stmt::branch(std::move(c), std::move(t), std::move(e));
    }
    if (cur_.accept_keyword("while")) {
      BoolExpr c = boolean(false);
      cur_.expect_keyword("do");
      return Stmt::loop(std::move(c), block());
    }
    if (cur_.peek().kind == Token::Kind::Ident) {
      std::string var = ident();
      cur_.expect_punct(":=");
      return Stmt::assign(std::move(var), arith());
    }
    cur_.fail("expected statement");
  }

  Stmt block() {
    cur_.expect_punct("{");
    Stmt s = stmts();
    cur_.expect_punct("}");
    return s;
  }

  // Boolean grammar; `allow_interval` is false inside CFG conditions and
  // inside the condition argument of after/duration.
  BoolExpr boolean(bool allow_interval) {
    BoolExpr lhs = conjunction(allow_interval);
    while (cur_.accept_punct("||")) lhs = BoolExpr::disj(std::move(lhs), conjunction(allow_interval));
    return lhs;
  }

  BoolExpr conjunction(bool allow_interval) {
    BoolExpr lhs = negation(allow_interval);
    while (cur_.accept_punct("&&")) lhs = BoolExpr::conj(std::move(lhs), negation(allow_interval));
    return lhs;
  }

  BoolExpr negation(bool allow_interval) {
    if (cur_.accept_punct("!")) return BoolExpr::negate(negation(allow_interval));
    return bool_atom(allow_interval);
  }

  BoolExpr bool_atom(bool allow_interval) {
    if (cur_.accept_keyword("true")) return BoolExpr::truth(true);
    if (cur_.accept_keyword("false")) return BoolExpr::truth(false);
    if (cur_.is_keyword("after") || cur_.is_keyword("duration")) {
      const SourceSpan span = cur_.peek().span;
      if (!allow_interval) throw ParseError(span, "interval expression inside pure boolean");
      const bool after = cur_.next().text == "after";
      cur_.expect_punct("(");
      BoolExpr cond = boolean(false);
      cur_.expect_punct(",");
      SExpr len = arith();
      cur_.expect_punct(")");
      return after ? BoolExpr::after(std::move(cond), std::move(len))
                   : BoolExpr::duration(std::move(cond), std::move(len));
    }
    if (cur_.is_punct("(")) {
      const auto m = cur_.mark();
      try {
        cur_.next();
        BoolExpr inner = boolean(allow_interval);
        cur_.expect_punct(")");
        if (!cmp_from_token(cur_.peek()) && !is_arith_punct(cur_.peek())) return inner;
      } catch (const ParseError& e) {
        // An interval misuse is never fixed by reading the parenthesis as arithmetic.
        if (e.message().starts_with("interval expression")) throw;
      }
      cur_.reset(m);
    }
    SExpr lhs = arith();
    auto op = cmp_from_token(cur_.peek());
    if (!op) cur_.fail("expected comparison operator");
    cur_.next();
    SExpr rhs = arith();
    return BoolExpr::cmp(*op, std::move(lhs), std::move(rhs));
  }

  TokenCursor cur_;
};

}  // namespace detail

/// Parses a complete `.mdm` model. `file` only labels diagnostics.
inline ModelDef parse_model(std::string_view text, const std::string& file = "") {
  return detail::ModelParser(text, file).model();
}

/// Parses a transition guard. `after`/`duration` may not nest inside the
/// condition argument of another interval expression.
inline Guard parse_guard(std::string_view text) { return detail::ModelParser(text, "").guard_only(); }

inline SExpr parse_sexpr(std::string_view text) { return detail::ModelParser(text, "").sexpr_only(); }

/// Parses a statement sequence as it appears inside `cfg { ... }`.
inline Stmt parse_stmts(std::string_view text) { return detail::ModelParser(text, "").stmts_only(); }

namespace detail {

class Printer {
 public:
  std::string model(const ModelDef& md) {
    for (const auto& v : md.vars) {
      if (v.sensor) out_ << "sensor ";
      out_ << "var " << v.name << " in [" << format_number(v.lo) << ", " << format_number(v.hi) << "];\n";
    }
    if (!md.vars.empty()) out_ << "\n";
    for (const auto& m : md.modules) {
      module(m);
      out_ << "\n";
    }
    for (std::size_t i = 0; i < md.top_modes.size(); ++i) {
      if (i) out_ << "\n";
      mode(md.top_modes[i], i, 0);
    }
    return out_.str();
  }

  std::string stmts(const Stmt& s, int depth) {
    stmt(s, depth);
    out_ << "\n";
    return out_.str();
  }

 private:
  void indent(int depth) {
    for (int i = 0; i < depth; ++i) out_ << "  ";
  }

  void module(const ModuleDef& m) {
    out_ << "module " << m.name << " (in: " << join(m.inputs) << "; out: " << join(m.outputs) << ") {\n";
    stmt(m.body.body, 1);
    out_ << "\n}\n";
  }

  static std::string join(const std::vector<std::string>& xs) {
    std::string r;
    for (std::size_t i = 0; i < xs.size(); ++i) r += (i ? ", " : "") + xs[i];
    return r;
  }

  void mode(const Mode& m, std::size_t index, int depth) {
    indent(depth);
    out_ << "mode " << m.name << " {\n";
    indent(depth + 1);
    out_ << "period " << m.period << ";\n";
    if (m.initial) {
      indent(depth + 1);
      out_ << "initial;\n";
    }
    if (m.code != static_cast<std::int64_t>(index)) {
      indent(depth + 1);
      out_ << "code " << m.code << ";\n";
    }
    if (m.cfg) {
      indent(depth + 1);
      out_ << "cfg {\n";
      stmt(m.cfg->body, depth + 2);
      out_ << "\n";
      indent(depth + 1);
      out_ << "}\n";
    }
    for (std::size_t i = 0; i < m.submodes.size(); ++i) mode(m.submodes[i], i, depth + 1);
    for (const auto& t : m.transitions) {
      indent(depth + 1);
      out_ << "on " << to_string(t.guard) << " priority " << t.priority << " goto " << t.target << ";\n";
    }
    indent(depth);
    out_ << "}\n";
  }

  // Prints without a trailing newline. A left operand that is itself a
  // sequence is braced so the right-nested shape survives re-parsing.
  void stmt(const Stmt& s, int depth) {
    switch (s.kind) {
      case Stmt::Kind::Assign:
        indent(depth);
        out_ << s.name << " := " << to_string(s.expr);
        break;
      case Stmt::Kind::Call:
        indent(depth);
        out_ << "call " << s.name;
        break;
      case Stmt::Kind::Skip:
        indent(depth);
        out_ << "skip";
        break;
      case Stmt::Kind::Seq:
        if (s.body[0].kind == Stmt::Kind::Seq) {
          indent(depth);
          out_ << "{\n";
          stmt(s.body[0], depth + 1);
          out_ << "\n";
          indent(depth);
          out_ << "}";
        } else {
          stmt(s.body[0], depth);
        }
        out_ << ";\n";
        stmt(s.body[1], depth);
        break;
      case Stmt::Kind::While:
        indent(depth);
        out_ << "while " << to_string(s.cond) << " do ";
        block(s.body[0], depth);
        break;
      case Stmt::Kind::If:
        indent(depth);
        out_ << "if " << to_string(s.cond) << " then ";
        block(s.body[0], depth);
        out_ << " else ";
        block(s.body[1], depth);
        break;
    }
  }

  void block(const Stmt& s, int depth) {
    out_ << "{\n";
    stmt(s, depth + 1);
    out_ << "\n";
    indent(depth);
    out_ << "}";
  }

  std::ostringstream out_;
};

}  // namespace detail

/// Canonical text for a model; parse_model(pretty_print(md)) == md.
inline std::string pretty_print(const ModelDef& md) { return detail::Printer().model(md); }

inline std::string pretty_print(const Stmt& s) { return detail::Printer().stmts(s, 0); }

}  // namespace mdm
