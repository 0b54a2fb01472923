#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "mdm/model.hpp"
#include "mdm/parser.hpp"
#include "support/generators.hpp"

using namespace mdm;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ParseError parse_error(std::string_view text) {
  try {
    parse_model(text, "t.mdm");
  } catch (const ParseError& e) {
    return e;
  }
  ADD_FAILURE() << "no error for: " << text;
  return ParseError({}, "");
}

}  // namespace

TEST(Parser, SingleLeafMode) {
  const auto md = parse_model("var x in [0, 1];\nmode M { period 10; initial; cfg { x := x + 1 } }");
  ASSERT_EQ(md.top_modes.size(), 1u);
  const Mode& m = md.top_modes[0];
  EXPECT_EQ(m.name, "M");
  EXPECT_EQ(m.period, 10);
  EXPECT_TRUE(m.initial);
  ASSERT_TRUE(m.cfg.has_value());
  EXPECT_EQ(m.cfg->body, Stmt::assign("x", parse_sexpr("x + 1")));
  ASSERT_EQ(md.vars.size(), 1u);
  EXPECT_EQ(md.vars[0].lo, 0);
  EXPECT_EQ(md.vars[0].hi, 1);
}

TEST(Parser, EmptyInputNeedsAMode) {
  const auto e = parse_error("");
  EXPECT_EQ(e.message(), "expected at least one mode");
  EXPECT_EQ(parse_error("var x in [0, 1];").message(), "expected at least one mode");
}

TEST(Parser, IntervalGuards) {
  const auto d = parse_guard("duration(x > 0, 40)");
  EXPECT_EQ(d.kind, BoolExpr::Kind::Duration);
  EXPECT_EQ(d.subs[0], parse_guard("x > 0"));
  EXPECT_EQ(d.terms[0], SExpr::constant(40));

  const auto a = parse_guard("after(gm = 2, 10) && SK12 = 10");
  EXPECT_EQ(a.kind, BoolExpr::Kind::And);
  EXPECT_EQ(a.subs[0].kind, BoolExpr::Kind::After);
}

TEST(Parser, NestedIntervalIsRejected) {
  try {
    parse_guard("duration(after(x > 0, 1), 2)");
    FAIL() << "nested interval accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.message(), "interval expression inside pure boolean");
  }
  // Cfg conditions are pure as well.
  const auto e = parse_error("var x in [0, 1];\nmode M { period 1; initial; cfg { if after(x > 0, 1) then { skip } else { skip } } }");
  EXPECT_EQ(e.message(), "interval expression inside pure boolean");
}

TEST(Parser, OperatorPrecedence) {
  EXPECT_EQ(parse_sexpr("1 + 2 * 3"), SExpr::apply(Fn::Add, {SExpr::constant(1), SExpr::apply(Fn::Mul, {SExpr::constant(2), SExpr::constant(3)})}));
  EXPECT_EQ(parse_sexpr("1 - 2 - 3"), parse_sexpr("(1 - 2) - 3"));
  EXPECT_EQ(parse_guard("a > 0 || b > 0 && c > 0"), parse_guard("a > 0 || (b > 0 && c > 0)"));
  EXPECT_EQ(parse_sexpr("sqrt(0.01)"), SExpr::apply(Fn::Sqrt, {SExpr::constant(0.01)}));
}

TEST(Parser, ErrorsCarryPositions) {
  const auto e = parse_error("var x in [0, 1];\nmode M {\n  period 1; initial;\n  cfg { x := }\n}");
  EXPECT_EQ(e.span().file, "t.mdm");
  EXPECT_EQ(e.span().line, 4);
  EXPECT_EQ(e.span().column, 14);
  EXPECT_NE(std::string(e.what()).find("t.mdm:4:14"), std::string::npos);
}

TEST(Parser, ErrorSpansStayInsideTheInput) {
  const std::vector<std::string> bad = {
      "mode",
      "mode M {",
      "mode M { period 1; }",
      "mode M { period x; initial; cfg { skip } }",
      "var x in [0, ];",
      "mode M { period 1; initial; cfg { skip } on x priority 1 goto M; }",
      "mode M { period 1; initial; cfg { while x do skip } }",
      "mode M { period 1; initial; cfg { y := 1 $ } }",
      "mode M { period 1; initial; cfg { skip } } trailing",
      "mode M { period 1; initial; cfg { x := foo(1) } }",
      "mode M { period 1; initial; cfg { x := sqrt(1, 2) } }",
      "mode M { period 1.5; initial; cfg { skip } }",
  };
  for (const auto& text : bad) {
    const auto e = parse_error(text);
    int lines = 1;
    for (char c : text) lines += c == '\n';
    EXPECT_GE(e.span().line, 1) << text;
    EXPECT_LE(e.span().line, lines) << text;
    EXPECT_GE(e.span().column, 1) << text;
    EXPECT_LE(e.span().column, static_cast<int>(text.size()) + 1) << text;
  }
}

TEST(Parser, StructuralErrors) {
  EXPECT_EQ(parse_error("mode M { initial; cfg { skip } }").message(), "mode 'M' has no period");
  EXPECT_EQ(parse_error("mode M { period 1; initial; cfg { skip } mode N { period 1; cfg { skip } } }").message(),
            "mode 'M' has both a cfg and sub-modes");
  EXPECT_EQ(parse_error("mode M { period 1; initial; }").message(), "mode 'M' needs a cfg or at least one sub-mode");
  EXPECT_EQ(parse_error("var x in [0, 1];\nvar x in [0, 1];\nmode M { period 1; initial; cfg { skip } }").message(),
            "duplicate variable name 'x'");
}

TEST(Printer, NestedModes) {
  const auto md = parse_model(R"(
sensor var s in [0, 1];
var x in [-1, 2.5];
module bump (in: s; out: x) { x := x + s }
mode top { period 4; initial;
  mode a { period 2; initial; cfg { call bump } on duration(x > 1, 4) priority 2 goto b; }
  mode b { period 2; code 7; cfg { skip } }
  on after(s = 1, 8) priority 1 goto other;
}
mode other { period 4; cfg { x := 0 } }
)");
  const std::string want =
      "sensor var s in [0, 1];\n"
      "var x in [-1, 2.5];\n"
      "\n"
      "module bump (in: s; out: x) {\n"
      "  x := x + s\n"
      "}\n"
      "\n"
      "mode top {\n"
      "  period 4;\n"
      "  initial;\n"
      "  mode a {\n"
      "    period 2;\n"
      "    initial;\n"
      "    cfg {\n"
      "      call bump\n"
      "    }\n"
      "    on duration(x > 1, 4) priority 2 goto b;\n"
      "  }\n"
      "  mode b {\n"
      "    period 2;\n"
      "    code 7;\n"
      "    cfg {\n"
      "      skip\n"
      "    }\n"
      "  }\n"
      "  on after(s = 1, 8) priority 1 goto other;\n"
      "}\n"
      "\n"
      "mode other {\n"
      "  period 4;\n"
      "  cfg {\n"
      "    x := 0\n"
      "  }\n"
      "}\n";
  EXPECT_EQ(pretty_print(md), want);
  EXPECT_EQ(parse_model(want), md);
}

TEST(Printer, AllStatementForms) {
  const auto s = parse_stmts(
      "skip; x := 1; call m; { a := 1; b := 2 }; "
      "while k < 3 do { k := k + 1 }; if x > 0 then { y := 1 } else { skip }");
  const std::string want =
      "skip;\n"
      "x := 1;\n"
      "call m;\n"
      "{\n"
      "  a := 1;\n"
      "  b := 2\n"
      "};\n"
      "while k < 3 do {\n"
      "  k := k + 1\n"
      "};\n"
      "if x > 0 then {\n"
      "  y := 1\n"
      "} else {\n"
      "  skip\n"
      "}\n";
  EXPECT_EQ(pretty_print(s), want);
  EXPECT_EQ(parse_stmts(want), s);
}

TEST(Printer, SamplesRoundTrip) {
  for (const char* name : {"spacecraft", "thermostat", "two_modes", "counter", "bernoulli", "divergent"}) {
    const auto path = std::string(MDM_SOURCE_DIR) + "/samples/" + name + ".mdm";
    const auto md = parse_model(slurp(path), path);
    const auto text = pretty_print(md);
    EXPECT_EQ(parse_model(text), md) << name;
    EXPECT_EQ(pretty_print(parse_model(text)), text) << name;
  }
}

TEST(Printer, GeneratedProgramsRoundTrip) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    gen::Random r(seed);
    const auto p = gen::program(r, 3, 4);
    const auto text = pretty_print(p.body);
    EXPECT_EQ(parse_stmts(text), p.body) << text;
  }
}
