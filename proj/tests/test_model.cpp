#include <gtest/gtest.h>

#include <functional>

#include "mdm/model.hpp"
#include "mdm/parser.hpp"
#include "support/generators.hpp"

using namespace mdm;

namespace {

const char* kChain = R"(
var x in [0, 1];
mode a {
  period 8; initial;
  mode b {
    period 4; initial;
    mode c { period 2; initial; cfg { skip } }
  }
}
)";

const char* kPlant = R"(
var gm in [0, 0];
var SK12 in [0, 0];
mode m0 { period 40; initial; cfg { skip } on true priority 9 goto m4; }
mode m4 {
  period 40;
  mode G0 { period 20; initial; cfg { skip } on true priority 1 goto G1; }
  mode G1 { period 20; cfg { skip } on true priority 2 goto G2; }
  mode G2 { period 20; cfg { skip } on duration(gm = 2, 40) && SK12 = 10 priority 3 goto m6; }
  on false priority 4 goto m0;
  on false priority 5 goto m5;
}
mode m5 { period 40; cfg { skip } }
mode m6 { period 40; cfg { skip } }
)";

std::vector<std::string> names(const std::vector<Mode>& ms) {
  std::vector<std::string> out;
  for (const auto& m : ms) out.push_back(m.name);
  return out;
}

bool has_message(const ValidationReport& r, const std::string& text) {
  for (const auto& v : r) {
    if (v.message.find(text) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST(Contains, SingleLeafHasNoPairs) {
  const auto md = parse_model("mode M { period 1; initial; cfg { skip } }");
  EXPECT_TRUE(contains_relation(md).empty());
}

TEST(Contains, ListsImmediateChildren) {
  const auto md = parse_model(kPlant);
  const std::set<std::pair<std::string, std::string>> want = {{"m4", "G0"}, {"m4", "G1"}, {"m4", "G2"}};
  EXPECT_EQ(contains_relation(md), want);
}

TEST(Contains, ThreeLevelChain) {
  const std::set<std::pair<std::string, std::string>> want = {{"a", "b"}, {"b", "c"}};
  EXPECT_EQ(contains_relation(parse_model(kChain)), want);
}

TEST(TopModes, ReturnsDeclaredTopLevel) {
  EXPECT_EQ(names(top_modes(parse_model(kPlant))), (std::vector<std::string>{"m0", "m4", "m5", "m6"}));
  EXPECT_EQ(names(top_modes(parse_model(kChain))), std::vector<std::string>{"a"});
  const auto md = parse_model(kPlant);
  for (const auto& [p, c] : contains_relation(md)) {
    for (const auto& t : top_modes(md)) EXPECT_NE(t.name, c);
  }
}

TEST(Supermodes, WalksParentLinks) {
  const auto chain = parse_model(kChain);
  EXPECT_EQ(supermodes(chain, "a"), std::vector<std::string>{"a"});
  EXPECT_EQ(supermodes(chain, "c"), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(supermodes(parse_model(kPlant), "G1"), (std::vector<std::string>{"m4", "G1"}));
  EXPECT_THROW(supermodes(chain, "nope"), ModelError);
}

TEST(Upmodes, FollowsPeriodRatios) {
  const auto two = parse_model("mode a { period 4; initial; mode b { period 2; initial; cfg { skip } } }");
  EXPECT_EQ(upmodes(two, "b", 1), std::set<std::string>{"b"});
  EXPECT_EQ(upmodes(two, "b", 2), (std::set<std::string>{"a", "b"}));
  const auto chain = parse_model(kChain);
  EXPECT_EQ(upmodes(chain, "c", 4), (std::set<std::string>{"a", "b", "c"}));
  EXPECT_EQ(upmodes(chain, "c", 2), (std::set<std::string>{"b", "c"}));
  EXPECT_EQ(upmodes(chain, "c", 1), std::set<std::string>{"c"});
}

TEST(Upmodes, AlwaysContainsTheModeAndStaysInItsChain) {
  const auto md = parse_model(kChain);
  for (std::uint64_t k = 1; k <= 16; ++k) {
    const auto ups = upmodes(md, "c", k);
    EXPECT_TRUE(ups.count("c"));
    const auto chain = supermodes(md, "c");
    for (const auto& m : ups) EXPECT_NE(std::find(chain.begin(), chain.end(), m), chain.end());
  }
}

TEST(Submode, SelectsTheInitialChild) {
  EXPECT_EQ(submode(parse_model(kPlant), "m4").name, "G0");
  EXPECT_EQ(submode(parse_model(kChain), "a").name, "b");
  const auto second = parse_model(
      "mode p { period 2; initial; mode q { period 1; cfg { skip } } mode r { period 1; initial; cfg { skip } } }");
  EXPECT_EQ(submode(second, "p").name, "r");
  EXPECT_THROW(submode(second, "q"), ModelError);
}

TEST(Outs, UnionOfOutgoingTransitions) {
  const auto md = parse_model(kPlant);
  EXPECT_TRUE(outs(md, {}).empty());
  const auto g2 = outs(md, {"G2"});
  ASSERT_EQ(g2.size(), 1u);
  EXPECT_EQ(g2[0].target, "m6");
  EXPECT_EQ(outs(md, {"m4", "G0"}).size(), 3u);
}

TEST(Validate, AcceptsWellFormedModels) {
  EXPECT_TRUE(validate(parse_model(kPlant)).empty());
  EXPECT_TRUE(validate(parse_model(kChain)).empty());
}

TEST(Validate, DuplicatePriorityInChain) {
  const auto md = parse_model(R"(
mode p { period 2; initial;
  mode m { period 1; initial; cfg { skip } on true priority 3 goto p; }
  on true priority 3 goto p;
})");
  const auto r = validate(md);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].message, "duplicate priority 3 in chain of m");
}

TEST(Validate, SamePriorityInDifferentChainsIsFine) {
  const auto md = parse_model(R"(
mode a { period 1; initial; cfg { skip } on true priority 1 goto b; }
mode b { period 1; cfg { skip } on true priority 1 goto a; }
)");
  EXPECT_TRUE(validate(md).empty());
}

TEST(Validate, RecursiveModuleCall) {
  const auto md = parse_model(R"(
var x in [0, 0];
module A (in: ; out: x) { call B }
module B (in: ; out: x) { call A }
mode m { period 1; initial; cfg { call A } }
)");
  EXPECT_TRUE(has_message(validate(md), "recursive module call"));
}

// Breaking any single invariant of a valid model yields a violation.
TEST(Validate, EverySingleMutationIsReported) {
  const ModelDef base = parse_model(R"(
var x in [0, 1];
var y in [0, 1];
module inc (in: y; out: x) { x := x + y }
mode top {
  period 4; initial;
  mode leaf { period 2; initial; cfg { call inc } on x > 1 priority 1 goto other; }
}
mode other { period 3; cfg { y := 1 } }
)");
  ASSERT_TRUE(validate(base).empty());

  using Mutation = std::function<void(ModelDef&)>;
  const std::vector<std::pair<std::string, Mutation>> mutations = {
      {"duplicate mode name", [](ModelDef& m) { m.top_modes[1].name = "leaf"; }},
      {"duplicate module name", [](ModelDef& m) { m.modules.push_back(m.modules[0]); }},
      {"duplicate variable name", [](ModelDef& m) { m.vars[1].name = "x"; }},
      {"empty initial range", [](ModelDef& m) { m.vars[0].lo = 2; }},
      {"two initial top modes", [](ModelDef& m) { m.top_modes[1].initial = true; }},
      {"no initial top mode", [](ModelDef& m) { m.top_modes[0].initial = false; }},
      {"no initial sub-mode", [](ModelDef& m) { m.top_modes[0].submodes[0].initial = false; }},
      {"two initial sub-modes",
       [](ModelDef& m) {
         auto extra = m.top_modes[0].submodes[0];
         extra.name = "leaf2";
         extra.transitions.clear();
         m.top_modes[0].submodes.push_back(extra);
       }},
      {"period not a multiple", [](ModelDef& m) { m.top_modes[0].period = 5; }},
      {"period zero", [](ModelDef& m) { m.top_modes[1].period = 0; }},
      {"unknown target", [](ModelDef& m) { m.top_modes[0].submodes[0].transitions[0].target = "ghost"; }},
      {"source mismatch", [](ModelDef& m) { m.top_modes[0].submodes[0].transitions[0].source = "other"; }},
      {"module writes outside out set", [](ModelDef& m) { m.modules[0].outputs = {}; }},
      {"module reads outside its sets", [](ModelDef& m) { m.modules[0].inputs = {}; }},
      {"call to unknown module", [](ModelDef& m) { m.top_modes[0].submodes[0].cfg->body = Stmt::call("nope"); }},
      {"assignment to undeclared variable",
       [](ModelDef& m) { m.top_modes[1].cfg->body = Stmt::assign("z", SExpr::constant(1)); }},
      {"assignment to ts", [](ModelDef& m) { m.top_modes[1].cfg->body = Stmt::assign("ts", SExpr::constant(1)); }},
      {"unknown variable in guard",
       [](ModelDef& m) { m.top_modes[0].submodes[0].transitions[0].guard = parse_guard("q > 1"); }},
      {"interval expression in a cfg condition",
       [](ModelDef& m) {
         m.top_modes[1].cfg->body = Stmt::branch(BoolExpr::after(BoolExpr::truth(true), SExpr::constant(1)),
                                                 Stmt::skip(), Stmt::skip());
       }},
      {"nested interval expression",
       [](ModelDef& m) {
         auto inner = BoolExpr::after(BoolExpr::truth(true), SExpr::constant(1));
         m.top_modes[0].submodes[0].transitions[0].guard = BoolExpr::duration(inner, SExpr::constant(2));
       }},
      {"arity mismatch",
       [](ModelDef& m) { m.top_modes[1].cfg->body = Stmt::assign("y", SExpr::apply(Fn::Sqrt, {})); }},
      {"duplicate priority",
       [](ModelDef& m) {
         Transition t = m.top_modes[0].submodes[0].transitions[0];
         t.source = "top";
         m.top_modes[0].transitions.push_back(t);
       }},
      {"mode depth variable out of range",
       [](ModelDef& m) { m.top_modes[0].submodes[0].transitions[0].guard = parse_guard("__mode_2 = 1"); }},
      {"leaf with sub-modes",
       [](ModelDef& m) { m.top_modes[1].submodes.push_back(m.top_modes[0].submodes[0]); }},
  };
  for (const auto& [name, mutate] : mutations) {
    ModelDef md = base;
    mutate(md);
    EXPECT_FALSE(validate(md).empty()) << name;
  }
}

TEST(Validate, GeneratedModelsAreValid) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    gen::Random r(s);
    const auto report = validate(gen::model(r));
    EXPECT_TRUE(report.empty()) << "seed " << s << ": " << (report.empty() ? "" : report[0].to_string());
  }
}

TEST(Validate, ContainsIsAForest) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    gen::Random r(100 + s);
    const auto md = gen::model(r);
    std::map<std::string, int> parents;
    for (const auto& [p, c] : contains_relation(md)) ++parents[c];
    for (const auto& [c, n] : parents) EXPECT_EQ(n, 1) << c;
    for (const auto& m : top_modes(md)) {
      EXPECT_EQ(parents.count(m.name), 0u);
      EXPECT_EQ(supermodes(md, m.name).front(), m.name);
    }
  }
}
