#include <gtest/gtest.h>

#include <random>

#include "basics/error.hpp"
#include "basics/ltl.hpp"
#include "support.hpp"

using namespace basics;
using testing_support::random_state;

namespace {

constexpr ByteState C = ByteState::Critical, O = ByteState::Occupied;

const PropertyAst& bundled(const std::string& name) {
  static const auto props = bundled_properties();
  for (const auto& p : props)
    if (p.name == name) return p;
  throw std::runtime_error("no bundled property " + name);
}

bool has_quantifier(const Formula& f) {
  switch (f.kind) {
    case Formula::Kind::ForallStack:
    case Formula::Kind::ExistsStack:
    case Formula::Kind::ForallBuffer:
    case Formula::Kind::ExistsBuffer:
    case Formula::Kind::AllRange:
    case Formula::Kind::AnyRange:
      return true;
    default:
      break;
  }
  if (f.kind == Formula::Kind::ByteIs && (f.index.kind != IndexExpr::Kind::Const || !f.frame.index)) return true;
  for (const auto& c : f.children)
    if (has_quantifier(*c)) return true;
  return false;
}

}  // namespace

TEST(Tri, KleeneTablesAreMinMax) {
  const Tri all[] = {Tri::False, Tri::Unknown, Tri::True};
  auto rank = [](Tri t) { return static_cast<int>(t); };
  for (Tri a : all) {
    EXPECT_EQ(rank(tri_not(a)), 2 - rank(a));
    for (Tri b : all) {
      EXPECT_EQ(rank(tri_and(a, b)), std::min(rank(a), rank(b)));
      EXPECT_EQ(rank(tri_or(a, b)), std::max(rank(a), rank(b)));
    }
  }
}

TEST(Parse, BundledPropertiesAllParseAndCompile) {
  auto props = bundled_properties();
  ASSERT_EQ(props.size(), 7u);
  std::set<std::string> names;
  for (const auto& p : props) {
    names.insert(p.name);
    EXPECT_NO_THROW(compile_monitor(p)) << p.name;
  }
  for (const auto& [name, oracle] : testing_support::property_oracles()) EXPECT_TRUE(names.count(name)) << name;
  EXPECT_EQ(bundled("RIP Integrity").cwes, (std::vector<std::string>{"CWE-121", "CWE-787"}));
  EXPECT_TRUE(bundled("Canary Integrity").cwes.empty());
}

TEST(Parse, UnclosedParenReportsColumn) {
  try {
    parse_formula("G (");
    FAIL();
  } catch (const LocatedError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SyntaxError);
    EXPECT_EQ(e.column(), 3u);
  }
}

TEST(Parse, UnknownAtomAndUnboundVariable) {
  try {
    parse_formula("G frobnicate(1)");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownOperator);
  }
  try {
    parse_formula("G byte(0, stack(f)) = Critical");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SyntaxError);
  }
}

TEST(Parse, PropertyFileWithCommentsAndBareNames) {
  auto props = parse_property_file(R"(
# leading comment
property no_strcpy {
  ltl: G (previous_transition != call_strcpy)   # trailing comment
  cwe: [CWE-120]
}
property "RIP Integrity" {
  ltl: G (forall_stack f . byte(0, stack(f)) = Critical)
  cwe: []
}
)");
  ASSERT_EQ(props.size(), 2u);
  EXPECT_EQ(props[0].name, "no_strcpy");
  EXPECT_EQ(props[0].cwes, std::vector<std::string>{"CWE-120"});
  auto merged = merge_properties(bundled_properties(), props);
  EXPECT_EQ(merged.size(), 8u);
  for (const auto& p : merged)
    if (p.name == "RIP Integrity") { EXPECT_TRUE(p.cwes.empty()); }
  EXPECT_EQ(parse_property("G true").name, "anonymous");
}

TEST(Parse, NotEqualIsNegatedEquality) {
  auto a = parse_formula("forall_stack f . all i in 16..23 : byte(i, stack(f)) != Free");
  auto b = parse_formula("forall_stack f . all i in 16..23 : !(byte(i, stack(f)) = Free)");
  std::mt19937_64 rng(11);
  for (int t = 0; t < 300; ++t) {
    MemoryState m = random_state(rng);
    EXPECT_EQ(evaluate(*a, m), evaluate(*b, m));
  }
}

TEST(Compile, RejectsFormulasOutsideTheSafetyFragment) {
  for (const char* text : {"F true", "G (true U false)", "G G true", "X true", "true"}) {
    try {
      compile_monitor(parse_property(text));
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::UnsupportedFragment) << text;
    }
  }
}

TEST(Monitor, ShapeOfNegatedAndPositiveForms) {
  Monitor m = compile_monitor(bundled("RIP Integrity"));
  ASSERT_EQ(m.states.size(), 2u);
  ASSERT_EQ(m.accepting.size(), 1u);
  std::size_t reject = m.accepting[0];
  EXPECT_NE(reject, m.initial);
  ASSERT_EQ(m.edges.size(), 3u);
  int self_run = 0, run_reject = 0, self_reject = 0;
  for (const auto& e : m.edges) {
    if (e.from == m.initial && e.to == m.initial) ++self_run;
    if (e.from == m.initial && e.to == reject) ++run_reject;
    if (e.from == reject && e.to == reject) ++self_reject;
  }
  EXPECT_EQ(self_run + run_reject + self_reject, 3);
  EXPECT_EQ(self_run, 1);
  EXPECT_EQ(run_reject, 1);
  EXPECT_EQ(self_reject, 1);

  Monitor p = m.positive();
  ASSERT_EQ(p.states.size(), 1u);
  ASSERT_EQ(p.edges.size(), 1u);
  EXPECT_EQ(p.edges[0].from, 0u);
  EXPECT_EQ(p.edges[0].to, 0u);
  EXPECT_EQ(p.edges[0].guard->str(), m.body->str());
}

// The reject state is reached exactly at the first state of a trace where the
// hand-written property is false, and never left.
TEST(Monitor, RejectsAtFirstFalsifyingStateOnRandomTraces) {
  std::mt19937_64 rng(2024);
  std::size_t disagreements = 0, violations = 0;
  for (const auto& [name, oracle] : testing_support::property_oracles()) {
    Monitor mon = compile_monitor(bundled(name));
    for (int t = 0; t < 1000; ++t) {
      std::size_t len = 1 + rng() % 8;
      std::size_t s = mon.initial;
      std::optional<std::size_t> first_reject, first_false;
      for (std::size_t k = 0; k < len; ++k) {
        MemoryState m = random_state(rng);
        bool was_rejecting = mon.is_accepting(s);
        s = mon.step(s, m);
        if (was_rejecting && !mon.is_accepting(s)) ++disagreements;
        if (mon.is_accepting(s) && !first_reject) first_reject = k;
        if (!oracle(m) && !first_false) first_false = k;
      }
      if (first_reject != first_false) ++disagreements;
      if (first_false) ++violations;
    }
  }
  EXPECT_EQ(disagreements, 0u);
  EXPECT_GT(violations, 500u);  // the generator exercises both outcomes
}

TEST(Monitor, UnknownBytesDoNotReject) {
  Monitor mon = compile_monitor(bundled("RBP Integrity"));
  MemoryState m;
  StackFrame f;
  f.label = "leaf";
  f.saved_rbp = false;  // no prologue: bytes 8-15 are not a saved base register
  f.bytes.assign(16, O);
  for (int i = 0; i < 8; ++i) f.bytes[static_cast<std::size_t>(i)] = C;
  m.frames.push_back(f);
  std::vector<std::string> notes;
  EXPECT_EQ(evaluate(*mon.body, m, {}, &notes), Tri::Unknown);
  EXPECT_FALSE(notes.empty());
  EXPECT_FALSE(mon.is_accepting(mon.step(mon.initial, m)));
}

TEST(Expansion, AgreesWithDirectEvaluation) {
  std::mt19937_64 rng(99);
  for (const auto& p : bundled_properties()) {
    Monitor mon = compile_monitor(p);
    for (int t = 0; t < 400; ++t) {
      MemoryState m = random_state(rng);
      FormulaPtr flat = expand_quantifiers(*mon.body, m);
      EXPECT_FALSE(has_quantifier(*flat)) << p.name << ": " << flat->str();
      EXPECT_EQ(evaluate(*flat, m), evaluate(*mon.body, m)) << p.name;
    }
  }
}

TEST(Labels, MatchKindsAndCallees) {
  TransitionLabel gets{LabelKind::Call, 0x401000, "gets", "call gets"};
  TransitionLabel loop{LabelKind::Loop, 0x401010, "", "loop"};
  EXPECT_TRUE(label_matches("libc", gets));
  EXPECT_TRUE(label_matches("call", gets));
  EXPECT_TRUE(label_matches("call_gets", gets));
  EXPECT_FALSE(label_matches("call_strcpy", gets));
  EXPECT_TRUE(label_matches("loop", loop));
  EXPECT_FALSE(label_matches("libc", loop));
}
