#include <gtest/gtest.h>

#include "basics/error.hpp"
#include "basics/patcher.hpp"
#include "support.hpp"

using namespace basics;
using testing_support::build;
using testing_support::corpus_text;
using testing_support::copy_listing;

namespace {

struct CopyFixture {
  testing_support::Built b = build(copy_listing(), "copy");
  Monitor rip = compile_monitor(bundled_properties().front());
  Verdict verdict = check(b.space, rip);
  LibcDatabase db = LibcDatabase::bundled();

  SinkSite sink() const { return locate_sink(*verdict.trace, b.bcfg, b.funcs, b.image); }
  const MemoryState& call_state() const { return b.space.states[verdict.trace->states[sink().step]]; }
  CallEffect effect() const {
    for (const auto& [key, e] : b.space.effects)
      if (key.first == sink().address) return e;
    return {};
  }
  PatchPlan plan(const Config& cfg = {}) const {
    CallArgs args = recover_arguments(b.bcfg, sink().address, *db.find("strcpy"));
    return select_template(sink(), effect(), args, TemplateLibrary::bundled(), &call_state(), cfg);
  }
};

}  // namespace

TEST(LocateSink, LastWritingCallOfTheTrace) {
  CopyFixture f;
  ASSERT_EQ(f.verdict.status, VerdictStatus::Violated);
  SinkSite s = f.sink();
  EXPECT_EQ(s.address, 0x401154u);
  EXPECT_EQ(s.callee, "strcpy");
  EXPECT_EQ(s.function, "copy");
  EXPECT_FALSE(s.loop);
  EXPECT_EQ(s.step, 4u);
}

TEST(LocateSink, TraceWithoutCallsHasNoSink) {
  CopyFixture f;
  Trace prefix = *f.verdict.trace;
  prefix.steps.resize(3);
  prefix.states.resize(4);
  try {
    locate_sink(prefix, f.b.bcfg, f.b.funcs, f.b.image);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoSinkFound);
  }
}

TEST(SelectTemplate, StaticBoundFromTheCallState) {
  CopyFixture f;
  PatchPlan p = f.plan();
  EXPECT_EQ(p.tpl.target, "strcpy");
  EXPECT_EQ(p.tpl.mode, PatchMode::Static);
  EXPECT_EQ(p.tpl.replacement, "strncpy");
  EXPECT_EQ(p.dest_offset, -16);
  EXPECT_EQ(p.dest_size, 16u);
  EXPECT_EQ(p.bound, 16u);
  ASSERT_EQ(p.args.size(), 2u);
  EXPECT_EQ(p.args[0].reg, Gpr::rdi);
  EXPECT_EQ(p.args[1].reg, Gpr::rsi);
}

TEST(SelectTemplate, RuntimeModeWithoutAKnownBuffer) {
  CopyFixture f;
  CallArgs args = recover_arguments(f.b.bcfg, 0x401154, *f.db.find("strcpy"));
  PatchPlan p = select_template(f.sink(), f.effect(), args, TemplateLibrary::bundled(), nullptr, Config{});
  EXPECT_EQ(p.tpl.mode, PatchMode::Runtime);
  EXPECT_FALSE(p.bound.has_value());
}

TEST(SelectTemplate, LoopsAndOptInTemplates) {
  SinkSite loop;
  loop.address = 0x401150;
  loop.callee = "loop";
  loop.loop = true;
  EXPECT_THROW(select_template(loop, {}, {}, TemplateLibrary::bundled(), nullptr, Config{}), Error);

  SinkSite scanf;
  scanf.address = 0x401150;
  scanf.callee = "scanf";
  try {
    select_template(scanf, {}, {}, TemplateLibrary::bundled(), nullptr, Config{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoTemplate);
  }
  Config on;
  on.enable_scanf_patch = true;
  PatchPlan p = select_template(scanf, {}, {}, TemplateLibrary::bundled(), nullptr, on);
  EXPECT_TRUE(p.tpl.opt_in);
}

TEST(Trampoline, RewritesOnlyTheSink) {
  CopyFixture f;
  PatchResult r = apply_trampoline(f.b.image, f.plan());
  EXPECT_EQ(r.label, "T0");
  EXPECT_EQ(r.return_address, 0x401159u);
  EXPECT_EQ(r.trampoline % 0x100, 0u);
  EXPECT_GT(r.trampoline, f.b.image.max_address());
  ASSERT_EQ(r.image.functions.size(), f.b.image.functions.size() + 1);
  const auto& before = f.b.image.functions[0].instructions;
  const auto& after = r.image.functions[0].instructions;
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i].address == 0x401154) {
      EXPECT_EQ(after[i].mnemonic, Mnemonic::Jmp);
      EXPECT_EQ(after[i].direct_target(), r.trampoline);
    } else {
      EXPECT_EQ(after[i].text(), before[i].text());
    }
  }
  const Function* t = r.image.find_function("T0");
  ASSERT_NE(t, nullptr);
  ASSERT_EQ(t->instructions.size(), 2u);
  ASSERT_TRUE(t->instructions[0].safecall.has_value());
  EXPECT_EQ(t->instructions[0].safecall->replacement, "strncpy");
  EXPECT_EQ(t->instructions[0].safecall->bound, 16u);
  EXPECT_EQ(t->instructions[1].direct_target(), 0x401159u);
}

TEST(Trampoline, PatchedListingRoundTrips) {
  CopyFixture f;
  PatchResult r = apply_trampoline(f.b.image, f.plan());
  ProgramImage again = parse_disassembly(r.image.serialize());
  const Function* t = again.find_function("T0");
  ASSERT_NE(t, nullptr);
  EXPECT_EQ(t->instructions[0].safecall, r.image.find_function("T0")->instructions[0].safecall);
  EXPECT_EQ(again.find_instruction(0x401154)->direct_target(), r.trampoline);
}

TEST(Trampoline, RefusesToPatchTwice) {
  CopyFixture f;
  PatchResult r = apply_trampoline(f.b.image, f.plan());
  try {
    apply_trampoline(r.image, f.plan());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AlreadyPatched);
  }
}

TEST(Trampoline, ExplicitLabelMustBeFree) {
  CopyFixture f;
  PatchPlan p = f.plan();
  p.trampoline_label = "copy";
  try {
    apply_trampoline(f.b.image, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LabelCollision);
  }
  p.trampoline_label = "fix_copy";
  EXPECT_EQ(apply_trampoline(f.b.image, p).label, "fix_copy");
}

TEST(Trampoline, TwoSinksGetDistinctLabels) {
  AnalysisOptions opts;
  opts.patch_all = true;
  Analyzer a(opts);
  BinaryReport r = a.analyze_text(corpus_text("strcat_const_vuln.asm"), "strcat_const_vuln");
  ASSERT_TRUE(r.ok) << r.error;
  ASSERT_EQ(r.sinks.size(), 2u);
  EXPECT_EQ(r.sinks[0].sink.callee, "strcpy");
  EXPECT_EQ(r.sinks[1].sink.callee, "strcat");
  EXPECT_EQ(r.sinks[0].trampoline, "T0");
  EXPECT_EQ(r.sinks[1].trampoline, "T1");
  ASSERT_TRUE(r.patched.has_value());
  const Function* t0 = r.patched->find_function("T0");
  const Function* t1 = r.patched->find_function("T1");
  ASSERT_TRUE(t0 && t1);
  EXPECT_NE(t0->entry, t1->entry);
  EXPECT_EQ(t1->instructions[0].safecall->replacement, "strncat");
}

TEST(Templates, JsonLoadingAndMerge) {
  auto extra = TemplateLibrary::from_json(R"({"templates": [
    {"name": "strcpy-static", "target": "strcpy", "mode": "static", "replacement": "strlcpy"}]})");
  TemplateLibrary lib = TemplateLibrary::bundled();
  std::size_t n = lib.templates.size();
  lib.merge(extra);
  EXPECT_EQ(lib.templates.size(), n);
  EXPECT_EQ(lib.find("strcpy", PatchMode::Static)->replacement, "strlcpy");
  EXPECT_THROW(TemplateLibrary::from_json(R"({"templates": [{"name": "x", "target": "gets", "mode": "maybe",
                                          "replacement": "fgets"}]})"),
               Error);
  EXPECT_THROW(TemplateLibrary::from_json("not json"), Error);
}
