#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>

#include "basics/effects.hpp"
#include "basics/error.hpp"
#include "basics/frontend.hpp"
#include "basics/validator.hpp"
#include "support.hpp"

using namespace basics;
using testing_support::corpus_text;

namespace {

Address call_site(const ProgramImage& img, const std::string& callee) {
  for (const auto& f : img.functions)
    for (const auto& ins : f.instructions)
      if (ins.is_call() && ins.target_symbol() && strip_symbol_decoration(*ins.target_symbol()) == callee)
        return ins.address;
  ADD_FAILURE() << "no call to " << callee;
  return 0;
}

// Abstract address of the byte `rbp + off` in the root function: the return
// address occupies [0, 8), the saved base register [-8, 0).
constexpr std::int64_t root_rbp = -8;

}  // namespace

TEST(ProbeLengths, DoubleUpToTheLimit) {
  EXPECT_EQ(probe_lengths(16), (std::vector<std::size_t>{1, 2, 4, 8, 16}));
  EXPECT_EQ(probe_lengths(20), (std::vector<std::size_t>{1, 2, 4, 8, 16, 20}));
  auto p = probe_lengths(4096);
  EXPECT_EQ(p.size(), 13u);
  EXPECT_EQ(p.back(), 4096u);
}

TEST(CallEffect, ConstantStrcpyTouchesLiteralLengthPlusTerminator) {
  ProgramImage img = parse_disassembly(corpus_text("strcpy_const_vuln.asm"));
  Config cfg;
  CallEffect e = emulate_call(img, LibcDatabase::bundled(), call_site(img, "strcpy"), cfg);
  ASSERT_TRUE(e.reached);
  EXPECT_FALSE(e.input_dependent);
  const std::size_t literal = std::strlen("this string is much longer than sixteen bytes");
  ASSERT_EQ(e.touched.size(), literal + 1);
  EXPECT_EQ(*e.touched.begin(), root_rbp - 16);
  EXPECT_EQ(*e.touched.rbegin(), root_rbp - 16 + static_cast<std::int64_t>(literal));
  EXPECT_FALSE(e.crash_input.has_value());
}

TEST(CallEffect, ArgvStrcpyIsInputDependentWithCrashInput) {
  ProgramImage img = parse_disassembly(corpus_text("strcpy_argv_vuln.asm"));
  Config cfg;
  cfg.max_input_len = 256;
  CallEffect e = emulate_call(img, LibcDatabase::bundled(), call_site(img, "strcpy"), cfg);
  ASSERT_TRUE(e.reached);
  EXPECT_TRUE(e.input_dependent);
  // Worst case over the probes: max_input_len bytes plus the terminator.
  EXPECT_EQ(e.touched.size(), cfg.max_input_len + 1);
  ASSERT_TRUE(e.corrupting_length.has_value());
  // 16 buffer bytes + 8 saved base register reach the return address at 25.
  EXPECT_LE(*e.corrupting_length, 32u);
  EXPECT_GE(*e.corrupting_length, 16u);
  ASSERT_TRUE(e.crash_input.has_value());
  EXPECT_EQ(e.crash_input->stream, CrashInput::Stream::Argv);
  EXPECT_EQ(e.crash_input->argv_index, 1);
  EXPECT_EQ(extract_concrete_input(e)->bytes, e.crash_input->bytes);
}

TEST(CallEffect, GetsReadsStdin) {
  ProgramImage img = parse_disassembly(corpus_text("gets_vuln.asm"));
  Config cfg;
  cfg.max_input_len = 64;
  CallEffect e = emulate_call(img, LibcDatabase::bundled(), call_site(img, "gets"), cfg);
  ASSERT_TRUE(e.crash_input.has_value());
  EXPECT_EQ(e.crash_input->stream, CrashInput::Stream::Stdin);
  ProgramInput in = e.crash_input->to_program_input();
  EXPECT_EQ(in.stdin_data, e.crash_input->bytes);
  EXPECT_EQ(in.argv.front(), "prog");
}

TEST(CallEffect, BoundedCallsStayInsideTheBuffer) {
  for (const char* file : {"strcpy_argv_clean.asm", "gets_clean.asm"}) {
    ProgramImage img = parse_disassembly(corpus_text(file));
    Config cfg;
    cfg.max_input_len = 128;
    const char* callee = std::strcmp(file, "gets_clean.asm") == 0 ? "fgets" : "strncpy";
    CallEffect e = emulate_call(img, LibcDatabase::bundled(), call_site(img, callee), cfg);
    ASSERT_TRUE(e.reached) << file;
    ASSERT_FALSE(e.touched.empty()) << file;
    EXPECT_GE(*e.touched.begin(), root_rbp - 16) << file;
    EXPECT_LT(*e.touched.rbegin(), root_rbp) << file;
    EXPECT_FALSE(e.crash_input.has_value()) << file;
  }
}

TEST(LoopEffect, OffByOneReachesSavedBaseRegister) {
  ProgramImage img = parse_disassembly(corpus_text("loop_offbyone_vuln.asm"));
  BCfg g = build_bcfg(img);
  LoopAnalysis la = detect_loops(g);
  ASSERT_EQ(la.loops.size(), 1u);
  Config cfg;
  CallEffect e = emulate_loop(img, LibcDatabase::bundled(), la.loops[0], cfg);
  ASSERT_TRUE(e.reached);
  EXPECT_FALSE(e.exhausted);
  // buf[0..16] plus the loop counter.
  for (std::int64_t k = 0; k <= 16; ++k) EXPECT_TRUE(e.touched.count(root_rbp - 16 + k)) << k;
  EXPECT_FALSE(e.touched.count(root_rbp + 1));
}

TEST(LoopEffect, UnderflowWritesOneBytePastTheStart) {
  ProgramImage img = parse_disassembly(corpus_text("loop_underflow_vuln.asm"));
  LoopAnalysis la = detect_loops(build_bcfg(img));
  ASSERT_EQ(la.loops.size(), 1u);
  CallEffect e = emulate_loop(img, LibcDatabase::bundled(), la.loops[0], Config{});
  EXPECT_TRUE(e.touched.count(root_rbp - 0x21));
  EXPECT_FALSE(e.touched.count(root_rbp - 0x22));
}

TEST(LoopEffect, IterationBudgetIsReported) {
  ProgramImage img = parse_disassembly(corpus_text("loop_offbyone_vuln.asm"));
  LoopAnalysis la = detect_loops(build_bcfg(img));
  Config cfg;
  cfg.max_loop_iters = 4;
  CallEffect e = emulate_loop(img, LibcDatabase::bundled(), la.loops[0], cfg);
  EXPECT_TRUE(e.exhausted);
}

TEST(Interpreter, CrashCausesMatchTheCorruptedSlot) {
  Config cfg;
  cfg.max_input_len = 128;
  LibcDatabase db = LibcDatabase::bundled();
  ProgramInput longarg{"", {"prog", std::string(40, 'A')}};
  auto plain = run(parse_disassembly(corpus_text("strcpy_argv_vuln.asm")), longarg, cfg, db);
  EXPECT_TRUE(plain.crashed());
  EXPECT_EQ(plain.cause, CrashCause::ReturnAddressCorrupted);
  auto guarded = run(parse_disassembly(corpus_text("strcpy_canary_vuln.asm")), longarg, cfg, db);
  EXPECT_TRUE(guarded.crashed());
  EXPECT_EQ(guarded.cause, CrashCause::CanaryMismatch);
  ProgramInput shortarg{"", {"prog", "abc"}};
  auto fine = run(parse_disassembly(corpus_text("strcpy_argv_vuln.asm")), shortarg, cfg, db);
  EXPECT_TRUE(fine.clean());
  EXPECT_EQ(fine.stdout_data, "abc\n");
}

TEST(Interpreter, OffByOneCorruptsOnlyTheBaseRegister) {
  auto r = run(parse_disassembly(corpus_text("loop_offbyone_vuln.asm")), ProgramInput{"", {"prog"}}, Config{});
  EXPECT_TRUE(r.crashed());
  EXPECT_EQ(r.cause, CrashCause::BaseRegisterCorrupted);
}
