#include <gtest/gtest.h>

#include "basics/effects.hpp"
#include "basics/error.hpp"
#include "basics/frontend.hpp"
#include "support.hpp"

using namespace basics;
using testing_support::corpus_manifest;
using testing_support::corpus_text;
using testing_support::copy_listing;

TEST(Parse, CopyListing) {
  ProgramImage img = parse_disassembly(copy_listing());
  ASSERT_EQ(img.functions.size(), 1u);
  const Function& f = img.functions[0];
  EXPECT_EQ(f.name, "copy");
  EXPECT_EQ(f.entry, 0x401136u);
  ASSERT_EQ(f.instructions.size(), 13u);
  EXPECT_EQ(f.instructions[0].mnemonic, Mnemonic::Endbr64);
  EXPECT_EQ(f.instructions[2].text(), "mov rbp, rsp");
  const Instruction& call = f.instructions[9];
  ASSERT_TRUE(call.is_call());
  EXPECT_EQ(call.direct_target(), 0x401030u);
  EXPECT_EQ(call.target_symbol(), "strcpy@plt");
  const Instruction& lea = f.instructions[6];
  ASSERT_EQ(lea.operands.size(), 2u);
  EXPECT_EQ(lea.operands[1].kind, OperandKind::Memory);
  EXPECT_EQ(lea.operands[1].mem.base->reg, Gpr::rbp);
  EXPECT_EQ(lea.operands[1].mem.displacement, -0x10);
  EXPECT_EQ(img.entry_function(), "copy");  // no main: first user function
}

TEST(Parse, StripsSymbolDecoration) {
  EXPECT_EQ(strip_symbol_decoration("strcpy@plt"), "strcpy");
  EXPECT_EQ(strip_symbol_decoration("stdin@@GLIBC_2.2.5"), "stdin");
  EXPECT_EQ(strip_symbol_decoration("copy"), "copy");
}

TEST(Parse, MalformedLineCarriesLocation) {
  try {
    parse_disassembly("f:\n  401000: push rbp\n  zz9: ???\n");
    FAIL();
  } catch (const LocatedError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedLine);
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Parse, UnknownMnemonicIsKeptWithWarning) {
  ProgramImage img = parse_disassembly("f:\n  401000: vpxor xmm0, xmm0, xmm0\n  401004: ret\n");
  ASSERT_EQ(img.functions[0].instructions.size(), 2u);
  EXPECT_EQ(img.functions[0].instructions[0].mnemonic, Mnemonic::Unknown);
  EXPECT_FALSE(img.warnings.empty());
}

TEST(Parse, DataSectionsAndRipRelativeOperands) {
  ProgramImage img = parse_disassembly(corpus_text("gets_clean.asm"));
  ASSERT_EQ(img.data.size(), 1u);
  EXPECT_EQ(img.data[0].address, 0x404040u);
  EXPECT_EQ(img.data[0].bytes.size(), 8u);
  const Instruction* load = img.find_instruction(0x401146);
  ASSERT_NE(load, nullptr);
  const MemoryRef& m = load->operands[1].mem;
  EXPECT_FALSE(m.base.has_value());
  EXPECT_EQ(m.displacement, 0x404040);

  ProgramImage lit = parse_disassembly(corpus_text("strcpy_const_clean.asm"));
  ASSERT_EQ(lit.data.size(), 1u);
  std::string s(lit.data[0].bytes.begin(), lit.data[0].bytes.end());
  EXPECT_EQ(s, std::string("hello\0", 6));
}

TEST(Parse, SerializeRoundTripsEveryFixture) {
  for (const auto& c : corpus_manifest()) {
    ProgramImage a = parse_disassembly(corpus_text(c.file));
    ProgramImage b = parse_disassembly(a.serialize());
    ASSERT_EQ(a.functions.size(), b.functions.size()) << c.name;
    for (std::size_t i = 0; i < a.functions.size(); ++i) {
      ASSERT_EQ(a.functions[i].instructions.size(), b.functions[i].instructions.size()) << c.name;
      for (std::size_t k = 0; k < a.functions[i].instructions.size(); ++k) {
        const auto& x = a.functions[i].instructions[k];
        const auto& y = b.functions[i].instructions[k];
        EXPECT_EQ(x.address, y.address);
        EXPECT_EQ(x.operands, y.operands) << c.name << " " << x.text();
        EXPECT_EQ(x.text(), y.text());
      }
    }
    ASSERT_EQ(a.data.size(), b.data.size()) << c.name;
    for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_EQ(a.data[i].bytes, b.data[i].bytes);
  }
}

TEST(Bcfg, CoversEveryInstructionOfStraightLineCode) {
  ProgramImage img = parse_disassembly(copy_listing());
  BCfg g = build_bcfg(img);
  EXPECT_EQ(g.entry, 0x401136u);
  auto reach = g.reachable_instructions(0x401136);
  for (const auto& ins : img.functions[0].instructions) EXPECT_TRUE(reach.count(ins.address)) << ins.text();
  const BasicBlock* b = g.block_containing(0x401154);
  ASSERT_NE(b, nullptr);
  EXPECT_EQ(b->function, "copy");
}

TEST(Bcfg, LoopFixtureHasOneNaturalLoop) {
  ProgramImage img = parse_disassembly(corpus_text("loop_offbyone_vuln.asm"));
  BCfg g = build_bcfg(img);
  LoopAnalysis la = detect_loops(g);
  ASSERT_EQ(la.loops.size(), 1u);
  const LoopInfo& l = la.loops[0];
  EXPECT_EQ(l.function, "main");
  const Instruction* cmp = img.find_instruction(l.header);
  ASSERT_NE(cmp, nullptr);
  EXPECT_EQ(cmp->mnemonic, Mnemonic::Cmp);
  // The store into the buffer is in the body; the exit follows the jle.
  bool store_in_body = false;
  for (Address a : l.instructions) {
    const Instruction* ins = img.find_instruction(a);
    if (ins && ins->mnemonic == Mnemonic::Mov && ins->operands[0].kind == OperandKind::Memory &&
        ins->operands[0].mem.index)
      store_in_body = true;
  }
  EXPECT_TRUE(store_in_body);
  const Instruction* exit = img.find_instruction(l.exit);
  ASSERT_NE(exit, nullptr);
  EXPECT_EQ(exit->text().rfind("mov edi", 0), 0u);
  EXPECT_TRUE(la.irreducible.empty());
}

TEST(Functions, SplitsUserAndLibrarySymbols) {
  ProgramImage img = parse_disassembly(corpus_text("strcpy_interproc_vuln.asm"));
  BCfg g = build_bcfg(img);
  FunctionMap fm = extract_user_functions(g, img);
  EXPECT_TRUE(fm.is_user("main"));
  EXPECT_TRUE(fm.is_user("copy"));
  EXPECT_TRUE(fm.is_library("strcpy"));
  EXPECT_TRUE(fm.is_library("memset"));
  EXPECT_FALSE(fm.is_library("copy"));
  EXPECT_EQ(fm.function_containing(img, 0x401140), "copy");
  EXPECT_EQ(img.entry_function(), "main");
}

TEST(Functions, DuplicateNamesAreRejected) {
  ProgramImage img = parse_disassembly("f:\n  401000: ret\nf:\n  401010: ret\n");
  BCfg g = build_bcfg(img);
  try {
    extract_user_functions(g, img);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DuplicateFunction);
  }
}

TEST(Arguments, RecoversStrcpyOperandsOfCopy) {
  ProgramImage img = parse_disassembly(copy_listing());
  BCfg g = build_bcfg(img);
  LibcDatabase db = LibcDatabase::bundled();
  const LibcSpec* spec = db.find("strcpy");
  ASSERT_NE(spec, nullptr);
  CallArgs args = recover_arguments(g, 0x401154, *spec);
  EXPECT_EQ(args.regs[0].kind, ArgKind::FrameAddress);
  EXPECT_EQ(args.regs[0].value, -0x10);
  EXPECT_EQ(args.regs[1].kind, ArgKind::FrameSlot);
  EXPECT_EQ(args.regs[1].value, -0x18);
}
