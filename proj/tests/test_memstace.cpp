#include <gtest/gtest.h>

#include "basics/checker.hpp"
#include "basics/memstace.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace basics;
using testing_support::build;
using testing_support::corpus_manifest;
using testing_support::corpus_text;
using testing_support::copy_listing;

namespace {

// Path of transitions from the initial state to the first Call, following
// the only outgoing edge at each step.
std::vector<const Transition*> straight_path(const MemStaCe& s) {
  std::vector<const Transition*> path;
  std::size_t cur = s.initial;
  for (;;) {
    const auto& out = s.outgoing(cur);
    if (out.size() != 1) break;
    const Transition& t = s.transitions[out[0]];
    path.push_back(&t);
    cur = t.dst;
    if (t.label.kind == LabelKind::Call) break;
  }
  return path;
}

}  // namespace

TEST(Classify, PrologueAndFrameOperations) {
  ProgramImage img = parse_disassembly(copy_listing());
  const auto& ins = img.functions[0].instructions;
  ClassifyContext ctx;
  auto push = classify_instruction(ins[1], ctx);
  EXPECT_EQ(push.kind, MemOpKind::Push);
  EXPECT_EQ(push.byte_op, ByteOp::RWrite);
  auto sub = classify_instruction(ins[3], ctx);
  EXPECT_EQ(sub.kind, MemOpKind::Fe);
  EXPECT_EQ(sub.amount, 0x20u);
  auto store = classify_instruction(ins[4], ctx);
  EXPECT_EQ(store.kind, MemOpKind::Write);
  EXPECT_EQ(store.displacement, -0x18);
  EXPECT_EQ(store.width, 8u);
  EXPECT_EQ(classify_instruction(ins[5], ctx).kind, MemOpKind::NoEffect);  // load
  EXPECT_EQ(classify_instruction(ins[11], ctx).kind, MemOpKind::Pop);      // leave

  ClassifyContext later;
  later.first_push = false;
  EXPECT_EQ(classify_instruction(ins[1], later).byte_op, ByteOp::nRWrite);
}

TEST(Classify, CanaryStoreIsRisky) {
  ProgramImage img = parse_disassembly(corpus_text("strcpy_canary_vuln.asm"));
  const Instruction* store = img.find_instruction(0x401152);
  ASSERT_NE(store, nullptr);
  ClassifyContext ctx;
  ctx.canary_registers = {Gpr::rax};
  auto c = classify_instruction(*store, ctx);
  EXPECT_EQ(c.kind, MemOpKind::Write);
  EXPECT_TRUE(c.canary);
  EXPECT_EQ(c.byte_op, ByteOp::RWrite);
}

TEST(BufferSizes, InferredFromTheNextKnownObject) {
  ProgramImage copy = parse_disassembly(copy_listing());
  auto sizes = infer_buffer_sizes(copy.functions[0]);
  ASSERT_TRUE(sizes.count(-0x10));
  EXPECT_EQ(sizes.at(-0x10), 16u);

  ProgramImage canary = parse_disassembly(corpus_text("strcpy_canary_vuln.asm"));
  auto cs = infer_buffer_sizes(*canary.find_function("main"));
  ASSERT_TRUE(cs.count(-0x20));
  EXPECT_EQ(cs.at(-0x20), 24u);  // up to the canary slot

  ProgramImage under = parse_disassembly(corpus_text("loop_underflow_vuln.asm"));
  auto us = infer_buffer_sizes(*under.find_function("main"));
  ASSERT_TRUE(us.count(-0x20));
  EXPECT_EQ(us.at(-0x20), 16u);
}

TEST(BufferSizes, HintsParseAndLookup) {
  auto h = BufferHints::from_json(R"({"functions": {"copy": [{"offset": -16, "size": 8}]}})");
  EXPECT_EQ(h.lookup("copy", -16), 8u);
  EXPECT_FALSE(h.lookup("copy", -8).has_value());
  EXPECT_FALSE(h.lookup("main", -16).has_value());
}

TEST(Build, CopyChainMatchesFrameSnapshots) {
  auto b = build(copy_listing(), "copy");
  const MemStaCe& s = b.space;
  EXPECT_FALSE(s.truncated);
  auto path = straight_path(s);
  ASSERT_EQ(path.size(), 5u);
  EXPECT_EQ(path[0]->label.kind, LabelKind::Push);
  EXPECT_EQ(path[1]->label.kind, LabelKind::Fe);
  EXPECT_EQ(path[2]->label.kind, LabelKind::Write);
  EXPECT_EQ(path[3]->label.kind, LabelKind::BufferRegister);
  EXPECT_EQ(path[4]->label.kind, LabelKind::Call);
  EXPECT_EQ(path[4]->label.callee, "strcpy");

  auto top = [&](const Transition* t) { return render_frame(s.states[t->dst].frames.back()); };
  EXPECT_EQ(render_frame(s.states[s.initial].frames.back()), "0..7:C");
  EXPECT_EQ(top(path[0]), "0..15:C");
  EXPECT_EQ(top(path[1]), "0..15:C 16..47:F");
  EXPECT_EQ(top(path[2]), "0..15:C 16..31:F 32..39:O 40..47:F");
  const StackFrame& reg = s.states[path[3]->dst].frames.back();
  ASSERT_EQ(reg.buffers.size(), 1u);
  EXPECT_EQ(reg.buffers[0], (Buffer{-16, 16}));
  EXPECT_EQ(top(path[4]), "0..15:M 16..39:O 40..47:F");
}

TEST(Build, EveryTransitionReplaysItsMemOp) {
  for (const auto& c : corpus_manifest()) {
    auto b = build(corpus_text(c.file));
    const MemStaCe& s = b.space;
    ASSERT_FALSE(s.transitions.empty()) << c.name;
    for (const auto& t : s.transitions) {
      MemoryState replay = apply_memory_operator(s.states[t.src], t.memop);
      EXPECT_EQ(replay.frames, s.states[t.dst].frames) << c.name << " @" << std::hex << t.label.address;
    }
  }
}

TEST(Build, DeltasAreTheByteDifference) {
  for (const auto& c : corpus_manifest()) {
    auto b = build(corpus_text(c.file));
    const MemStaCe& s = b.space;
    for (const auto& t : s.transitions) {
      const auto& x = s.states[t.src].frames;
      const auto& y = s.states[t.dst].frames;
      std::size_t expected = 0;
      for (std::size_t f = 0; f < std::max(x.size(), y.size()); ++f) {
        std::size_t nx = f < x.size() ? x[f].bytes.size() : 0;
        std::size_t ny = f < y.size() ? y[f].bytes.size() : 0;
        for (std::size_t i = 0; i < std::max(nx, ny); ++i) {
          std::optional<ByteState> before, after;
          if (i < nx) before = x[f].bytes[i];
          if (i < ny) after = y[f].bytes[i];
          if (before != after) ++expected;
        }
      }
      EXPECT_EQ(t.deltas.size(), expected) << c.name << " @" << std::hex << t.label.address;
      for (const auto& d : t.deltas) EXPECT_NE(d.before, d.after);
    }
  }
}

TEST(Build, AtomicWritesSplitPerByte) {
  Config cfg;
  cfg.atomic_writes = true;
  auto b = build(copy_listing(), "copy", cfg);
  std::size_t writes = 0;
  for (const auto& t : b.space.transitions) {
    if (t.label.kind != LabelKind::Write) continue;
    ++writes;
    EXPECT_EQ(t.memop.touches.size(), 1u);
  }
  EXPECT_EQ(writes, 8u);  // the 8-byte argument spill
}

TEST(Build, InterproceduralCallAddsAFrame) {
  auto b = build(corpus_text("strcpy_interproc_vuln.asm"));
  bool saw_two = false;
  for (const auto& st : b.space.states)
    if (st.frames.size() == 2) {
      saw_two = true;
      EXPECT_EQ(st.frames[0].label, "main");
      EXPECT_EQ(st.frames[1].label, "copy");
    }
  EXPECT_TRUE(saw_two);
}

TEST(Build, StateBudgetTruncates) {
  Config cfg;
  cfg.max_states = 3;
  auto b = build(copy_listing(), "copy", cfg);
  EXPECT_TRUE(b.space.truncated);
  EXPECT_LE(b.space.states.size(), 4u);
}

TEST(Export, JsonAndDotDescribeTheSameSpace) {
  auto b = build(copy_listing(), "copy");
  auto doc = nlohmann::json::parse(b.space.to_json());
  EXPECT_EQ(doc.at("states").size(), b.space.states.size());
  EXPECT_EQ(doc.at("transitions").size(), b.space.transitions.size());
  std::string dot = b.space.to_dot();
  EXPECT_EQ(dot.rfind("digraph", 0), 0u);
  std::size_t arrows = 0;
  for (std::size_t p = dot.find("->"); p != std::string::npos; p = dot.find("->", p + 2)) ++arrows;
  EXPECT_GE(arrows, b.space.transitions.size());
}
