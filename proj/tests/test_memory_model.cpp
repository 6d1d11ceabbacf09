#include <gtest/gtest.h>

#include <random>

#include "basics/error.hpp"
#include "basics/memory_model.hpp"

using namespace basics;

namespace {

constexpr ByteState F = ByteState::Free, C = ByteState::Critical, O = ByteState::Occupied, M = ByteState::Modified;

// Written out by hand from the automaton's diagram; nullopt marks the three
// undefined pairs.
struct Row {
  ByteState from;
  ByteOp op;
  std::optional<ByteState> to;
};
const Row kTable[] = {
    {F, ByteOp::nRWrite, O}, {F, ByteOp::RWrite, C},
    {O, ByteOp::nRWrite, M}, {O, ByteOp::RWrite, std::nullopt},
    {C, ByteOp::nRWrite, M}, {C, ByteOp::RWrite, std::nullopt},
    {M, ByteOp::nRWrite, M}, {M, ByteOp::RWrite, std::nullopt},
};

MemoryState frame_with_prologue(const std::string& name, std::uint64_t locals) {
  MemoryState m;
  MemOp fa;
  fa.kind = MemOpKind::Fa;
  fa.function = name;
  m = apply_memory_operator(m, fa);
  MemOp push;
  push.kind = MemOpKind::Push;
  push.byte_op = ByteOp::RWrite;
  push.marks_saved_rbp = true;
  m = apply_memory_operator(m, push);
  MemOp fe;
  fe.kind = MemOpKind::Fe;
  fe.amount = locals;
  return apply_memory_operator(m, fe);
}

}  // namespace

TEST(ByteAutomaton, MatchesHandWrittenTable) {
  int legal = 0, illegal = 0;
  for (const auto& r : kTable) {
    auto got = try_byte_transition(r.from, r.op);
    EXPECT_EQ(got, r.to) << to_string(r.from) << " " << to_string(r.op);
    if (r.to) {
      ++legal;
      EXPECT_EQ(byte_transition(r.from, r.op), *r.to);
    } else {
      ++illegal;
      try {
        byte_transition(r.from, r.op);
        ADD_FAILURE() << "expected IllegalByteTransition";
      } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::IllegalByteTransition);
      }
    }
  }
  EXPECT_EQ(legal, 5);
  EXPECT_EQ(illegal, 3);
}

TEST(ByteAutomaton, ModifiedIsAbsorbingUnderNonRiskyWrites) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 200; ++t) {
    ByteState s = static_cast<ByteState>(rng() % 4);
    bool reached = s == M;
    for (int k = 0; k < 8; ++k) {
      s = byte_transition(s, ByteOp::nRWrite);
      if (reached) { EXPECT_EQ(s, M); }
      reached = reached || s == M;
    }
  }
}

TEST(Buffer, IndicesFollowFrameLayout) {
  Buffer b{-16, 16};
  EXPECT_EQ(b.start_index(), 31);
  EXPECT_EQ(b.end_index(), 16);
  Buffer c{-32, 24};
  EXPECT_EQ(c.start_index(), 47);
  EXPECT_EQ(c.end_index(), 24);
}

TEST(StackFrame, AddressIndexRoundTrip) {
  MemoryState m = frame_with_prologue("copy", 32);
  const StackFrame& f = m.frames.back();
  EXPECT_EQ(f.size(), 48);
  EXPECT_EQ(f.rbp_anchor, -8);
  EXPECT_EQ(f.top_address(), -8 + 16 - 48);
  for (std::int64_t i = 0; i < f.size(); ++i) EXPECT_EQ(f.index_of(f.address_of(i)), i);
  EXPECT_FALSE(f.index_of(f.address_of(-1)).has_value());
  EXPECT_FALSE(f.index_of(f.address_of(f.size())).has_value());
}

TEST(MemoryOperators, PrologueMarksControlDataCritical) {
  MemoryState m = frame_with_prologue("copy", 32);
  const StackFrame& f = m.frames.back();
  EXPECT_TRUE(f.saved_rbp);
  EXPECT_EQ(render_frame(f), "0..15:C 16..47:F");
}

TEST(MemoryOperators, FramesStackBelowTheirCaller) {
  MemoryState m = frame_with_prologue("main", 16);
  MemOp fa;
  fa.kind = MemOpKind::Fa;
  fa.function = "copy";
  m = apply_memory_operator(m, fa);
  ASSERT_EQ(m.frames.size(), 2u);
  // The callee's return address sits just below the caller's top.
  EXPECT_EQ(m.frames[1].address_of(0), m.frames[0].top_address() - 1);
  MemOp ret;
  ret.kind = MemOpKind::Ret;
  m = apply_memory_operator(m, ret);
  EXPECT_EQ(m.frames.size(), 1u);
}

TEST(MemoryOperators, PopUnderflowThrows) {
  MemoryState m = frame_with_prologue("f", 0);
  MemOp pop;
  pop.kind = MemOpKind::Pop;
  pop.amount = 24;
  try {
    apply_memory_operator(m, pop);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PopUnderflow);
  }
}

TEST(MemoryOperators, PopDropsBuffersAboveTheNewTop) {
  MemoryState m = frame_with_prologue("f", 32);
  m.frames[0] = register_buffer(m.frames[0], -32, 16);
  MemOp pop;
  pop.kind = MemOpKind::Pop;
  pop.amount = 32;
  m = apply_memory_operator(m, pop);
  EXPECT_TRUE(m.frames[0].buffers.empty());
}

TEST(MemoryOperators, RiskyWriteOverControlDataIsIllegal) {
  MemoryState m = frame_with_prologue("f", 16);
  MemOp w;
  w.kind = MemOpKind::Write;
  w.touches = {{0, 3, ByteOp::RWrite}};
  EXPECT_THROW(apply_memory_operator(m, w), Error);
  w.touches = {{0, 3, ByteOp::nRWrite}};
  EXPECT_EQ(apply_memory_operator(m, w).frames[0].bytes[3], M);
}

TEST(MemoryOperators, WriteOutsideFrameThrows) {
  MemoryState m = frame_with_prologue("f", 16);
  MemOp w;
  w.kind = MemOpKind::Write;
  w.touches = {{0, 32, ByteOp::nRWrite}};
  try {
    apply_memory_operator(m, w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::WriteOutsideStack);
  }
}

TEST(MemoryOperators, CanaryStoreSetsFlag) {
  MemoryState m = frame_with_prologue("f", 16);
  MemOp w;
  w.kind = MemOpKind::Write;
  w.sets_canary = true;
  for (std::int64_t i = 16; i < 24; ++i) w.touches.push_back({0, i, ByteOp::RWrite});
  m = apply_memory_operator(m, w);
  EXPECT_TRUE(m.frames[0].has_canary);
  EXPECT_EQ(render_frame(m.frames[0]), "0..23:C 24..31:F");
}

TEST(RegisterBuffer, RejectsOverlapAndOutOfFrame) {
  MemoryState m = frame_with_prologue("f", 32);
  StackFrame f = register_buffer(m.frames[0], -16, 16);
  EXPECT_EQ(register_buffer(f, -16, 16).buffers.size(), 1u);  // duplicate ignored
  try {
    register_buffer(f, -20, 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OverlappingBuffer);
  }
  try {
    register_buffer(f, -64, 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::WriteOutsideStack);
  }
  StackFrame g = register_buffer(f, -32, 16);
  ASSERT_EQ(g.buffers.size(), 2u);
  EXPECT_LT(g.buffers[0].offset, g.buffers[1].offset);
}

TEST(AddressMapping, SplitsAcrossFramesAndCountsOutside) {
  MemoryState m = frame_with_prologue("main", 16);
  MemOp fa;
  fa.kind = MemOpKind::Fa;
  fa.function = "copy";
  m = apply_memory_operator(m, fa);
  // Eight bytes from the callee's return address upward run into main's locals.
  std::int64_t lo = m.frames[1].address_of(7);
  auto map = map_address_range(m, lo, 12, ByteOp::nRWrite);
  EXPECT_EQ(map.outside, 0u);
  ASSERT_EQ(map.touches.size(), 12u);
  EXPECT_EQ(map.touches.front().frame, 1u);
  EXPECT_EQ(map.touches.front().index, 7);
  EXPECT_EQ(map.touches[8].frame, 0u);
  EXPECT_EQ(map.touches[8].index, m.frames[0].size() - 1);
  auto above = map_address_range(m, m.frames[0].address_of(0) + 1, 4, ByteOp::nRWrite);
  EXPECT_EQ(above.outside, 4u);
}

TEST(StateKey, DistinguishesByteStatesAndLabels) {
  MemoryState a = frame_with_prologue("f", 16);
  MemoryState b = a;
  EXPECT_EQ(state_key(a), state_key(b));
  b.frames[0].bytes[20] = O;
  EXPECT_NE(state_key(a), state_key(b));
  b = a;
  b.incoming.kind = LabelKind::Call;
  b.incoming.callee = "gets";
  EXPECT_NE(state_key(a), state_key(b));
}
