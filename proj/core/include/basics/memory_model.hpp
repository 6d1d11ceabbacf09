#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "basics/instruction.hpp"

namespace basics {

enum class ByteState : std::uint8_t { Free, Critical, Occupied, Modified };
enum class ByteOp : std::uint8_t { RWrite, nRWrite };

const char* to_string(ByteState s);
char short_name(ByteState s);  // F, C, O, M
const char* to_string(ByteOp op);

/// The byte-state automaton. Throws Error(IllegalByteTransition) for the
/// three pairs it does not define.
ByteState byte_transition(ByteState s, ByteOp op);
/// Non-throwing variant used by exhaustive checks.
std::optional<ByteState> try_byte_transition(ByteState s, ByteOp op);

/// A stack buffer, identified by its signed byte offset from the frame's
/// base (the saved-RBP slot) and its size.
struct Buffer {
  std::int64_t offset = 0;
  std::uint64_t size = 0;

  /// Index of the lowest-address byte (the highest index in the span).
  std::int64_t start_index() const { return 15 - offset; }
  /// Index of the highest-address byte.
  std::int64_t end_index() const { return start_index() - static_cast<std::int64_t>(size) + 1; }

  bool operator==(const Buffer&) const = default;
  auto operator<=>(const Buffer&) const = default;
};

/// One activation record. Index i names the byte at address
/// `rbp_anchor + 15 - i`: 0-7 hold the return address, 8-15 the saved base
/// register, 16-23 the canary when present. Growing the frame appends
/// indices (lower addresses).
struct StackFrame {
  std::string label;
  std::vector<ByteState> bytes;
  std::vector<Buffer> buffers;  // kept sorted by offset
  bool has_canary = false;
  /// False for functions whose first stack operation was not `push rbp`;
  /// indices 8-15 are then not a saved base register.
  bool saved_rbp = false;
  std::int64_t rbp_anchor = 0;

  std::int64_t size() const { return static_cast<std::int64_t>(bytes.size()); }
  std::int64_t address_of(std::int64_t index) const { return rbp_anchor + 15 - index; }
  std::optional<std::int64_t> index_of(std::int64_t address) const;
  /// Lowest address in the frame, i.e. the stack pointer value.
  std::int64_t top_address() const { return rbp_anchor + 16 - size(); }

  bool operator==(const StackFrame&) const = default;
};

enum class LabelKind : std::uint8_t { Fa, Push, Pop, Write, Fe, Call, Loop, BufferRegister, Ret };

const char* to_string(LabelKind kind);

struct TransitionLabel {
  LabelKind kind = LabelKind::Fa;
  Address address = 0;
  std::string callee;  // Call: undecorated libc name; Fa/Ret: function name
  std::string text;    // instruction text shown in traces

  /// Rendering used by previous_transition atoms, e.g. "call gets", "loop", "push".
  std::string name() const;
};

struct MemoryState {
  std::vector<StackFrame> frames;  // caller to callee
  TransitionLabel incoming;

  const StackFrame* frame(std::string_view label) const;
};

/// A byte touched by a write, addressed by frame position and index.
struct Touch {
  std::size_t frame = 0;
  std::int64_t index = 0;
  ByteOp op = ByteOp::nRWrite;

  bool operator==(const Touch&) const = default;
};

enum class MemOpKind : std::uint8_t { NoEffect, Fa, Push, Pop, Fe, Write, Register, Ret, Indirect };

const char* to_string(MemOpKind kind);

/// A resolved memory operation, ready to apply to a MemoryState.
struct MemOp {
  MemOpKind kind = MemOpKind::NoEffect;
  ByteOp byte_op = ByteOp::nRWrite;    // Push
  std::uint64_t amount = 0;            // Pop / Fe byte counts
  std::string function;                // Fa: new frame label
  std::vector<Touch> touches;          // Write
  bool sets_canary = false;            // Write of the canary slot
  bool marks_saved_rbp = false;        // Push of the base register in a prologue
  std::size_t frame = 0;               // Register target frame
  Buffer buffer;                       // Register

  bool operator==(const MemOp&) const = default;
};

/// Applies a resolved operation. Throws PopUnderflow, IllegalByteTransition,
/// OverlappingBuffer, WriteOutsideStack (touch outside any frame).
MemoryState apply_memory_operator(const MemoryState& m, const MemOp& op);

/// Adds a buffer; duplicates are ignored. Throws OverlappingBuffer, or
/// WriteOutsideStack when the span is not inside the allocated frame.
StackFrame register_buffer(const StackFrame& f, std::int64_t offset, std::uint64_t size);

/// Maps a byte range [address, address+len) onto frames. Bytes outside all
/// frames are returned in `outside`.
struct AddressMapping {
  std::vector<Touch> touches;
  std::uint64_t outside = 0;
};
AddressMapping map_address_range(const MemoryState& m, std::int64_t address, std::uint64_t len, ByteOp op);

/// Run-length rendering of a frame's bytes, e.g. "0..15:C 16..47:F".
std::string render_frame(const StackFrame& f);

/// Structural identity of a state (frames + incoming label kind and callee).
std::string state_key(const MemoryState& m);

}  // namespace basics
