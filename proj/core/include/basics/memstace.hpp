#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "basics/config.hpp"
#include "basics/effects.hpp"
#include "basics/frontend.hpp"
#include "basics/memory_model.hpp"

namespace basics {

/// What one instruction does to the stack model, before it is resolved
/// against a concrete MemoryState.
struct MemOpClass {
  MemOpKind kind = MemOpKind::NoEffect;
  ByteOp byte_op = ByteOp::nRWrite;
  std::uint64_t amount = 0;       // Fe / Pop byte counts
  std::int64_t displacement = 0;  // Write: offset from `base`
  Gpr base = Gpr::rbp;            // Write: base register
  std::uint64_t width = 0;        // Write: bytes written
  bool canary = false;            // Write of the canary value
};

/// Facts about the executing frame that classification depends on.
struct ClassifyContext {
  /// No push has happened yet in the current frame.
  bool first_push = true;
  /// Registers currently holding the value loaded from fs:0x28.
  std::vector<Gpr> canary_registers;
};

MemOpClass classify_instruction(const Instruction& ins, const ClassifyContext& ctx);

/// Byte-state change recorded on a transition.
struct ByteDelta {
  std::size_t frame = 0;
  std::int64_t index = 0;
  std::optional<ByteState> before;  // nullopt: byte did not exist
  std::optional<ByteState> after;   // nullopt: byte was released
};

struct Transition {
  std::size_t src = 0;
  std::size_t dst = 0;
  TransitionLabel label;
  MemOpKind op = MemOpKind::NoEffect;
  /// The resolved operation; applying it to `src` yields `dst` (modulo label).
  MemOp memop;
  std::vector<ByteDelta> deltas;
};

/// Sizes pinned for buffers, keyed by function and rbp-relative offset.
struct BufferHints {
  std::map<std::string, std::map<std::int64_t, std::uint64_t>> sizes;

  /// {"functions": {"copy": [{"offset": -16, "size": 16}]}}
  static BufferHints from_json(std::string_view text);
  std::optional<std::uint64_t> lookup(const std::string& function, std::int64_t offset) const;
};

/// Inferred buffer sizes of one function: every buffer candidate (lea target
/// or indexed base on rbp) sized by the gap to the next higher known object.
std::map<std::int64_t, std::uint64_t> infer_buffer_sizes(const Function& f);

class MemStaCe {
 public:
  std::vector<MemoryState> states;
  std::vector<Transition> transitions;
  std::size_t initial = 0;
  bool truncated = false;
  std::string root;
  std::vector<std::string> notes;
  /// Functions whose frames lack a saved base register.
  std::vector<std::string> no_prologue;
  /// Effects spliced in at library calls and loops, keyed by (site, chain).
  std::map<std::pair<Address, std::vector<Address>>, CallEffect> effects;

  /// Indices into `transitions` leaving state `s`.
  const std::vector<std::size_t>& outgoing(std::size_t s) const;
  void index();

  std::string to_dot() const;
  std::string to_json() const;

 private:
  std::vector<std::vector<std::size_t>> out_;
};

struct BuildOptions {
  BufferHints hints;
  /// Polled between instructions; returning true stops construction and
  /// marks the space truncated.
  std::function<bool()> cancelled;
};

/// DFS over the bCFG from the root function. Library calls and loops splice
/// in the effects computed by `effects`.
MemStaCe build_memstace(const BCfg& bcfg, const FunctionMap& funcs, const ProgramImage& image,
                        const LoopAnalysis& loops, EffectsOracle& effects, const Config& cfg,
                        const std::string& root, const BuildOptions& opts = {});

}  // namespace basics
