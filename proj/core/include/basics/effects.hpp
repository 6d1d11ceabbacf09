#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "basics/config.hpp"
#include "basics/frontend.hpp"
#include "basics/interpreter.hpp"
#include "basics/libc_db.hpp"
#include "basics/memory_model.hpp"

namespace basics {

/// A natural loop: the header dominates every latch that jumps back to it.
struct LoopInfo {
  std::string function;
  Address header = 0;
  /// First successor outside the body (0 when the loop never exits).
  Address exit = 0;
  std::vector<Address> latches;     // blocks holding back edges
  std::set<Address> blocks;         // block starts in the body
  std::set<Address> instructions;   // instruction addresses in the body
};

struct LoopAnalysis {
  std::vector<LoopInfo> loops;
  /// Targets of retreating edges that are not dominated back edges.
  std::vector<Address> irreducible;
  std::vector<std::string> notes;

  const LoopInfo* loop_at(Address header) const;
};

LoopAnalysis detect_loops(const BCfg& bcfg);

enum class ArgKind { FrameAddress, Constant, FrameSlot, Unknown };

const char* to_string(ArgKind kind);

/// A recovered argument register value. FrameAddress is the address
/// `base + value`; FrameSlot is the 8-byte value stored at that address.
struct ArgValue {
  ArgKind kind = ArgKind::Unknown;
  std::int64_t value = 0;
  Gpr base = Gpr::rbp;
  std::vector<Address> chain;  // defining instructions, nearest first

  std::string describe() const;
};

struct CallArgs {
  Address site = 0;
  std::array<ArgValue, 6> regs;  // rdi, rsi, rdx, rcx, r8, r9
};

/// Resolves the System V argument registers at a call by scanning backwards
/// through mov/lea chains in the containing block and then its unique
/// predecessors, at most `depth` blocks deep.
CallArgs recover_arguments(const BCfg& bcfg, Address call_site, const LibcSpec& spec, std::size_t depth = 4);

struct CrashInput {
  enum class Stream { Stdin, Argv };
  Stream stream = Stream::Stdin;
  int argv_index = 1;
  std::size_t length = 0;
  std::string bytes;

  /// The run input for this crash: the bytes on their stream; the other
  /// stream carries the same filler so either consumer sees it.
  ProgramInput to_program_input() const;
};

/// Stack bytes changed by a library call or a loop, as addresses relative to
/// the emulated stack entry (the abstract address space of the stack model).
struct CallEffect {
  std::string callee;  // library name, or "loop"
  Address site = 0;    // call instruction or loop header
  std::vector<Address> chain;
  std::set<std::int64_t> touched;
  bool reached = false;
  bool opaque = false;
  bool input_dependent = false;
  bool grew_frames = false;
  bool exhausted = false;  // loop iteration budget hit
  std::optional<std::size_t> corrupting_length;
  std::optional<CrashInput> crash_input;
  std::vector<std::string> notes;

  /// Touches of the effect inside the frames of `m` (all nRWrite).
  AddressMapping map_onto(const MemoryState& m) const;
};

std::optional<CrashInput> extract_concrete_input(const CallEffect& effect);

/// Doubling probe lengths 1, 2, 4, ..., up to and including max_input_len.
std::vector<std::size_t> probe_lengths(std::size_t max_input_len);

/// Computes call and loop effects by emulating the program from its root
/// function for each probe length, recording every library call and loop it
/// passes. Results are cached per (site, call chain).
class EffectsOracle {
 public:
  EffectsOracle(const ProgramImage& image, const LibcDatabase& libc, Config cfg, std::string root,
                std::vector<LoopInfo> loops);
  ~EffectsOracle();
  EffectsOracle(const EffectsOracle&) = delete;
  EffectsOracle& operator=(const EffectsOracle&) = delete;

  /// Effect of the library call at `site` reached through `chain` (return
  /// addresses of active user calls). `state` supplies the frame layout for
  /// the fallback emulation from the containing function.
  const CallEffect& call(Address site, const std::vector<Address>& chain, const MemoryState& state);
  const CallEffect& loop(const LoopInfo& loop, const std::vector<Address>& chain, const MemoryState& state);

  std::size_t emulations() const;
  const LibcDatabase& libc() const;

  struct Impl;  // shared with the free emulate_* helpers

 private:
  std::unique_ptr<Impl> impl_;
};

/// Effect of one call site over every chain that reaches it.
CallEffect emulate_call(const ProgramImage& image, const LibcDatabase& libc, Address call_site, const Config& cfg,
                        std::optional<std::string> root = {});
CallEffect emulate_loop(const ProgramImage& image, const LibcDatabase& libc, const LoopInfo& loop, const Config& cfg,
                        std::optional<std::string> root = {});

}  // namespace basics
