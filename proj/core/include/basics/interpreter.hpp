#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "basics/instruction.hpp"
#include "basics/libc_db.hpp"

namespace basics {

/// A machine word whose value may be unknown (emulation of unresolved inputs).
struct Value {
  std::uint64_t bits = 0;
  bool known = true;

  static Value unknown() { return {0, false}; }
  bool operator==(const Value&) const = default;
};

struct MemByte {
  std::uint8_t value = 0;
  bool known = true;
  bool operator==(const MemByte&) const = default;
};

/// Sparse, page-granular, copy-on-write memory. Copies share pages until one
/// side writes, which keeps forked emulation paths cheap.
class Memory {
 public:
  enum class RegionKind { Stack, Data, Argv };
  struct Region {
    std::uint64_t lo = 0;
    std::uint64_t hi = 0;  // exclusive
    RegionKind kind = RegionKind::Data;
    MemByte fill;
  };

  void map(std::uint64_t lo, std::uint64_t hi, RegionKind kind, MemByte fill);
  const Region* region_of(std::uint64_t addr) const;
  std::optional<MemByte> read(std::uint64_t addr) const;
  /// Returns false when the address is unmapped.
  bool write(std::uint64_t addr, MemByte b);
  /// Addresses in [lo, hi) whose byte differs between the two memories.
  static std::vector<std::uint64_t> diff(const Memory& a, const Memory& b, std::uint64_t lo, std::uint64_t hi);

 private:
  static constexpr std::uint64_t kPage = 4096;
  struct Page {
    std::array<std::uint8_t, kPage> value{};
    std::array<bool, kPage> known{};
  };
  const Page* page(std::uint64_t index) const;
  MemByte fill_at(std::uint64_t addr) const;

  std::vector<Region> regions_;
  std::map<std::uint64_t, std::shared_ptr<Page>> pages_;
};

enum class CrashCause {
  None,
  ReturnAddressCorrupted,
  BaseRegisterCorrupted,
  CanaryMismatch,
  OutOfStackWrite,
  InvalidAccess,
};

const char* to_string(CrashCause cause);

struct ProgramInput {
  std::string stdin_data;
  std::vector<std::string> argv;  // argv[0] is the program name
};

struct MachineOptions {
  /// Emulation mode: registers start unknown, argc is unknown, unknown
  /// branch conditions fork, and unknown string pointers read as an attacker
  /// string of `attacker_len` 'A' bytes.
  bool symbolic = false;
  std::size_t attacker_len = 16;
  std::size_t max_input_len = 4096;
  std::uint64_t step_budget = 1'000'000;
  std::size_t max_call_depth = 16;
};

/// Fixed layout constants of the emulated address space.
struct Layout {
  static constexpr std::uint64_t kStackEntry = 0x7ff000000000ULL;  // rsp at root entry
  static constexpr std::uint64_t kArgvBase = 0x7ff800000000ULL;
  static constexpr std::uint64_t kRootReturn = 0x5eadbeefcafe1234ULL;
  static constexpr std::uint64_t kInitialRbp = 0x7ff0000f1e2d3c4bULL;
  static constexpr std::uint64_t kCanary = 0x2f8e9c4b7d1a3e65ULL;
  static constexpr std::uint8_t kStackPoison = 0xcc;
  static constexpr std::uint64_t kStackBelow = 8ULL << 20;
  static std::uint64_t stack_above(std::size_t max_input_len) { return ((max_input_len + 65536) + 4095) & ~4095ULL; }
};

/// Shadow of one activation: the control data recorded when it was set up.
struct ShadowFrame {
  std::string function;
  Address return_address = 0;
  std::uint64_t ret_slot = 0;
  std::uint64_t ret_value = 0;
  std::optional<std::uint64_t> saved_rbp_slot;
  std::uint64_t caller_rbp = 0;
  bool caller_rbp_known = true;
  std::optional<std::uint64_t> canary_slot;
  bool pushed = false;
};

enum class StepKind { Continue, Exited, Crashed, Fork, PathEnd, Budget };

struct StepResult {
  StepKind kind = StepKind::Continue;
  Address taken = 0;        // Fork: branch target
  Address fallthrough = 0;  // Fork: next instruction
};

class Machine {
 public:
  Machine(const ProgramImage& image, const LibcDatabase& libc, MachineOptions opts);

  /// Prepares registers, stack and argv, and places the program counter at
  /// `function`'s entry. `rsp_entry` (absolute) defaults to Layout::kStackEntry.
  void start(const std::string& function, const ProgramInput& input, std::optional<std::uint64_t> rsp_entry = {});

  StepResult step();

  Address rip() const { return rip_; }
  void set_rip(Address a) { rip_ = a; }
  std::uint64_t steps() const { return steps_; }
  const std::vector<ShadowFrame>& shadow() const { return shadow_; }
  /// Return addresses of active user calls below the root, outermost first.
  std::vector<Address> call_chain() const;
  const Memory& memory() const { return mem_; }
  std::uint64_t stack_lo() const { return stack_lo_; }
  std::uint64_t stack_hi() const { return stack_hi_; }
  const std::string& stdout_data() const { return out_; }
  std::int64_t exit_code() const { return exit_code_; }
  CrashCause crash_cause() const { return crash_; }
  const std::vector<std::string>& notes() const { return notes_; }
  const Instruction* current() const;
  Value reg(Gpr r) const { return regs_[static_cast<std::size_t>(r)]; }
  void set_reg(Gpr r, Value v) { regs_[static_cast<std::size_t>(r)] = v; }
  /// True when the instruction at rip is a call to a library function.
  std::optional<std::string> pending_library_call() const;
  /// Instruction visit counts on this path (used to bound unknown loops).
  std::size_t visits(Address a) const;
  std::size_t input_reads() const { return input_reads_; }

 private:
  struct Flags {
    enum class Op { None, Sub, Add, Logic, Inc, Dec, Neg, Shift } op = Op::None;
    std::uint64_t a = 0, b = 0, r = 0;
    int width = 8;
    bool known = true;
    bool cf = false;
  };

  std::optional<bool> eval_cond(Cond c) const;
  Value get(const RegisterRef& r) const;
  void put(const RegisterRef& r, Value v);
  std::optional<std::uint64_t> effective_address(const MemoryRef& m, bool& known) const;
  Value read_mem(std::uint64_t addr, int width);
  bool write_mem(std::uint64_t addr, int width, Value v);
  bool write_byte(std::uint64_t addr, MemByte b);
  Value read_operand(const Operand& op, int width);
  bool write_operand(const Operand& op, int width, Value v);
  int operand_width(const Instruction& ins, std::size_t i) const;
  void push(Value v);
  Value pop();
  StepResult crash(CrashCause cause);
  StepResult do_call(const Instruction& ins, Address next);
  StepResult do_ret();
  StepResult do_library(const std::string& name, Address next);
  StepResult do_safecall(const Instruction& ins, Address next);
  void record_canary_store(std::uint64_t addr, Value v, int width);

  // C-string helpers over emulated memory.
  std::vector<MemByte> read_cstring(Value ptr, std::size_t limit);
  std::uint64_t store_bytes(std::uint64_t dest, const std::vector<MemByte>& bytes, bool& ok);
  std::vector<MemByte> format(const std::vector<MemByte>& fmt, int first_arg, bool& opaque);
  int scan(const std::vector<MemByte>& fmt, int first_arg, std::size_t width_cap);
  Value arg(int i);
  std::optional<MemByte> next_input();
  std::uint64_t runtime_bound(std::uint64_t dest) const;

  const ProgramImage* image_;
  const LibcDatabase* libc_;
  MachineOptions opts_;
  struct CodeEntry {
    const Instruction* ins = nullptr;
    Address next = 0;
    bool function_entry = false;
  };
  std::shared_ptr<const std::unordered_map<Address, CodeEntry>> code_;
  std::array<Value, kGprCount> regs_{};
  Address rip_ = 0;
  Flags flags_;
  Memory mem_;
  std::uint64_t stack_lo_ = 0, stack_hi_ = 0;
  std::vector<ShadowFrame> shadow_;
  std::string stdin_;
  std::size_t stdin_pos_ = 0;
  std::size_t input_reads_ = 0;
  std::string out_;
  std::int64_t exit_code_ = 0;
  CrashCause crash_ = CrashCause::None;
  std::uint64_t steps_ = 0;
  std::vector<std::string> notes_;
  std::unordered_map<Address, std::size_t> visits_;
};

}  // namespace basics
