#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace basics {

using Address = std::uint64_t;

// General-purpose registers in hardware encoding order, plus rip for
// rip-relative memory operands.
enum class Gpr : std::uint8_t {
  rax, rcx, rdx, rbx, rsp, rbp, rsi, rdi,
  r8, r9, r10, r11, r12, r13, r14, r15,
  rip,
};

inline constexpr std::size_t kGprCount = 16;

/// A register operand as written: the full register it aliases, the access
/// width in bytes, and whether it is one of the legacy high-byte names.
struct RegisterRef {
  Gpr reg = Gpr::rax;
  std::uint8_t width = 8;
  bool high_byte = false;

  bool operator==(const RegisterRef&) const = default;
};

std::optional<RegisterRef> parse_register(std::string_view name);
std::string register_name(const RegisterRef& ref);
std::string gpr_name(Gpr reg);

enum class Mnemonic : std::uint8_t {
  Endbr64, Push, Pop, Mov, Movzx, Movsx, Movsxd, Cdqe, Cdq, Xchg, Lea,
  Sub, Add, Inc, Dec, Neg, Not, Imul, And, Or, Xor, Shl, Shr, Sar,
  Cmp, Test, Call, Ret, Leave, Jmp, Jcc, Cmovcc, Setcc, Nop, Hlt,
  Safecall,
  Unknown,
};

/// Condition codes for the jcc / cmovcc / setcc families.
enum class Cond : std::uint8_t { None, O, NO, B, AE, E, NE, BE, A, S, NS, P, NP, L, GE, LE, G };

struct MemoryRef {
  std::optional<RegisterRef> base;
  std::optional<RegisterRef> index;
  std::uint8_t scale = 1;
  std::int64_t displacement = 0;
  bool fs_segment = false;
  std::uint8_t size = 0;  // 0 when the width comes from the other operand

  bool operator==(const MemoryRef&) const = default;
};

enum class OperandKind : std::uint8_t { Register, Immediate, Memory, CallTarget };

struct Operand {
  OperandKind kind = OperandKind::Immediate;
  RegisterRef reg;
  std::int64_t imm = 0;
  MemoryRef mem;
  Address target = 0;          // CallTarget
  std::optional<std::string> symbol;  // CallTarget decoration, e.g. strcpy@plt

  static Operand make_reg(RegisterRef r);
  static Operand make_imm(std::int64_t v);
  static Operand make_mem(MemoryRef m);
  static Operand make_target(Address a, std::optional<std::string> sym);

  bool operator==(const Operand&) const = default;
};

/// Parameters of a `safecall` pseudo-instruction emitted by the patcher.
struct SafeCall {
  std::string replacement;          // strncpy, strncat, snprintf, fgets, scanf_width
  std::vector<RegisterRef> args;
  std::optional<std::uint64_t> bound;  // nullopt = computed at run time
  bool terminate = true;

  bool operator==(const SafeCall&) const = default;
};

struct Instruction {
  Address address = 0;
  Mnemonic mnemonic = Mnemonic::Unknown;
  Cond cond = Cond::None;
  std::string mnemonic_text;  // as written, e.g. "jne", "cmovz"
  std::vector<Operand> operands;
  std::optional<SafeCall> safecall;
  std::string raw_text;  // source line with comments and surrounding whitespace removed
  std::size_t line = 0;

  bool is_call() const { return mnemonic == Mnemonic::Call; }
  bool is_branch() const { return mnemonic == Mnemonic::Jmp || mnemonic == Mnemonic::Jcc; }
  bool ends_block() const;
  /// Symbol attached to a direct call/jump target, with any "@plt" suffix kept.
  std::optional<std::string> target_symbol() const;
  std::optional<Address> direct_target() const;
  /// Canonical Intel-syntax rendering (without the address prefix).
  std::string text() const;
};

std::string to_string(Mnemonic m);

struct Function {
  std::string name;
  Address entry = 0;
  std::vector<Instruction> instructions;
  bool is_library() const;
};

/// Bytes declared with `.string` / `.byte` directives in a data section.
struct DataObject {
  std::string section;
  Address address = 0;
  std::vector<std::uint8_t> bytes;
  std::string raw_text;
};

struct ParseWarning {
  std::size_t line = 0;
  std::string message;
};

class ProgramImage {
 public:
  std::vector<Function> functions;
  std::vector<DataObject> data;
  std::vector<ParseWarning> warnings;

  bool empty() const { return functions.empty() && data.empty(); }
  std::size_t instruction_count() const;
  const Instruction* find_instruction(Address addr) const;
  const Function* find_function(std::string_view name) const;
  const Function* function_containing(Address addr) const;
  /// Next instruction after `addr` inside the same function, if any.
  const Instruction* next_instruction(Address addr) const;
  /// Highest address occupied by any instruction or data byte.
  Address max_address() const;
  /// Name of the program entry: `main` when present, otherwise the first
  /// non-library function.
  std::optional<std::string> entry_function() const;

  /// Serialize in the same disassembly grammar accepted by parse_disassembly.
  std::string serialize() const;
};

/// Removes a trailing "@plt" (or "@GLIBC...") decoration from a symbol.
std::string strip_symbol_decoration(std::string_view symbol);

}  // namespace basics
