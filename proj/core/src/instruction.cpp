#include "basics/instruction.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>

#include "basics/error.hpp"

namespace basics {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::UnknownMnemonic: return "UnknownMnemonic";
    case ErrorKind::DuplicateFunction: return "DuplicateFunction";
    case ErrorKind::DanglingBranch: return "DanglingBranch";
    case ErrorKind::IllegalByteTransition: return "IllegalByteTransition";
    case ErrorKind::WriteOutsideStack: return "WriteOutsideStack";
    case ErrorKind::PopUnderflow: return "PopUnderflow";
    case ErrorKind::OverlappingBuffer: return "OverlappingBuffer";
    case ErrorKind::StateBudgetExceeded: return "StateBudgetExceeded";
    case ErrorKind::UnknownLibc: return "UnknownLibc";
    case ErrorKind::EmulationDivergence: return "EmulationDivergence";
    case ErrorKind::TargetUnreachable: return "TargetUnreachable";
    case ErrorKind::IterationBudgetExhausted: return "IterationBudgetExhausted";
    case ErrorKind::IrreducibleLoop: return "IrreducibleLoop";
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::UnknownOperator: return "UnknownOperator";
    case ErrorKind::UnsupportedFragment: return "UnsupportedFragment";
    case ErrorKind::NoSinkFound: return "NoSinkFound";
    case ErrorKind::NoTemplate: return "NoTemplate";
    case ErrorKind::AlreadyPatched: return "AlreadyPatched";
    case ErrorKind::LabelCollision: return "LabelCollision";
    case ErrorKind::StepBudgetExceeded: return "StepBudgetExceeded";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

namespace {

constexpr std::array<const char*, 16> kNames64 = {"rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi",
                                                  "r8",  "r9",  "r10", "r11", "r12", "r13", "r14", "r15"};
constexpr std::array<const char*, 16> kNames32 = {"eax", "ecx", "edx",  "ebx",  "esp",  "ebp",  "esi",  "edi",
                                                  "r8d", "r9d", "r10d", "r11d", "r12d", "r13d", "r14d", "r15d"};
constexpr std::array<const char*, 16> kNames16 = {"ax",  "cx",  "dx",   "bx",   "sp",   "bp",   "si",   "di",
                                                  "r8w", "r9w", "r10w", "r11w", "r12w", "r13w", "r14w", "r15w"};
constexpr std::array<const char*, 16> kNames8 = {"al",  "cl",  "dl",   "bl",   "spl",  "bpl",  "sil",  "dil",
                                                 "r8b", "r9b", "r10b", "r11b", "r12b", "r13b", "r14b", "r15b"};
constexpr std::array<const char*, 4> kNamesHigh = {"ah", "ch", "dh", "bh"};

std::string hex(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string signed_hex(std::int64_t v) {
  if (v < 0) return "-" + hex(static_cast<std::uint64_t>(-(v + 1)) + 1);
  return hex(static_cast<std::uint64_t>(v));
}

const char* size_keyword(std::uint8_t size) {
  switch (size) {
    case 1: return "BYTE PTR ";
    case 2: return "WORD PTR ";
    case 4: return "DWORD PTR ";
    case 8: return "QWORD PTR ";
    case 16: return "XMMWORD PTR ";
    default: return "";
  }
}

std::string render_memory(const MemoryRef& m) {
  std::string out = size_keyword(m.size);
  if (m.fs_segment) {
    out += "fs:";
    if (!m.base && !m.index) return out + signed_hex(m.displacement);
  }
  if (!m.base && !m.index) return out + "ds:" + hex(static_cast<std::uint64_t>(m.displacement));
  out += "[";
  bool first = true;
  if (m.base) {
    out += register_name(*m.base);
    first = false;
  }
  if (m.index) {
    if (!first) out += "+";
    out += register_name(*m.index) + "*" + std::to_string(m.scale);
    first = false;
  }
  if (m.displacement != 0 || first) {
    if (m.displacement < 0) {
      out += signed_hex(m.displacement);
    } else {
      if (!first) out += "+";
      out += hex(static_cast<std::uint64_t>(m.displacement));
    }
  }
  return out + "]";
}

std::string render_operand(const Operand& op) {
  switch (op.kind) {
    case OperandKind::Register: return register_name(op.reg);
    case OperandKind::Immediate: return signed_hex(op.imm);
    case OperandKind::Memory: return render_memory(op.mem);
    case OperandKind::CallTarget: {
      std::string out = hex(op.target);
      if (op.symbol) out += " <" + *op.symbol + ">";
      return out;
    }
  }
  return {};
}

std::string escape_string(const std::vector<std::uint8_t>& bytes) {
  std::string out = "\"";
  std::size_t n = bytes.size();
  if (n > 0 && bytes.back() == 0) --n;
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char c = bytes[i];
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      default:
        if (c < 0x20 || c >= 0x7f) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\%03o", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out + "\"";
}

}  // namespace

std::optional<RegisterRef> parse_register(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (std::size_t i = 0; i < kGprCount; ++i) {
    auto reg = static_cast<Gpr>(i);
    if (lower == kNames64[i]) return RegisterRef{reg, 8, false};
    if (lower == kNames32[i]) return RegisterRef{reg, 4, false};
    if (lower == kNames16[i]) return RegisterRef{reg, 2, false};
    if (lower == kNames8[i]) return RegisterRef{reg, 1, false};
  }
  for (std::size_t i = 0; i < kNamesHigh.size(); ++i) {
    if (lower == kNamesHigh[i]) return RegisterRef{static_cast<Gpr>(i), 1, true};
  }
  if (lower == "rip") return RegisterRef{Gpr::rip, 8, false};
  // objdump spells r8b..r15b as r8l..r15l in some versions.
  if (lower.size() >= 3 && lower[0] == 'r' && lower.back() == 'l') {
    auto alt = lower.substr(0, lower.size() - 1) + "b";
    if (alt != lower) {
      for (std::size_t i = 8; i < kGprCount; ++i) {
        if (alt == kNames8[i]) return RegisterRef{static_cast<Gpr>(i), 1, false};
      }
    }
  }
  return std::nullopt;
}

std::string gpr_name(Gpr reg) {
  if (reg == Gpr::rip) return "rip";
  return kNames64[static_cast<std::size_t>(reg)];
}

std::string register_name(const RegisterRef& ref) {
  if (ref.reg == Gpr::rip) return "rip";
  auto i = static_cast<std::size_t>(ref.reg);
  if (ref.high_byte) return kNamesHigh[i];
  switch (ref.width) {
    case 1: return kNames8[i];
    case 2: return kNames16[i];
    case 4: return kNames32[i];
    default: return kNames64[i];
  }
}

Operand Operand::make_reg(RegisterRef r) {
  Operand op;
  op.kind = OperandKind::Register;
  op.reg = r;
  return op;
}

Operand Operand::make_imm(std::int64_t v) {
  Operand op;
  op.kind = OperandKind::Immediate;
  op.imm = v;
  return op;
}

Operand Operand::make_mem(MemoryRef m) {
  Operand op;
  op.kind = OperandKind::Memory;
  op.mem = m;
  return op;
}

Operand Operand::make_target(Address a, std::optional<std::string> sym) {
  Operand op;
  op.kind = OperandKind::CallTarget;
  op.target = a;
  op.symbol = std::move(sym);
  return op;
}

std::string to_string(Mnemonic m) {
  switch (m) {
    case Mnemonic::Endbr64: return "endbr64";
    case Mnemonic::Push: return "push";
    case Mnemonic::Pop: return "pop";
    case Mnemonic::Mov: return "mov";
    case Mnemonic::Movzx: return "movzx";
    case Mnemonic::Movsx: return "movsx";
    case Mnemonic::Movsxd: return "movsxd";
    case Mnemonic::Cdqe: return "cdqe";
    case Mnemonic::Cdq: return "cdq";
    case Mnemonic::Xchg: return "xchg";
    case Mnemonic::Lea: return "lea";
    case Mnemonic::Sub: return "sub";
    case Mnemonic::Add: return "add";
    case Mnemonic::Inc: return "inc";
    case Mnemonic::Dec: return "dec";
    case Mnemonic::Neg: return "neg";
    case Mnemonic::Not: return "not";
    case Mnemonic::Imul: return "imul";
    case Mnemonic::And: return "and";
    case Mnemonic::Or: return "or";
    case Mnemonic::Xor: return "xor";
    case Mnemonic::Shl: return "shl";
    case Mnemonic::Shr: return "shr";
    case Mnemonic::Sar: return "sar";
    case Mnemonic::Cmp: return "cmp";
    case Mnemonic::Test: return "test";
    case Mnemonic::Call: return "call";
    case Mnemonic::Ret: return "ret";
    case Mnemonic::Leave: return "leave";
    case Mnemonic::Jmp: return "jmp";
    case Mnemonic::Jcc: return "jcc";
    case Mnemonic::Cmovcc: return "cmovcc";
    case Mnemonic::Setcc: return "setcc";
    case Mnemonic::Nop: return "nop";
    case Mnemonic::Hlt: return "hlt";
    case Mnemonic::Safecall: return "safecall";
    case Mnemonic::Unknown: return "unknown";
  }
  return "unknown";
}

bool Instruction::ends_block() const {
  switch (mnemonic) {
    case Mnemonic::Jmp:
    case Mnemonic::Jcc:
    case Mnemonic::Ret:
    case Mnemonic::Call:
    case Mnemonic::Hlt:
      return true;
    default:
      return false;
  }
}

std::optional<std::string> Instruction::target_symbol() const {
  if ((is_call() || is_branch()) && !operands.empty() && operands[0].kind == OperandKind::CallTarget)
    return operands[0].symbol;
  return std::nullopt;
}

std::optional<Address> Instruction::direct_target() const {
  if ((is_call() || is_branch()) && !operands.empty() && operands[0].kind == OperandKind::CallTarget &&
      operands[0].target != 0)
    return operands[0].target;
  return std::nullopt;
}

std::string Instruction::text() const {
  if (mnemonic == Mnemonic::Safecall && safecall) {
    std::string out = "safecall " + safecall->replacement + "(";
    for (const auto& a : safecall->args) out += register_name(a) + ", ";
    out += safecall->bound ? std::to_string(*safecall->bound) : std::string("runtime");
    out += safecall->terminate ? ", nul)" : ", raw)";
    return out;
  }
  std::string out = mnemonic_text.empty() ? to_string(mnemonic) : mnemonic_text;
  for (std::size_t i = 0; i < operands.size(); ++i) {
    out += i == 0 ? " " : ", ";
    out += render_operand(operands[i]);
  }
  return out;
}

bool Function::is_library() const {
  return name.find("@plt") != std::string::npos;
}

std::size_t ProgramImage::instruction_count() const {
  std::size_t n = 0;
  for (const auto& f : functions) n += f.instructions.size();
  return n;
}

const Instruction* ProgramImage::find_instruction(Address addr) const {
  for (const auto& f : functions) {
    if (f.instructions.empty() || addr < f.instructions.front().address || addr > f.instructions.back().address)
      continue;
    auto it = std::lower_bound(f.instructions.begin(), f.instructions.end(), addr,
                               [](const Instruction& ins, Address a) { return ins.address < a; });
    if (it != f.instructions.end() && it->address == addr) return &*it;
  }
  return nullptr;
}

const Function* ProgramImage::find_function(std::string_view name) const {
  for (const auto& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

const Function* ProgramImage::function_containing(Address addr) const {
  for (const auto& f : functions) {
    if (f.instructions.empty()) continue;
    if (addr >= f.instructions.front().address && addr <= f.instructions.back().address) return &f;
  }
  return nullptr;
}

const Instruction* ProgramImage::next_instruction(Address addr) const {
  const Function* f = function_containing(addr);
  if (!f) return nullptr;
  auto it = std::upper_bound(f->instructions.begin(), f->instructions.end(), addr,
                             [](Address a, const Instruction& ins) { return a < ins.address; });
  return it == f->instructions.end() ? nullptr : &*it;
}

Address ProgramImage::max_address() const {
  Address top = 0;
  for (const auto& f : functions)
    for (const auto& ins : f.instructions) top = std::max(top, ins.address);
  for (const auto& d : data) top = std::max<Address>(top, d.address + (d.bytes.empty() ? 0 : d.bytes.size() - 1));
  return top;
}

std::optional<std::string> ProgramImage::entry_function() const {
  if (find_function("main")) return std::string("main");
  for (const auto& f : functions)
    if (!f.is_library() && !f.instructions.empty()) return f.name;
  return std::nullopt;
}

std::string ProgramImage::serialize() const {
  std::ostringstream out;
  char buf[32];
  for (const auto& f : functions) {
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(f.entry));
    out << buf << " <" << f.name << ">:\n";
    for (const auto& ins : f.instructions) {
      std::snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(ins.address));
      out << "  " << buf << ":\t" << ins.text() << "\n";
    }
    out << "\n";
  }
  std::string section;
  for (const auto& d : data) {
    if (d.section != section) {
      section = d.section;
      out << section << ":\n";
    }
    std::snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(d.address));
    bool is_string = !d.bytes.empty() && d.bytes.back() == 0 &&
                     std::none_of(d.bytes.begin(), d.bytes.end() - 1, [](std::uint8_t b) { return b == 0; });
    out << "  " << buf << ":\t";
    if (is_string) {
      out << ".string " << escape_string(d.bytes) << "\n";
    } else {
      out << ".byte ";
      for (std::size_t i = 0; i < d.bytes.size(); ++i) out << (i ? ", " : "") << hex(d.bytes[i]);
      out << "\n";
    }
  }
  return out.str();
}

std::string strip_symbol_decoration(std::string_view symbol) {
  auto at = symbol.find('@');
  auto plus = symbol.find('+');
  auto cut = std::min(at, plus);
  return std::string(symbol.substr(0, cut));
}

}  // namespace basics
