#include "basics/interpreter.hpp"

#include <algorithm>
#include <cstdio>
#include <cctype>
#include <cstring>
#include <set>

namespace basics {

// ---------------------------------------------------------------------------
// Memory

void Memory::map(std::uint64_t lo, std::uint64_t hi, RegionKind kind, MemByte fill) {
  regions_.push_back({lo, hi, kind, fill});
}

const Memory::Region* Memory::region_of(std::uint64_t addr) const {
  for (const auto& r : regions_)
    if (addr >= r.lo && addr < r.hi) return &r;
  return nullptr;
}

MemByte Memory::fill_at(std::uint64_t addr) const {
  const Region* r = region_of(addr);
  return r ? r->fill : MemByte{0, true};
}

const Memory::Page* Memory::page(std::uint64_t index) const {
  auto it = pages_.find(index);
  return it == pages_.end() ? nullptr : it->second.get();
}

std::optional<MemByte> Memory::read(std::uint64_t addr) const {
  if (!region_of(addr)) return std::nullopt;
  if (const Page* p = page(addr / kPage)) {
    auto off = addr % kPage;
    return MemByte{p->value[off], p->known[off]};
  }
  return fill_at(addr);
}

bool Memory::write(std::uint64_t addr, MemByte b) {
  if (!region_of(addr)) return false;
  auto index = addr / kPage;
  auto& slot = pages_[index];
  if (!slot) {
    slot = std::make_shared<Page>();
    std::uint64_t base = index * kPage;
    for (std::uint64_t i = 0; i < kPage; ++i) {
      MemByte f = fill_at(base + i);
      slot->value[i] = f.value;
      slot->known[i] = f.known;
    }
  } else if (slot.use_count() > 1) {
    slot = std::make_shared<Page>(*slot);
  }
  auto off = addr % kPage;
  slot->value[off] = b.value;
  slot->known[off] = b.known;
  return true;
}

std::vector<std::uint64_t> Memory::diff(const Memory& a, const Memory& b, std::uint64_t lo, std::uint64_t hi) {
  std::vector<std::uint64_t> out;
  std::set<std::uint64_t> indices;
  for (const auto* m : {&a, &b}) {
    for (auto it = m->pages_.lower_bound(lo / kPage); it != m->pages_.end() && it->first * kPage < hi; ++it)
      indices.insert(it->first);
  }
  for (auto index : indices) {
    const Page* pa = a.page(index);
    const Page* pb = b.page(index);
    if (pa == pb) continue;
    std::uint64_t base = index * kPage;
    for (std::uint64_t i = 0; i < kPage; ++i) {
      std::uint64_t addr = base + i;
      if (addr < lo || addr >= hi) continue;
      MemByte x = pa ? MemByte{pa->value[i], pa->known[i]} : a.fill_at(addr);
      MemByte y = pb ? MemByte{pb->value[i], pb->known[i]} : b.fill_at(addr);
      if (!(x == y)) out.push_back(addr);
    }
  }
  return out;
}

const char* to_string(CrashCause cause) {
  switch (cause) {
    case CrashCause::None: return "none";
    case CrashCause::ReturnAddressCorrupted: return "return-address-corrupted";
    case CrashCause::BaseRegisterCorrupted: return "base-register-corrupted";
    case CrashCause::CanaryMismatch: return "canary-mismatch";
    case CrashCause::OutOfStackWrite: return "out-of-stack-write";
    case CrashCause::InvalidAccess: return "invalid-access";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Machine setup

namespace {

std::uint64_t mask_of(int width) { return width >= 8 ? ~0ULL : ((1ULL << (width * 8)) - 1); }

std::int64_t sign_extend(std::uint64_t v, int width) {
  if (width >= 8) return static_cast<std::int64_t>(v);
  int bits = width * 8;
  std::uint64_t m = 1ULL << (bits - 1);
  v &= mask_of(width);
  return static_cast<std::int64_t>((v ^ m) - m);
}

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }


}  // namespace

Machine::Machine(const ProgramImage& image, const LibcDatabase& libc, MachineOptions opts)
    : image_(&image), libc_(&libc), opts_(opts) {
  auto code = std::make_shared<std::unordered_map<Address, CodeEntry>>();
  for (const auto& f : image.functions) {
    for (std::size_t i = 0; i < f.instructions.size(); ++i) {
      CodeEntry e;
      e.ins = &f.instructions[i];
      e.next = i + 1 < f.instructions.size() ? f.instructions[i + 1].address : 0;
      e.function_entry = i == 0;
      (*code)[f.instructions[i].address] = e;
    }
  }
  code_ = std::move(code);
}

void Machine::start(const std::string& function, const ProgramInput& input, std::optional<std::uint64_t> rsp_entry) {
  const Function* f = image_->find_function(function);
  stack_lo_ = Layout::kStackEntry - Layout::kStackBelow;
  stack_hi_ = Layout::kStackEntry + Layout::stack_above(opts_.max_input_len);
  mem_ = Memory();
  mem_.map(stack_lo_, stack_hi_, Memory::RegionKind::Stack, {Layout::kStackPoison, true});
  for (const auto& d : image_->data) {
    if (d.bytes.empty()) continue;
    mem_.map(d.address, d.address + d.bytes.size(), Memory::RegionKind::Data, {0, true});
    for (std::size_t i = 0; i < d.bytes.size(); ++i) mem_.write(d.address + i, {d.bytes[i], true});
  }

  // argv block: pointer array, NULL, envp NULL, then the strings.
  std::uint64_t ptrs = Layout::kArgvBase;
  std::uint64_t strings = ptrs + 8 * (input.argv.size() + 2);
  std::uint64_t total = 0;
  for (const auto& a : input.argv) total += a.size() + 1;
  mem_.map(ptrs, strings + total + 16, Memory::RegionKind::Argv, {0, true});
  std::uint64_t cursor = strings;
  for (std::size_t i = 0; i < input.argv.size(); ++i) {
    for (int k = 0; k < 8; ++k)
      mem_.write(ptrs + 8 * i + k, {static_cast<std::uint8_t>(cursor >> (8 * k)), true});
    for (char c : input.argv[i]) mem_.write(cursor++, {static_cast<std::uint8_t>(c), true});
    mem_.write(cursor++, {0, true});
  }

  for (auto& r : regs_) r = opts_.symbolic ? Value::unknown() : Value{0, true};
  std::uint64_t rsp = rsp_entry.value_or(Layout::kStackEntry);
  write_mem(rsp, 8, {Layout::kRootReturn, true});
  set_reg(Gpr::rsp, {rsp, true});
  set_reg(Gpr::rbp, {Layout::kInitialRbp, true});
  set_reg(Gpr::rdi, opts_.symbolic ? Value::unknown() : Value{input.argv.size(), true});
  set_reg(Gpr::rsi, {ptrs, true});
  set_reg(Gpr::rdx, {ptrs + 8 * (input.argv.size() + 1), true});
  // A root other than main is entered as if called with the program input:
  // every argument register points at argv[1], matching the attacker string
  // that unknown pointers read as during emulation.
  if (!opts_.symbolic && function != "main" && !input.argv.empty()) {
    std::uint64_t arg = strings;
    if (input.argv.size() > 1) arg += input.argv[0].size() + 1;
    for (Gpr r : {Gpr::rdi, Gpr::rsi, Gpr::rdx, Gpr::rcx, Gpr::r8, Gpr::r9}) set_reg(r, {arg, true});
  }

  stdin_ = input.stdin_data;
  stdin_pos_ = 0;
  out_.clear();
  shadow_.clear();
  ShadowFrame root;
  root.function = function;
  root.return_address = Layout::kRootReturn;
  root.ret_slot = rsp;
  root.ret_value = Layout::kRootReturn;
  root.caller_rbp = Layout::kInitialRbp;
  shadow_.push_back(root);
  rip_ = f && !f->instructions.empty() ? f->instructions.front().address : 0;
  steps_ = 0;
  crash_ = CrashCause::None;
  exit_code_ = 0;
  visits_.clear();
}

std::vector<Address> Machine::call_chain() const {
  std::vector<Address> out;
  for (std::size_t i = 1; i < shadow_.size(); ++i) out.push_back(shadow_[i].return_address);
  return out;
}

const Instruction* Machine::current() const {
  auto it = code_->find(rip_);
  return it == code_->end() ? nullptr : it->second.ins;
}

std::size_t Machine::visits(Address a) const {
  auto it = visits_.find(a);
  return it == visits_.end() ? 0 : it->second;
}

std::optional<std::string> Machine::pending_library_call() const {
  const Instruction* ins = current();
  if (!ins || !ins->is_call() || ins->operands.empty() || ins->operands[0].kind != OperandKind::CallTarget)
    return std::nullopt;
  const auto& op = ins->operands[0];
  if (op.target != 0) {
    if (auto it = code_->find(op.target); it != code_->end() && it->second.function_entry) {
      const Function* f = image_->function_containing(op.target);
      if (f && !f->is_library()) return std::nullopt;
      if (f) return strip_symbol_decoration(f->name);
    }
  }
  if (op.symbol) {
    const Function* f = image_->find_function(*op.symbol);
    if (f && !f->is_library() && !f->instructions.empty()) return std::nullopt;
    return strip_symbol_decoration(*op.symbol);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Registers, memory, operands

Value Machine::get(const RegisterRef& r) const {
  if (r.reg == Gpr::rip) return {rip_, true};
  Value full = regs_[static_cast<std::size_t>(r.reg)];
  if (r.high_byte) return {(full.bits >> 8) & 0xff, full.known};
  return {full.bits & mask_of(r.width), full.known};
}

void Machine::put(const RegisterRef& r, Value v) {
  auto& full = regs_[static_cast<std::size_t>(r.reg)];
  if (r.high_byte) {
    full = {(full.bits & ~0xff00ULL) | ((v.bits & 0xff) << 8), full.known && v.known};
  } else if (r.width == 8) {
    full = v;
  } else if (r.width == 4) {
    full = {v.bits & 0xffffffffULL, v.known};
  } else {
    std::uint64_t m = mask_of(r.width);
    full = {(full.bits & ~m) | (v.bits & m), full.known && v.known};
  }
  if (!full.known) full.bits = 0;
}

std::optional<std::uint64_t> Machine::effective_address(const MemoryRef& m, bool& known) const {
  known = true;
  std::uint64_t a = static_cast<std::uint64_t>(m.displacement);
  if (m.base) {
    if (m.base->reg == Gpr::rip) {
      auto it = code_->find(rip_);
      a += it != code_->end() && it->second.next ? it->second.next : rip_;
    } else {
      Value b = get(*m.base);
      if (!b.known) known = false;
      a += b.bits;
    }
  }
  if (m.index) {
    Value i = get(*m.index);
    if (!i.known) known = false;
    a += i.bits * m.scale;
  }
  if (!known) return std::nullopt;
  return a;
}

Value Machine::read_mem(std::uint64_t addr, int width) {
  std::uint64_t v = 0;
  bool known = true;
  for (int k = 0; k < width; ++k) {
    auto b = mem_.read(addr + k);
    if (!b) {
      if (!opts_.symbolic && crash_ == CrashCause::None) crash_ = CrashCause::InvalidAccess;
      return Value::unknown();
    }
    if (!b->known) known = false;
    v |= static_cast<std::uint64_t>(b->value) << (8 * k);
  }
  if (!known) return Value::unknown();
  return {v, true};
}

bool Machine::write_byte(std::uint64_t addr, MemByte b) {
  if (mem_.write(addr, b)) return true;
  if (opts_.symbolic) {
    notes_.push_back("dropped write outside mapped memory");
    return true;
  }
  if (crash_ == CrashCause::None)
    crash_ = addr >= stack_hi_ && addr < stack_hi_ + (16ULL << 20) ? CrashCause::OutOfStackWrite
                                                                   : CrashCause::InvalidAccess;
  return false;
}

bool Machine::write_mem(std::uint64_t addr, int width, Value v) {
  for (int k = 0; k < width; ++k) {
    MemByte b{static_cast<std::uint8_t>(v.bits >> (8 * k)), v.known};
    if (!v.known) b.value = 0;
    if (!write_byte(addr + k, b)) return false;
  }
  return true;
}

int Machine::operand_width(const Instruction& ins, std::size_t i) const {
  const Operand& op = ins.operands[i];
  if (op.kind == OperandKind::Register) return op.reg.width;
  if (op.kind == OperandKind::Memory && op.mem.size) return op.mem.size;
  for (std::size_t j = 0; j < ins.operands.size(); ++j) {
    if (j == i) continue;
    if (ins.operands[j].kind == OperandKind::Register) return ins.operands[j].reg.width;
    if (ins.operands[j].kind == OperandKind::Memory && ins.operands[j].mem.size) return ins.operands[j].mem.size;
  }
  return 8;
}

Value Machine::read_operand(const Operand& op, int width) {
  switch (op.kind) {
    case OperandKind::Register: return get(op.reg);
    case OperandKind::Immediate: return {static_cast<std::uint64_t>(op.imm) & mask_of(width), true};
    case OperandKind::CallTarget: return {op.target, true};
    case OperandKind::Memory: {
      if (op.mem.fs_segment && !op.mem.base && !op.mem.index) {
        if (op.mem.displacement == 0x28) return {Layout::kCanary & mask_of(width), true};
        return {0, true};
      }
      bool known = true;
      auto a = effective_address(op.mem, known);
      if (!a) return Value::unknown();
      return read_mem(*a, width);
    }
  }
  return Value::unknown();
}

void Machine::record_canary_store(std::uint64_t addr, Value v, int width) {
  if (width == 8 && v.known && v.bits == Layout::kCanary && !shadow_.empty() && addr >= stack_lo_ &&
      addr < stack_hi_)
    shadow_.back().canary_slot = addr;
}

bool Machine::write_operand(const Operand& op, int width, Value v) {
  if (op.kind == OperandKind::Register) {
    put(op.reg, v);
    return true;
  }
  if (op.kind != OperandKind::Memory) return true;
  bool known = true;
  auto a = effective_address(op.mem, known);
  if (!a) {
    if (opts_.symbolic) {
      notes_.push_back("dropped write through unknown pointer");
      return true;
    }
    if (crash_ == CrashCause::None) crash_ = CrashCause::InvalidAccess;
    return false;
  }
  record_canary_store(*a, v, width);
  return write_mem(*a, width, v);
}

void Machine::push(Value v) {
  Value rsp = reg(Gpr::rsp);
  rsp.bits -= 8;
  set_reg(Gpr::rsp, rsp);
  write_mem(rsp.bits, 8, v);
}

Value Machine::pop() {
  Value rsp = reg(Gpr::rsp);
  Value v = read_mem(rsp.bits, 8);
  rsp.bits += 8;
  set_reg(Gpr::rsp, rsp);
  return v;
}

StepResult Machine::crash(CrashCause cause) {
  if (crash_ == CrashCause::None) crash_ = cause;
  return {StepKind::Crashed};
}

std::optional<bool> Machine::eval_cond(Cond c) const {
  if (!flags_.known) return std::nullopt;
  const int w = flags_.width;
  const std::uint64_t m = mask_of(w);
  const std::uint64_t sign = 1ULL << (w * 8 - 1);
  std::uint64_t a = flags_.a & m, b = flags_.b & m, r = flags_.r & m;
  bool cf = false, of = false;
  switch (flags_.op) {
    case Flags::Op::Sub: cf = a < b; of = ((a ^ b) & (a ^ r) & sign) != 0; break;
    case Flags::Op::Add: cf = r < a; of = ((~(a ^ b)) & (a ^ r) & sign) != 0; break;
    case Flags::Op::Inc: cf = flags_.cf; of = r == sign; break;
    case Flags::Op::Dec: cf = flags_.cf; of = a == sign; break;
    case Flags::Op::Neg: cf = a != 0; of = a == sign; break;
    case Flags::Op::Logic:
    case Flags::Op::Shift:
    case Flags::Op::None: break;
  }
  bool zf = r == 0;
  bool sf = (r & sign) != 0;
  bool pf = __builtin_popcount(static_cast<unsigned>(r & 0xff)) % 2 == 0;
  switch (c) {
    case Cond::O: return of;
    case Cond::NO: return !of;
    case Cond::B: return cf;
    case Cond::AE: return !cf;
    case Cond::E: return zf;
    case Cond::NE: return !zf;
    case Cond::BE: return cf || zf;
    case Cond::A: return !cf && !zf;
    case Cond::S: return sf;
    case Cond::NS: return !sf;
    case Cond::P: return pf;
    case Cond::NP: return !pf;
    case Cond::L: return sf != of;
    case Cond::GE: return sf == of;
    case Cond::LE: return zf || sf != of;
    case Cond::G: return !zf && sf == of;
    case Cond::None: return true;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Execution

StepResult Machine::step() {
  if (crash_ != CrashCause::None) return {StepKind::Crashed};
  if (steps_ >= opts_.step_budget) return {StepKind::Budget};
  auto it = code_->find(rip_);
  if (it == code_->end()) {
    if (opts_.symbolic) return {StepKind::PathEnd};
    return crash(CrashCause::InvalidAccess);
  }
  const Instruction& ins = *it->second.ins;
  const Address next = it->second.next;
  ++steps_;
  ++visits_[rip_];

  auto finish = [&](bool ok) -> StepResult {
    if (!ok || crash_ != CrashCause::None) return crash(crash_ == CrashCause::None ? CrashCause::InvalidAccess : crash_);
    if (next == 0) {
      if (opts_.symbolic) return {StepKind::PathEnd};
      return crash(CrashCause::InvalidAccess);
    }
    rip_ = next;
    return {StepKind::Continue};
  };

  auto set_flags = [&](Flags::Op op, Value a, Value b, Value r, int w) {
    bool cf = flags_.known ? flags_.cf : false;
    if (flags_.op == Flags::Op::Sub) cf = (flags_.a & mask_of(flags_.width)) < (flags_.b & mask_of(flags_.width));
    flags_ = {op, a.bits, b.bits, r.bits, w, a.known && b.known && r.known, cf};
  };

  switch (ins.mnemonic) {
    case Mnemonic::Endbr64:
    case Mnemonic::Nop:
    case Mnemonic::Unknown:
      return finish(true);

    case Mnemonic::Hlt:
      return crash(CrashCause::InvalidAccess);

    case Mnemonic::Mov: {
      int w = operand_width(ins, 0);
      Value v = read_operand(ins.operands[1], w);
      return finish(write_operand(ins.operands[0], w, v));
    }
    case Mnemonic::Movzx:
    case Mnemonic::Movsx:
    case Mnemonic::Movsxd: {
      int dw = operand_width(ins, 0);
      int sw = ins.operands[1].kind == OperandKind::Register ? ins.operands[1].reg.width
                                                             : (ins.operands[1].mem.size ? ins.operands[1].mem.size : 4);
      Value v = read_operand(ins.operands[1], sw);
      if (v.known) {
        v.bits &= mask_of(sw);
        if (ins.mnemonic != Mnemonic::Movzx) v.bits = static_cast<std::uint64_t>(sign_extend(v.bits, sw)) & mask_of(dw);
      }
      return finish(write_operand(ins.operands[0], dw, v));
    }
    case Mnemonic::Cdqe: {
      Value v = get({Gpr::rax, 4, false});
      if (v.known) v.bits = static_cast<std::uint64_t>(sign_extend(v.bits, 4));
      set_reg(Gpr::rax, v);
      return finish(true);
    }
    case Mnemonic::Cdq: {
      Value v = get({Gpr::rax, 4, false});
      Value d = v.known ? Value{(v.bits & 0x80000000ULL) ? 0xffffffffULL : 0, true} : Value::unknown();
      put({Gpr::rdx, 4, false}, d);
      return finish(true);
    }
    case Mnemonic::Xchg: {
      int w = operand_width(ins, 0);
      Value a = read_operand(ins.operands[0], w);
      Value b = read_operand(ins.operands[1], w);
      bool ok = write_operand(ins.operands[0], w, b) && write_operand(ins.operands[1], w, a);
      return finish(ok);
    }
    case Mnemonic::Lea: {
      bool known = true;
      auto a = effective_address(ins.operands[1].mem, known);
      int w = operand_width(ins, 0);
      put(ins.operands[0].reg, a ? Value{*a & mask_of(w), true} : Value::unknown());
      return finish(true);
    }
    case Mnemonic::Add:
    case Mnemonic::Sub:
    case Mnemonic::And:
    case Mnemonic::Or:
    case Mnemonic::Xor:
    case Mnemonic::Cmp:
    case Mnemonic::Test: {
      int w = operand_width(ins, 0);
      Value a = read_operand(ins.operands[0], w);
      Value b = read_operand(ins.operands[1], w);
      if (ins.operands[1].kind == OperandKind::Immediate)
        b.bits = static_cast<std::uint64_t>(sign_extend(static_cast<std::uint64_t>(ins.operands[1].imm), 4)) & mask_of(w);
      Value r{0, a.known && b.known};
      Flags::Op fop = Flags::Op::Logic;
      switch (ins.mnemonic) {
        case Mnemonic::Add: r.bits = a.bits + b.bits; fop = Flags::Op::Add; break;
        case Mnemonic::Sub:
        case Mnemonic::Cmp: r.bits = a.bits - b.bits; fop = Flags::Op::Sub; break;
        case Mnemonic::And:
        case Mnemonic::Test: r.bits = a.bits & b.bits; break;
        case Mnemonic::Or: r.bits = a.bits | b.bits; break;
        default: r.bits = a.bits ^ b.bits; break;
      }
      // xor r, r is a known zero even when r is unknown.
      if (ins.mnemonic == Mnemonic::Xor && ins.operands[0] == ins.operands[1]) r = {0, true};
      if (ins.mnemonic == Mnemonic::And && b.known && (b.bits & mask_of(w)) == 0) r = {0, true};
      r.bits &= mask_of(w);
      if (!r.known) r.bits = 0;
      set_flags(fop, a, b, r, w);
      if (ins.mnemonic == Mnemonic::Cmp || ins.mnemonic == Mnemonic::Test) return finish(true);
      return finish(write_operand(ins.operands[0], w, r));
    }
    case Mnemonic::Inc:
    case Mnemonic::Dec:
    case Mnemonic::Neg:
    case Mnemonic::Not: {
      int w = operand_width(ins, 0);
      Value a = read_operand(ins.operands[0], w);
      Value r{0, a.known};
      Flags::Op fop = Flags::Op::Inc;
      switch (ins.mnemonic) {
        case Mnemonic::Inc: r.bits = a.bits + 1; break;
        case Mnemonic::Dec: r.bits = a.bits - 1; fop = Flags::Op::Dec; break;
        case Mnemonic::Neg: r.bits = 0 - a.bits; fop = Flags::Op::Neg; break;
        default: r.bits = ~a.bits; break;
      }
      r.bits &= mask_of(w);
      if (!r.known) r.bits = 0;
      if (ins.mnemonic != Mnemonic::Not) set_flags(fop, a, {1, true}, r, w);
      return finish(write_operand(ins.operands[0], w, r));
    }
    case Mnemonic::Imul: {
      int w = operand_width(ins, 0);
      Value a, b;
      const Operand* dst = &ins.operands[0];
      if (ins.operands.size() == 1) {
        a = get({Gpr::rax, static_cast<std::uint8_t>(w), false});
        b = read_operand(ins.operands[0], w);
        RegisterRef rax{Gpr::rax, static_cast<std::uint8_t>(w), false};
        Value r{a.bits * b.bits, a.known && b.known};
        put(rax, r.known ? r : Value::unknown());
        return finish(true);
      }
      if (ins.operands.size() == 2) {
        a = read_operand(ins.operands[0], w);
        b = read_operand(ins.operands[1], w);
      } else {
        a = read_operand(ins.operands[1], w);
        b = read_operand(ins.operands[2], w);
      }
      Value r{static_cast<std::uint64_t>(sign_extend(a.bits, w) * sign_extend(b.bits, w)) & mask_of(w),
              a.known && b.known};
      if (!r.known) r.bits = 0;
      set_flags(Flags::Op::Logic, a, b, r, w);
      return finish(write_operand(*dst, w, r));
    }
    case Mnemonic::Shl:
    case Mnemonic::Shr:
    case Mnemonic::Sar: {
      int w = operand_width(ins, 0);
      Value a = read_operand(ins.operands[0], w);
      Value c = ins.operands.size() > 1 ? read_operand(ins.operands[1], 1) : Value{1, true};
      Value r{0, a.known && c.known};
      unsigned n = static_cast<unsigned>(c.bits & (w == 8 ? 63 : 31));
      if (ins.mnemonic == Mnemonic::Shl) {
        r.bits = a.bits << n;
      } else if (ins.mnemonic == Mnemonic::Shr) {
        r.bits = (a.bits & mask_of(w)) >> n;
      } else {
        r.bits = static_cast<std::uint64_t>(sign_extend(a.bits, w) >> n);
      }
      r.bits &= mask_of(w);
      if (!r.known) r.bits = 0;
      set_flags(Flags::Op::Shift, a, c, r, w);
      return finish(write_operand(ins.operands[0], w, r));
    }
    case Mnemonic::Push: {
      Value v = read_operand(ins.operands[0], 8);
      if (!shadow_.empty() && !shadow_.back().pushed) {
        auto& top = shadow_.back();
        top.pushed = true;
        if (ins.operands[0].kind == OperandKind::Register && ins.operands[0].reg.reg == Gpr::rbp) {
          top.saved_rbp_slot = reg(Gpr::rsp).bits - 8;
          top.caller_rbp = v.bits;
          top.caller_rbp_known = v.known;
        }
      }
      push(v);
      return finish(crash_ == CrashCause::None);
    }
    case Mnemonic::Pop: {
      Value v = pop();
      return finish(write_operand(ins.operands[0], 8, v));
    }
    case Mnemonic::Leave: {
      set_reg(Gpr::rsp, reg(Gpr::rbp));
      if (!reg(Gpr::rsp).known) {
        if (opts_.symbolic) return {StepKind::PathEnd};
        return crash(CrashCause::InvalidAccess);
      }
      set_reg(Gpr::rbp, pop());
      return finish(crash_ == CrashCause::None);
    }
    case Mnemonic::Jmp: {
      const Operand& op = ins.operands[0];
      Address target = 0;
      if (op.kind == OperandKind::CallTarget) {
        target = op.target;
        if (target == 0 && op.symbol) {
          if (const Function* f = image_->find_function(*op.symbol); f && !f->instructions.empty())
            target = f->instructions.front().address;
        }
      } else {
        Value v = read_operand(op, 8);
        if (!v.known) return opts_.symbolic ? StepResult{StepKind::PathEnd} : crash(CrashCause::InvalidAccess);
        target = v.bits;
      }
      if (!code_->count(target)) return opts_.symbolic ? StepResult{StepKind::PathEnd} : crash(CrashCause::InvalidAccess);
      rip_ = target;
      return {StepKind::Continue};
    }
    case Mnemonic::Jcc: {
      auto cond = eval_cond(ins.cond);
      Address target = ins.operands[0].target;
      if (!cond) {
        if (opts_.symbolic) return {StepKind::Fork, target, next};
        cond = false;
      }
      if (*cond) {
        if (!code_->count(target)) return opts_.symbolic ? StepResult{StepKind::PathEnd} : crash(CrashCause::InvalidAccess);
        rip_ = target;
        return {StepKind::Continue};
      }
      return finish(true);
    }
    case Mnemonic::Cmovcc: {
      int w = operand_width(ins, 0);
      auto cond = eval_cond(ins.cond);
      if (!cond) {
        put(ins.operands[0].reg, Value::unknown());
      } else if (*cond) {
        put(ins.operands[0].reg, read_operand(ins.operands[1], w));
      } else if (w == 4) {
        Value cur = get(ins.operands[0].reg);
        put(ins.operands[0].reg, cur);  // 32-bit destination is zero-extended either way
      }
      return finish(true);
    }
    case Mnemonic::Setcc: {
      auto cond = eval_cond(ins.cond);
      Value v = cond ? Value{*cond ? 1ULL : 0ULL, true} : Value::unknown();
      return finish(write_operand(ins.operands[0], 1, v));
    }
    case Mnemonic::Call:
      return do_call(ins, next);
    case Mnemonic::Ret:
      return do_ret();
    case Mnemonic::Safecall:
      return do_safecall(ins, next);
  }
  return finish(true);
}

StepResult Machine::do_call(const Instruction& ins, Address next) {
  const Operand& op = ins.operands[0];
  const Function* callee = nullptr;
  std::string library;
  if (op.kind == OperandKind::CallTarget) {
    if (op.target != 0) {
      if (auto it = code_->find(op.target); it != code_->end() && it->second.function_entry)
        callee = image_->function_containing(op.target);
    }
    if (!callee && op.symbol) {
      const Function* f = image_->find_function(*op.symbol);
      if (f && !f->instructions.empty()) callee = f;
    }
    if (callee && callee->is_library()) {
      library = strip_symbol_decoration(callee->name);
      callee = nullptr;
    } else if (!callee && op.symbol) {
      library = strip_symbol_decoration(*op.symbol);
    }
  } else {
    Value v = read_operand(op, 8);
    if (v.known) {
      if (auto it = code_->find(v.bits); it != code_->end() && it->second.function_entry)
        callee = image_->function_containing(v.bits);
    }
    if (!callee) {
      if (!opts_.symbolic) return crash(CrashCause::InvalidAccess);
      notes_.push_back("skipped indirect call");
      set_reg(Gpr::rax, Value::unknown());
      rip_ = next;
      return {StepKind::Continue};
    }
  }
  if (!library.empty()) return do_library(library, next);
  if (!callee) {
    notes_.push_back("skipped call to unresolved target");
    set_reg(Gpr::rax, opts_.symbolic ? Value::unknown() : Value{0, true});
    if (next == 0) return {StepKind::PathEnd};
    rip_ = next;
    return {StepKind::Continue};
  }
  if (shadow_.size() > opts_.max_call_depth) return {StepKind::Budget};
  push({next, true});
  ShadowFrame f;
  f.function = callee->name;
  f.return_address = next;
  f.ret_slot = reg(Gpr::rsp).bits;
  f.ret_value = next;
  shadow_.push_back(f);
  rip_ = callee->instructions.front().address;
  return {StepKind::Continue};
}

StepResult Machine::do_ret() {
  if (shadow_.empty()) return crash(CrashCause::InvalidAccess);
  const ShadowFrame top = shadow_.back();
  if (top.canary_slot) {
    Value c = read_mem(*top.canary_slot, 8);
    if (!c.known || c.bits != Layout::kCanary) return crash(CrashCause::CanaryMismatch);
  }
  Value rsp = reg(Gpr::rsp);
  Value target = rsp.known ? read_mem(rsp.bits, 8) : Value::unknown();
  if (!rsp.known || rsp.bits != top.ret_slot || !target.known || target.bits != top.ret_value)
    return crash(CrashCause::ReturnAddressCorrupted);
  if (top.saved_rbp_slot) {
    Value rbp = reg(Gpr::rbp);
    if (top.caller_rbp_known && (!rbp.known || rbp.bits != top.caller_rbp))
      return crash(CrashCause::BaseRegisterCorrupted);
  }
  pop();
  shadow_.pop_back();
  if (shadow_.empty()) {
    Value rax = get({Gpr::rax, 4, false});
    exit_code_ = rax.known ? static_cast<std::int32_t>(rax.bits) : 0;
    return {StepKind::Exited};
  }
  rip_ = target.bits;
  return {StepKind::Continue};
}

// ---------------------------------------------------------------------------
// Library semantics

Value Machine::arg(int i) {
  static constexpr Gpr kArgs[] = {Gpr::rdi, Gpr::rsi, Gpr::rdx, Gpr::rcx, Gpr::r8, Gpr::r9};
  if (i < 6) return reg(kArgs[i]);
  Value rsp = reg(Gpr::rsp);
  if (!rsp.known) return Value::unknown();
  return read_mem(rsp.bits + 8 * static_cast<std::uint64_t>(i - 6), 8);
}

std::vector<MemByte> Machine::read_cstring(Value ptr, std::size_t limit) {
  std::vector<MemByte> out;
  if (!ptr.known) {
    out.assign(opts_.attacker_len, MemByte{'A', true});
    return out;
  }
  for (std::size_t i = 0; i < limit; ++i) {
    auto b = mem_.read(ptr.bits + i);
    if (!b) {
      if (!opts_.symbolic && crash_ == CrashCause::None) crash_ = CrashCause::InvalidAccess;
      break;
    }
    if (b->known && b->value == 0) break;
    out.push_back(*b);
  }
  return out;
}

std::uint64_t Machine::store_bytes(std::uint64_t dest, const std::vector<MemByte>& bytes, bool& ok) {
  ok = true;
  std::uint64_t n = 0;
  for (const auto& b : bytes) {
    if (!write_byte(dest + n, b)) {
      ok = false;
      break;
    }
    ++n;
  }
  return n;
}

std::optional<MemByte> Machine::next_input() {
  if (stdin_pos_ >= stdin_.size()) return std::nullopt;
  return MemByte{static_cast<std::uint8_t>(stdin_[stdin_pos_++]), true};
}

std::uint64_t Machine::runtime_bound(std::uint64_t dest) const {
  std::uint64_t best = 0;
  for (const auto& f : shadow_) {
    for (auto slot : {std::optional<std::uint64_t>(f.ret_slot), f.saved_rbp_slot, f.canary_slot}) {
      if (slot && *slot > dest && (best == 0 || *slot - dest < best)) best = *slot - dest;
    }
  }
  return best == 0 ? opts_.max_input_len + 1 : best;
}

std::vector<MemByte> Machine::format(const std::vector<MemByte>& fmt, int first_arg, bool& opaque) {
  std::vector<MemByte> out;
  int next_arg = first_arg;
  auto emit = [&](const std::string& s) {
    for (char c : s) out.push_back({static_cast<std::uint8_t>(c), true});
  };
  for (std::size_t i = 0; i < fmt.size(); ++i) {
    if (!fmt[i].known || fmt[i].value != '%') {
      out.push_back(fmt[i]);
      continue;
    }
    std::string spec = "%";
    std::size_t j = i + 1;
    while (j < fmt.size() && std::strchr("-+ #0", fmt[j].value)) spec += static_cast<char>(fmt[j++].value);
    int width = -1;
    if (j < fmt.size() && fmt[j].value == '*') {
      Value w = arg(next_arg++);
      width = w.known ? static_cast<int>(sign_extend(w.bits, 4)) : 0;
      ++j;
    }
    while (j < fmt.size() && std::isdigit(fmt[j].value)) {
      width = (width < 0 ? 0 : width) * 10 + (fmt[j].value - '0');
      ++j;
    }
    int precision = -1;
    if (j < fmt.size() && fmt[j].value == '.') {
      ++j;
      precision = 0;
      while (j < fmt.size() && std::isdigit(fmt[j].value)) precision = precision * 10 + (fmt[j++].value - '0');
    }
    int longs = 0;
    while (j < fmt.size() && std::strchr("hlzjt", fmt[j].value)) {
      if (fmt[j].value == 'l' || fmt[j].value == 'z' || fmt[j].value == 'j' || fmt[j].value == 't') ++longs;
      ++j;
    }
    if (j >= fmt.size()) {
      opaque = true;
      break;
    }
    char conv = static_cast<char>(fmt[j].value);
    i = j;
    std::string flags = spec.substr(1);
    std::string body;
    char buf[128];
    std::string cfmt = "%" + flags + (width >= 0 ? std::to_string(width) : "") +
                       (precision >= 0 ? "." + std::to_string(precision) : "");
    switch (conv) {
      case '%': emit("%"); continue;
      case 's': {
        Value p = arg(next_arg++);
        auto s = read_cstring(p, opts_.max_input_len * 4 + 65536);
        if (precision >= 0 && s.size() > static_cast<std::size_t>(precision)) s.resize(precision);
        std::size_t pad = width > 0 && static_cast<std::size_t>(width) > s.size() ? width - s.size() : 0;
        bool left = flags.find('-') != std::string::npos;
        if (!left) out.insert(out.end(), pad, MemByte{' ', true});
        out.insert(out.end(), s.begin(), s.end());
        if (left) out.insert(out.end(), pad, MemByte{' ', true});
        continue;
      }
      case 'c': {
        Value v = arg(next_arg++);
        out.push_back({static_cast<std::uint8_t>(v.bits), v.known});
        continue;
      }
      case 'd':
      case 'i':
      case 'u':
      case 'x':
      case 'X': {
        Value v = arg(next_arg++);
        int w = longs ? 8 : 4;
        if (!v.known) {
          // Widest rendering of an unknown integer.
          if (conv == 'x' || conv == 'X') body = w == 8 ? "ffffffffffffffff" : "ffffffff";
          else if (conv == 'u') body = w == 8 ? "18446744073709551615" : "4294967295";
          else body = w == 8 ? "-9223372036854775808" : "-2147483648";
          if (width > 0 && static_cast<std::size_t>(width) > body.size()) body.insert(0, width - body.size(), ' ');
          emit(body);
          continue;
        }
        std::string f2 = cfmt + "ll" + conv;
        if (conv == 'd' || conv == 'i') {
          std::snprintf(buf, sizeof buf, f2.c_str(), static_cast<long long>(sign_extend(v.bits, w)));
        } else {
          std::snprintf(buf, sizeof buf, f2.c_str(), static_cast<unsigned long long>(v.bits & mask_of(w)));
        }
        emit(buf);
        continue;
      }
      default:
        opaque = true;
        ++next_arg;
        continue;
    }
  }
  return out;
}

int Machine::scan(const std::vector<MemByte>& fmt, int first_arg, std::size_t width_cap) {
  int assigned = 0;
  int next_arg = first_arg;
  bool any_input = false;
  auto peek = [&]() -> std::optional<std::uint8_t> {
    if (stdin_pos_ >= stdin_.size()) return std::nullopt;
    return static_cast<std::uint8_t>(stdin_[stdin_pos_]);
  };
  auto skip_ws = [&]() {
    while (auto c = peek()) {
      if (!is_space(*c)) break;
      ++stdin_pos_;
    }
  };
  for (std::size_t i = 0; i < fmt.size(); ++i) {
    std::uint8_t c = fmt[i].value;
    if (is_space(c)) {
      skip_ws();
      continue;
    }
    if (c != '%') {
      skip_ws();
      if (peek() != c) return assigned;
      ++stdin_pos_;
      continue;
    }
    std::size_t j = i + 1;
    std::size_t width = 0;
    while (j < fmt.size() && std::isdigit(fmt[j].value)) width = width * 10 + (fmt[j++].value - '0');
    int longs = 0;
    while (j < fmt.size() && std::strchr("hlz", fmt[j].value)) {
      if (fmt[j].value == 'l') ++longs;
      ++j;
    }
    if (j >= fmt.size()) break;
    char conv = static_cast<char>(fmt[j].value);
    i = j;
    if (conv == '%') {
      skip_ws();
      if (peek() != '%') return assigned;
      ++stdin_pos_;
      continue;
    }
    if (conv != 'c') skip_ws();
    if (!peek()) return any_input || assigned ? assigned : -1;
    any_input = true;
    ++input_reads_;
    Value dest = arg(next_arg++);
    if (conv == 's') {
      if (width == 0 && width_cap) width = width_cap;
      std::vector<MemByte> tok;
      while (auto ch = peek()) {
        if (is_space(*ch) || (width && tok.size() >= width)) break;
        tok.push_back({*ch, true});
        ++stdin_pos_;
      }
      tok.push_back({0, true});
      if (dest.known) {
        bool ok = true;
        store_bytes(dest.bits, tok, ok);
        if (!ok) return assigned;
      } else {
        notes_.push_back("dropped scanf store through unknown pointer");
      }
      ++assigned;
    } else if (conv == 'd' || conv == 'i' || conv == 'u') {
      std::string num;
      if (auto ch = peek(); ch && (*ch == '-' || *ch == '+')) {
        num += static_cast<char>(*ch);
        ++stdin_pos_;
      }
      while (auto ch = peek()) {
        if (!std::isdigit(*ch) || (width && num.size() >= width)) break;
        num += static_cast<char>(*ch);
        ++stdin_pos_;
      }
      if (num.empty() || num == "-" || num == "+") return assigned;
      long long v = std::strtoll(num.c_str(), nullptr, 10);
      if (dest.known) {
        if (!write_mem(dest.bits, longs ? 8 : 4, {static_cast<std::uint64_t>(v), true})) return assigned;
      }
      ++assigned;
    } else if (conv == 'c') {
      auto ch = peek();
      ++stdin_pos_;
      if (dest.known && !write_byte(dest.bits, {*ch, true})) return assigned;
      ++assigned;
    } else {
      notes_.push_back(std::string("unsupported scanf conversion %") + conv);
      return assigned;
    }
  }
  return assigned;
}

StepResult Machine::do_library(const std::string& raw_name, Address next) {
  const LibcSpec* spec = libc_->find(raw_name);
  std::string name = spec ? spec->name : raw_name;
  const std::size_t limit = opts_.max_input_len * 4 + 65536;
  Value result = opts_.symbolic ? Value::unknown() : Value{0, true};
  bool ok = true;

  auto dest_or_drop = [&](Value d) {
    if (!d.known) notes_.push_back(name + ": dropped write through unknown pointer");
    return d.known;
  };

  if (name == "strcpy" || name == "strncpy" || name == "memcpy") {
    Value d = arg(0), s = arg(1);
    std::vector<MemByte> bytes;
    if (name == "memcpy") {
      Value n = arg(2);
      if (!n.known) {
        notes_.push_back("memcpy with unknown length skipped");
      } else {
        for (std::uint64_t k = 0; k < n.bits && k < limit; ++k) {
          if (!s.known) {
            bytes.push_back({'A', true});
            continue;
          }
          auto b = mem_.read(s.bits + k);
          bytes.push_back(b ? *b : MemByte{0, false});
        }
      }
    } else {
      bytes = read_cstring(s, limit);
      if (name == "strncpy") {
        Value n = arg(2);
        std::uint64_t cap = n.known ? n.bits : bytes.size() + 1;
        if (bytes.size() > cap) bytes.resize(cap);
        while (bytes.size() < cap) bytes.push_back({0, true});
      } else {
        bytes.push_back({0, true});
      }
    }
    if (dest_or_drop(d)) store_bytes(d.bits, bytes, ok);
    result = d;
  } else if (name == "strcat" || name == "strncat") {
    Value d = arg(0), s = arg(1);
    auto src = read_cstring(s, limit);
    if (name == "strncat") {
      Value n = arg(2);
      if (n.known && src.size() > n.bits) src.resize(n.bits);
    }
    src.push_back({0, true});
    if (dest_or_drop(d)) {
      auto existing = read_cstring(d, limit);
      store_bytes(d.bits + existing.size(), src, ok);
    }
    result = d;
  } else if (name == "sprintf" || name == "snprintf") {
    bool is_n = name == "snprintf";
    Value d = arg(0);
    Value fmt_ptr = arg(is_n ? 2 : 1);
    bool opaque = false;
    std::vector<MemByte> out;
    if (!fmt_ptr.known) {
      opaque = true;
    } else {
      out = format(read_cstring(fmt_ptr, limit), is_n ? 3 : 2, opaque);
    }
    if (opaque) notes_.push_back(name + ": format not fully supported");
    std::uint64_t len = out.size();
    out.push_back({0, true});
    if (is_n) {
      Value n = arg(1);
      if (n.known) {
        if (n.bits == 0) out.clear();
        else if (out.size() > n.bits) {
          out.resize(n.bits);
          out.back() = {0, true};
        }
      }
    }
    if (dest_or_drop(d)) store_bytes(d.bits, out, ok);
    result = {len, true};
  } else if (name == "gets" || name == "fgets") {
    Value d = arg(0);
    std::uint64_t cap = limit;
    if (name == "fgets") {
      Value n = arg(1);
      cap = n.known ? n.bits : opts_.max_input_len;
    }
    ++input_reads_;
    std::vector<MemByte> line;
    bool got = false;
    while (auto b = (name == "fgets" && line.size() + 1 >= cap) ? std::nullopt : next_input()) {
      got = true;
      if (name == "gets" && b->value == '\n') break;
      line.push_back(*b);
      if (b->value == '\n') break;
    }
    if (!got || (name == "fgets" && cap == 0)) {
      result = {0, true};
    } else {
      line.push_back({0, true});
      if (dest_or_drop(d)) store_bytes(d.bits, line, ok);
      result = d;
    }
  } else if (name == "scanf") {
    Value fmt_ptr = arg(0);
    if (!fmt_ptr.known) {
      notes_.push_back("scanf with unknown format skipped");
    } else {
      result = {static_cast<std::uint64_t>(static_cast<std::int64_t>(scan(read_cstring(fmt_ptr, limit), 1, 0))), true};
    }
  } else if (name == "memset") {
    Value d = arg(0), c = arg(1), n = arg(2);
    if (!n.known) {
      notes_.push_back("memset with unknown length skipped");
    } else if (dest_or_drop(d)) {
      std::vector<MemByte> bytes(std::min<std::uint64_t>(n.bits, limit), MemByte{static_cast<std::uint8_t>(c.bits), c.known});
      store_bytes(d.bits, bytes, ok);
    }
    result = d;
  } else if (name == "printf") {
    Value fmt_ptr = arg(0);
    bool opaque = false;
    if (fmt_ptr.known) {
      auto out = format(read_cstring(fmt_ptr, limit), 1, opaque);
      for (const auto& b : out) out_.push_back(static_cast<char>(b.value));
      result = {out.size(), true};
    }
  } else if (name == "puts") {
    auto s = read_cstring(arg(0), limit);
    for (const auto& b : s) out_.push_back(static_cast<char>(b.value));
    out_.push_back('\n');
    result = {s.size() + 1, true};
  } else if (name == "putchar") {
    Value c = arg(0);
    out_.push_back(static_cast<char>(c.bits));
    result = c;
  } else if (name == "strlen") {
    Value s = arg(0);
    auto bytes = read_cstring(s, limit);
    result = {bytes.size(), true};
  } else if (name == "atoi") {
    auto bytes = read_cstring(arg(0), 64);
    bool known = std::all_of(bytes.begin(), bytes.end(), [](const MemByte& b) { return b.known; });
    std::string s;
    for (const auto& b : bytes) s.push_back(static_cast<char>(b.value));
    result = known ? Value{static_cast<std::uint64_t>(std::atoi(s.c_str())) & 0xffffffffULL, true} : Value::unknown();
  } else if (name == "exit") {
    Value c = arg(0);
    exit_code_ = c.known ? static_cast<std::int32_t>(c.bits) : 0;
    return {StepKind::Exited};
  } else if (name == "abort") {
    exit_code_ = 134;
    return {StepKind::Exited};
  } else if (name == "__stack_chk_fail") {
    return crash(CrashCause::CanaryMismatch);
  } else {
    notes_.push_back("skipped unknown library call " + name);
  }
  if (!ok || crash_ != CrashCause::None) return crash(crash_ == CrashCause::None ? CrashCause::InvalidAccess : crash_);
  set_reg(Gpr::rax, result);
  if (next == 0) return opts_.symbolic ? StepResult{StepKind::PathEnd} : crash(CrashCause::InvalidAccess);
  rip_ = next;
  return {StepKind::Continue};
}

StepResult Machine::do_safecall(const Instruction& ins, Address next) {
  const SafeCall& sc = *ins.safecall;
  const std::size_t limit = opts_.max_input_len * 4 + 65536;
  auto argv = [&](std::size_t i) { return i < sc.args.size() ? get(sc.args[i]) : Value::unknown(); };
  bool ok = true;
  Value result{0, true};
  const std::string& r = sc.replacement;

  // The destination is the first register except for scanf_width, where it is the second.
  Value dest = r == "scanf_width" ? argv(1) : argv(0);
  std::uint64_t bound = sc.bound ? *sc.bound : (dest.known ? runtime_bound(dest.bits) : opts_.max_input_len + 1);

  if (r == "strncpy") {
    auto src = read_cstring(argv(1), limit);
    if (sc.terminate) {
      if (bound == 0) src.clear();
      else {
        if (src.size() > bound - 1) src.resize(bound - 1);
        src.push_back({0, true});
      }
    } else {
      src.push_back({0, true});
      if (src.size() > bound) src.resize(bound);
    }
    if (dest.known) store_bytes(dest.bits, src, ok);
    result = dest;
  } else if (r == "strncat") {
    auto src = read_cstring(argv(1), limit);
    auto existing = dest.known ? read_cstring(dest, limit) : std::vector<MemByte>{};
    std::uint64_t avail = bound > existing.size() + 1 ? bound - existing.size() - 1 : 0;
    if (src.size() > avail) src.resize(avail);
    src.push_back({0, true});
    if (dest.known && bound > existing.size()) store_bytes(dest.bits + existing.size(), src, ok);
    result = dest;
  } else if (r == "snprintf") {
    bool opaque = false;
    auto out = format(read_cstring(argv(1), limit), 2, opaque);
    std::uint64_t len = out.size();
    if (bound == 0) {
      out.clear();
    } else {
      if (out.size() > bound - 1) out.resize(bound - 1);
      out.push_back({0, true});
    }
    if (dest.known) store_bytes(dest.bits, out, ok);
    result = {len, true};
  } else if (r == "fgets") {
    // Bounded line read with gets' newline handling: the newline is consumed
    // but not stored, and the remainder of an over-long line is discarded.
    ++input_reads_;
    std::vector<MemByte> line;
    bool got = false;
    while (auto b = next_input()) {
      got = true;
      if (b->value == '\n') break;
      if (bound > 0 && line.size() + 1 < bound) line.push_back(*b);
    }
    if (!got) {
      result = {0, true};
    } else {
      line.push_back({0, true});
      if (dest.known && bound > 0) store_bytes(dest.bits, line, ok);
      result = dest;
    }
  } else if (r == "scanf_width") {
    Value fmt_ptr = argv(0);
    result = {static_cast<std::uint64_t>(static_cast<std::int64_t>(
                  scan(read_cstring(fmt_ptr, limit), 1, bound > 0 ? bound - 1 : 0))),
              true};
  } else {
    notes_.push_back("unknown safecall replacement " + r);
  }
  if (!ok || crash_ != CrashCause::None) return crash(crash_ == CrashCause::None ? CrashCause::InvalidAccess : crash_);
  set_reg(Gpr::rax, result);
  if (next == 0) return crash(CrashCause::InvalidAccess);
  rip_ = next;
  return {StepKind::Continue};
}

}  // namespace basics
