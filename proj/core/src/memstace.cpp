#include "basics/memstace.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "basics/error.hpp"

namespace basics {

namespace {

std::string hex(Address a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(a));
  return buf;
}

bool is_reg(const Operand& op, Gpr r) {
  return op.kind == OperandKind::Register && op.reg.reg == r && op.reg.width == 8;
}

std::uint64_t memory_width(const Instruction& ins, std::size_t mem_index) {
  const Operand& m = ins.operands[mem_index];
  if (m.mem.size) return m.mem.size;
  for (std::size_t i = 0; i < ins.operands.size(); ++i)
    if (i != mem_index && ins.operands[i].kind == OperandKind::Register) return ins.operands[i].reg.width;
  return 8;
}

bool writes_memory_operand(Mnemonic m) {
  switch (m) {
    case Mnemonic::Mov:
    case Mnemonic::Xchg:
    case Mnemonic::Add:
    case Mnemonic::Sub:
    case Mnemonic::And:
    case Mnemonic::Or:
    case Mnemonic::Xor:
    case Mnemonic::Inc:
    case Mnemonic::Dec:
    case Mnemonic::Neg:
    case Mnemonic::Not:
    case Mnemonic::Shl:
    case Mnemonic::Shr:
    case Mnemonic::Sar:
    case Mnemonic::Setcc:
      return true;
    default:
      return false;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Classification

MemOpClass classify_instruction(const Instruction& ins, const ClassifyContext& ctx) {
  MemOpClass c;
  const auto& ops = ins.operands;
  switch (ins.mnemonic) {
    case Mnemonic::Endbr64:
      c.kind = MemOpKind::Fa;
      return c;
    case Mnemonic::Push:
      c.kind = MemOpKind::Push;
      c.byte_op = ctx.first_push && !ops.empty() && is_reg(ops[0], Gpr::rbp) ? ByteOp::RWrite : ByteOp::nRWrite;
      c.amount = 8;
      return c;
    case Mnemonic::Pop:
      c.kind = MemOpKind::Pop;
      c.amount = 8;
      return c;
    case Mnemonic::Leave:
      c.kind = MemOpKind::Pop;  // amount resolved against rbp
      return c;
    case Mnemonic::Call:
      c.kind = MemOpKind::Indirect;
      return c;
    case Mnemonic::Ret:
      c.kind = MemOpKind::Ret;
      return c;
    case Mnemonic::Sub:
    case Mnemonic::Add:
      if (is_reg(ops[0], Gpr::rsp) && ops[1].kind == OperandKind::Immediate) {
        std::int64_t imm = ops[1].imm;
        bool grow = (ins.mnemonic == Mnemonic::Sub) == (imm >= 0);
        c.kind = grow ? MemOpKind::Fe : MemOpKind::Pop;
        c.amount = static_cast<std::uint64_t>(imm < 0 ? -imm : imm);
        return c;
      }
      break;
    case Mnemonic::Mov:
      if (is_reg(ops[0], Gpr::rsp) && is_reg(ops[1], Gpr::rbp)) {
        c.kind = MemOpKind::Pop;  // amount resolved against rbp
        return c;
      }
      break;
    default:
      break;
  }
  if (!ops.empty() && ops[0].kind == OperandKind::Memory && writes_memory_operand(ins.mnemonic) &&
      !ops[0].mem.fs_segment) {
    c.kind = MemOpKind::Write;
    c.width = ins.mnemonic == Mnemonic::Setcc ? 1 : memory_width(ins, 0);
    c.displacement = ops[0].mem.displacement;
    c.base = ops[0].mem.base ? ops[0].mem.base->reg : Gpr::rip;
    if (ins.mnemonic == Mnemonic::Mov && ops.size() > 1 && ops[1].kind == OperandKind::Register && c.width == 8 &&
        std::find(ctx.canary_registers.begin(), ctx.canary_registers.end(), ops[1].reg.reg) !=
            ctx.canary_registers.end()) {
      c.byte_op = ByteOp::RWrite;
      c.canary = true;
    }
    return c;
  }
  if (ins.mnemonic == Mnemonic::Xchg && ops.size() == 2 && ops[1].kind == OperandKind::Memory) {
    c.kind = MemOpKind::Write;
    c.width = memory_width(ins, 1);
    c.displacement = ops[1].mem.displacement;
    c.base = ops[1].mem.base ? ops[1].mem.base->reg : Gpr::rip;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Buffer sizes

BufferHints BufferHints::from_json(std::string_view text) {
  BufferHints h;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("buffer metadata: ") + e.what());
  }
  if (!doc.contains("functions") || !doc["functions"].is_object())
    throw Error(ErrorKind::InvalidConfig, "buffer metadata: missing 'functions' object");
  for (const auto& [fn, list] : doc["functions"].items()) {
    for (const auto& b : list) {
      auto size = b.at("size").get<std::int64_t>();
      if (size <= 0) throw Error(ErrorKind::InvalidConfig, "buffer metadata: non-positive size in " + fn);
      h.sizes[fn][b.at("offset").get<std::int64_t>()] = static_cast<std::uint64_t>(size);
    }
  }
  return h;
}

std::optional<std::uint64_t> BufferHints::lookup(const std::string& function, std::int64_t offset) const {
  auto f = sizes.find(function);
  if (f == sizes.end()) return std::nullopt;
  auto it = f->second.find(offset);
  if (it == f->second.end()) return std::nullopt;
  return it->second;
}

std::map<std::int64_t, std::uint64_t> infer_buffer_sizes(const Function& f) {
  std::set<std::int64_t> candidates;
  std::set<std::int64_t> objects{0};
  for (const auto& ins : f.instructions) {
    for (std::size_t i = 0; i < ins.operands.size(); ++i) {
      const Operand& op = ins.operands[i];
      if (op.kind != OperandKind::Memory || !op.mem.base || op.mem.base->reg != Gpr::rbp) continue;
      const std::int64_t d = op.mem.displacement;
      if (d >= 0) continue;
      if (ins.mnemonic == Mnemonic::Lea || op.mem.index) {
        candidates.insert(d);
        objects.insert(d);
      } else if (memory_width(ins, i) >= 2) {
        // Byte-sized direct accesses are usually single elements of an array
        // (buf[3] = 'x') and would split the array if counted as objects.
        objects.insert(d);
      }
    }
  }
  std::map<std::int64_t, std::uint64_t> out;
  for (std::int64_t d : candidates) {
    auto next = objects.upper_bound(d);
    out[d] = static_cast<std::uint64_t>(*next - d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// MemStaCe

const std::vector<std::size_t>& MemStaCe::outgoing(std::size_t s) const {
  static const std::vector<std::size_t> empty;
  return s < out_.size() ? out_[s] : empty;
}

void MemStaCe::index() {
  out_.assign(states.size(), {});
  for (std::size_t i = 0; i < transitions.size(); ++i) out_[transitions[i].src].push_back(i);
}

namespace {

std::string label_text(const Transition& t) {
  std::string s = t.label.name();
  if (t.label.address) s += " @" + hex(t.label.address);
  return s;
}

}  // namespace

std::string MemStaCe::to_dot() const {
  std::string out = "digraph memstace {\n  node [shape=box, fontname=monospace];\n";
  for (std::size_t i = 0; i < states.size(); ++i) {
    out += "  s" + std::to_string(i) + " [label=\"s" + std::to_string(i);
    for (const auto& f : states[i].frames) out += "\\n" + f.label + ": " + render_frame(f);
    out += "\"";
    if (i == initial) out += ", penwidth=2";
    out += "];\n";
  }
  for (const auto& t : transitions) {
    std::string text = label_text(t);
    std::string esc;
    for (char c : text) {
      if (c == '"' || c == '\\') esc += '\\';
      esc += c;
    }
    out += "  s" + std::to_string(t.src) + " -> s" + std::to_string(t.dst) + " [label=\"" + esc + "\"];\n";
  }
  out += "}\n";
  return out;
}

std::string MemStaCe::to_json() const {
  nlohmann::ordered_json doc;
  doc["initial"] = initial;
  doc["truncated"] = truncated;
  auto& nodes = doc["states"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < states.size(); ++i) {
    nlohmann::ordered_json n;
    n["id"] = i;
    auto& frames = n["frames"] = nlohmann::ordered_json::array();
    for (const auto& f : states[i].frames) {
      nlohmann::ordered_json fj;
      fj["label"] = f.label;
      fj["bytes"] = render_frame(f);
      fj["has_canary"] = f.has_canary;
      auto& bufs = fj["buffers"] = nlohmann::ordered_json::array();
      for (const auto& b : f.buffers) bufs.push_back({{"offset", b.offset}, {"size", b.size}});
      frames.push_back(std::move(fj));
    }
    nodes.push_back(std::move(n));
  }
  auto& edges = doc["transitions"] = nlohmann::ordered_json::array();
  for (const auto& t : transitions) {
    edges.push_back({{"src", t.src},
                     {"dst", t.dst},
                     {"kind", t.label.name()},
                     {"address", hex(t.label.address)},
                     {"text", t.label.text}});
  }
  return doc.dump(2) + "\n";
}

namespace {

/// Abstract register / slot value tracked by the builder.
struct AbsVal {
  enum class Kind : std::uint8_t { Unknown, Const, Stack } kind = Kind::Unknown;
  std::int64_t v = 0;

  static AbsVal unknown() { return {}; }
  static AbsVal constant(std::int64_t x) { return {Kind::Const, x}; }
  static AbsVal stack(std::int64_t x) { return {Kind::Stack, x}; }
  bool operator==(const AbsVal&) const = default;
};

struct Slot {
  std::uint64_t width = 8;
  AbsVal value;
  bool operator==(const Slot&) const = default;
};

struct Node {
  std::size_t state = 0;
  Address pc = 0;
  std::vector<Address> chain;
  std::array<AbsVal, kGprCount> regs{};
  std::uint32_t canary_mask = 0;
  bool pending_fa = false;
  std::map<std::int64_t, Slot> slots;  // 4/8-byte values stored on the stack

  std::string key() const {
    std::string k = std::to_string(state) + "@" + std::to_string(pc) + "/";
    for (Address a : chain) k += std::to_string(a) + ",";
    k += "/";
    for (const auto& r : regs) {
      k += static_cast<char>('0' + static_cast<int>(r.kind));
      if (r.kind != AbsVal::Kind::Unknown) k += std::to_string(r.v);
      k += ',';
    }
    k += "/" + std::to_string(canary_mask) + (pending_fa ? "p" : "-") + "/";
    for (const auto& [a, s] : slots) {
      k += std::to_string(a) + ":" + std::to_string(s.width) + ":" + static_cast<char>('0' + static_cast<int>(s.value.kind)) +
           std::to_string(s.value.v) + ",";
    }
    return k;
  }
};

class Builder {
 public:
  Builder(const BCfg& bcfg, const FunctionMap& funcs, const ProgramImage& image, const LoopAnalysis& loops,
          EffectsOracle& effects, const Config& cfg, const BuildOptions& opts)
      : bcfg_(bcfg), funcs_(funcs), image_(image), loops_(loops), effects_(effects), cfg_(cfg), opts_(opts) {
    for (Address a : loops.irreducible) irreducible_.insert(a);
  }

  MemStaCe build(const std::string& root) {
    space_.root = root;
    const Function* f = image_.find_function(root);
    if (!f || f->instructions.empty()) throw Error(ErrorKind::TargetUnreachable, "no function named " + root);

    MemOp fa;
    fa.kind = MemOpKind::Fa;
    fa.function = root;
    MemoryState init = apply_memory_operator(MemoryState{}, fa);
    init.incoming = {LabelKind::Fa, f->entry, root, "entry " + root};
    on_frame_allocated(root);
    auto id = intern(std::move(init));
    space_.initial = *id;

    Node start;
    start.state = *id;
    start.pc = f->instructions.front().address;
    std::vector<Node> work{start};
    std::unordered_set<std::string> visited;
    while (!work.empty()) {
      if (opts_.cancelled && opts_.cancelled()) {
        space_.truncated = true;
        note("construction stopped by timeout");
        break;
      }
      if (space_.truncated) break;
      Node n = std::move(work.back());
      work.pop_back();
      if (!visited.insert(n.key()).second) continue;
      std::vector<Node> succ = step(n);
      for (auto it = succ.rbegin(); it != succ.rend(); ++it) work.push_back(std::move(*it));
    }
    if (space_.truncated && space_.states.size() >= cfg_.max_states)
      note("StateBudgetExceeded: stopped at " + std::to_string(space_.states.size()) + " states");
    space_.index();
    return std::move(space_);
  }

 private:
  // -- state bookkeeping --------------------------------------------------

  std::optional<std::size_t> intern(MemoryState m) {
    std::string k = state_key(m);
    if (auto it = ids_.find(k); it != ids_.end()) return it->second;
    if (space_.states.size() >= cfg_.max_states) {
      space_.truncated = true;
      return std::nullopt;
    }
    std::size_t id = space_.states.size();
    space_.states.push_back(std::move(m));
    ids_.emplace(std::move(k), id);
    return id;
  }

  static std::vector<ByteDelta> deltas(const MemoryState& a, const MemoryState& b) {
    std::vector<ByteDelta> out;
    std::size_t nf = std::max(a.frames.size(), b.frames.size());
    for (std::size_t f = 0; f < nf; ++f) {
      const StackFrame* fa = f < a.frames.size() ? &a.frames[f] : nullptr;
      const StackFrame* fb = f < b.frames.size() ? &b.frames[f] : nullptr;
      std::int64_t n = std::max(fa ? fa->size() : 0, fb ? fb->size() : 0);
      for (std::int64_t i = 0; i < n; ++i) {
        std::optional<ByteState> x, y;
        if (fa && i < fa->size()) x = fa->bytes[static_cast<std::size_t>(i)];
        if (fb && i < fb->size()) y = fb->bytes[static_cast<std::size_t>(i)];
        if (x != y) out.push_back({f, i, x, y});
      }
    }
    return out;
  }

  /// Applies `op` to the node's state and records the transition. Returns
  /// the destination state, or nullopt when the operation is illegal or the
  /// state budget is exhausted.
  std::optional<std::size_t> transition(std::size_t src, const MemOp& op, TransitionLabel label, MemOpKind shown) {
    MemoryState next;
    try {
      next = apply_memory_operator(space_.states[src], op);
    } catch (const Error& e) {
      note(std::string(e.what()) + " at " + hex(label.address));
      return std::nullopt;
    }
    next.incoming = label;
    auto dst = intern(std::move(next));
    if (!dst) return std::nullopt;
    auto tkey = std::make_tuple(src, *dst, static_cast<int>(label.kind), label.address);
    if (edges_.insert(tkey).second) {
      Transition t;
      t.src = src;
      t.dst = *dst;
      t.label = std::move(label);
      t.op = shown;
      t.memop = op;
      t.deltas = deltas(space_.states[src], space_.states[*dst]);
      space_.transitions.push_back(std::move(t));
    }
    return dst;
  }

  /// Write-like transition; split into one transition per byte in atomic mode.
  std::optional<std::size_t> write_transition(std::size_t src, const std::vector<Touch>& touches, bool canary,
                                              const TransitionLabel& label, MemOpKind shown, bool splittable) {
    MemOp op;
    op.kind = MemOpKind::Write;
    op.sets_canary = canary;
    if (!cfg_.atomic_writes || !splittable || touches.size() <= 1) {
      op.touches = touches;
      return transition(src, op, label, shown);
    }
    std::optional<std::size_t> cur = src;
    for (const auto& t : touches) {
      op.touches = {t};
      cur = transition(*cur, op, label, shown);
      if (!cur) return std::nullopt;
    }
    return cur;
  }

  void note(std::string s) {
    if (std::find(space_.notes.begin(), space_.notes.end(), s) == space_.notes.end())
      space_.notes.push_back(std::move(s));
  }

  void on_frame_allocated(const std::string& function) {
    if (!prologue_checked_.insert(function).second) return;
    const Function* f = image_.find_function(function);
    if (!f) return;
    for (const auto& ins : f->instructions) {
      if (ins.mnemonic == Mnemonic::Push) {
        if (is_reg(ins.operands[0], Gpr::rbp)) return;
        break;
      }
      if ((ins.mnemonic == Mnemonic::Sub || ins.mnemonic == Mnemonic::Add) && is_reg(ins.operands[0], Gpr::rsp)) break;
      if (ins.is_call() || ins.mnemonic == Mnemonic::Ret) break;
    }
    space_.no_prologue.push_back(function);
    note("function " + function + " has no base-register prologue; saved-RBP bytes are not modeled");
  }

  // -- abstract values ---------------------------------------------------

  static AbsVal rsp_of(const MemoryState& m) {
    return m.frames.empty() ? AbsVal::unknown() : AbsVal::stack(m.frames.back().top_address());
  }

  AbsVal reg_value(const Node& n, Gpr r) const {
    if (r == Gpr::rsp) return rsp_of(space_.states[n.state]);
    if (r == Gpr::rip) return AbsVal::unknown();
    return n.regs[static_cast<std::size_t>(r)];
  }

  static void set_reg(Node& n, const RegisterRef& r, AbsVal v) {
    if (r.reg == Gpr::rsp || r.reg == Gpr::rip) return;
    if (r.width < 4 || r.high_byte) v = AbsVal::unknown();
    if (r.width == 4 && v.kind == AbsVal::Kind::Const) v.v = static_cast<std::int64_t>(static_cast<std::uint32_t>(v.v));
    if (r.width == 4 && v.kind == AbsVal::Kind::Stack) v = AbsVal::unknown();
    n.regs[static_cast<std::size_t>(r.reg)] = v;
    n.canary_mask &= ~(1u << static_cast<unsigned>(r.reg));
  }

  /// Address of a memory operand, when it resolves.
  std::optional<AbsVal> address_of(const Node& n, const MemoryRef& m) const {
    if (m.fs_segment) return std::nullopt;
    AbsVal a = AbsVal::constant(m.displacement);
    if (m.base) {
      if (m.base->reg == Gpr::rip) return std::nullopt;
      AbsVal b = reg_value(n, m.base->reg);
      if (b.kind == AbsVal::Kind::Unknown) return std::nullopt;
      a = {b.kind, b.v + m.displacement};
    }
    if (m.index) {
      AbsVal i = reg_value(n, m.index->reg);
      if (i.kind != AbsVal::Kind::Const) return std::nullopt;
      a.v += i.v * m.scale;
    }
    return a;
  }

  AbsVal read_value(const Node& n, const Operand& op, std::uint64_t width) const {
    switch (op.kind) {
      case OperandKind::Register: {
        AbsVal v = reg_value(n, op.reg.reg);
        if (op.reg.width < 4 || op.reg.high_byte) return AbsVal::unknown();
        if (op.reg.width == 4 && v.kind == AbsVal::Kind::Stack) return AbsVal::unknown();
        return v;
      }
      case OperandKind::Immediate:
        return AbsVal::constant(op.imm);
      case OperandKind::Memory: {
        auto a = address_of(n, op.mem);
        if (!a || a->kind != AbsVal::Kind::Stack) return AbsVal::unknown();
        auto it = n.slots.find(a->v);
        if (it == n.slots.end() || it->second.width != width) return AbsVal::unknown();
        return it->second.value;
      }
      default:
        return AbsVal::unknown();
    }
  }

  static void forget_slots(Node& n, std::int64_t addr, std::uint64_t width) {
    for (auto it = n.slots.begin(); it != n.slots.end();) {
      bool overlap = it->first < addr + static_cast<std::int64_t>(width) &&
                     addr < it->first + static_cast<std::int64_t>(it->second.width);
      it = overlap ? n.slots.erase(it) : std::next(it);
    }
  }

  void clobber_call(Node& n) {
    for (Gpr r : {Gpr::rax, Gpr::rcx, Gpr::rdx, Gpr::rsi, Gpr::rdi, Gpr::r8, Gpr::r9, Gpr::r10, Gpr::r11})
      n.regs[static_cast<std::size_t>(r)] = AbsVal::unknown();
    n.canary_mask = 0;
  }

  ClassifyContext context(const Node& n) const {
    ClassifyContext ctx;
    const MemoryState& m = space_.states[n.state];
    ctx.first_push = !m.frames.empty() && m.frames.back().size() == 8;
    for (std::size_t r = 0; r < kGprCount; ++r)
      if (n.canary_mask & (1u << r)) ctx.canary_registers.push_back(static_cast<Gpr>(r));
    return ctx;
  }

  std::string current_function(const Node& n) const {
    const MemoryState& m = space_.states[n.state];
    return m.frames.empty() ? std::string() : m.frames.back().label;
  }

  // -- buffers ------------------------------------------------------------

  /// Registers the buffer at frame address `addr` if it is new. Returns the
  /// node's (possibly updated) state.
  std::size_t register_at(std::size_t state, std::int64_t addr, const Instruction& ins) {
    const MemoryState& m = space_.states[state];
    std::optional<std::size_t> fi;
    for (std::size_t i = m.frames.size(); i-- > 0;)
      if (m.frames[i].index_of(addr)) {
        fi = i;
        break;
      }
    if (!fi) return state;
    const StackFrame& f = m.frames[*fi];
    std::int64_t offset = addr - f.rbp_anchor;
    if (offset >= 0) return state;
    std::optional<std::uint64_t> size = opts_.hints.lookup(f.label, offset);
    if (!size) {
      auto& inferred = sizes_for(f.label);
      if (auto it = inferred.find(offset); it != inferred.end()) size = it->second;
    }
    if (!size) size = static_cast<std::uint64_t>(-offset);
    for (const auto& b : f.buffers)
      if (b.offset == offset && b.size == *size) return state;
    MemOp op;
    op.kind = MemOpKind::Register;
    op.frame = *fi;
    op.buffer = {offset, *size};
    TransitionLabel label{LabelKind::BufferRegister, ins.address, "", ins.text()};
    auto dst = transition(state, op, label, MemOpKind::Register);
    return dst ? *dst : state;
  }

  const std::map<std::int64_t, std::uint64_t>& sizes_for(const std::string& function) {
    auto it = sizes_.find(function);
    if (it != sizes_.end()) return it->second;
    const Function* f = image_.find_function(function);
    return sizes_[function] = f ? infer_buffer_sizes(*f) : std::map<std::int64_t, std::uint64_t>{};
  }

  /// Buffer candidates named by one instruction: lea of a frame address and
  /// indexed frame accesses.
  std::vector<std::int64_t> buffer_candidates(const Node& n, const Instruction& ins) const {
    std::vector<std::int64_t> out;
    for (const auto& op : ins.operands) {
      if (op.kind != OperandKind::Memory || op.mem.fs_segment || !op.mem.base) continue;
      if (ins.mnemonic != Mnemonic::Lea && !op.mem.index) continue;
      AbsVal b = reg_value(n, op.mem.base->reg);
      if (b.kind != AbsVal::Kind::Stack) continue;
      out.push_back(b.v + op.mem.displacement);
    }
    return out;
  }

  // -- instruction semantics ------------------------------------------------

  std::vector<Node> advance(Node n, Address next) {
    if (next == 0) {
      note("path fell off the end of " + current_function(n));
      return {};
    }
    n.pc = next;
    return {std::move(n)};
  }

  std::vector<Node> step(Node& n) {
    const Instruction* ins_ptr = image_.find_instruction(n.pc);
    if (!ins_ptr) {
      note("control reached " + hex(n.pc) + " outside the listing");
      return {};
    }
    const Instruction& ins = *ins_ptr;
    const Instruction* next_ins = image_.next_instruction(n.pc);
    const Address next = next_ins ? next_ins->address : 0;

    if (!n.pending_fa) {
      if (const LoopInfo* loop = loops_.loop_at(n.pc); loop && !irreducible_.count(n.pc) &&
                                                      loop->function == current_function(n))
        return summarize_loop(n, *loop);
    }

    const MemOpClass cls = classify_instruction(ins, context(n));
    const TransitionLabel here{LabelKind::Write, ins.address, "", ins.text()};
    const auto& ops = ins.operands;

    switch (ins.mnemonic) {
      case Mnemonic::Endbr64: {
        if (!n.pending_fa) return advance(std::move(n), next);
        const Function* f = image_.function_containing(ins.address);
        std::string name = f ? f->name : hex(ins.address);
        MemOp op;
        op.kind = MemOpKind::Fa;
        op.function = name;
        on_frame_allocated(name);
        auto dst = transition(n.state, op, {LabelKind::Fa, ins.address, name, ins.text()}, MemOpKind::Fa);
        if (!dst) return {};
        n.state = *dst;
        n.pending_fa = false;
        return advance(std::move(n), next);
      }
      case Mnemonic::Push: {
        AbsVal v = read_value(n, ops[0], 8);
        MemOp op;
        op.kind = MemOpKind::Push;
        op.byte_op = cls.byte_op;
        op.marks_saved_rbp = cls.byte_op == ByteOp::RWrite;
        auto dst = transition(n.state, op, {LabelKind::Push, ins.address, "", ins.text()}, MemOpKind::Push);
        if (!dst) return {};
        n.state = *dst;
        AbsVal sp = rsp_of(space_.states[n.state]);
        forget_slots(n, sp.v, 8);
        n.slots[sp.v] = {8, v};
        return advance(std::move(n), next);
      }
      case Mnemonic::Pop:
      case Mnemonic::Leave: {
        std::uint64_t amount = 8;
        AbsVal restored = AbsVal::unknown();
        if (ins.mnemonic == Mnemonic::Leave) {
          AbsVal rbp = reg_value(n, Gpr::rbp);
          AbsVal sp = rsp_of(space_.states[n.state]);
          if (rbp.kind != AbsVal::Kind::Stack || rbp.v < sp.v) {
            note("leave with unresolved base register at " + hex(ins.address));
            return {};
          }
          amount = static_cast<std::uint64_t>(rbp.v - sp.v) + 8;
          if (auto it = n.slots.find(rbp.v); it != n.slots.end() && it->second.width == 8) restored = it->second.value;
        } else {
          AbsVal sp = rsp_of(space_.states[n.state]);
          if (auto it = n.slots.find(sp.v); it != n.slots.end() && it->second.width == 8) restored = it->second.value;
        }
        MemOp op;
        op.kind = MemOpKind::Pop;
        op.amount = amount;
        auto dst = transition(n.state, op, {LabelKind::Pop, ins.address, "", ins.text()}, MemOpKind::Pop);
        if (!dst) return {};
        n.state = *dst;
        drop_dead_slots(n);
        if (ins.mnemonic == Mnemonic::Leave) set_reg(n, {Gpr::rbp, 8, false}, restored);
        else if (ops[0].kind == OperandKind::Register) set_reg(n, ops[0].reg, restored);
        return advance(std::move(n), next);
      }
      case Mnemonic::Ret: {
        if (n.chain.empty()) return {};
        MemOp op;
        op.kind = MemOpKind::Ret;
        auto dst = transition(n.state, op, {LabelKind::Ret, ins.address, current_function(n), ins.text()},
                              MemOpKind::Ret);
        if (!dst) return {};
        n.state = *dst;
        Address back = n.chain.back();
        n.chain.pop_back();
        drop_dead_slots(n);
        n.regs[static_cast<std::size_t>(Gpr::rax)] = AbsVal::unknown();
        if (back == 0) return {};
        n.pc = back;
        return {std::move(n)};
      }
      case Mnemonic::Call:
        return do_call(n, ins, next);
      case Mnemonic::Jmp: {
        auto t = ins.direct_target();
        if (!t || !image_.find_instruction(*t)) {
          note("jump at " + hex(ins.address) + " leaves the listing; path ends");
          return {};
        }
        n.pc = *t;
        return {std::move(n)};
      }
      case Mnemonic::Jcc: {
        std::vector<Node> out;
        if (next) {
          Node a = n;
          a.pc = next;
          out.push_back(std::move(a));
        }
        auto t = ins.direct_target();
        if (t && image_.find_instruction(*t)) {
          n.pc = *t;
          out.push_back(std::move(n));
        }
        return out;
      }
      case Mnemonic::Hlt:
        return {};
      default:
        break;
    }

    // Stack pointer adjustments.
    if (cls.kind == MemOpKind::Fe || (cls.kind == MemOpKind::Pop && ins.mnemonic != Mnemonic::Mov)) {
      MemOp op;
      op.kind = cls.kind;
      op.amount = cls.amount;
      LabelKind lk = cls.kind == MemOpKind::Fe ? LabelKind::Fe : LabelKind::Pop;
      auto dst = transition(n.state, op, {lk, ins.address, "", ins.text()}, cls.kind);
      if (!dst) return {};
      n.state = *dst;
      if (cls.kind == MemOpKind::Pop) drop_dead_slots(n);
      return advance(std::move(n), next);
    }
    if (cls.kind == MemOpKind::Pop && ins.mnemonic == Mnemonic::Mov) {  // mov rsp, rbp
      AbsVal rbp = reg_value(n, Gpr::rbp);
      AbsVal sp = rsp_of(space_.states[n.state]);
      if (rbp.kind != AbsVal::Kind::Stack || rbp.v < sp.v) {
        note("stack pointer restored from unresolved base register at " + hex(ins.address));
        return {};
      }
      MemOp op;
      op.kind = MemOpKind::Pop;
      op.amount = static_cast<std::uint64_t>(rbp.v - sp.v);
      auto dst = transition(n.state, op, {LabelKind::Pop, ins.address, "", ins.text()}, MemOpKind::Pop);
      if (!dst) return {};
      n.state = *dst;
      drop_dead_slots(n);
      return advance(std::move(n), next);
    }
    if (!ops.empty() && is_reg(ops[0], Gpr::rsp) && ins.mnemonic != Mnemonic::Cmp &&
        ins.mnemonic != Mnemonic::Test && ins.mnemonic != Mnemonic::Push) {
      note("unmodeled stack pointer update at " + hex(ins.address) + ": " + ins.text());
      return advance(std::move(n), next);
    }

    // Buffer registration for lea / indexed frame accesses.
    for (std::int64_t addr : buffer_candidates(n, ins)) n.state = register_at(n.state, addr, ins);

    if (cls.kind == MemOpKind::Write) {
      std::size_t mem_index = ops[0].kind == OperandKind::Memory ? 0 : 1;
      const MemoryRef& m = ops[mem_index].mem;
      auto addr = address_of(n, m);
      AbsVal stored = ins.mnemonic == Mnemonic::Mov ? read_value(n, ops[1], cls.width) : AbsVal::unknown();
      if (ins.mnemonic == Mnemonic::Xchg) {
        std::size_t reg_index = 1 - mem_index;
        if (ops[reg_index].kind == OperandKind::Register) set_reg(n, ops[reg_index].reg, AbsVal::unknown());
      }
      if (addr && addr->kind == AbsVal::Kind::Stack) {
        AddressMapping map = map_address_range(space_.states[n.state], addr->v, cls.width, cls.byte_op);
        if (map.outside) note("WriteOutsideStack: " + std::to_string(map.outside) + " byte(s) at " + hex(ins.address));
        if (!map.touches.empty()) {
          auto dst = write_transition(n.state, map.touches, cls.canary, here, MemOpKind::Write, true);
          if (!dst) return {};
          n.state = *dst;
        }
        forget_slots(n, addr->v, cls.width);
        if (ins.mnemonic == Mnemonic::Mov && (cls.width == 8 || cls.width == 4)) n.slots[addr->v] = {cls.width, stored};
      } else if (!addr && m.index && m.base) {
        note("indexed write with unresolved index at " + hex(ins.address) + " not modeled");
      }
      return advance(std::move(n), next);
    }

    // Register-only effects.
    if (!ops.empty() && ops[0].kind == OperandKind::Register) {
      const RegisterRef& dst = ops[0].reg;
      switch (ins.mnemonic) {
        case Mnemonic::Mov:
          if (ops[1].kind == OperandKind::Memory && ops[1].mem.fs_segment && ops[1].mem.displacement == 0x28) {
            set_reg(n, dst, AbsVal::unknown());
            n.canary_mask |= 1u << static_cast<unsigned>(dst.reg);
          } else {
            bool tainted = ops[1].kind == OperandKind::Register &&
                           (n.canary_mask & (1u << static_cast<unsigned>(ops[1].reg.reg)));
            set_reg(n, dst, read_value(n, ops[1], dst.width));
            if (tainted) n.canary_mask |= 1u << static_cast<unsigned>(dst.reg);
          }
          break;
        case Mnemonic::Lea: {
          auto a = address_of(n, ops[1].mem);
          set_reg(n, dst, a ? *a : AbsVal::unknown());
          break;
        }
        case Mnemonic::Add:
        case Mnemonic::Sub: {
          AbsVal a = reg_value(n, dst.reg);
          AbsVal b = read_value(n, ops[1], dst.width);
          if (ins.mnemonic == Mnemonic::Sub && ops[1] == ops[0]) {
            set_reg(n, dst, AbsVal::constant(0));
          } else if (a.kind != AbsVal::Kind::Unknown && b.kind == AbsVal::Kind::Const && dst.width == 8) {
            a.v += ins.mnemonic == Mnemonic::Add ? b.v : -b.v;
            set_reg(n, dst, a);
          } else {
            set_reg(n, dst, AbsVal::unknown());
          }
          break;
        }
        case Mnemonic::Xor:
          set_reg(n, dst, ops[1] == ops[0] ? AbsVal::constant(0) : AbsVal::unknown());
          break;
        case Mnemonic::Cmp:
        case Mnemonic::Test:
          break;
        case Mnemonic::Movsxd:
        case Mnemonic::Movzx:
        case Mnemonic::Movsx: {
          AbsVal v = ops[1].kind == OperandKind::Register ? reg_value(n, ops[1].reg.reg) : AbsVal::unknown();
          set_reg(n, dst, v.kind == AbsVal::Kind::Const ? v : AbsVal::unknown());
          break;
        }
        default:
          set_reg(n, dst, AbsVal::unknown());
          break;
      }
    } else if (ins.mnemonic == Mnemonic::Cdqe) {
      n.regs[static_cast<std::size_t>(Gpr::rax)] = AbsVal::unknown();
    } else if (ins.mnemonic == Mnemonic::Cdq) {
      n.regs[static_cast<std::size_t>(Gpr::rdx)] = AbsVal::unknown();
    } else if (ins.mnemonic == Mnemonic::Imul && ops.size() == 1) {
      n.regs[static_cast<std::size_t>(Gpr::rax)] = AbsVal::unknown();
      n.regs[static_cast<std::size_t>(Gpr::rdx)] = AbsVal::unknown();
    }
    return advance(std::move(n), next);
  }

  void drop_dead_slots(Node& n) {
    AbsVal sp = rsp_of(space_.states[n.state]);
    if (sp.kind != AbsVal::Kind::Stack) return;
    for (auto it = n.slots.begin(); it != n.slots.end();) it = it->first < sp.v ? n.slots.erase(it) : std::next(it);
  }

  std::vector<Node> do_call(Node& n, const Instruction& ins, Address next) {
    const Operand& target = ins.operands[0];
    if (target.kind != OperandKind::CallTarget) {
      note("indirect call at " + hex(ins.address) + " treated as an external sink");
      clobber_call(n);
      return advance(std::move(n), next);
    }
    const Function* callee = nullptr;
    if (target.target) {
      const Function* f = image_.function_containing(target.target);
      if (f && f->entry == target.target) callee = f;
    }
    if (!callee && target.symbol) {
      const Function* f = image_.find_function(*target.symbol);
      if (f && !f->instructions.empty()) callee = f;
    }
    if (callee && !callee->is_library()) {
      if (n.chain.size() >= cfg_.max_call_depth) {
        note("call depth limit reached at " + hex(ins.address) + "; call skipped");
        clobber_call(n);
        return advance(std::move(n), next);
      }
      n.chain.push_back(next);
      n.pc = callee->instructions.front().address;
      if (callee->instructions.front().mnemonic == Mnemonic::Endbr64) {
        n.pending_fa = true;
        return {std::move(n)};
      }
      MemOp op;
      op.kind = MemOpKind::Fa;
      op.function = callee->name;
      on_frame_allocated(callee->name);
      auto dst = transition(n.state, op, {LabelKind::Fa, ins.address, callee->name, ins.text()}, MemOpKind::Fa);
      if (!dst) return {};
      n.state = *dst;
      return {std::move(n)};
    }

    std::string name = callee ? strip_symbol_decoration(callee->name)
                              : (target.symbol ? strip_symbol_decoration(*target.symbol) : hex(target.target));
    const LibcSpec* spec = libc_find(name);
    if (spec) name = spec->name;
    else note("UnknownLibc: " + name + " at " + hex(ins.address) + " has no database entry; no stack effect");

    const CallEffect& eff = effects_.call(ins.address, n.chain, space_.states[n.state]);
    space_.effects[{ins.address, n.chain}] = eff;
    for (const auto& s : eff.notes) note(name + " at " + hex(ins.address) + ": " + s);
    std::vector<Touch> touches;
    if (!eff.opaque) {
      AddressMapping map = eff.map_onto(space_.states[n.state]);
      touches = std::move(map.touches);
      if (map.outside)
        note(name + " at " + hex(ins.address) + ": effect clipped, " + std::to_string(map.outside) +
             " byte(s) outside modeled frames");
    }
    TransitionLabel label{LabelKind::Call, ins.address, name, ins.text()};
    auto dst = write_transition(n.state, touches, false, label, MemOpKind::Indirect, true);
    if (!dst) return {};
    n.state = *dst;
    for (std::int64_t a : eff.touched) forget_slots(n, a, 1);
    clobber_call(n);
    if (spec && spec->noreturn) return {};
    return advance(std::move(n), next);
  }

  std::vector<Node> summarize_loop(Node& n, const LoopInfo& loop) {
    // Buffers named inside the body are registered before the summary.
    for (Address a : loop.instructions) {
      const Instruction* ins = image_.find_instruction(a);
      if (!ins) continue;
      for (std::int64_t addr : buffer_candidates(n, *ins)) n.state = register_at(n.state, addr, *ins);
    }
    const CallEffect& eff = effects_.loop(loop, n.chain, space_.states[n.state]);
    space_.effects[{loop.header, n.chain}] = eff;
    for (const auto& s : eff.notes) note("loop at " + hex(loop.header) + ": " + s);
    std::vector<Touch> touches;
    if (!eff.opaque) {
      AddressMapping map = eff.map_onto(space_.states[n.state]);
      touches = std::move(map.touches);
      if (map.outside)
        note("loop at " + hex(loop.header) + ": effect clipped, " + std::to_string(map.outside) +
             " byte(s) outside modeled frames");
    }
    const Instruction* head = image_.find_instruction(loop.header);
    TransitionLabel label{LabelKind::Loop, loop.header, "", head ? head->text() : std::string("loop")};
    auto dst = write_transition(n.state, touches, false, label, MemOpKind::Write, false);
    if (!dst) return {};
    n.state = *dst;

    // Registers and stack slots written in the body are no longer known.
    for (Address a : loop.instructions) {
      const Instruction* ins = image_.find_instruction(a);
      if (!ins || ins->operands.empty()) continue;
      const Operand& d = ins->operands[0];
      if (d.kind == OperandKind::Register) set_reg(n, d.reg, AbsVal::unknown());
      if (d.kind == OperandKind::Memory && d.mem.base && !d.mem.index) {
        AbsVal b = reg_value(n, d.mem.base->reg);
        if (b.kind == AbsVal::Kind::Stack) forget_slots(n, b.v + d.mem.displacement, 8);
      }
      if (ins->is_call()) clobber_call(n);
    }
    for (std::int64_t a : eff.touched) forget_slots(n, a, 1);
    if (loop.exit == 0) return {};
    n.pc = loop.exit;
    return {std::move(n)};
  }

  const LibcSpec* libc_find(const std::string& name) const { return libc_ ? libc_->find(name) : nullptr; }

 public:
  const LibcDatabase* libc_ = nullptr;

 private:
  const BCfg& bcfg_;
  const FunctionMap& funcs_;
  const ProgramImage& image_;
  const LoopAnalysis& loops_;
  EffectsOracle& effects_;
  const Config& cfg_;
  const BuildOptions& opts_;
  std::set<Address> irreducible_;
  MemStaCe space_;
  std::unordered_map<std::string, std::size_t> ids_;
  std::set<std::tuple<std::size_t, std::size_t, int, Address>> edges_;
  std::set<std::string> prologue_checked_;
  std::map<std::string, std::map<std::int64_t, std::uint64_t>> sizes_;
};

}  // namespace

MemStaCe build_memstace(const BCfg& bcfg, const FunctionMap& funcs, const ProgramImage& image,
                        const LoopAnalysis& loops, EffectsOracle& effects, const Config& cfg,
                        const std::string& root, const BuildOptions& opts) {
  Builder b(bcfg, funcs, image, loops, effects, cfg, opts);
  b.libc_ = &effects.libc();
  return b.build(root);
}

}  // namespace basics
