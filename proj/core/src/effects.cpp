#include "basics/effects.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>

#include "basics/error.hpp"

namespace basics {

// ---------------------------------------------------------------------------
// Loop detection

namespace {

std::string hex(Address a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(a));
  return buf;
}

bool intra_edge(EdgeKind k) { return k != EdgeKind::Call; }

std::vector<Address> intra_successors(const BCfg& bcfg, const BasicBlock& b) {
  std::vector<Address> out;
  for (const auto& e : b.successors) {
    if (!intra_edge(e.kind)) continue;
    const BasicBlock* t = bcfg.block_at(e.target);
    if (t && t->function == b.function) out.push_back(e.target);
  }
  return out;
}

}  // namespace

const LoopInfo* LoopAnalysis::loop_at(Address header) const {
  for (const auto& l : loops)
    if (l.header == header) return &l;
  return nullptr;
}

LoopAnalysis detect_loops(const BCfg& bcfg) {
  LoopAnalysis out;
  // Group blocks per function; the function entry is its lowest block that
  // no intra-procedural edge targets, or simply its lowest block.
  std::map<std::string, std::vector<Address>> by_function;
  for (const auto& [start, b] : bcfg.blocks) by_function[b.function].push_back(start);

  for (const auto& [fname, starts] : by_function) {
    const Address entry = starts.front();

    // Depth-first numbering for reverse postorder and retreating-edge detection.
    std::vector<Address> postorder;
    std::set<Address> visited, on_stack;
    std::vector<std::pair<Address, Address>> retreating;
    std::function<void(Address)> dfs = [&](Address a) {
      visited.insert(a);
      on_stack.insert(a);
      for (Address s : intra_successors(bcfg, *bcfg.block_at(a))) {
        if (on_stack.count(s)) retreating.emplace_back(a, s);
        else if (!visited.count(s)) dfs(s);
      }
      on_stack.erase(a);
      postorder.push_back(a);
    };
    dfs(entry);
    std::vector<Address> rpo(postorder.rbegin(), postorder.rend());

    // Iterative dominator sets over the reachable blocks.
    std::map<Address, std::set<Address>> preds;
    for (Address a : rpo)
      for (Address s : intra_successors(bcfg, *bcfg.block_at(a))) preds[s].insert(a);
    std::set<Address> all(rpo.begin(), rpo.end());
    std::map<Address, std::set<Address>> dom;
    for (Address a : rpo) dom[a] = a == entry ? std::set<Address>{entry} : all;
    for (bool changed = true; changed;) {
      changed = false;
      for (Address a : rpo) {
        if (a == entry) continue;
        std::set<Address> d;
        bool first = true;
        for (Address p : preds[a]) {
          if (first) {
            d = dom[p];
            first = false;
          } else {
            std::set<Address> tmp;
            std::set_intersection(d.begin(), d.end(), dom[p].begin(), dom[p].end(), std::inserter(tmp, tmp.end()));
            d = std::move(tmp);
          }
        }
        d.insert(a);
        if (d != dom[a]) {
          dom[a] = std::move(d);
          changed = true;
        }
      }
    }

    std::map<Address, LoopInfo> by_header;
    for (auto [u, v] : retreating) {
      if (!dom[u].count(v)) {
        out.irreducible.push_back(v);
        out.notes.push_back("IrreducibleLoop: retreating edge to non-dominating block at " + hex(v) + " in " + fname);
        continue;
      }
      LoopInfo& loop = by_header[v];
      loop.function = fname;
      loop.header = v;
      loop.latches.push_back(u);
      loop.blocks.insert(v);
      std::vector<Address> work{u};
      while (!work.empty()) {
        Address x = work.back();
        work.pop_back();
        if (!loop.blocks.insert(x).second) continue;
        for (Address p : preds[x]) work.push_back(p);
      }
    }
    for (auto& [h, loop] : by_header) {
      for (Address b : loop.blocks) {
        const BasicBlock* blk = bcfg.block_at(b);
        for (const auto& ins : blk->instructions) loop.instructions.insert(ins.address);
        if (loop.exit == 0) {
          for (Address s : intra_successors(bcfg, *blk)) {
            if (!loop.blocks.count(s)) {
              loop.exit = s;
              break;
            }
          }
        }
      }
      std::sort(loop.latches.begin(), loop.latches.end());
      out.loops.push_back(std::move(loop));
    }
  }
  std::sort(out.irreducible.begin(), out.irreducible.end());
  out.irreducible.erase(std::unique(out.irreducible.begin(), out.irreducible.end()), out.irreducible.end());
  return out;
}

// ---------------------------------------------------------------------------
// Argument recovery

const char* to_string(ArgKind kind) {
  switch (kind) {
    case ArgKind::FrameAddress: return "frame-address";
    case ArgKind::Constant: return "constant";
    case ArgKind::FrameSlot: return "frame-slot";
    case ArgKind::Unknown: return "unknown";
  }
  return "?";
}

std::string ArgValue::describe() const {
  auto rel = [&] {
    std::string s = gpr_name(base);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s0x%llx", value < 0 ? "-" : "+",
                  static_cast<unsigned long long>(value < 0 ? -value : value));
    return s + buf;
  };
  char buf[32];
  switch (kind) {
    case ArgKind::FrameAddress: return rel();
    case ArgKind::FrameSlot: return "[" + rel() + "]";
    case ArgKind::Constant:
      std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(value));
      return buf;
    case ArgKind::Unknown: return "unknown";
  }
  return "unknown";
}

namespace {

ArgValue arg_value(ArgKind kind, std::int64_t value, Gpr base = Gpr::rbp) {
  ArgValue v;
  v.kind = kind;
  v.value = value;
  v.base = base;
  return v;
}

class ArgResolver {
 public:
  ArgResolver(const BCfg& bcfg, std::size_t depth) : bcfg_(bcfg), depth_(depth) {}

  ArgValue resolve(Gpr reg, const BasicBlock& block, std::size_t before, std::size_t depth) const {
    for (std::size_t j = before; j-- > 0;) {
      const Instruction& ins = block.instructions[j];
      if (ins.is_call()) return {};
      if (!writes(ins, reg)) continue;
      ArgValue v = define(ins, reg, block, j, depth);
      v.chain.insert(v.chain.begin(), ins.address);
      return v;
    }
    if (depth == 0) return {};
    std::vector<Address> preds;
    for (const auto& [start, b] : bcfg_.blocks)
      for (const auto& e : b.successors)
        if (e.target == block.start && e.kind != EdgeKind::Call) {
          preds.push_back(start);
          break;
        }
    if (preds.size() != 1) return {};
    const BasicBlock* p = bcfg_.block_at(preds.front());
    if (!p || p->function != block.function) return {};
    return resolve(reg, *p, p->instructions.size(), depth - 1);
  }

  std::size_t depth() const { return depth_; }

 private:
  static bool writes(const Instruction& ins, Gpr reg) {
    switch (ins.mnemonic) {
      case Mnemonic::Cmp:
      case Mnemonic::Test:
      case Mnemonic::Push:
      case Mnemonic::Jmp:
      case Mnemonic::Jcc:
      case Mnemonic::Ret:
      case Mnemonic::Nop:
      case Mnemonic::Endbr64:
        return false;
      case Mnemonic::Cdqe:
        return reg == Gpr::rax;
      case Mnemonic::Cdq:
        return reg == Gpr::rdx;
      case Mnemonic::Leave:
        return reg == Gpr::rbp || reg == Gpr::rsp;
      case Mnemonic::Xchg:
        for (const auto& op : ins.operands)
          if (op.kind == OperandKind::Register && op.reg.reg == reg) return true;
        return false;
      default:
        return !ins.operands.empty() && ins.operands[0].kind == OperandKind::Register &&
               ins.operands[0].reg.reg == reg;
    }
  }

  static bool frame_base(const std::optional<RegisterRef>& r) {
    return r && r->width == 8 && (r->reg == Gpr::rbp || r->reg == Gpr::rsp);
  }

  ArgValue define(const Instruction& ins, Gpr reg, const BasicBlock& block, std::size_t j, std::size_t depth) const {
    const auto& ops = ins.operands;
    const bool full = ops.size() >= 1 && ops[0].kind == OperandKind::Register && ops[0].reg.width >= 4 &&
                      !ops[0].reg.high_byte;
    switch (ins.mnemonic) {
      case Mnemonic::Mov:
      case Mnemonic::Movsxd: {
        if (!full) return {};
        const Operand& src = ops[1];
        if (src.kind == OperandKind::Immediate) {
          std::int64_t v = src.imm;
          if (ops[0].reg.width == 4) v = static_cast<std::int64_t>(static_cast<std::uint32_t>(v));
          return arg_value(ArgKind::Constant, v);
        }
        if (src.kind == OperandKind::Register) {
          if (src.reg.width < ops[0].reg.width && ins.mnemonic == Mnemonic::Mov) return {};
          return resolve(src.reg.reg, block, j, depth);
        }
        if (src.kind == OperandKind::Memory && frame_base(src.mem.base) && !src.mem.index && ops[0].reg.width == 8)
          return arg_value(ArgKind::FrameSlot, src.mem.displacement, src.mem.base->reg);
        return {};
      }
      case Mnemonic::Lea: {
        const MemoryRef& m = ops[1].mem;
        if (m.index) return {};
        if (frame_base(m.base)) return arg_value(ArgKind::FrameAddress, m.displacement, m.base->reg);
        if (!m.base || m.base->reg == Gpr::rip) {
          // rip-relative operands carry their resolved absolute address.
          if (!m.base) return arg_value(ArgKind::Constant, m.displacement);
        }
        if (m.base && m.base->width == 8) {
          ArgValue b = resolve(m.base->reg, block, j, depth);
          if (b.kind == ArgKind::FrameAddress || b.kind == ArgKind::Constant) b.value += m.displacement;
          else b = {};
          return b;
        }
        return {};
      }
      case Mnemonic::Xor:
      case Mnemonic::Sub:
        if (ops[1] == ops[0]) return arg_value(ArgKind::Constant, 0);
        [[fallthrough]];
      case Mnemonic::Add: {
        if (!full || ops[0].reg.width != 8 || ops[1].kind != OperandKind::Immediate) return {};
        if (ins.mnemonic == Mnemonic::Xor) return {};
        ArgValue prior = resolve(reg, block, j, depth);
        if (prior.kind != ArgKind::FrameAddress && prior.kind != ArgKind::Constant) return {};
        prior.value += ins.mnemonic == Mnemonic::Add ? ops[1].imm : -ops[1].imm;
        return prior;
      }
      default:
        return {};
    }
  }

  const BCfg& bcfg_;
  std::size_t depth_;
};

}  // namespace

CallArgs recover_arguments(const BCfg& bcfg, Address call_site, const LibcSpec& spec, std::size_t depth) {
  static constexpr Gpr kRegs[] = {Gpr::rdi, Gpr::rsi, Gpr::rdx, Gpr::rcx, Gpr::r8, Gpr::r9};
  CallArgs out;
  out.site = call_site;
  const BasicBlock* block = bcfg.block_containing(call_site);
  if (!block) return out;
  std::size_t idx = 0;
  while (idx < block->instructions.size() && block->instructions[idx].address != call_site) ++idx;
  if (idx == block->instructions.size() || !block->instructions[idx].is_call()) return out;
  std::size_t n = spec.variadic ? 6 : std::min<std::size_t>(6, static_cast<std::size_t>(spec.arity));
  ArgResolver r(bcfg, depth);
  for (std::size_t i = 0; i < n; ++i) out.regs[i] = r.resolve(kRegs[i], *block, idx, depth);
  return out;
}

// ---------------------------------------------------------------------------
// Crash inputs

ProgramInput CrashInput::to_program_input() const {
  ProgramInput in;
  std::string filler(length, 'A');
  if (stream == Stream::Stdin) {
    in.stdin_data = bytes;
    in.argv = {"prog", filler};
  } else {
    in.stdin_data = filler + "\n";
    in.argv.assign(static_cast<std::size_t>(std::max(argv_index, 1)) + 1, filler);
    in.argv[0] = "prog";
    in.argv[static_cast<std::size_t>(argv_index)] = bytes;
  }
  return in;
}

std::optional<CrashInput> extract_concrete_input(const CallEffect& effect) { return effect.crash_input; }

AddressMapping CallEffect::map_onto(const MemoryState& m) const {
  AddressMapping out;
  for (std::int64_t a : touched) {
    AddressMapping one = map_address_range(m, a, 1, ByteOp::nRWrite);
    out.touches.insert(out.touches.end(), one.touches.begin(), one.touches.end());
    out.outside += one.outside;
  }
  return out;
}

std::vector<std::size_t> probe_lengths(std::size_t max_input_len) {
  std::vector<std::size_t> out;
  for (std::size_t l = 1; l < max_input_len; l *= 2) out.push_back(l);
  if (max_input_len > 0) out.push_back(max_input_len);
  return out;
}

// ---------------------------------------------------------------------------
// Emulation

namespace {

using Chain = std::vector<Address>;

struct SiteKey {
  bool loop = false;
  Address site = 0;
  Chain chain;
  auto operator<=>(const SiteKey&) const = default;
};

struct SiteRecord {
  std::set<std::int64_t> touched;
  bool corrupting = false;
  bool exhausted = false;
  bool opaque = false;
  std::vector<std::string> notes;
};

struct ProbeResult {
  std::map<SiteKey, SiteRecord> sites;
  bool truncated = false;
};

struct LoopSnap {
  const LoopInfo* loop = nullptr;
  Chain chain;
  std::size_t depth = 0;
  Memory before;
  std::size_t iterations = 0;
};

struct Path {
  Machine m;
  std::vector<LoopSnap> loops;
};

class Explorer {
 public:
  Explorer(const ProgramImage& image, const LibcDatabase& libc, const Config& cfg,
           const std::map<Address, const LoopInfo*>& headers)
      : image_(image), libc_(libc), cfg_(cfg), headers_(headers) {}

  ProbeResult run(const std::string& function, std::size_t len, std::optional<std::uint64_t> rsp_entry) {
    MachineOptions o;
    o.symbolic = true;
    o.attacker_len = len;
    o.max_input_len = cfg_.max_input_len;
    o.step_budget = cfg_.step_budget;
    o.max_call_depth = cfg_.max_call_depth;
    Machine m(image_, libc_, o);
    ProgramInput in;
    in.stdin_data = std::string(len, 'A') + "\n";
    in.argv = {"prog", std::string(len, 'A')};
    m.start(function, in, rsp_entry);

    ProbeResult result;
    std::vector<Path> stack;
    stack.push_back({std::move(m), {}});
    std::size_t paths = 0;
    while (!stack.empty()) {
      if (paths >= cfg_.max_paths) {
        result.truncated = true;
        break;
      }
      Path p = std::move(stack.back());
      stack.pop_back();
      ++paths;
      run_path(p, stack, result);
    }
    return result;
  }

 private:
  enum class Track { Proceed, Redirected, End };

  static bool corrupts(const Machine& m, std::uint64_t addr) {
    for (const auto& f : m.shadow()) {
      if (addr >= f.ret_slot && addr < f.ret_slot + 8) return true;
      if (f.canary_slot && addr >= *f.canary_slot && addr < *f.canary_slot + 8) return true;
    }
    return false;
  }

  void record(const Memory& before, const Machine& m, const SiteKey& key, ProbeResult& result, bool scratch_filter,
              const std::vector<std::string>& notes, bool exhausted) {
    SiteRecord& rec = result.sites[key];
    std::uint64_t floor = 0;
    if (scratch_filter) {
      Value rsp = m.reg(Gpr::rsp);
      if (rsp.known) floor = rsp.bits;
    }
    for (std::uint64_t a : Memory::diff(before, m.memory(), m.stack_lo(), m.stack_hi())) {
      if (a < floor) continue;
      rec.touched.insert(static_cast<std::int64_t>(a - Layout::kStackEntry));
      if (corrupts(m, a)) rec.corrupting = true;
    }
    rec.exhausted = rec.exhausted || exhausted;
    for (const auto& n : notes) {
      if (n.find("not fully supported") != std::string::npos) rec.opaque = true;
      if (std::find(rec.notes.begin(), rec.notes.end(), n) == rec.notes.end()) rec.notes.push_back(n);
    }
  }

  Track track_loops(Path& p, ProbeResult& result) {
    Machine& m = p.m;
    const Address rip = m.rip();
    const std::size_t depth = m.shadow().size();
    for (std::size_t i = p.loops.size(); i-- > 0;) {
      LoopSnap& s = p.loops[i];
      bool left = depth < s.depth || (depth == s.depth && !s.loop->instructions.count(rip));
      if (!left) continue;
      record(s.before, m, {true, s.loop->header, s.chain}, result, true, {}, false);
      p.loops.erase(p.loops.begin() + static_cast<std::ptrdiff_t>(i));
    }
    auto h = headers_.find(rip);
    if (h == headers_.end()) return Track::Proceed;
    const LoopInfo* loop = h->second;
    auto it = std::find_if(p.loops.begin(), p.loops.end(),
                           [&](const LoopSnap& s) { return s.loop == loop && s.depth == depth; });
    if (it == p.loops.end()) {
      p.loops.push_back({loop, m.call_chain(), depth, m.memory(), 0});
      return Track::Proceed;
    }
    if (++it->iterations <= cfg_.max_loop_iters) return Track::Proceed;
    record(it->before, m, {true, loop->header, it->chain}, result, true,
           {"loop at " + hex(loop->header) + " exceeded " + std::to_string(cfg_.max_loop_iters) + " iterations"}, true);
    p.loops.erase(it);
    if (loop->exit == 0) return Track::End;
    m.set_rip(loop->exit);
    return Track::Redirected;
  }

  void run_path(Path& p, std::vector<Path>& stack, ProbeResult& result) {
    Machine& m = p.m;
    for (;;) {
      Track t = track_loops(p, result);
      if (t == Track::End) return;
      if (t == Track::Redirected) continue;
      StepResult r;
      if (m.pending_library_call()) {
        Memory before = m.memory();
        SiteKey key{false, m.rip(), m.call_chain()};
        std::size_t notes_before = m.notes().size();
        r = m.step();
        std::vector<std::string> fresh(m.notes().begin() + static_cast<std::ptrdiff_t>(notes_before), m.notes().end());
        record(before, m, key, result, false, fresh, false);
      } else {
        r = m.step();
      }
      switch (r.kind) {
        case StepKind::Continue:
          continue;
        case StepKind::Fork: {
          if (m.visits(m.rip()) > cfg_.max_loop_iters) {
            m.set_rip(std::max(r.taken, r.fallthrough));
            continue;
          }
          Path other = p;
          other.m.set_rip(r.taken);
          stack.push_back(std::move(other));
          m.set_rip(r.fallthrough);
          continue;
        }
        case StepKind::Budget:
          result.truncated = true;
          return;
        default:
          return;
      }
    }
  }

  const ProgramImage& image_;
  const LibcDatabase& libc_;
  const Config& cfg_;
  const std::map<Address, const LoopInfo*>& headers_;
};

}  // namespace

struct EffectsOracle::Impl {
  const ProgramImage& image;
  const LibcDatabase& libc;
  Config cfg;
  std::string root;
  std::vector<LoopInfo> loops;
  std::map<Address, const LoopInfo*> headers;
  std::vector<std::size_t> lengths;

  struct Run {
    std::string function;
    std::optional<std::uint64_t> rsp;
    std::vector<ProbeResult> probes;
  };
  std::optional<Run> root_run;
  std::map<std::pair<std::string, std::uint64_t>, Run> fallback_runs;
  std::map<SiteKey, CallEffect> cache;
  std::size_t emulations = 0;

  Impl(const ProgramImage& img, const LibcDatabase& db, Config c, std::string r, std::vector<LoopInfo> ls)
      : image(img), libc(db), cfg(std::move(c)), root(std::move(r)), loops(std::move(ls)) {
    for (const auto& l : loops) headers[l.header] = &l;
    lengths = probe_lengths(cfg.max_input_len);
  }

  ProbeResult explore(const std::string& function, std::size_t len, std::optional<std::uint64_t> rsp) {
    ++emulations;
    Explorer e(image, libc, cfg, headers);
    return e.run(function, len, rsp);
  }

  Run make_run(const std::string& function, std::optional<std::uint64_t> rsp) {
    Run run{function, rsp, {}};
    for (std::size_t len : lengths) run.probes.push_back(explore(function, len, rsp));
    return run;
  }

  Run& root_probes() {
    if (!root_run) root_run = make_run(root, std::nullopt);
    return *root_run;
  }

  bool reached(const Run& run, const SiteKey& key) const {
    for (const auto& p : run.probes)
      if (p.sites.count(key)) return true;
    return false;
  }

  CallEffect summarize(Run& run, const SiteKey& key, const std::string& callee) {
    CallEffect eff;
    eff.callee = callee;
    eff.site = key.site;
    eff.chain = key.chain;
    std::optional<std::set<std::int64_t>> first;
    std::optional<std::size_t> corrupting_probe;
    for (std::size_t k = 0; k < run.probes.size(); ++k) {
      auto it = run.probes[k].sites.find(key);
      if (it == run.probes[k].sites.end()) continue;
      const SiteRecord& rec = it->second;
      eff.reached = true;
      eff.touched.insert(rec.touched.begin(), rec.touched.end());
      if (!first) first = rec.touched;
      else if (*first != rec.touched) eff.input_dependent = true;
      eff.opaque = eff.opaque || rec.opaque;
      eff.exhausted = eff.exhausted || rec.exhausted;
      for (const auto& n : rec.notes)
        if (std::find(eff.notes.begin(), eff.notes.end(), n) == eff.notes.end()) eff.notes.push_back(n);
      if (rec.corrupting && !corrupting_probe) corrupting_probe = k;
    }
    if (corrupting_probe) {
      std::size_t hi = lengths[*corrupting_probe];
      std::size_t lo = *corrupting_probe == 0 ? 0 : lengths[*corrupting_probe - 1];
      while (hi - lo > 1) {
        std::size_t mid = lo + (hi - lo) / 2;
        ProbeResult pr = explore(run.function, mid, run.rsp);
        auto it = pr.sites.find(key);
        if (it != pr.sites.end() && it->second.corrupting) hi = mid;
        else lo = mid;
      }
      eff.corrupting_length = hi;
      const LibcSpec* spec = key.loop ? nullptr : libc.find(callee);
      bool from_stdin = spec && spec->input_source;
      if (from_stdin || eff.input_dependent) {
        CrashInput ci;
        ci.length = hi;
        if (from_stdin) {
          ci.stream = CrashInput::Stream::Stdin;
          ci.bytes = std::string(hi, 'A') + "\n";
        } else {
          ci.stream = CrashInput::Stream::Argv;
          ci.argv_index = 1;
          ci.bytes = std::string(hi, 'A');
        }
        eff.crash_input = ci;
      }
    }
    if (eff.opaque) eff.touched.clear();
    return eff;
  }

  const CallEffect& lookup(const SiteKey& key, const std::string& callee, const MemoryState& state) {
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    Run& rr = root_probes();
    if (reached(rr, key)) return cache[key] = summarize(rr, key, callee);

    // Fallback: emulate from the innermost function with the modeled stack position.
    CallEffect eff;
    if (!state.frames.empty()) {
      const StackFrame& top = state.frames.back();
      std::uint64_t rsp = Layout::kStackEntry + static_cast<std::uint64_t>(top.rbp_anchor + 8);
      auto fkey = std::make_pair(top.label, rsp);
      auto fit = fallback_runs.find(fkey);
      if (fit == fallback_runs.end()) fit = fallback_runs.emplace(fkey, make_run(top.label, rsp)).first;
      SiteKey local{key.loop, key.site, {}};
      if (reached(fit->second, local)) {
        eff = summarize(fit->second, local, callee);
        eff.chain = key.chain;
        eff.notes.push_back("effect emulated from the entry of " + top.label);
      }
    }
    if (!eff.reached) {
      eff.callee = callee;
      eff.site = key.site;
      eff.chain = key.chain;
      eff.opaque = true;
      eff.notes.push_back("TargetUnreachable: " + callee + " at " + hex(key.site) + " was not reached by emulation");
    }
    return cache[key] = eff;
  }
};

EffectsOracle::EffectsOracle(const ProgramImage& image, const LibcDatabase& libc, Config cfg, std::string root,
                             std::vector<LoopInfo> loops)
    : impl_(std::make_unique<Impl>(image, libc, std::move(cfg), std::move(root), std::move(loops))) {}

EffectsOracle::~EffectsOracle() = default;

const CallEffect& EffectsOracle::call(Address site, const std::vector<Address>& chain, const MemoryState& state) {
  const Instruction* ins = impl_->image.find_instruction(site);
  std::string callee = "?";
  if (ins && ins->is_call()) {
    if (auto sym = ins->target_symbol()) callee = strip_symbol_decoration(*sym);
    else if (auto t = ins->direct_target()) {
      if (const Function* f = impl_->image.function_containing(*t)) callee = strip_symbol_decoration(f->name);
    }
    if (const LibcSpec* spec = impl_->libc.find(callee)) callee = spec->name;
  }
  return impl_->lookup({false, site, chain}, callee, state);
}

const CallEffect& EffectsOracle::loop(const LoopInfo& loop, const std::vector<Address>& chain,
                                      const MemoryState& state) {
  return impl_->lookup({true, loop.header, chain}, "loop", state);
}

std::size_t EffectsOracle::emulations() const { return impl_->emulations; }
const LibcDatabase& EffectsOracle::libc() const { return impl_->libc; }

namespace {

CallEffect union_over_chains(EffectsOracle::Impl& impl, bool loop, Address site, const std::string& callee,
                             const std::string& function) {
  CallEffect total;
  total.callee = callee;
  total.site = site;
  auto& run = impl.root_probes();
  std::set<SiteKey> keys;
  for (const auto& p : run.probes)
    for (const auto& [k, _] : p.sites)
      if (k.loop == loop && k.site == site) keys.insert(k);
  EffectsOracle::Impl::Run* source = &run;
  if (keys.empty()) {
    auto fkey = std::make_pair(function, Layout::kStackEntry);
    auto it = impl.fallback_runs.find(fkey);
    if (it == impl.fallback_runs.end()) it = impl.fallback_runs.emplace(fkey, impl.make_run(function, std::nullopt)).first;
    source = &it->second;
    for (const auto& p : source->probes)
      for (const auto& [k, _] : p.sites)
        if (k.loop == loop && k.site == site) keys.insert(k);
  }
  if (keys.empty()) {
    total.opaque = true;
    total.notes.push_back("TargetUnreachable: " + callee + " at " + hex(site) + " was not reached by emulation");
    return total;
  }
  for (const auto& k : keys) {
    CallEffect e = impl.summarize(*source, k, callee);
    total.reached = true;
    total.touched.insert(e.touched.begin(), e.touched.end());
    total.opaque = total.opaque || e.opaque;
    total.input_dependent = total.input_dependent || e.input_dependent;
    total.exhausted = total.exhausted || e.exhausted;
    if (e.corrupting_length && (!total.corrupting_length || *e.corrupting_length < *total.corrupting_length)) {
      total.corrupting_length = e.corrupting_length;
      total.crash_input = e.crash_input;
    }
    if (total.chain.empty()) total.chain = e.chain;
    for (const auto& n : e.notes) total.notes.push_back(n);
  }
  return total;
}

std::string root_of(const ProgramImage& image, const Config& cfg, const std::optional<std::string>& root) {
  if (root) return *root;
  if (cfg.entry) return *cfg.entry;
  auto e = image.entry_function();
  if (!e) throw Error(ErrorKind::TargetUnreachable, "image has no entry function");
  return *e;
}

}  // namespace

CallEffect emulate_call(const ProgramImage& image, const LibcDatabase& libc, Address call_site, const Config& cfg,
                        std::optional<std::string> root) {
  const Instruction* ins = image.find_instruction(call_site);
  if (!ins || !ins->is_call()) throw Error(ErrorKind::TargetUnreachable, "no call instruction at " + hex(call_site));
  std::string callee = "?";
  if (auto sym = ins->target_symbol()) callee = strip_symbol_decoration(*sym);
  if (const LibcSpec* spec = libc.find(callee)) callee = spec->name;
  EffectsOracle::Impl impl(image, libc, cfg, root_of(image, cfg, root), {});
  const Function* f = image.function_containing(call_site);
  return union_over_chains(impl, false, call_site, callee, f ? f->name : "");
}

CallEffect emulate_loop(const ProgramImage& image, const LibcDatabase& libc, const LoopInfo& loop, const Config& cfg,
                        std::optional<std::string> root) {
  EffectsOracle::Impl impl(image, libc, cfg, root_of(image, cfg, root), {loop});
  return union_over_chains(impl, true, loop.header, "loop", loop.function);
}

}  // namespace basics
