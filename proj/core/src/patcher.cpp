#include "basics/patcher.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "basics/bundled.hpp"
#include "basics/error.hpp"

namespace basics {

SinkSite locate_sink(const Trace& trace, const BCfg& bcfg, const FunctionMap& funcs, const ProgramImage& image) {
  (void)bcfg;
  for (std::size_t i = trace.steps.size(); i-- > 0;) {
    const TraceStep& s = trace.steps[i];
    if (s.label.kind != LabelKind::Call && s.label.kind != LabelKind::Loop) continue;
    // Calls and loops that changed nothing (printf, read-only loops) are not
    // the cause of a violation.
    if (s.deltas.empty()) continue;
    SinkSite sink;
    sink.address = s.address;
    sink.loop = s.label.kind == LabelKind::Loop;
    sink.callee = sink.loop ? "loop" : s.label.callee;
    sink.step = i;
    if (auto f = funcs.function_containing(image, s.address)) sink.function = *f;
    else if (const Function* fn = image.function_containing(s.address)) sink.function = fn->name;
    return sink;
  }
  throw Error(ErrorKind::NoSinkFound, "trace has no library call or loop step that writes stack bytes");
}

const char* to_string(PatchMode m) { return m == PatchMode::Static ? "static" : "runtime"; }

TemplateLibrary TemplateLibrary::bundled() {
  static const TemplateLibrary lib = from_json(bundled::templates_json());
  return lib;
}

TemplateLibrary TemplateLibrary::from_json(std::string_view text) {
  TemplateLibrary lib;
  try {
    auto doc = nlohmann::json::parse(text);
    for (const auto& t : doc.at("templates")) {
      PatchTemplate p;
      p.name = t.at("name").get<std::string>();
      p.target = t.at("target").get<std::string>();
      std::string mode = t.at("mode").get<std::string>();
      if (mode != "static" && mode != "runtime")
        throw Error(ErrorKind::InvalidConfig, "template " + p.name + ": mode must be static or runtime");
      p.mode = mode == "static" ? PatchMode::Static : PatchMode::Runtime;
      p.replacement = t.at("replacement").get<std::string>();
      p.size_expr = t.value("size_expr", mode == "static" ? "dest_size" : "runtime");
      p.terminate = t.value("terminate", true);
      p.opt_in = t.value("opt_in", false);
      lib.templates.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("template file: ") + e.what());
  }
  return lib;
}

TemplateLibrary TemplateLibrary::from_directory(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorKind::Io, "template directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  TemplateLibrary lib;
  for (const auto& p : files) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    lib.merge(from_json(ss.str()));
  }
  return lib;
}

void TemplateLibrary::merge(const TemplateLibrary& other) {
  for (const auto& t : other.templates) {
    auto it = std::find_if(templates.begin(), templates.end(), [&](const PatchTemplate& x) { return x.name == t.name; });
    if (it != templates.end()) *it = t;
    else templates.push_back(t);
  }
}

const PatchTemplate* TemplateLibrary::find(const std::string& target, PatchMode mode) const {
  for (const auto& t : templates)
    if (t.target == target && t.mode == mode) return &t;
  return nullptr;
}

namespace {

constexpr Gpr kArgRegs[] = {Gpr::rdi, Gpr::rsi, Gpr::rdx, Gpr::rcx, Gpr::r8, Gpr::r9};

std::string hex(Address a) {
  std::ostringstream s;
  s << "0x" << std::hex << a;
  return s.str();
}

}  // namespace

PatchPlan select_template(const SinkSite& sink, const CallEffect& effect, const CallArgs& args,
                          const TemplateLibrary& templates, const MemoryState* call_state, const Config& cfg) {
  if (sink.loop) throw Error(ErrorKind::NoTemplate, "loop sink at " + hex(sink.address) + " has no patch template");
  const PatchTemplate* any = templates.find(sink.callee, PatchMode::Runtime);
  if (!any) any = templates.find(sink.callee, PatchMode::Static);
  if (!any) throw Error(ErrorKind::NoTemplate, "no patch template for " + sink.callee);
  if (any->opt_in && !cfg.enable_scanf_patch)
    throw Error(ErrorKind::NoTemplate, "template for " + sink.callee + " is opt-in and not enabled");

  PatchPlan plan;
  plan.sink = sink;
  const LibcSpec* spec = LibcDatabase::bundled().find(sink.callee);
  int dest_pos = 0;
  if (sink.callee == "scanf") dest_pos = 1;
  else if (spec) dest_pos = spec->role_position(ArgRole::DestBuffer).value_or(0);

  const ArgValue& dest = args.regs[static_cast<std::size_t>(dest_pos)];
  if (dest.kind == ArgKind::FrameAddress && call_state && !call_state->frames.empty()) {
    const StackFrame* frame = nullptr;
    for (auto it = call_state->frames.rbegin(); it != call_state->frames.rend(); ++it)
      if (it->label == sink.function) {
        frame = &*it;
        break;
      }
    if (frame) {
      std::int64_t offset = dest.value;
      if (dest.base == Gpr::rsp) offset = frame->top_address() + dest.value - frame->rbp_anchor;
      plan.dest_offset = offset;
      for (const auto& b : frame->buffers)
        if (b.offset == offset) plan.dest_size = b.size;
    }
  } else if (dest.kind == ArgKind::FrameAddress && dest.base == Gpr::rbp) {
    plan.dest_offset = dest.value;
  }

  PatchMode mode = plan.dest_size ? PatchMode::Static : PatchMode::Runtime;
  const PatchTemplate* tpl = templates.find(sink.callee, mode);
  if (!tpl) {
    mode = mode == PatchMode::Static ? PatchMode::Runtime : PatchMode::Static;
    tpl = templates.find(sink.callee, mode);
    if (mode == PatchMode::Static) tpl = nullptr;  // static needs a known size
  }
  if (!tpl) throw Error(ErrorKind::NoTemplate, "no usable patch template for " + sink.callee);
  plan.tpl = *tpl;
  if (mode == PatchMode::Static) plan.bound = *plan.dest_size;
  else plan.notes.push_back("destination size unknown; bound computed at run time");

  std::size_t nargs = 2;
  if (spec && !spec->variadic) nargs = std::min<std::size_t>(2, static_cast<std::size_t>(spec->arity));
  for (std::size_t i = 0; i < nargs; ++i) plan.args.push_back({kArgRegs[i], 8, false});

  if (sink.callee == "sprintf")
    plan.notes.push_back("bounded formatting truncates output that does not fit the destination");
  if (effect.opaque) plan.notes.push_back("call effect was opaque; patch applied on template evidence only");
  return plan;
}

PatchResult apply_trampoline(const ProgramImage& image, const PatchPlan& plan) {
  const Instruction* site = image.find_instruction(plan.sink.address);
  if (!site) throw Error(ErrorKind::NoSinkFound, "sink " + hex(plan.sink.address) + " is not in the image");
  if (site->mnemonic == Mnemonic::Jmp && site->target_symbol()) {
    const Function* t = image.find_function(*site->target_symbol());
    if (t && !t->instructions.empty() && t->instructions.front().mnemonic == Mnemonic::Safecall)
      throw Error(ErrorKind::AlreadyPatched, "sink " + hex(plan.sink.address) + " already jumps to " + t->name);
  }
  if (!site->is_call()) throw Error(ErrorKind::NoSinkFound, "sink " + hex(plan.sink.address) + " is not a call");

  PatchResult r;
  r.label = plan.trampoline_label;
  if (r.label.empty()) {
    for (std::size_t k = 0;; ++k) {
      r.label = "T" + std::to_string(k);
      if (!image.find_function(r.label)) break;
    }
  } else if (image.find_function(r.label)) {
    throw Error(ErrorKind::LabelCollision, "label " + r.label + " already names a function");
  }

  r.image = image;
  const Instruction* next = image.next_instruction(plan.sink.address);
  r.return_address = next ? next->address : 0;
  Address base = (image.max_address() + 0x10 + 0xff) & ~Address{0xff};
  r.trampoline = base;

  Function tramp;
  tramp.name = r.label;
  tramp.entry = base;
  Instruction sc;
  sc.address = base;
  sc.mnemonic = Mnemonic::Safecall;
  sc.mnemonic_text = "safecall";
  sc.safecall = SafeCall{plan.tpl.replacement, plan.args, plan.bound, plan.tpl.terminate};
  sc.raw_text = sc.text();
  tramp.instructions.push_back(sc);
  Instruction back;
  back.address = base + 8;
  if (r.return_address) {
    back.mnemonic = Mnemonic::Jmp;
    back.mnemonic_text = "jmp";
    const Function* owner = image.function_containing(r.return_address);
    std::string sym = owner ? owner->name : std::string("R0");
    if (owner && r.return_address != owner->entry) sym += "+" + hex(r.return_address - owner->entry);
    back.operands.push_back(Operand::make_target(r.return_address, sym));
  } else {
    back.mnemonic = Mnemonic::Hlt;
    back.mnemonic_text = "hlt";
    r.notes.push_back("sink at " + hex(plan.sink.address) + " ends its function; trampoline halts after the safe call");
  }
  back.raw_text = back.text();
  tramp.instructions.push_back(back);

  for (auto& f : r.image.functions) {
    for (auto& ins : f.instructions) {
      if (ins.address != plan.sink.address) continue;
      Instruction j;
      j.address = ins.address;
      j.mnemonic = Mnemonic::Jmp;
      j.mnemonic_text = "jmp";
      j.operands.push_back(Operand::make_target(base, r.label));
      j.line = ins.line;
      j.raw_text = j.text();
      ins = j;
    }
  }
  r.image.functions.push_back(std::move(tramp));
  return r;
}

}  // namespace basics
