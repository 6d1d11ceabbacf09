#include "basics/memory_model.hpp"

#include <algorithm>

#include "basics/error.hpp"

namespace basics {

const char* to_string(ByteState s) {
  switch (s) {
    case ByteState::Free: return "Free";
    case ByteState::Critical: return "Critical";
    case ByteState::Occupied: return "Occupied";
    case ByteState::Modified: return "Modified";
  }
  return "?";
}

char short_name(ByteState s) {
  switch (s) {
    case ByteState::Free: return 'F';
    case ByteState::Critical: return 'C';
    case ByteState::Occupied: return 'O';
    case ByteState::Modified: return 'M';
  }
  return '?';
}

const char* to_string(ByteOp op) { return op == ByteOp::RWrite ? "RWrite" : "nRWrite"; }

std::optional<ByteState> try_byte_transition(ByteState s, ByteOp op) {
  if (op == ByteOp::RWrite) {
    if (s == ByteState::Free) return ByteState::Critical;
    return std::nullopt;
  }
  switch (s) {
    case ByteState::Free: return ByteState::Occupied;
    case ByteState::Occupied:
    case ByteState::Critical:
    case ByteState::Modified: return ByteState::Modified;
  }
  return std::nullopt;
}

ByteState byte_transition(ByteState s, ByteOp op) {
  auto r = try_byte_transition(s, op);
  if (!r)
    throw Error(ErrorKind::IllegalByteTransition,
                std::string("no transition from ") + to_string(s) + " on " + to_string(op));
  return *r;
}

std::optional<std::int64_t> StackFrame::index_of(std::int64_t address) const {
  std::int64_t i = rbp_anchor + 15 - address;
  if (i < 0 || i >= size()) return std::nullopt;
  return i;
}

const char* to_string(LabelKind kind) {
  switch (kind) {
    case LabelKind::Fa: return "fa";
    case LabelKind::Push: return "push";
    case LabelKind::Pop: return "pop";
    case LabelKind::Write: return "write";
    case LabelKind::Fe: return "fe";
    case LabelKind::Call: return "call";
    case LabelKind::Loop: return "loop";
    case LabelKind::BufferRegister: return "buffer-register";
    case LabelKind::Ret: return "ret";
  }
  return "?";
}

std::string TransitionLabel::name() const {
  if (kind == LabelKind::Call) return "call " + callee;
  return to_string(kind);
}

const StackFrame* MemoryState::frame(std::string_view label) const {
  for (auto it = frames.rbegin(); it != frames.rend(); ++it)
    if (it->label == label) return &*it;
  return nullptr;
}

const char* to_string(MemOpKind kind) {
  switch (kind) {
    case MemOpKind::NoEffect: return "NoEffect";
    case MemOpKind::Fa: return "Fa";
    case MemOpKind::Push: return "Push";
    case MemOpKind::Pop: return "Pop";
    case MemOpKind::Fe: return "Fe";
    case MemOpKind::Write: return "Write";
    case MemOpKind::Register: return "BufferRegister";
    case MemOpKind::Ret: return "Ret";
    case MemOpKind::Indirect: return "Call";
  }
  return "?";
}

StackFrame register_buffer(const StackFrame& f, std::int64_t offset, std::uint64_t size) {
  Buffer b{offset, size};
  if (size == 0 || b.end_index() < 0 || b.start_index() >= f.size())
    throw Error(ErrorKind::WriteOutsideStack, "buffer at offset " + std::to_string(offset) + " size " +
                                                  std::to_string(size) + " lies outside frame " + f.label);
  StackFrame out = f;
  for (const auto& existing : f.buffers) {
    if (existing == b) return out;
    bool disjoint = b.offset + static_cast<std::int64_t>(b.size) <= existing.offset ||
                    existing.offset + static_cast<std::int64_t>(existing.size) <= b.offset;
    if (!disjoint)
      throw Error(ErrorKind::OverlappingBuffer,
                  "buffer (" + std::to_string(offset) + ", " + std::to_string(size) + ") overlaps (" +
                      std::to_string(existing.offset) + ", " + std::to_string(existing.size) + ") in " + f.label);
  }
  out.buffers.push_back(b);
  std::sort(out.buffers.begin(), out.buffers.end());
  return out;
}

AddressMapping map_address_range(const MemoryState& m, std::int64_t address, std::uint64_t len, ByteOp op) {
  AddressMapping out;
  for (std::uint64_t k = 0; k < len; ++k) {
    std::int64_t a = address + static_cast<std::int64_t>(k);
    bool found = false;
    for (std::size_t fi = m.frames.size(); fi-- > 0;) {
      if (auto idx = m.frames[fi].index_of(a)) {
        out.touches.push_back({fi, *idx, op});
        found = true;
        break;
      }
    }
    if (!found) ++out.outside;
  }
  return out;
}

MemoryState apply_memory_operator(const MemoryState& m, const MemOp& op) {
  MemoryState out = m;
  auto top = [&]() -> StackFrame& {
    if (out.frames.empty()) throw Error(ErrorKind::WriteOutsideStack, "no active frame");
    return out.frames.back();
  };
  switch (op.kind) {
    case MemOpKind::NoEffect:
    case MemOpKind::Indirect:
      break;
    case MemOpKind::Fa: {
      StackFrame f;
      f.label = op.function;
      f.rbp_anchor = out.frames.empty() ? -8 : out.frames.back().top_address() - 16;
      f.bytes.assign(8, ByteState::Critical);
      out.frames.push_back(std::move(f));
      break;
    }
    case MemOpKind::Push: {
      auto& f = top();
      ByteState s = byte_transition(ByteState::Free, op.byte_op);
      f.bytes.insert(f.bytes.end(), 8, s);
      if (op.marks_saved_rbp) f.saved_rbp = true;
      break;
    }
    case MemOpKind::Pop: {
      auto& f = top();
      if (op.amount > f.bytes.size())
        throw Error(ErrorKind::PopUnderflow, "pop of " + std::to_string(op.amount) + " bytes from " +
                                                 std::to_string(f.bytes.size()) + "-byte frame " + f.label);
      f.bytes.resize(f.bytes.size() - op.amount);
      auto sz = f.size();
      f.buffers.erase(std::remove_if(f.buffers.begin(), f.buffers.end(),
                                     [&](const Buffer& b) { return b.start_index() >= sz; }),
                      f.buffers.end());
      break;
    }
    case MemOpKind::Fe: {
      auto& f = top();
      f.bytes.insert(f.bytes.end(), op.amount, ByteState::Free);
      break;
    }
    case MemOpKind::Write: {
      for (const auto& t : op.touches) {
        if (t.frame >= out.frames.size() || t.index < 0 || t.index >= out.frames[t.frame].size())
          throw Error(ErrorKind::WriteOutsideStack,
                      "write to index " + std::to_string(t.index) + " outside frame " + std::to_string(t.frame));
        auto& b = out.frames[t.frame].bytes[static_cast<std::size_t>(t.index)];
        b = byte_transition(b, t.op);
      }
      if (op.sets_canary && !op.touches.empty()) out.frames[op.touches.front().frame].has_canary = true;
      break;
    }
    case MemOpKind::Register: {
      if (op.frame >= out.frames.size()) throw Error(ErrorKind::WriteOutsideStack, "register into missing frame");
      out.frames[op.frame] = register_buffer(out.frames[op.frame], op.buffer.offset, op.buffer.size);
      break;
    }
    case MemOpKind::Ret: {
      if (out.frames.empty()) throw Error(ErrorKind::PopUnderflow, "return with no frame");
      out.frames.pop_back();
      break;
    }
  }
  return out;
}

std::string render_frame(const StackFrame& f) {
  std::string out;
  std::size_t i = 0;
  while (i < f.bytes.size()) {
    std::size_t j = i;
    while (j + 1 < f.bytes.size() && f.bytes[j + 1] == f.bytes[i]) ++j;
    if (!out.empty()) out += ' ';
    out += std::to_string(i);
    if (j != i) out += ".." + std::to_string(j);
    out += ':';
    out += short_name(f.bytes[i]);
    i = j + 1;
  }
  return out;
}

std::string state_key(const MemoryState& m) {
  std::string key;
  key.reserve(64);
  for (const auto& f : m.frames) {
    key += f.label;
    key += '|';
    key += std::to_string(f.rbp_anchor);
    key += f.has_canary ? "|c" : "|-";
    key += f.saved_rbp ? "r|" : "-|";
    for (auto b : f.bytes) key += short_name(b);
    for (const auto& b : f.buffers) key += "|" + std::to_string(b.offset) + ":" + std::to_string(b.size);
    key += ';';
  }
  key += '#';
  key += to_string(m.incoming.kind);
  if (m.incoming.kind == LabelKind::Call) key += " " + m.incoming.callee;
  return key;
}

}  // namespace basics
