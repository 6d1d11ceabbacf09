#include "support.hpp"

#include <algorithm>

#include "json.hpp"

namespace testing_support {

using basics::ByteState;
using basics::LabelKind;
using basics::MemoryState;
using basics::StackFrame;

namespace {

constexpr ByteState C = ByteState::Critical, O = ByteState::Occupied, M = ByteState::Modified;

std::optional<ByteState> at(const StackFrame& f, std::int64_t i) {
  if (i < 0 || i >= f.size()) return std::nullopt;
  return f.bytes[static_cast<std::size_t>(i)];
}

bool after_libc_or_loop(const MemoryState& m) {
  return m.incoming.kind == LabelKind::Call || m.incoming.kind == LabelKind::Loop;
}

}  // namespace

std::vector<CorpusCase> corpus_manifest() {
  auto doc = nlohmann::json::parse(basics::read_file((corpus_dir() / "manifest.json").string()));
  std::vector<CorpusCase> out;
  for (const auto& c : doc.at("cases")) {
    CorpusCase k;
    k.name = c.at("name");
    k.file = c.at("file");
    k.vulnerable = c.at("vulnerable");
    k.category = c.at("category");
    k.violated = c.at("violated").get<std::vector<std::string>>();
    k.input_source = c.at("input_source");
    out.push_back(std::move(k));
  }
  return out;
}

Built build(const std::string& text, const std::string& root, basics::Config cfg) {
  Built b;
  b.image = basics::parse_disassembly(text);
  b.bcfg = basics::build_bcfg(b.image);
  b.funcs = basics::extract_user_functions(b.bcfg, b.image);
  b.loops = basics::detect_loops(b.bcfg);
  basics::EffectsOracle effects(b.image, basics::LibcDatabase::bundled(), cfg, root, b.loops.loops);
  b.space = basics::build_memstace(b.bcfg, b.funcs, b.image, b.loops, effects, cfg, root);
  return b;
}

basics::MemoryState random_state(std::mt19937_64& rng) {
  using basics::ByteState;
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<unsigned>(n)); };
  basics::MemoryState m;
  int frames = 1 + pick(3);
  std::int64_t anchor = -8;
  for (int f = 0; f < frames; ++f) {
    basics::StackFrame fr;
    fr.label = "f" + std::to_string(f);
    fr.saved_rbp = true;
    fr.has_canary = pick(2) == 0;
    fr.rbp_anchor = anchor;
    int size = 24 + 8 * pick(6);
    fr.bytes.resize(static_cast<std::size_t>(size));
    for (auto& b : fr.bytes) {
      // Bias toward the interesting states: mostly Critical control data and
      // Free/Occupied locals.
      int r = pick(10);
      b = r < 4 ? ByteState::Critical : r < 6 ? ByteState::Free : r < 8 ? ByteState::Occupied : ByteState::Modified;
    }
    // Up to two disjoint buffers below the control data.
    std::int64_t next = -static_cast<std::int64_t>(fr.has_canary ? 8 : 0);
    int nbuf = pick(3);
    for (int k = 0; k < nbuf; ++k) {
      std::uint64_t sz = 1 + static_cast<std::uint64_t>(pick(8));
      std::int64_t off = next - static_cast<std::int64_t>(sz);
      basics::Buffer buf{off, sz};
      if (buf.end_index() < 16 || buf.start_index() >= size) break;
      fr.buffers.push_back(buf);
      next = off - pick(3);
    }
    std::sort(fr.buffers.begin(), fr.buffers.end());
    anchor = fr.top_address() - 16;
    m.frames.push_back(std::move(fr));
  }
  static const std::vector<std::pair<basics::LabelKind, std::string>> labels = {
      {basics::LabelKind::Call, "gets"},   {basics::LabelKind::Call, "strcpy"}, {basics::LabelKind::Loop, ""},
      {basics::LabelKind::Write, ""},      {basics::LabelKind::Push, ""},       {basics::LabelKind::Fe, ""}};
  const auto& l = labels[static_cast<std::size_t>(pick(static_cast<int>(labels.size())))];
  m.incoming.kind = l.first;
  m.incoming.callee = l.second;
  return m;
}

const std::vector<std::pair<std::string, Oracle>>& property_oracles() {
  static const std::vector<std::pair<std::string, Oracle>> o = {
      {"RIP Integrity",
       [](const MemoryState& m) {
         for (const auto& f : m.frames)
           for (int i = 0; i < 8; ++i)
             if (at(f, i) != C) return false;
         return true;
       }},
      {"RBP Integrity",
       [](const MemoryState& m) {
         for (const auto& f : m.frames)
           for (int i = 8; i < 16; ++i)
             if (at(f, i) != C) return false;
         return true;
       }},
      {"No Off-by-one",
       [](const MemoryState& m) {
         for (const auto& f : m.frames)
           if (at(f, 15) == M && at(f, 14) == C) return false;
         return true;
       }},
      {"Canary Integrity",
       [](const MemoryState& m) {
         for (const auto& f : m.frames)
           if (f.has_canary)
             for (int i = 16; i < 24; ++i)
               if (at(f, i) != C) return false;
         return true;
       }},
      {"No Buffer Underflow by one",
       [](const MemoryState& m) {
         if (!after_libc_or_loop(m)) return true;
         for (const auto& f : m.frames)
           for (const auto& b : f.buffers) {
             auto s = b.start_index();
             auto x = at(f, s), y = at(f, s + 1), z = at(f, s + 2);
             if (x == O && y == O && z && *z != O) return false;
           }
         return true;
       }},
      {"No Buffer Overflow by one",
       [](const MemoryState& m) {
         if (!after_libc_or_loop(m)) return true;
         for (const auto& f : m.frames)
           for (const auto& b : f.buffers)
             if (at(f, b.end_index()) == O && at(f, b.end_index() - 1) == M) return false;
         return true;
       }},
      {"No gets",
       [](const MemoryState& m) { return !(m.incoming.kind == LabelKind::Call && m.incoming.callee == "gets"); }},
  };
  return o;
}

}  // namespace testing_support
