#include "basics/frontend.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <deque>
#include <unordered_map>

#include "basics/error.hpp"

namespace basics {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool is_hex_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isxdigit(c); });
}

bool is_ident(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '.' || c == '@' || c == '$' || c == '+' || c == '-';
  });
}

std::optional<std::uint64_t> parse_hex(std::string_view s) {
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) s.remove_prefix(2);
  if (!is_hex_digits(s)) return std::nullopt;
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// 0x-prefixed values are hex, bare digit strings are decimal.
std::optional<std::int64_t> parse_number(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    auto h = parse_hex(s);
    if (!h) return std::nullopt;
    v = *h;
  } else {
    auto res = std::from_chars(s.data(), s.data() + s.size(), v, 10);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  }
  auto sv = static_cast<std::int64_t>(v);
  return neg ? -sv : sv;
}

std::optional<Cond> parse_cond(std::string_view cc) {
  static const std::unordered_map<std::string, Cond> table = {
      {"o", Cond::O},   {"no", Cond::NO},  {"b", Cond::B},    {"c", Cond::B},   {"nae", Cond::B},
      {"ae", Cond::AE}, {"nb", Cond::AE},  {"nc", Cond::AE},  {"e", Cond::E},   {"z", Cond::E},
      {"ne", Cond::NE}, {"nz", Cond::NE},  {"be", Cond::BE},  {"na", Cond::BE}, {"a", Cond::A},
      {"nbe", Cond::A}, {"s", Cond::S},    {"ns", Cond::NS},  {"p", Cond::P},   {"pe", Cond::P},
      {"np", Cond::NP}, {"po", Cond::NP},  {"l", Cond::L},    {"nge", Cond::L}, {"ge", Cond::GE},
      {"nl", Cond::GE}, {"le", Cond::LE},  {"ng", Cond::LE},  {"g", Cond::G},   {"nle", Cond::G},
  };
  auto it = table.find(std::string(cc));
  if (it == table.end()) return std::nullopt;
  return it->second;
}

struct MnemonicInfo {
  Mnemonic mnemonic = Mnemonic::Unknown;
  Cond cond = Cond::None;
  int min_ops = 0;
  int max_ops = 0;
};

std::optional<MnemonicInfo> lookup_mnemonic(const std::string& m) {
  static const std::unordered_map<std::string, MnemonicInfo> table = {
      {"endbr64", {Mnemonic::Endbr64, Cond::None, 0, 0}},
      {"push", {Mnemonic::Push, Cond::None, 1, 1}},     {"pushq", {Mnemonic::Push, Cond::None, 1, 1}},
      {"pop", {Mnemonic::Pop, Cond::None, 1, 1}},       {"popq", {Mnemonic::Pop, Cond::None, 1, 1}},
      {"mov", {Mnemonic::Mov, Cond::None, 2, 2}},       {"movabs", {Mnemonic::Mov, Cond::None, 2, 2}},
      {"movzx", {Mnemonic::Movzx, Cond::None, 2, 2}},   {"movsx", {Mnemonic::Movsx, Cond::None, 2, 2}},
      {"movsxd", {Mnemonic::Movsxd, Cond::None, 2, 2}}, {"cdqe", {Mnemonic::Cdqe, Cond::None, 0, 0}},
      {"cltq", {Mnemonic::Cdqe, Cond::None, 0, 0}},     {"cdq", {Mnemonic::Cdq, Cond::None, 0, 0}},
      {"cltd", {Mnemonic::Cdq, Cond::None, 0, 0}},      {"xchg", {Mnemonic::Xchg, Cond::None, 2, 2}},
      {"lea", {Mnemonic::Lea, Cond::None, 2, 2}},       {"sub", {Mnemonic::Sub, Cond::None, 2, 2}},
      {"add", {Mnemonic::Add, Cond::None, 2, 2}},       {"inc", {Mnemonic::Inc, Cond::None, 1, 1}},
      {"dec", {Mnemonic::Dec, Cond::None, 1, 1}},       {"neg", {Mnemonic::Neg, Cond::None, 1, 1}},
      {"not", {Mnemonic::Not, Cond::None, 1, 1}},       {"imul", {Mnemonic::Imul, Cond::None, 1, 3}},
      {"and", {Mnemonic::And, Cond::None, 2, 2}},       {"or", {Mnemonic::Or, Cond::None, 2, 2}},
      {"xor", {Mnemonic::Xor, Cond::None, 2, 2}},       {"shl", {Mnemonic::Shl, Cond::None, 1, 2}},
      {"sal", {Mnemonic::Shl, Cond::None, 1, 2}},       {"shr", {Mnemonic::Shr, Cond::None, 1, 2}},
      {"sar", {Mnemonic::Sar, Cond::None, 1, 2}},       {"cmp", {Mnemonic::Cmp, Cond::None, 2, 2}},
      {"test", {Mnemonic::Test, Cond::None, 2, 2}},     {"call", {Mnemonic::Call, Cond::None, 1, 1}},
      {"callq", {Mnemonic::Call, Cond::None, 1, 1}},    {"ret", {Mnemonic::Ret, Cond::None, 0, 1}},
      {"retq", {Mnemonic::Ret, Cond::None, 0, 1}},      {"leave", {Mnemonic::Leave, Cond::None, 0, 0}},
      {"leaveq", {Mnemonic::Leave, Cond::None, 0, 0}},  {"jmp", {Mnemonic::Jmp, Cond::None, 1, 1}},
      {"jmpq", {Mnemonic::Jmp, Cond::None, 1, 1}},      {"nop", {Mnemonic::Nop, Cond::None, 0, 1}},
      {"nopw", {Mnemonic::Nop, Cond::None, 0, 1}},      {"nopl", {Mnemonic::Nop, Cond::None, 0, 1}},
      {"hlt", {Mnemonic::Hlt, Cond::None, 0, 0}},
  };
  if (auto it = table.find(m); it != table.end()) return it->second;
  if (m.size() > 1 && m[0] == 'j') {
    if (auto c = parse_cond(std::string_view(m).substr(1))) return MnemonicInfo{Mnemonic::Jcc, *c, 1, 1};
  }
  if (m.rfind("cmov", 0) == 0) {
    if (auto c = parse_cond(std::string_view(m).substr(4))) return MnemonicInfo{Mnemonic::Cmovcc, *c, 2, 2};
  }
  if (m.rfind("set", 0) == 0) {
    if (auto c = parse_cond(std::string_view(m).substr(3))) return MnemonicInfo{Mnemonic::Setcc, *c, 1, 1};
  }
  return std::nullopt;
}

std::vector<std::string> split_operands(std::string_view s) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : s) {
    if (c == '[' || c == '(' || c == '<') ++depth;
    if (c == ']' || c == ')' || c == '>') --depth;
    if (c == ',' && depth == 0) {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.emplace_back(trim(cur));
  return out;
}

class LineParser {
 public:
  LineParser(std::size_t line, std::optional<Address> rip_resolved)
      : line_(line), rip_resolved_(rip_resolved) {}

  [[noreturn]] void fail(const std::string& msg, std::size_t col = 1) const {
    throw LocatedError(ErrorKind::MalformedLine, line_, col, msg);
  }

  MemoryRef parse_memory_body(std::string_view body, std::string_view whole) const {
    MemoryRef m;
    std::string term;
    char sign = '+';
    auto flush = [&](char next_sign) {
      auto t = trim(term);
      if (t.empty()) {
        if (sign == '-') fail("dangling '-' in memory operand '" + std::string(whole) + "'");
        sign = next_sign;
        term.clear();
        return;
      }
      auto star = t.find('*');
      if (star != std::string_view::npos) {
        auto r = parse_register(trim(t.substr(0, star)));
        auto sc = parse_number(trim(t.substr(star + 1)));
        if (!r || !sc || sign == '-' || !(*sc == 1 || *sc == 2 || *sc == 4 || *sc == 8))
          fail("bad index term in '" + std::string(whole) + "'");
        if (m.index) fail("two index registers in '" + std::string(whole) + "'");
        m.index = *r;
        m.scale = static_cast<std::uint8_t>(*sc);
      } else if (auto r = parse_register(t)) {
        if (sign == '-') fail("negated register in '" + std::string(whole) + "'");
        if (!m.base) {
          m.base = *r;
        } else if (!m.index) {
          m.index = *r;
          m.scale = 1;
        } else {
          fail("too many registers in '" + std::string(whole) + "'");
        }
      } else if (auto n = parse_number(t)) {
        m.displacement += sign == '-' ? -*n : *n;
      } else {
        fail("bad term '" + std::string(t) + "' in memory operand");
      }
      sign = next_sign;
      term.clear();
    };
    for (char c : body) {
      if (c == '+' || c == '-') {
        flush(c);
      } else {
        term += c;
      }
    }
    flush('+');
    return m;
  }

  Operand parse_operand(std::string_view text) const {
    auto s = trim(text);
    if (s.empty()) fail("empty operand");
    std::uint8_t size = 0;
    std::string low = lower(s);
    static const std::pair<const char*, std::uint8_t> sizes[] = {
        {"byte ptr", 1}, {"word ptr", 2}, {"dword ptr", 4}, {"qword ptr", 8}, {"xmmword ptr", 16}, {"tbyte ptr", 10}};
    for (auto [kw, sz] : sizes) {
      std::string_view k(kw);
      if (low.rfind(k, 0) == 0) {
        size = sz;
        s = trim(s.substr(k.size()));
        low = lower(s);
        break;
      }
    }
    bool fs = false;
    bool segment = false;
    if (low.size() > 3 && low[2] == ':' &&
        (low.rfind("fs", 0) == 0 || low.rfind("gs", 0) == 0 || low.rfind("cs", 0) == 0 ||
         low.rfind("ds", 0) == 0 || low.rfind("ss", 0) == 0 || low.rfind("es", 0) == 0)) {
      fs = low[0] == 'f';
      segment = true;
      s = trim(s.substr(3));
    }
    if (!s.empty() && s.front() == '[') {
      if (s.back() != ']') fail("unterminated memory operand '" + std::string(text) + "'");
      MemoryRef m = parse_memory_body(s.substr(1, s.size() - 2), text);
      m.size = size;
      m.fs_segment = fs;
      if (m.base && m.base->reg == Gpr::rip && rip_resolved_ && !m.index) {
        m.base.reset();
        m.displacement = static_cast<std::int64_t>(*rip_resolved_);
      }
      return Operand::make_mem(m);
    }
    if (segment || size != 0) {
      auto n = parse_number(s);
      if (!n) fail("bad absolute memory operand '" + std::string(text) + "'");
      MemoryRef m;
      m.displacement = *n;
      m.size = size;
      m.fs_segment = fs;
      return Operand::make_mem(m);
    }
    if (auto r = parse_register(s)) return Operand::make_reg(*r);
    if (auto n = parse_number(s)) return Operand::make_imm(*n);
    fail("unrecognized operand '" + std::string(text) + "'");
  }

  // Branch and call targets: `401030 <strcpy@plt>`, `0x401030`, `<sym>`, `sym`,
  // or a register / memory operand for indirect transfers.
  Operand parse_target(std::string_view text) const {
    auto s = trim(text);
    std::optional<std::string> symbol;
    auto lt = s.find('<');
    if (lt != std::string_view::npos) {
      auto gt = s.find('>', lt);
      if (gt == std::string_view::npos) fail("unterminated symbol in '" + std::string(text) + "'");
      symbol = std::string(trim(s.substr(lt + 1, gt - lt - 1)));
      if (!trim(s.substr(gt + 1)).empty()) fail("trailing text after symbol in '" + std::string(text) + "'");
      s = trim(s.substr(0, lt));
    }
    if (s.empty()) {
      if (!symbol) fail("empty branch target");
      return Operand::make_target(0, symbol);
    }
    if (!symbol) {
      std::string low = lower(s);
      if (low.find('[') != std::string::npos || low.find("ptr") != std::string::npos || parse_register(s))
        return parse_operand(s);
    }
    if (auto h = parse_hex(s)) return Operand::make_target(*h, symbol);
    if (!symbol && is_ident(s)) return Operand::make_target(0, std::string(s));
    fail("bad branch target '" + std::string(text) + "'");
  }

  SafeCall parse_safecall(std::string_view text) const {
    auto s = trim(text);
    auto lp = s.find('(');
    if (lp == std::string_view::npos || s.back() != ')') fail("safecall needs name(args, bound, term)");
    SafeCall sc;
    sc.replacement = std::string(trim(s.substr(0, lp)));
    auto parts = split_operands(s.substr(lp + 1, s.size() - lp - 2));
    if (parts.size() < 2 || sc.replacement.empty()) fail("safecall needs at least a bound and terminator");
    for (std::size_t i = 0; i + 2 < parts.size(); ++i) {
      auto r = parse_register(parts[i]);
      if (!r) fail("safecall argument '" + parts[i] + "' is not a register");
      sc.args.push_back(*r);
    }
    const auto& bound = parts[parts.size() - 2];
    if (bound == "runtime") {
      sc.bound.reset();
    } else if (auto n = parse_number(bound); n && *n >= 0) {
      sc.bound = static_cast<std::uint64_t>(*n);
    } else {
      fail("bad safecall bound '" + bound + "'");
    }
    const auto& term = parts.back();
    if (term == "nul") {
      sc.terminate = true;
    } else if (term == "raw") {
      sc.terminate = false;
    } else {
      fail("bad safecall terminator '" + term + "'");
    }
    return sc;
  }

 private:
  std::size_t line_;
  std::optional<Address> rip_resolved_;
};

std::vector<std::uint8_t> parse_string_literal(std::string_view s, const LineParser& lp) {
  s = trim(s);
  if (s.size() < 2 || s.front() != '"' || s.back() != '"') lp.fail("expected quoted string");
  std::vector<std::uint8_t> out;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    char c = s[i];
    if (c != '\\') {
      out.push_back(static_cast<std::uint8_t>(c));
      continue;
    }
    if (++i + 1 > s.size() - 1) lp.fail("dangling escape");
    char e = s[i];
    switch (e) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      case '\\': out.push_back('\\'); break;
      case '"': out.push_back('"'); break;
      case 'x': {
        std::size_t j = i + 1;
        unsigned v = 0;
        int digits = 0;
        while (j < s.size() - 1 && digits < 2 && std::isxdigit(static_cast<unsigned char>(s[j]))) {
          v = v * 16 + static_cast<unsigned>(std::stoi(std::string(1, s[j]), nullptr, 16));
          ++j;
          ++digits;
        }
        if (digits == 0) lp.fail("bad \\x escape");
        out.push_back(static_cast<std::uint8_t>(v));
        i = j - 1;
        break;
      }
      default:
        if (e >= '0' && e <= '7') {
          unsigned v = 0;
          std::size_t j = i;
          int digits = 0;
          while (j < s.size() - 1 && digits < 3 && s[j] >= '0' && s[j] <= '7') {
            v = v * 8 + static_cast<unsigned>(s[j] - '0');
            ++j;
            ++digits;
          }
          out.push_back(static_cast<std::uint8_t>(v));
          i = j - 1;
        } else {
          lp.fail(std::string("unknown escape \\") + e);
        }
    }
  }
  return out;
}

// Splits a comment off a line; `#` inside double quotes does not start one.
std::pair<std::string_view, std::string_view> split_comment(std::string_view line) {
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (c == '\\' && in_quotes) {
      ++i;
      continue;
    }
    if (c == '"') in_quotes = !in_quotes;
    if (c == '#' && !in_quotes) return {line.substr(0, i), line.substr(i + 1)};
  }
  return {line, {}};
}

}  // namespace

const char* to_string(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::Fallthrough: return "fallthrough";
    case EdgeKind::Taken: return "taken";
    case EdgeKind::Call: return "call";
    case EdgeKind::CallReturn: return "call-return";
  }
  return "?";
}

ProgramImage parse_disassembly(std::string_view text) {
  ProgramImage image;
  Function* current = nullptr;
  bool current_is_data = false;
  std::string data_section;
  std::size_t line_no = 0;
  std::size_t pos = 0;

  auto open_function = [&](const std::string& name, std::optional<Address> entry) {
    if (!name.empty() && name.front() == '.') {
      current = nullptr;
      current_is_data = true;
      data_section = name;
      return;
    }
    current_is_data = false;
    image.functions.push_back(Function{name, entry.value_or(0), {}});
    current = &image.functions.back();
    if (!entry) current->entry = 0;
  };
  std::vector<bool> entry_from_header;

  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    auto [code_part, comment] = split_comment(raw);
    auto line = trim(code_part);
    if (line.empty()) continue;
    if (line.rfind("Disassembly of section", 0) == 0 || line.find("file format") != std::string_view::npos)
      continue;

    // Headers: `name:`, `<name>:`, `0000000000401136 <name>:`
    if (line.back() == ':') {
      auto head = trim(line.substr(0, line.size() - 1));
      std::optional<Address> addr;
      auto sp = head.find_first_of(" \t");
      if (sp != std::string_view::npos) {
        auto a = parse_hex(trim(head.substr(0, sp)));
        if (!a) throw LocatedError(ErrorKind::MalformedLine, line_no, 1, "bad header address");
        addr = *a;
        head = trim(head.substr(sp));
      }
      if (head.size() >= 2 && head.front() == '<' && head.back() == '>') head = head.substr(1, head.size() - 2);
      if (!is_ident(head) || (!addr && is_hex_digits(head) && head.size() > 8))
        throw LocatedError(ErrorKind::MalformedLine, line_no, 1, "bad function header");
      open_function(std::string(head), addr);
      entry_from_header.push_back(addr.has_value());
      continue;
    }

    auto colon = line.find(':');
    if (colon == std::string_view::npos)
      throw LocatedError(ErrorKind::MalformedLine, line_no, 1, "expected 'address: instruction'");
    auto addr = parse_hex(trim(line.substr(0, colon)));
    if (!addr) throw LocatedError(ErrorKind::MalformedLine, line_no, 1, "bad instruction address");
    auto body = trim(line.substr(colon + 1));
    if (body.empty()) throw LocatedError(ErrorKind::MalformedLine, line_no, colon + 2, "missing mnemonic");

    std::optional<Address> rip_resolved;
    {
      auto c = trim(comment);
      auto sp = c.find_first_of(" \t<");
      auto first = c.substr(0, sp);
      if (auto h = parse_hex(first)) rip_resolved = *h;
    }
    LineParser lp(line_no, rip_resolved);

    auto mn_end = body.find_first_of(" \t");
    std::string mn = lower(body.substr(0, mn_end));
    std::string_view rest = mn_end == std::string_view::npos ? std::string_view{} : trim(body.substr(mn_end));
    // Branch-hint and CET prefixes carry no stack semantics.
    while ((mn == "bnd" || mn == "notrack" || mn == "lock" || mn == "data16") && !rest.empty()) {
      auto e = rest.find_first_of(" \t");
      mn = lower(rest.substr(0, e));
      rest = e == std::string_view::npos ? std::string_view{} : trim(rest.substr(e));
    }

    if (!mn.empty() && mn.front() == '.') {
      DataObject d;
      d.section = current_is_data ? data_section : (current ? current->name : std::string(".data"));
      d.address = *addr;
      d.raw_text = std::string(line);
      if (mn == ".string" || mn == ".asciz") {
        d.bytes = parse_string_literal(rest, lp);
        d.bytes.push_back(0);
      } else if (mn == ".ascii") {
        d.bytes = parse_string_literal(rest, lp);
      } else if (mn == ".byte") {
        for (const auto& part : split_operands(rest)) {
          auto n = parse_number(part);
          if (!n || *n < -128 || *n > 255) lp.fail("bad .byte value '" + part + "'");
          d.bytes.push_back(static_cast<std::uint8_t>(*n));
        }
      } else if (mn == ".zero") {
        auto n = parse_number(rest);
        if (!n || *n < 0 || *n > (1 << 20)) lp.fail("bad .zero count");
        d.bytes.assign(static_cast<std::size_t>(*n), 0);
      } else {
        lp.fail("unknown data directive '" + mn + "'");
      }
      image.data.push_back(std::move(d));
      continue;
    }
    if (current_is_data) lp.fail("instruction inside data section '" + data_section + "'");

    if (!current) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "sub_%llx", static_cast<unsigned long long>(*addr));
      open_function(buf, *addr);
      entry_from_header.push_back(true);
    }
    if (!current->instructions.empty() && current->instructions.back().address >= *addr)
      lp.fail("addresses must increase within a function");

    Instruction ins;
    ins.address = *addr;
    ins.line = line_no;
    ins.raw_text = std::string(line);
    ins.mnemonic_text = mn;

    if (mn == "safecall") {
      ins.mnemonic = Mnemonic::Safecall;
      ins.safecall = lp.parse_safecall(rest);
    } else if (auto info = lookup_mnemonic(mn)) {
      ins.mnemonic = info->mnemonic;
      ins.cond = info->cond;
      auto parts = rest.empty() ? std::vector<std::string>{} : split_operands(rest);
      bool is_transfer = info->mnemonic == Mnemonic::Call || info->mnemonic == Mnemonic::Jmp ||
                         info->mnemonic == Mnemonic::Jcc;
      if (info->mnemonic == Mnemonic::Nop) parts.clear();  // nop operands are padding encodings
      if (static_cast<int>(parts.size()) < info->min_ops || static_cast<int>(parts.size()) > info->max_ops)
        lp.fail("'" + mn + "' expects " + std::to_string(info->min_ops) +
                    (info->max_ops != info->min_ops ? ".." + std::to_string(info->max_ops) : std::string()) +
                    " operand(s), got " + std::to_string(parts.size()),
                mn_end == std::string_view::npos ? 1 : colon + 2);
      for (const auto& p : parts) ins.operands.push_back(is_transfer ? lp.parse_target(p) : lp.parse_operand(p));
    } else {
      ins.mnemonic = Mnemonic::Unknown;
      image.warnings.push_back({line_no, "UnknownMnemonic: '" + mn + "' kept as a no-effect instruction"});
    }
    if (current->instructions.empty() && !entry_from_header.back()) current->entry = ins.address;
    current->instructions.push_back(std::move(ins));
  }
  return image;
}

// ---------------------------------------------------------------------------
// BCfg

const BasicBlock* BCfg::block_at(Address start) const {
  auto it = blocks.find(start);
  return it == blocks.end() ? nullptr : &it->second;
}

const BasicBlock* BCfg::block_containing(Address addr) const {
  auto it = blocks.upper_bound(addr);
  if (it == blocks.begin()) return nullptr;
  --it;
  const auto& b = it->second;
  if (b.instructions.empty()) return b.start == addr ? &b : nullptr;
  if (addr <= b.instructions.back().address) return &b;
  return nullptr;
}

std::vector<Address> BCfg::predecessors(Address block_start) const {
  std::vector<Address> out;
  for (const auto& [start, b] : blocks)
    for (const auto& e : b.successors)
      if (e.target == block_start) {
        out.push_back(start);
        break;
      }
  return out;
}

std::set<Address> BCfg::reachable_instructions(Address from) const {
  std::set<Address> out;
  const BasicBlock* first = block_containing(from);
  if (!first) return out;
  std::set<Address> seen{first->start};
  std::deque<const BasicBlock*> work{first};
  while (!work.empty()) {
    const BasicBlock* b = work.front();
    work.pop_front();
    for (const auto& ins : b->instructions)
      if (b != first || ins.address >= from) out.insert(ins.address);
    for (const auto& e : b->successors) {
      if (seen.insert(e.target).second) {
        if (const BasicBlock* n = block_at(e.target)) work.push_back(n);
      }
    }
  }
  return out;
}

std::size_t BCfg::edge_count() const {
  std::size_t n = 0;
  for (const auto& [_, b] : blocks) n += b.successors.size();
  return n;
}

BCfg build_bcfg(const ProgramImage& image) {
  BCfg cfg;
  std::unordered_map<Address, const Function*> owner;
  std::set<Address> function_entries;
  std::set<std::string> image_symbols;
  for (const auto& f : image.functions) {
    image_symbols.insert(f.name);
    if (f.instructions.empty()) continue;
    function_entries.insert(f.instructions.front().address);
    for (const auto& ins : f.instructions) owner[ins.address] = &f;
  }
  auto in_image = [&](Address a) { return owner.count(a) != 0; };

  std::set<Address> leaders = function_entries;
  for (const auto& f : image.functions) {
    for (std::size_t i = 0; i < f.instructions.size(); ++i) {
      const auto& ins = f.instructions[i];
      if (ins.is_branch()) {
        if (auto t = ins.direct_target(); t && in_image(*t)) leaders.insert(*t);
      }
      if (ins.ends_block() && i + 1 < f.instructions.size()) leaders.insert(f.instructions[i + 1].address);
    }
  }

  auto warn_sink = [&](Address site, Address target, const std::string& reason) {
    cfg.external_sinks.push_back({site, target, reason});
  };

  for (const auto& f : image.functions) {
    if (f.instructions.empty()) continue;
    std::size_t i = 0;
    while (i < f.instructions.size()) {
      BasicBlock b;
      b.start = f.instructions[i].address;
      b.function = f.name;
      std::size_t j = i;
      do {
        b.instructions.push_back(f.instructions[j]);
        ++j;
      } while (j < f.instructions.size() && !leaders.count(f.instructions[j].address) &&
               !b.instructions.back().ends_block());
      const Instruction& last = b.instructions.back();
      std::optional<Address> next;
      if (j < f.instructions.size()) next = f.instructions[j].address;

      auto symbol_known = [&](const Instruction& ins) {
        auto sym = ins.target_symbol();
        return sym.has_value() && !sym->empty();
      };

      switch (last.mnemonic) {
        case Mnemonic::Jmp:
        case Mnemonic::Jcc: {
          auto t = last.direct_target();
          if (t && in_image(*t)) {
            b.successors.push_back({EdgeKind::Taken, *t});
          } else if (!last.operands.empty() && last.operands[0].kind != OperandKind::CallTarget) {
            warn_sink(last.address, 0, "indirect jump");
            cfg.warnings.push_back("indirect jump at " + std::to_string(last.address) + " treated as external sink");
          } else if (symbol_known(last)) {
            warn_sink(last.address, t.value_or(0), "jump to external symbol " + *last.target_symbol());
          } else {
            warn_sink(last.address, t.value_or(0), "DanglingBranch");
            cfg.warnings.push_back("DanglingBranch: jump target outside image at line " + std::to_string(last.line));
          }
          if (last.mnemonic == Mnemonic::Jcc) {
            if (next) {
              b.successors.push_back({EdgeKind::Fallthrough, *next});
            } else {
              warn_sink(last.address, 0, "conditional branch falls off function end");
            }
          }
          break;
        }
        case Mnemonic::Call: {
          auto t = last.direct_target();
          bool library = false;
          if (auto sym = last.target_symbol()) library = sym->find("@plt") != std::string::npos;
          if (t && in_image(*t)) {
            const Function* callee = owner[*t];
            if (callee->is_library()) library = true;
            if (!library) b.successors.push_back({EdgeKind::Call, *t});
          } else if (!last.operands.empty() && last.operands[0].kind != OperandKind::CallTarget) {
            warn_sink(last.address, 0, "indirect call");
            cfg.warnings.push_back("indirect call at line " + std::to_string(last.line) + " treated as opaque");
          } else if (symbol_known(last)) {
            auto name = *last.target_symbol();
            if (!library && image_symbols.count(name)) {
              const Function* callee = image.find_function(name);
              if (callee && !callee->instructions.empty())
                b.successors.push_back({EdgeKind::Call, callee->instructions.front().address});
            }
          } else {
            warn_sink(last.address, t.value_or(0), "DanglingBranch");
            cfg.warnings.push_back("DanglingBranch: call target outside image at line " + std::to_string(last.line));
          }
          if (next) {
            b.successors.push_back({EdgeKind::CallReturn, *next});
          } else {
            BasicBlock cont;
            cont.start = last.address + 1;
            cont.function = f.name;
            cont.synthetic = true;
            b.successors.push_back({EdgeKind::CallReturn, cont.start});
            cfg.blocks.emplace(cont.start, std::move(cont));
          }
          break;
        }
        case Mnemonic::Ret:
        case Mnemonic::Hlt:
          break;
        default:
          if (next) b.successors.push_back({EdgeKind::Fallthrough, *next});
          break;
      }
      cfg.blocks.emplace(b.start, std::move(b));
      i = j;
    }
  }

  if (auto entry = image.entry_function()) {
    if (const Function* f = image.find_function(*entry); f && !f->instructions.empty())
      cfg.entry = f->instructions.front().address;
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// FunctionMap

std::optional<std::string> FunctionMap::name_at(Address entry) const {
  auto it = by_address.find(entry);
  if (it == by_address.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> FunctionMap::function_containing(const ProgramImage& image, Address addr) const {
  const Function* f = image.function_containing(addr);
  if (!f || !is_user(f->name)) return std::nullopt;
  return f->name;
}

FunctionMap extract_user_functions(const BCfg& bcfg, const ProgramImage& image) {
  FunctionMap map;
  std::set<std::string> seen;
  for (const auto& f : image.functions) {
    if (!seen.insert(f.name).second) throw Error(ErrorKind::DuplicateFunction, "function '" + f.name + "' defined twice");
    Address entry = f.instructions.empty() ? f.entry : f.instructions.front().address;
    if (f.is_library()) {
      map.library[strip_symbol_decoration(f.name)] = entry;
    } else {
      map.user[f.name] = entry;
    }
    map.by_address[entry] = f.name;
  }
  for (const auto& [_, b] : bcfg.blocks) {
    for (const auto& ins : b.instructions) {
      if (!ins.is_call()) continue;
      auto sym = ins.target_symbol();
      if (!sym || sym->empty()) continue;
      bool plt = sym->find("@plt") != std::string::npos;
      if (!plt && map.user.count(*sym)) continue;
      auto name = strip_symbol_decoration(*sym);
      if (map.user.count(name) && !plt) continue;
      map.library.emplace(name, ins.direct_target().value_or(0));
    }
  }
  return map;
}

}  // namespace basics
