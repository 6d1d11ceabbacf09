#include "basics/ltl.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "basics/bundled.hpp"
#include "basics/error.hpp"

namespace basics {

const char* to_string(Tri t) {
  switch (t) {
    case Tri::False: return "false";
    case Tri::Unknown: return "unknown";
    case Tri::True: return "true";
  }
  return "?";
}

Tri tri_not(Tri a) {
  if (a == Tri::True) return Tri::False;
  if (a == Tri::False) return Tri::True;
  return Tri::Unknown;
}

Tri tri_and(Tri a, Tri b) { return static_cast<Tri>(std::min(static_cast<int>(a), static_cast<int>(b))); }
Tri tri_or(Tri a, Tri b) { return static_cast<Tri>(std::max(static_cast<int>(a), static_cast<int>(b))); }

std::string IndexExpr::str() const {
  std::string s;
  switch (kind) {
    case Kind::Const: return std::to_string(offset);
    case Kind::Var: s = var; break;
    case Kind::Start: s = "start(" + var + ")"; break;
    case Kind::End: s = "end(" + var + ")"; break;
  }
  if (offset > 0) s += " + " + std::to_string(offset);
  if (offset < 0) s += " - " + std::to_string(-offset);
  return s;
}

std::string FrameRef::str() const { return index ? "#" + std::to_string(*index) : var; }

FormulaPtr make_formula(Formula f) { return std::make_shared<const Formula>(std::move(f)); }

namespace {

const char* state_word(ByteState s) { return to_string(s); }

std::string join_labels(const std::vector<std::string>& labels) {
  if (labels.size() == 1) return labels[0];
  std::string s = "{";
  for (std::size_t i = 0; i < labels.size(); ++i) s += (i ? ", " : "") + labels[i];
  return s + "}";
}

}  // namespace

std::string Formula::str() const {
  auto c = [&](std::size_t i) { return children[i]->str(); };
  switch (kind) {
    case Kind::True: return "true";
    case Kind::False: return "false";
    case Kind::Not: return "!(" + c(0) + ")";
    case Kind::And: return "(" + c(0) + " & " + c(1) + ")";
    case Kind::Or: return "(" + c(0) + " | " + c(1) + ")";
    case Kind::Implies: return "(" + c(0) + " => " + c(1) + ")";
    case Kind::Always: return "G (" + c(0) + ")";
    case Kind::Eventually: return "F (" + c(0) + ")";
    case Kind::Next: return "X (" + c(0) + ")";
    case Kind::Until: return "(" + c(0) + " U " + c(1) + ")";
    case Kind::ForallStack: return "(forall_stack " + var + " . " + c(0) + ")";
    case Kind::ExistsStack: return "(exists_stack " + var + " . " + c(0) + ")";
    case Kind::ForallBuffer: return "(forall_buffer " + var + " in " + frame.str() + " . " + c(0) + ")";
    case Kind::ExistsBuffer: return "(exists_buffer " + var + " in " + frame.str() + " . " + c(0) + ")";
    case Kind::AllRange:
      return "(all " + var + " in " + std::to_string(lo) + ".." + std::to_string(hi) + " : " + c(0) + ")";
    case Kind::AnyRange:
      return "(any " + var + " in " + std::to_string(lo) + ".." + std::to_string(hi) + " : " + c(0) + ")";
    case Kind::ByteIs: return "byte(" + index.str() + ", stack(" + frame.str() + ")) = " + state_word(state);
    case Kind::HasCanary: return "has_canary(" + frame.str() + ")";
    case Kind::IsBuffer:
      return "buffer(stack(" + frame.str() + "), " + (buffer_index ? "#" + std::to_string(*buffer_index) : var) + ")";
    case Kind::PrevIn: return "previous_transition = " + join_labels(labels);
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok { Ident, Int, String, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  std::int64_t value = 0;
  std::size_t line = 1, col = 1;
};

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0, line = 1, col = 1;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < src.size()) {
    char ch = src[i];
    if (std::isspace(static_cast<unsigned char>(ch))) {
      advance(1);
      continue;
    }
    if (ch == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    Token t;
    t.line = line;
    t.col = col;
    if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      t.kind = Tok::Ident;
      t.text = std::string(src.substr(i, j - i));
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(ch))) {
      std::size_t j = i;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      t.kind = Tok::Int;
      t.text = std::string(src.substr(i, j - i));
      t.value = std::stoll(t.text);
      advance(j - i);
    } else if (ch == '"') {
      std::size_t j = i + 1;
      while (j < src.size() && src[j] != '"' && src[j] != '\n') ++j;
      if (j >= src.size() || src[j] != '"') throw LocatedError(ErrorKind::SyntaxError, line, col, "unterminated string");
      t.kind = Tok::String;
      t.text = std::string(src.substr(i + 1, j - i - 1));
      advance(j - i + 1);
    } else {
      static const char* two[] = {"..", "!=", "=>", "&&", "||"};
      t.kind = Tok::Punct;
      bool matched = false;
      for (const char* p : two) {
        if (src.substr(i, 2) == p) {
          t.text = p;
          matched = true;
          break;
        }
      }
      if (!matched) {
        if (std::string_view("(){}[],.:=!&|+-").find(ch) == std::string_view::npos)
          throw LocatedError(ErrorKind::SyntaxError, line, col, std::string("unexpected character '") + ch + "'");
        t.text = std::string(1, ch);
      }
      if (t.text == "&&") t.text = "&";
      if (t.text == "||") t.text = "|";
      advance(matched ? 2 : 1);
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.line = line;
  end.col = col;
  out.push_back(end);
  return out;
}

const std::set<std::string>& label_words() {
  static const std::set<std::string> words{"fa", "push", "pop", "write", "fe", "loop", "libc", "call", "ret",
                                           "buffer_register"};
  return words;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : t_(std::move(toks)) {}

  bool at_end() const { return peek().kind == Tok::End; }
  const Token& peek(std::size_t k = 0) const { return t_[std::min(pos_ + k, t_.size() - 1)]; }

  bool is(const char* punct) const { return peek().kind == Tok::Punct && peek().text == punct; }
  bool is_word(const char* w) const { return peek().kind == Tok::Ident && peek().text == w; }

  Token take() {
    Token t = peek();
    if (pos_ < t_.size() - 1) ++pos_;
    return t;
  }

  [[noreturn]] void fail(const Token& at, const std::string& msg) const {
    if (at.kind == Tok::End && !open_.empty())
      throw LocatedError(ErrorKind::SyntaxError, open_.back().line, open_.back().col, "unbalanced '('");
    throw LocatedError(ErrorKind::SyntaxError, at.line, at.col, msg);
  }

  void expect(const char* punct) {
    if (!is(punct)) fail(peek(), std::string("expected '") + punct + "'" + found());
    take();
  }

  std::string found() const {
    if (peek().kind == Tok::End) return ", found end of input";
    return ", found '" + peek().text + "'";
  }

  std::string ident(const char* what) {
    if (peek().kind != Tok::Ident) fail(peek(), std::string("expected ") + what + found());
    return take().text;
  }

  std::int64_t integer() {
    bool neg = false;
    if (is("-")) {
      take();
      neg = true;
    }
    if (peek().kind != Tok::Int) fail(peek(), "expected integer" + found());
    std::int64_t v = take().value;
    return neg ? -v : v;
  }

  FormulaPtr formula() { return until(); }

 private:
  FormulaPtr until() {
    FormulaPtr lhs = implication();
    if (is_word("U")) {
      take();
      Formula f;
      f.kind = Formula::Kind::Until;
      f.children = {lhs, until()};
      return make_formula(std::move(f));
    }
    return lhs;
  }

  FormulaPtr implication() {
    FormulaPtr lhs = disjunction();
    if (is("=>")) {
      take();
      Formula f;
      f.kind = Formula::Kind::Implies;
      f.children = {lhs, implication()};
      return make_formula(std::move(f));
    }
    return lhs;
  }

  FormulaPtr disjunction() {
    FormulaPtr lhs = conjunction();
    while (is("|")) {
      take();
      Formula f;
      f.kind = Formula::Kind::Or;
      f.children = {lhs, conjunction()};
      lhs = make_formula(std::move(f));
    }
    return lhs;
  }

  FormulaPtr conjunction() {
    FormulaPtr lhs = unary();
    while (is("&")) {
      take();
      Formula f;
      f.kind = Formula::Kind::And;
      f.children = {lhs, unary()};
      lhs = make_formula(std::move(f));
    }
    return lhs;
  }

  FormulaPtr unary() {
    if (is("!")) {
      take();
      Formula f;
      f.kind = Formula::Kind::Not;
      f.children = {unary()};
      return make_formula(std::move(f));
    }
    if (peek().kind == Tok::Ident) {
      const std::string& w = peek().text;
      if (w == "G" || w == "F" || w == "X") {
        take();
        Formula f;
        f.kind = w == "G" ? Formula::Kind::Always : w == "F" ? Formula::Kind::Eventually : Formula::Kind::Next;
        f.children = {unary()};
        return make_formula(std::move(f));
      }
      if (w == "forall_stack" || w == "exists_stack") return stack_quantifier();
      if (w == "forall_buffer" || w == "exists_buffer") return buffer_quantifier();
      if (w == "all" || w == "any") return range_quantifier();
    }
    return primary();
  }

  /// Quantifier bodies extend as far right as possible.
  FormulaPtr body() { return formula(); }

  std::string bind(std::set<std::string>& scope, const Token& at, std::string name) {
    if (frames_.count(name) || buffers_.count(name) || ints_.count(name))
      fail(at, "variable '" + name + "' is already bound");
    scope.insert(name);
    return name;
  }

  FormulaPtr stack_quantifier() {
    Token kw = take();
    Formula f;
    f.kind = kw.text == "forall_stack" ? Formula::Kind::ForallStack : Formula::Kind::ExistsStack;
    Token v = peek();
    f.var = bind(frames_, v, ident("frame variable"));
    expect(".");
    f.children = {body()};
    frames_.erase(f.var);
    return make_formula(std::move(f));
  }

  FormulaPtr buffer_quantifier() {
    Token kw = take();
    Formula f;
    f.kind = kw.text == "forall_buffer" ? Formula::Kind::ForallBuffer : Formula::Kind::ExistsBuffer;
    Token v = peek();
    std::string name = ident("buffer variable");
    if (!is_word("in")) fail(peek(), "expected 'in'" + found());
    take();
    f.frame = frame_var();
    f.var = bind(buffers_, v, name);
    expect(".");
    f.children = {body()};
    buffers_.erase(f.var);
    return make_formula(std::move(f));
  }

  FormulaPtr range_quantifier() {
    Token kw = take();
    Formula f;
    f.kind = kw.text == "all" ? Formula::Kind::AllRange : Formula::Kind::AnyRange;
    Token v = peek();
    std::string name = ident("index variable");
    if (!is_word("in")) fail(peek(), "expected 'in'" + found());
    take();
    Token lo_tok = peek();
    f.lo = integer();
    expect("..");
    f.hi = integer();
    if (f.lo < 0 || f.hi < f.lo) fail(lo_tok, "invalid index range");
    expect(":");
    f.var = bind(ints_, v, name);
    f.children = {body()};
    ints_.erase(f.var);
    return make_formula(std::move(f));
  }

  FrameRef frame_var() {
    Token at = peek();
    std::string name = ident("frame variable");
    if (!frames_.count(name)) fail(at, "unbound frame variable '" + name + "'");
    return {name, std::nullopt};
  }

  FrameRef stack_of() {
    if (!is_word("stack")) fail(peek(), "expected 'stack('" + found());
    take();
    open_.push_back(peek());
    expect("(");
    FrameRef f = frame_var();
    expect(")");
    open_.pop_back();
    return f;
  }

  IndexExpr index_expr() {
    IndexExpr e;
    Token at = peek();
    if (peek().kind == Tok::Int) {
      e.kind = IndexExpr::Kind::Const;
      e.offset = take().value;
    } else if (is_word("start") || is_word("end")) {
      e.kind = take().text == "start" ? IndexExpr::Kind::Start : IndexExpr::Kind::End;
      open_.push_back(peek());
      expect("(");
      Token bt = peek();
      e.var = ident("buffer variable");
      if (!buffers_.count(e.var)) fail(bt, "unbound buffer variable '" + e.var + "'");
      expect(")");
      open_.pop_back();
    } else if (peek().kind == Tok::Ident) {
      e.kind = IndexExpr::Kind::Var;
      e.var = take().text;
      if (!ints_.count(e.var)) fail(at, "unbound index variable '" + e.var + "'");
    } else {
      fail(at, "expected byte index" + found());
    }
    while (is("+") || is("-")) {
      bool plus = take().text == "+";
      if (peek().kind != Tok::Int) fail(peek(), "expected integer" + found());
      std::int64_t v = take().value;
      e.offset += plus ? v : -v;
    }
    if (e.kind == IndexExpr::Kind::Const && e.offset < 0) fail(at, "byte index must be non-negative");
    return e;
  }

  ByteState state_name() {
    Token at = peek();
    std::string w = ident("byte state");
    if (w == "Free" || w == "F") return ByteState::Free;
    if (w == "Critical" || w == "C") return ByteState::Critical;
    if (w == "Occupied" || w == "O") return ByteState::Occupied;
    if (w == "Modified" || w == "M") return ByteState::Modified;
    fail(at, "unknown byte state '" + w + "'");
  }

  std::string label_name() {
    Token at = peek();
    std::string w = ident("transition label");
    if (label_words().count(w) || w.rfind("call_", 0) == 0) return w;
    fail(at, "unknown transition label '" + w + "'");
  }

  FormulaPtr primary() {
    Token at = peek();
    if (is("(")) {
      open_.push_back(take());
      FormulaPtr f = formula();
      expect(")");
      open_.pop_back();
      return f;
    }
    if (at.kind != Tok::Ident) fail(at, "expected formula" + found());
    const std::string w = at.text;
    Formula f;
    if (w == "true" || w == "false") {
      take();
      f.kind = w == "true" ? Formula::Kind::True : Formula::Kind::False;
      return make_formula(std::move(f));
    }
    if (w == "byte") {
      take();
      open_.push_back(peek());
      expect("(");
      f.kind = Formula::Kind::ByteIs;
      f.index = index_expr();
      expect(",");
      f.frame = stack_of();
      expect(")");
      open_.pop_back();
      bool negate = false;
      if (is("!=")) negate = true;
      else if (!is("=")) fail(peek(), "expected '=' or '!='" + found());
      take();
      f.state = state_name();
      return negate_if(make_formula(std::move(f)), negate);
    }
    if (w == "has_canary") {
      take();
      open_.push_back(peek());
      expect("(");
      f.kind = Formula::Kind::HasCanary;
      f.frame = frame_var();
      expect(")");
      open_.pop_back();
      return make_formula(std::move(f));
    }
    if (w == "buffer") {
      take();
      open_.push_back(peek());
      expect("(");
      f.kind = Formula::Kind::IsBuffer;
      f.frame = stack_of();
      expect(",");
      Token bt = peek();
      f.var = ident("buffer variable");
      if (!buffers_.count(f.var)) fail(bt, "unbound buffer variable '" + f.var + "'");
      expect(")");
      open_.pop_back();
      return make_formula(std::move(f));
    }
    if (w == "previous_transition") {
      take();
      bool negate = false;
      if (is("!=")) negate = true;
      else if (!is("=")) fail(peek(), "expected '=' or '!='" + found());
      take();
      f.kind = Formula::Kind::PrevIn;
      if (is("{")) {
        take();
        f.labels.push_back(label_name());
        while (is(",")) {
          take();
          f.labels.push_back(label_name());
        }
        expect("}");
      } else {
        f.labels.push_back(label_name());
      }
      return negate_if(make_formula(std::move(f)), negate);
    }
    throw Error(ErrorKind::UnknownOperator, "line " + std::to_string(at.line) + ", col " + std::to_string(at.col) +
                                               ": unknown operator '" + w + "'");
  }

  static FormulaPtr negate_if(FormulaPtr f, bool negate) {
    if (!negate) return f;
    Formula n;
    n.kind = Formula::Kind::Not;
    n.children = {std::move(f)};
    return make_formula(std::move(n));
  }

  std::vector<Token> t_;
  std::size_t pos_ = 0;
  std::vector<Token> open_;
  std::set<std::string> frames_, buffers_, ints_;
};

PropertyAst parse_block(Parser& p) {
  PropertyAst prop;
  if (!p.is_word("property")) p.fail(p.peek(), "expected 'property'" + p.found());
  p.take();
  if (p.peek().kind == Tok::String || p.peek().kind == Tok::Ident) prop.name = p.take().text;
  else p.fail(p.peek(), "expected property name" + p.found());
  p.expect("{");
  if (!p.is_word("ltl")) p.fail(p.peek(), "expected 'ltl:'" + p.found());
  p.take();
  p.expect(":");
  prop.formula = p.formula();
  if (p.is_word("cwe")) {
    p.take();
    p.expect(":");
    p.expect("[");
    while (!p.is("]")) {
      std::string id = p.ident("CWE identifier");
      if (p.is("-")) {
        p.take();
        if (p.peek().kind != Tok::Int) p.fail(p.peek(), "expected CWE number" + p.found());
        id += "-" + p.take().text;
      }
      prop.cwes.push_back(id);
      if (!p.is(",")) break;
      p.take();
    }
    p.expect("]");
  }
  p.expect("}");
  return prop;
}

}  // namespace

FormulaPtr parse_formula(std::string_view text) {
  Parser p(lex(text));
  FormulaPtr f = p.formula();
  if (!p.at_end()) p.fail(p.peek(), "unexpected '" + p.peek().text + "'");
  return f;
}

std::vector<PropertyAst> parse_property_file(std::string_view text) {
  Parser p(lex(text));
  std::vector<PropertyAst> out;
  while (!p.at_end()) out.push_back(parse_block(p));
  return out;
}

PropertyAst parse_property(std::string_view text) {
  Parser probe(lex(text));
  if (probe.is_word("property")) {
    auto all = parse_property_file(text);
    if (all.size() != 1) throw Error(ErrorKind::SyntaxError, "expected exactly one property block");
    return all.front();
  }
  return {"anonymous", parse_formula(text), {}};
}

std::vector<PropertyAst> bundled_properties() { return parse_property_file(bundled::properties()); }

std::vector<PropertyAst> merge_properties(std::vector<PropertyAst> base, const std::vector<PropertyAst>& extra) {
  for (const auto& p : extra) {
    auto it = std::find_if(base.begin(), base.end(), [&](const PropertyAst& b) { return b.name == p.name; });
    if (it != base.end()) *it = p;
    else base.push_back(p);
  }
  return base;
}

// ---------------------------------------------------------------------------
// Evaluation

bool label_matches(const std::string& pattern, const TransitionLabel& label) {
  if (pattern == "libc" || pattern == "call") return label.kind == LabelKind::Call;
  if (pattern.rfind("call_", 0) == 0) return label.kind == LabelKind::Call && label.callee == pattern.substr(5);
  if (pattern == "buffer_register") return label.kind == LabelKind::BufferRegister;
  return pattern == to_string(label.kind);
}

namespace {

std::size_t frame_of(const FrameRef& ref, const Bindings& b) {
  if (ref.index) return *ref.index;
  auto it = b.frames.find(ref.var);
  if (it == b.frames.end()) throw Error(ErrorKind::SyntaxError, "unbound frame variable '" + ref.var + "'");
  return it->second;
}

const Buffer& buffer_of(const std::string& var, const MemoryState& m, const Bindings& b) {
  auto it = b.buffers.find(var);
  if (it == b.buffers.end()) throw Error(ErrorKind::SyntaxError, "unbound buffer variable '" + var + "'");
  return m.frames.at(it->second.first).buffers.at(it->second.second);
}

std::int64_t index_value(const IndexExpr& e, const MemoryState& m, const Bindings& b) {
  switch (e.kind) {
    case IndexExpr::Kind::Const: return e.offset;
    case IndexExpr::Kind::Var: {
      auto it = b.ints.find(e.var);
      if (it == b.ints.end()) throw Error(ErrorKind::SyntaxError, "unbound index variable '" + e.var + "'");
      return it->second + e.offset;
    }
    case IndexExpr::Kind::Start: return buffer_of(e.var, m, b).start_index() + e.offset;
    case IndexExpr::Kind::End: return buffer_of(e.var, m, b).end_index() + e.offset;
  }
  return 0;
}

}  // namespace

Tri eval_atom(const Formula& atom, const MemoryState& m, const Bindings& b, std::vector<std::string>* notes) {
  switch (atom.kind) {
    case Formula::Kind::True: return Tri::True;
    case Formula::Kind::False: return Tri::False;
    case Formula::Kind::ByteIs: {
      std::size_t fi = frame_of(atom.frame, b);
      if (fi >= m.frames.size()) return Tri::Unknown;
      const StackFrame& f = m.frames[fi];
      std::int64_t i = index_value(atom.index, m, b);
      if (i < 0 || i >= f.size()) {
        if (notes) notes->push_back("byte " + std::to_string(i) + " is outside frame " + f.label);
        return Tri::Unknown;
      }
      if (i >= 8 && i < 16 && !f.saved_rbp) {
        if (notes) notes->push_back("frame " + f.label + " has no saved base register at bytes 8-15");
        return Tri::Unknown;
      }
      return f.bytes[static_cast<std::size_t>(i)] == atom.state ? Tri::True : Tri::False;
    }
    case Formula::Kind::HasCanary: {
      std::size_t fi = frame_of(atom.frame, b);
      if (fi >= m.frames.size()) return Tri::Unknown;
      return m.frames[fi].has_canary ? Tri::True : Tri::False;
    }
    case Formula::Kind::IsBuffer: {
      std::size_t fi = frame_of(atom.frame, b);
      if (atom.buffer_index) {
        return fi < m.frames.size() && *atom.buffer_index < m.frames[fi].buffers.size() ? Tri::True : Tri::False;
      }
      auto it = b.buffers.find(atom.var);
      return it != b.buffers.end() && it->second.first == fi ? Tri::True : Tri::False;
    }
    case Formula::Kind::PrevIn:
      for (const auto& l : atom.labels)
        if (label_matches(l, m.incoming)) return Tri::True;
      return Tri::False;
    default:
      throw Error(ErrorKind::UnsupportedFragment, "not an atom: " + atom.str());
  }
}

Tri evaluate(const Formula& f, const MemoryState& m, const Bindings& b, std::vector<std::string>* notes) {
  using K = Formula::Kind;
  switch (f.kind) {
    case K::Not: return tri_not(evaluate(*f.children[0], m, b, notes));
    case K::And: {
      Tri a = evaluate(*f.children[0], m, b, notes);
      if (a == Tri::False) return a;
      return tri_and(a, evaluate(*f.children[1], m, b, notes));
    }
    case K::Or: {
      Tri a = evaluate(*f.children[0], m, b, notes);
      if (a == Tri::True) return a;
      return tri_or(a, evaluate(*f.children[1], m, b, notes));
    }
    case K::Implies: {
      Tri a = evaluate(*f.children[0], m, b, notes);
      if (a == Tri::False) return Tri::True;
      return tri_or(tri_not(a), evaluate(*f.children[1], m, b, notes));
    }
    case K::ForallStack:
    case K::ExistsStack: {
      const bool all = f.kind == K::ForallStack;
      Tri acc = all ? Tri::True : Tri::False;
      Bindings inner = b;
      for (std::size_t i = 0; i < m.frames.size(); ++i) {
        inner.frames[f.var] = i;
        Tri v = evaluate(*f.children[0], m, inner, notes);
        acc = all ? tri_and(acc, v) : tri_or(acc, v);
        if (acc == (all ? Tri::False : Tri::True)) break;
      }
      return acc;
    }
    case K::ForallBuffer:
    case K::ExistsBuffer: {
      const bool all = f.kind == K::ForallBuffer;
      Tri acc = all ? Tri::True : Tri::False;
      std::size_t fi = frame_of(f.frame, b);
      if (fi >= m.frames.size()) return acc;
      Bindings inner = b;
      for (std::size_t i = 0; i < m.frames[fi].buffers.size(); ++i) {
        inner.buffers[f.var] = {fi, i};
        Tri v = evaluate(*f.children[0], m, inner, notes);
        acc = all ? tri_and(acc, v) : tri_or(acc, v);
        if (acc == (all ? Tri::False : Tri::True)) break;
      }
      return acc;
    }
    case K::AllRange:
    case K::AnyRange: {
      const bool all = f.kind == K::AllRange;
      Tri acc = all ? Tri::True : Tri::False;
      Bindings inner = b;
      for (std::int64_t i = f.lo; i <= f.hi; ++i) {
        inner.ints[f.var] = i;
        Tri v = evaluate(*f.children[0], m, inner, notes);
        acc = all ? tri_and(acc, v) : tri_or(acc, v);
        if (acc == (all ? Tri::False : Tri::True)) break;
      }
      return acc;
    }
    case K::Always:
    case K::Eventually:
    case K::Next:
    case K::Until:
      throw Error(ErrorKind::UnsupportedFragment, "temporal operator inside a state formula: " + f.str());
    default:
      return eval_atom(f, m, b, notes);
  }
}

FormulaPtr expand_quantifiers(const Formula& f, const MemoryState& m, const Bindings& b) {
  using K = Formula::Kind;
  auto fold = [](std::vector<FormulaPtr> parts, bool conj) {
    Formula unit;
    unit.kind = conj ? K::True : K::False;
    if (parts.empty()) return make_formula(unit);
    FormulaPtr acc = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) {
      Formula n;
      n.kind = conj ? K::And : K::Or;
      n.children = {acc, parts[i]};
      acc = make_formula(std::move(n));
    }
    return acc;
  };
  switch (f.kind) {
    case K::ForallStack:
    case K::ExistsStack: {
      std::vector<FormulaPtr> parts;
      Bindings inner = b;
      for (std::size_t i = 0; i < m.frames.size(); ++i) {
        inner.frames[f.var] = i;
        parts.push_back(expand_quantifiers(*f.children[0], m, inner));
      }
      return fold(std::move(parts), f.kind == K::ForallStack);
    }
    case K::ForallBuffer:
    case K::ExistsBuffer: {
      std::vector<FormulaPtr> parts;
      std::size_t fi = frame_of(f.frame, b);
      Bindings inner = b;
      if (fi < m.frames.size()) {
        for (std::size_t i = 0; i < m.frames[fi].buffers.size(); ++i) {
          inner.buffers[f.var] = {fi, i};
          parts.push_back(expand_quantifiers(*f.children[0], m, inner));
        }
      }
      return fold(std::move(parts), f.kind == K::ForallBuffer);
    }
    case K::AllRange:
    case K::AnyRange: {
      std::vector<FormulaPtr> parts;
      Bindings inner = b;
      for (std::int64_t i = f.lo; i <= f.hi; ++i) {
        inner.ints[f.var] = i;
        parts.push_back(expand_quantifiers(*f.children[0], m, inner));
      }
      return fold(std::move(parts), f.kind == K::AllRange);
    }
    case K::ByteIs: {
      Formula g = f;
      g.frame = {"", frame_of(f.frame, b)};
      g.index = {IndexExpr::Kind::Const, "", index_value(f.index, m, b)};
      return make_formula(std::move(g));
    }
    case K::HasCanary: {
      Formula g = f;
      g.frame = {"", frame_of(f.frame, b)};
      return make_formula(std::move(g));
    }
    case K::IsBuffer: {
      Formula g = f;
      g.frame = {"", frame_of(f.frame, b)};
      auto it = b.buffers.find(f.var);
      if (it != b.buffers.end() && it->second.first == *g.frame.index) {
        g.buffer_index = it->second.second;
      } else {
        g.kind = K::False;
      }
      return make_formula(std::move(g));
    }
    default: {
      Formula g = f;
      for (auto& c : g.children) c = expand_quantifiers(*c, m, b);
      return make_formula(std::move(g));
    }
  }
}

// ---------------------------------------------------------------------------
// Monitors

namespace {

bool temporal_free(const Formula& f) {
  using K = Formula::Kind;
  if (f.kind == K::Always || f.kind == K::Eventually || f.kind == K::Next || f.kind == K::Until) return false;
  for (const auto& c : f.children)
    if (!temporal_free(*c)) return false;
  return true;
}

}  // namespace

bool Monitor::is_accepting(std::size_t s) const {
  return std::find(accepting.begin(), accepting.end(), s) != accepting.end();
}

std::size_t Monitor::step(std::size_t s, const MemoryState& m, std::vector<std::string>* notes) const {
  for (const auto& e : edges) {
    if (e.from != s) continue;
    if (evaluate(*e.guard, m, {}, notes) == Tri::True) return e.to;
  }
  return s;  // only reachable for the positive form when p fails
}

Monitor Monitor::positive() const {
  Monitor p;
  p.property = property;
  p.cwes = cwes;
  p.states = {"run"};
  p.edges = {{0, 0, body}};
  p.initial = 0;
  p.accepting = {0};
  p.body = body;
  return p;
}

Monitor compile_monitor(const PropertyAst& ast) {
  const Formula& f = *ast.formula;
  if (f.kind != Formula::Kind::Always || !temporal_free(*f.children[0]))
    throw Error(ErrorKind::UnsupportedFragment,
                "property '" + ast.name + "' is not of the form G p with a temporal-free p: " + f.str());
  Monitor m;
  m.property = ast.name;
  m.cwes = ast.cwes;
  m.body = f.children[0];
  Formula neg;
  neg.kind = Formula::Kind::Not;
  neg.children = {m.body};
  Formula t;
  t.kind = Formula::Kind::True;
  m.states = {"run", "reject"};
  m.edges = {{0, 0, m.body}, {0, 1, make_formula(std::move(neg))}, {1, 1, make_formula(std::move(t))}};
  m.initial = 0;
  m.accepting = {1};
  return m;
}

}  // namespace basics
