#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "basics/memory_model.hpp"

namespace basics {

/// Three-valued truth. Atoms over bytes a frame does not model (absent
/// indices, or 8-15 of a frame without a saved base register) are Unknown.
enum class Tri : std::uint8_t { False, Unknown, True };

const char* to_string(Tri t);
Tri tri_not(Tri a);
Tri tri_and(Tri a, Tri b);
Tri tri_or(Tri a, Tri b);

/// Byte index expression: a constant, an integer variable, or start/end of a
/// buffer variable, plus a constant offset.
struct IndexExpr {
  enum class Kind : std::uint8_t { Const, Var, Start, End };
  Kind kind = Kind::Const;
  std::string var;
  std::int64_t offset = 0;

  std::string str() const;
  bool operator==(const IndexExpr&) const = default;
};

/// A frame named by a bound variable, or (after expansion) by position.
struct FrameRef {
  std::string var;
  std::optional<std::size_t> index;

  std::string str() const;
  bool operator==(const FrameRef&) const = default;
};

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
  enum class Kind : std::uint8_t {
    True,
    False,
    Not,
    And,
    Or,
    Implies,
    Always,
    Eventually,
    Next,
    Until,
    ForallStack,
    ExistsStack,
    ForallBuffer,
    ExistsBuffer,
    AllRange,
    AnyRange,
    ByteIs,       // byte(index, stack(frame)) = state   (negate for !=)
    HasCanary,    // has_canary(frame)
    IsBuffer,     // buffer(stack(frame), b)
    PrevIn,       // previous_transition = {labels}
  };

  Kind kind = Kind::True;
  std::vector<FormulaPtr> children;
  /// Bound variable of quantifiers; buffer variable of IsBuffer.
  std::string var;
  /// Frame variable for ForallBuffer/ExistsBuffer; frame of atoms.
  FrameRef frame;
  std::int64_t lo = 0, hi = 0;  // AllRange / AnyRange bounds (inclusive)
  IndexExpr index;
  ByteState state = ByteState::Free;
  std::vector<std::string> labels;
  /// Concrete buffer for IsBuffer after expansion.
  std::optional<std::size_t> buffer_index;

  std::string str() const;
};

FormulaPtr make_formula(Formula f);

struct PropertyAst {
  std::string name;
  FormulaPtr formula;
  std::vector<std::string> cwes;
};

/// Parses one formula. Throws LocatedError(SyntaxError) with a column, or
/// Error(UnknownOperator) for unknown atoms; unbound variables are syntax
/// errors.
FormulaPtr parse_formula(std::string_view text);

/// Parses a property file: blocks `property "name" { ltl: <formula> cwe: [..] }`
/// with `#` line comments. Names may be quoted or bare identifiers.
std::vector<PropertyAst> parse_property_file(std::string_view text);

/// Parses a single block or a bare formula (named "anonymous").
PropertyAst parse_property(std::string_view text);

/// The seven bundled stack-integrity properties.
std::vector<PropertyAst> bundled_properties();

/// Replaces properties of the same name and appends new ones.
std::vector<PropertyAst> merge_properties(std::vector<PropertyAst> base, const std::vector<PropertyAst>& extra);

/// Evaluation context: bound frames, buffers and integers.
struct Bindings {
  std::map<std::string, std::size_t> frames;
  std::map<std::string, std::pair<std::size_t, std::size_t>> buffers;  // (frame, buffer)
  std::map<std::string, std::int64_t> ints;
};

/// Evaluates a propositional (temporal-free) formula on one state. Atoms that
/// read bytes outside what the frame models add a vacuity note when `notes`
/// is given and evaluate Unknown.
Tri evaluate(const Formula& f, const MemoryState& m, const Bindings& b = {},
             std::vector<std::string>* notes = nullptr);

/// Evaluates one atom with fully bound variables.
Tri eval_atom(const Formula& atom, const MemoryState& m, const Bindings& b = {},
              std::vector<std::string>* notes = nullptr);

/// Expands all quantifiers against `m` into conjunctions / disjunctions of
/// atoms with concrete frames, buffers and indices.
FormulaPtr expand_quantifiers(const Formula& f, const MemoryState& m, const Bindings& b = {});

bool label_matches(const std::string& pattern, const TransitionLabel& label);

struct MonitorEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  FormulaPtr guard;
};

/// Safety monitor for G p. The negated form has states {run, reject}; reject
/// is accepting and absorbing. The positive form is the single state with a
/// self-loop on p.
struct Monitor {
  std::string property;
  std::vector<std::string> cwes;
  std::vector<std::string> states;
  std::vector<MonitorEdge> edges;
  std::size_t initial = 0;
  std::vector<std::size_t> accepting;
  /// The body p of G p.
  FormulaPtr body;

  bool is_accepting(std::size_t s) const;
  /// Next monitor state after observing `m`. Guards that evaluate Unknown do
  /// not fire the reject edge.
  std::size_t step(std::size_t s, const MemoryState& m, std::vector<std::string>* notes = nullptr) const;
  /// Positive-form automaton (one state, self-loop on p).
  Monitor positive() const;
};

/// Throws Error(UnsupportedFragment) unless the formula is G over a
/// temporal-free body.
Monitor compile_monitor(const PropertyAst& ast);

}  // namespace basics
