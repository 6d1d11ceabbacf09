#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "basics/ltl.hpp"
#include "basics/memstace.hpp"

namespace basics {

enum class VerdictStatus { Holds, Violated, Inconclusive };

const char* to_string(VerdictStatus s);

struct TraceStep {
  std::size_t transition = 0;  // index into MemStaCe::transitions
  Address address = 0;
  std::string text;
  TransitionLabel label;
  MemOpKind op = MemOpKind::NoEffect;
  MemOp memop;
  std::vector<ByteDelta> deltas;
  /// `0x401136: call strcpy -> Call[copy](0..15:C->M)`
  std::string rendered;
};

struct Trace {
  std::vector<TraceStep> steps;
  /// States visited: initial first, violating state last.
  std::vector<std::size_t> states;

  std::string render() const;
};

struct Verdict {
  std::string property;
  VerdictStatus status = VerdictStatus::Holds;
  std::optional<Trace> trace;
  std::vector<std::string> cwes;
  std::vector<std::string> vacuity;
  std::size_t explored = 0;  // product states visited
};

struct CheckOptions {
  /// Only states at most this many transitions from the initial state are
  /// examined (0 = unbounded).
  std::size_t max_depth = 0;
};

/// Breadth-first search over the product of the space and the monitor. The
/// first reject state reached yields the shortest counterexample.
Verdict check(const MemStaCe& space, const Monitor& monitor, const CheckOptions& opts = {});

/// Independent oracle: enumerates every path of at most `depth` transitions
/// and evaluates the monitor body directly on each visited state.
/// `path_limit` caps the enumeration; `complete` reports whether it was hit.
struct BruteForceResult {
  VerdictStatus status = VerdictStatus::Holds;
  std::size_t paths = 0;
  bool complete = true;
  std::size_t violation_depth = 0;
};
BruteForceResult brute_force_check(const MemStaCe& space, const Monitor& monitor, std::size_t depth = 20,
                                   std::size_t path_limit = 2'000'000);

/// One step per transition on the path, with byte deltas rendered in the
/// trace line grammar.
Trace build_counterexample(const std::vector<std::size_t>& path, const MemStaCe& space);

/// Renders one transition as a trace line.
std::string render_step(const Transition& t, const MemStaCe& space);

/// CWE tags of a property. Unmapped names return [] and add a warning.
std::vector<std::string> map_cwe(const std::string& property, const std::vector<PropertyAst>& catalog,
                                 std::vector<std::string>* warnings = nullptr);
std::vector<std::string> map_cwe(const std::string& property, std::vector<std::string>* warnings = nullptr);

}  // namespace basics
