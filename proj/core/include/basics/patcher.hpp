#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "basics/checker.hpp"
#include "basics/config.hpp"
#include "basics/effects.hpp"
#include "basics/frontend.hpp"

namespace basics {

struct SinkSite {
  Address address = 0;
  std::string function;
  /// Library callee, or "loop" for loop sinks.
  std::string callee;
  bool loop = false;
  std::vector<std::string> cwes;
  /// Index of the sink step in the trace.
  std::size_t step = 0;
};

/// Walks the trace backwards to the last library call step, or else the last
/// loop step. Throws Error(NoSinkFound).
SinkSite locate_sink(const Trace& trace, const BCfg& bcfg, const FunctionMap& funcs, const ProgramImage& image);

enum class PatchMode { Static, Runtime };

const char* to_string(PatchMode m);

struct PatchTemplate {
  std::string name;
  std::string target;       // strcpy, strcat, sprintf, gets, scanf
  PatchMode mode = PatchMode::Static;
  std::string replacement;  // safecall replacement
  std::string size_expr;    // "dest_size" or "runtime"
  bool terminate = true;
  /// Only selected when Config::enable_scanf_patch is set.
  bool opt_in = false;
};

class TemplateLibrary {
 public:
  std::vector<PatchTemplate> templates;

  static TemplateLibrary bundled();
  /// {"templates": [{name, target, mode, replacement, size_expr, terminate, opt_in}]}
  static TemplateLibrary from_json(std::string_view text);
  /// Loads every *.json file in `dir` (sorted by name).
  static TemplateLibrary from_directory(const std::string& dir);

  /// Replaces templates of the same name and appends new ones.
  void merge(const TemplateLibrary& other);
  const PatchTemplate* find(const std::string& target, PatchMode mode) const;
};

struct PatchPlan {
  PatchTemplate tpl;
  SinkSite sink;
  std::optional<std::int64_t> dest_offset;  // rbp-relative
  std::optional<std::uint64_t> dest_size;
  /// Static bound passed to the safe call (nullopt in runtime mode).
  std::optional<std::uint64_t> bound;
  std::vector<RegisterRef> args;
  /// Trampoline label; chosen at rewrite time when empty.
  std::string trampoline_label;
  std::vector<std::string> notes;
};

/// Chooses static mode when the destination buffer size is known from the
/// call state, runtime mode otherwise. Throws Error(NoTemplate).
PatchPlan select_template(const SinkSite& sink, const CallEffect& effect, const CallArgs& args,
                          const TemplateLibrary& templates, const MemoryState* call_state, const Config& cfg);

struct PatchResult {
  ProgramImage image;
  std::string label;
  Address trampoline = 0;
  Address return_address = 0;
  std::vector<std::string> notes;
};

/// Replaces the sink call by `jmp <label>` and appends a trampoline function
/// holding the safe call and a jump back to the instruction after the sink.
/// Throws AlreadyPatched or LabelCollision.
PatchResult apply_trampoline(const ProgramImage& image, const PatchPlan& plan);

}  // namespace basics
