#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "basics/config.hpp"
#include "basics/effects.hpp"
#include "basics/interpreter.hpp"

namespace basics {

enum class RunStatus { CleanExit, Crash, StepBudget };

const char* to_string(RunStatus s);

struct RunOutcome {
  RunStatus status = RunStatus::CleanExit;
  CrashCause cause = CrashCause::None;
  std::uint64_t steps = 0;
  std::string stdout_data;
  std::int64_t exit_code = 0;
  std::vector<std::string> notes;

  bool crashed() const { return status == RunStatus::Crash; }
  bool clean() const { return status == RunStatus::CleanExit; }
};

/// Concrete execution of `image` from `entry` (default: the image's entry
/// function) with shadow checks of the saved control data at every return.
RunOutcome run(const ProgramImage& image, const ProgramInput& input, const Config& cfg,
               const LibcDatabase& libc = LibcDatabase::bundled(), std::optional<std::string> entry = {});

struct ValidationTrial {
  ProgramInput input;
  RunOutcome original;
  RunOutcome patched;
  bool success = false;
};

struct ValidationReport {
  /// "concolic" when a crash input from call emulation was used, else "random".
  std::string source;
  std::vector<ValidationTrial> trials;
  bool success = false;
  std::vector<std::string> notes;

  const ValidationTrial& first() const { return trials.front(); }
};

/// Runs both images on the crash input when present, otherwise on
/// cfg.random_trials random inputs with log-uniform lengths. A trial
/// succeeds when the original crashes and the patched run exits cleanly, or
/// when both exit cleanly with identical stdout.
ValidationReport validate_patch(const ProgramImage& original, const ProgramImage& patched,
                                const std::optional<CrashInput>& input, const Config& cfg,
                                const LibcDatabase& libc = LibcDatabase::bundled(),
                                std::optional<std::string> entry = {});

/// Deterministic random inputs used when no crash input is available.
std::vector<ProgramInput> random_inputs(const Config& cfg);

}  // namespace basics
