#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

namespace basics {

/// Analysis budgets and optional data-file overrides.
struct Config {
  std::size_t max_states = 200'000;
  std::size_t max_loop_iters = 64;
  std::size_t max_input_len = 4096;
  std::uint64_t step_budget = 1'000'000;
  /// Split multi-byte writes into one transition per byte.
  bool atomic_writes = false;
  /// Wall-clock limit per binary; 0 disables it.
  double timeout_seconds = 0;
  std::size_t random_trials = 8;
  std::size_t max_call_depth = 16;
  /// Emulation paths explored per input probe.
  std::size_t max_paths = 64;
  /// Backward search depth for argument recovery (predecessor blocks).
  std::size_t arg_search_depth = 4;
  std::uint64_t seed = 0x5eed'b45c'0001ULL;
  bool enable_scanf_patch = false;

  std::optional<std::string> entry;  // root function; defaults to main
  std::optional<std::string> props_path;
  std::optional<std::string> templates_dir;
  std::optional<std::string> libc_db_path;
  std::optional<std::string> buffers_path;

  /// Throws Error(InvalidConfig) when a budget is zero.
  void validate() const;
};

}  // namespace basics
