#include "basics/config.hpp"

#include "basics/error.hpp"

namespace basics {

void Config::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::InvalidConfig, std::string(what) + " must be positive");
  };
  require(max_states > 0, "max_states");
  require(max_loop_iters > 0, "max_loop_iters");
  require(max_input_len > 0, "max_input_len");
  require(step_budget > 0, "step_budget");
  require(random_trials > 0, "random_trials");
  require(max_call_depth > 0, "max_call_depth");
  require(max_paths > 0, "max_paths");
  require(timeout_seconds >= 0, "timeout_seconds");
}

}  // namespace basics
