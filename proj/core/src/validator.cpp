#include "basics/validator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "basics/error.hpp"

namespace basics {

const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::CleanExit: return "clean-exit";
    case RunStatus::Crash: return "crash";
    case RunStatus::StepBudget: return "step-budget";
  }
  return "?";
}

RunOutcome run(const ProgramImage& image, const ProgramInput& input, const Config& cfg, const LibcDatabase& libc,
               std::optional<std::string> entry) {
  std::string fn = entry ? *entry : image.entry_function().value_or("");
  if (fn.empty() || !image.find_function(fn)) throw Error(ErrorKind::TargetUnreachable, "no entry function to run");
  MachineOptions opts;
  opts.symbolic = false;
  opts.max_input_len = cfg.max_input_len;
  opts.step_budget = cfg.step_budget;
  opts.max_call_depth = cfg.max_call_depth;
  Machine m(image, libc, opts);
  m.start(fn, input);

  RunOutcome out;
  for (;;) {
    StepResult r = m.step();
    if (r.kind == StepKind::Continue) continue;
    if (r.kind == StepKind::Exited || r.kind == StepKind::PathEnd) {
      out.status = RunStatus::CleanExit;
    } else if (r.kind == StepKind::Crashed) {
      out.status = RunStatus::Crash;
      out.cause = m.crash_cause();
    } else if (r.kind == StepKind::Budget) {
      out.status = RunStatus::StepBudget;
    } else {
      // Concrete runs never fork; treat it as an interpreter limitation.
      out.status = RunStatus::StepBudget;
      out.notes.push_back("unexpected fork in concrete run");
    }
    break;
  }
  out.steps = m.steps();
  out.stdout_data = m.stdout_data();
  out.exit_code = m.exit_code();
  for (const auto& n : m.notes()) out.notes.push_back(n);
  return out;
}

std::vector<ProgramInput> random_inputs(const Config& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> loglen(0.0, std::log(static_cast<double>(std::max<std::size_t>(cfg.max_input_len, 1))));
  std::uniform_int_distribution<int> letter('a', 'z');
  std::vector<ProgramInput> out;
  for (std::size_t t = 0; t < cfg.random_trials; ++t) {
    auto len = static_cast<std::size_t>(std::lround(std::exp(loglen(rng))));
    len = std::clamp<std::size_t>(len, 1, cfg.max_input_len);
    std::string s(len, 'a');
    for (auto& c : s) c = static_cast<char>(letter(rng));
    out.push_back({s + "\n", {"prog", s}});
  }
  return out;
}

ValidationReport validate_patch(const ProgramImage& original, const ProgramImage& patched,
                                const std::optional<CrashInput>& input, const Config& cfg, const LibcDatabase& libc,
                                std::optional<std::string> entry) {
  ValidationReport rep;
  std::vector<ProgramInput> inputs;
  if (input) {
    rep.source = "concolic";
    inputs.push_back(input->to_program_input());
  } else {
    rep.source = "random";
    inputs = random_inputs(cfg);
  }
  rep.success = !inputs.empty();
  for (auto& in : inputs) {
    ValidationTrial t;
    t.input = in;
    t.original = run(original, in, cfg, libc, entry);
    t.patched = run(patched, in, cfg, libc, entry);
    if (t.original.crashed() && t.patched.clean()) {
      t.success = true;
    } else if (t.original.clean() && t.patched.clean()) {
      t.success = t.original.stdout_data == t.patched.stdout_data;
      if (!t.success) rep.notes.push_back("stdout diverges between original and patched runs");
    } else if (t.patched.crashed()) {
      rep.notes.push_back(std::string("patched run crashed: ") + to_string(t.patched.cause));
    } else {
      rep.notes.push_back("a run exhausted the step budget");
    }
    rep.success = rep.success && t.success;
    rep.trials.push_back(std::move(t));
  }
  return rep;
}

}  // namespace basics
