#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "basics/checker.hpp"
#include "basics/config.hpp"
#include "basics/effects.hpp"
#include "basics/ltl.hpp"
#include "basics/memstace.hpp"
#include "basics/patcher.hpp"
#include "basics/validator.hpp"

namespace basics {

struct AnalysisOptions {
  Config cfg;
  bool patch = false;
  bool validate = false;
  /// Also patch dangerous call sites that no violation blames (strcpy,
  /// strcat, sprintf, gets with a template), so their behaviour on benign
  /// inputs can be validated.
  bool patch_all = false;
  /// File (or directory) receiving the state space; `.json` selects JSON,
  /// anything else DOT.
  std::optional<std::string> export_memstace;
  /// Directory for patched images.
  std::optional<std::string> out_dir;
};

struct SinkReport {
  SinkSite sink;
  std::vector<std::string> properties;  // violated properties blaming this sink
  /// State of the space just before the sink executes.
  std::size_t call_state = 0;
  std::optional<CrashInput> crash_input;
  std::optional<PatchPlan> plan;
  std::string trampoline;
  std::optional<std::string> patch_error;
  std::optional<ValidationReport> validation;
};

struct BinaryReport {
  std::string name;
  std::string path;
  bool ok = true;
  std::string error;
  std::string root;
  std::vector<Verdict> verdicts;
  std::vector<SinkReport> sinks;
  std::vector<std::string> notes;
  bool vulnerable = false;
  bool truncated = false;
  bool timed_out = false;
  std::size_t states = 0;
  std::size_t transitions = 0;
  std::size_t emulations = 0;
  double build_seconds = 0;
  double verify_seconds = 0;
  double total_seconds = 0;
  /// Image with every sink patched (when patching was requested).
  std::optional<ProgramImage> patched;
  /// The analyzed space, kept for export and inspection.
  std::shared_ptr<const MemStaCe> space;

  const Verdict* verdict(const std::string& property) const;
};

class Analyzer {
 public:
  /// Loads properties, templates, the libc database and buffer hints from
  /// the bundled data and any override paths in `opts.cfg`.
  explicit Analyzer(AnalysisOptions opts);

  BinaryReport analyze_text(const std::string& text, const std::string& name, const std::string& path = "") const;
  /// Never throws; failures are recorded in the report.
  BinaryReport analyze_file(const std::string& path) const;

  const std::vector<Monitor>& monitors() const { return monitors_; }
  const std::vector<PropertyAst>& properties() const { return props_; }
  const AnalysisOptions& options() const { return opts_; }

 private:
  AnalysisOptions opts_;
  std::vector<PropertyAst> props_;
  std::vector<Monitor> monitors_;
  TemplateLibrary templates_;
  LibcDatabase libc_;
  BufferHints hints_;
};

struct Metrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

/// Accuracy, precision, recall and F1 from confusion counts. Undefined
/// ratios (zero denominators) are reported as 0.
Metrics compute_metrics(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);

/// Confusion counts of reports against ground truth keyed by report name;
/// reports without a label are skipped.
Metrics report_metrics(const std::vector<BinaryReport>& reports, const std::map<std::string, bool>& vulnerable);

/// 0 = every binary clean, 1 = vulnerabilities found, 2 = errors.
int exit_code(const std::vector<BinaryReport>& reports);

constexpr const char* kReportSchema = "basics-report/1";

std::string report_json(const std::vector<BinaryReport>& reports, bool include_timings = true,
                        const std::optional<Metrics>& metrics = std::nullopt);
std::string report_text(const std::vector<BinaryReport>& reports, const std::optional<Metrics>& metrics = std::nullopt);

/// Reads a whole file; throws Error(Io).
std::string read_file(const std::string& path);

}  // namespace basics
