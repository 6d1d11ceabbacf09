// Command-line front end: `basics analyze <paths...> [options]`.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "basics/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

/// Expands directories into their *.asm / *.s / *.txt files, sorted.
std::vector<std::string> expand_inputs(const std::vector<std::string>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) {
    std::error_code ec;
    if (!fs::is_directory(p, ec)) {
      out.push_back(p);
      continue;
    }
    std::vector<std::string> found;
    for (const auto& e : fs::directory_iterator(p)) {
      auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".asm" || ext == ".s" || ext == ".txt")) found.push_back(e.path().string());
    }
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

/// Ground truth: {"cases": [{"name": ..., "vulnerable": bool}, ...]}
std::map<std::string, bool> load_ground_truth(const std::string& path) {
  auto doc = nlohmann::json::parse(basics::read_file(path));
  std::map<std::string, bool> out;
  for (const auto& c : doc.at("cases")) out[c.at("name").get<std::string>()] = c.at("vulnerable").get<bool>();
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stack buffer-overflow detection, patching and validation for x86-64 disassembly"};
  app.require_subcommand(1);

  basics::AnalysisOptions opts;
  basics::Config& cfg = opts.cfg;
  std::vector<std::string> paths;
  std::string report = "text";
  std::string props, templates, libc_db, buffers, entry, export_path, out_dir, ground_truth, output;

  auto* analyze = app.add_subcommand("analyze", "Analyze disassembly listings");
  analyze->add_option("paths", paths, "Listing files or directories")->required();
  analyze->add_option("--props", props, "Extra property file (overrides bundled properties by name)");
  analyze->add_option("--templates", templates, "Directory of extra patch template files");
  analyze->add_option("--libc-db", libc_db, "Extra libc database (JSON)");
  analyze->add_option("--buffers", buffers, "Buffer size metadata (JSON)");
  analyze->add_option("--entry", entry, "Root function (default: main)");
  analyze->add_option("--max-loop-iters", cfg.max_loop_iters, "Loop iteration budget during emulation")
      ->capture_default_str();
  analyze->add_option("--max-input-len", cfg.max_input_len, "Longest emulated input")->capture_default_str();
  analyze->add_option("--max-states", cfg.max_states, "State budget of the state space")->capture_default_str();
  analyze->add_option("--step-budget", cfg.step_budget, "Instruction budget per concrete run")->capture_default_str();
  analyze->add_option("--random-trials", cfg.random_trials, "Random validation inputs when no crash input exists")
      ->capture_default_str();
  analyze->add_option("--seed", cfg.seed, "Seed for random validation inputs")->capture_default_str();
  analyze->add_flag("--atomic-writes", cfg.atomic_writes, "One transition per written byte");
  analyze->add_flag("--enable-scanf-patch", cfg.enable_scanf_patch, "Allow the bounded-width scanf template");
  analyze->add_option("--export-memstace", export_path, "Write the state space (.json or DOT; directory for batches)");
  analyze->add_flag("--patch", opts.patch, "Patch every located sink");
  analyze->add_flag("--patch-all-sinks", opts.patch_all,
                    "Also patch dangerous calls no violation blames (implies --patch)");
  analyze->add_option("--out", out_dir, "Directory for patched listings");
  analyze->add_flag("--validate", opts.validate, "Run original and patched programs on crash or random inputs");
  analyze->add_option("--report", report, "Report format")->check(CLI::IsMember({"json", "text"}));
  analyze->add_option("--timeout", cfg.timeout_seconds, "Seconds per binary (0 = none)")->capture_default_str();
  analyze->add_option("--ground-truth", ground_truth, "Manifest with expected labels; adds detection metrics");
  analyze->add_option("--output", output, "Write the report to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (!props.empty()) cfg.props_path = props;
    if (!templates.empty()) cfg.templates_dir = templates;
    if (!libc_db.empty()) cfg.libc_db_path = libc_db;
    if (!buffers.empty()) cfg.buffers_path = buffers;
    if (!entry.empty()) cfg.entry = entry;
    if (!export_path.empty()) opts.export_memstace = export_path;
    if (!out_dir.empty()) {
      opts.out_dir = out_dir;
      opts.patch = true;
    }
    if (opts.validate || opts.patch_all) opts.patch = true;

    auto inputs = expand_inputs(paths);
    // A batch exports one file pair per listing into a directory.
    if (inputs.size() > 1 && opts.export_memstace && opts.export_memstace->back() != '/') {
      fs::create_directories(*opts.export_memstace);
      *opts.export_memstace += "/";
    }

    basics::Analyzer analyzer(opts);
    std::vector<basics::BinaryReport> reports;
    for (const auto& p : inputs) reports.push_back(analyzer.analyze_file(p));

    std::optional<basics::Metrics> metrics;
    if (!ground_truth.empty()) metrics = basics::report_metrics(reports, load_ground_truth(ground_truth));

    std::string text = report == "json" ? basics::report_json(reports, true, metrics)
                                        : basics::report_text(reports, metrics);
    if (output.empty()) {
      std::cout << text;
    } else {
      std::ofstream out(output, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + output);
      out << text;
    }
    return basics::exit_code(reports);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
