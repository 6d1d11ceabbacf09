// Acceptance gate: prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "basics/error.hpp"
#include "support.hpp"

using namespace basics;
using namespace testing_support;

namespace {

// Pinned limits.
constexpr double kAutomatonSeconds = 1.0;
constexpr double kCopyChainSeconds = 5.0;
constexpr double kCorpusSeconds = 60.0;
constexpr double kMinPrecision = 1.0;
constexpr double kMinRecall = 0.90;
constexpr int kRandomTraces = 1000;
constexpr std::size_t kBruteForceDepth = 20;

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<Monitor> bundled_monitors() {
  std::vector<Monitor> out;
  for (const auto& p : bundled_properties()) out.push_back(compile_monitor(p));
  return out;
}

std::vector<BinaryReport> analyze_corpus(const AnalysisOptions& opts) {
  Analyzer a(opts);
  std::vector<BinaryReport> out;
  for (const auto& c : corpus_manifest()) out.push_back(a.analyze_file((corpus_dir() / c.file).string()));
  return out;
}

Outcome ac1_byte_automaton() {
  auto t0 = Clock::now();
  using S = ByteState;
  // Expected table, written independently of the implementation.
  const std::map<std::pair<S, ByteOp>, std::optional<S>> want = {
      {{S::Free, ByteOp::nRWrite}, S::Occupied},     {{S::Free, ByteOp::RWrite}, S::Critical},
      {{S::Occupied, ByteOp::nRWrite}, S::Modified}, {{S::Occupied, ByteOp::RWrite}, std::nullopt},
      {{S::Critical, ByteOp::nRWrite}, S::Modified}, {{S::Critical, ByteOp::RWrite}, std::nullopt},
      {{S::Modified, ByteOp::nRWrite}, S::Modified}, {{S::Modified, ByteOp::RWrite}, std::nullopt}};
  int legal = 0, errors = 0, mismatches = 0;
  for (const auto& [key, to] : want) {
    std::optional<S> got;
    try {
      got = byte_transition(key.first, key.second);
      ++legal;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::IllegalByteTransition) ++errors;
    }
    if (got != to) ++mismatches;
  }
  double secs = since(t0);
  return {mismatches == 0 && legal == 5 && errors == 3 && secs < kAutomatonSeconds,
          std::to_string(legal) + " legal, " + std::to_string(errors) + " errors, " + std::to_string(mismatches) +
              " mismatches, " + fmt("%.4f s", secs)};
}

Outcome ac2_copy_chain() {
  auto t0 = Clock::now();
  Built b = build(copy_listing(), "copy");
  const MemStaCe& s = b.space;
  Monitor rip = compile_monitor(bundled_properties().front());
  Verdict v = check(s, rip);
  std::vector<std::string> problems;
  if (v.status != VerdictStatus::Violated || !v.trace) {
    problems.push_back("RIP Integrity not violated");
  } else {
    const Trace& tr = *v.trace;
    if (tr.steps.size() != 5) problems.push_back(std::to_string(tr.steps.size()) + " steps");
    auto snap = [&](std::size_t k) { return render_frame(s.states[tr.states[k]].frames.back()); };
    if (tr.steps.size() == 5) {
      if (snap(1) != "0..15:C") problems.push_back("after push: " + snap(1));
      if (snap(2) != "0..15:C 16..47:F") problems.push_back("after sub: " + snap(2));
      if (snap(5).rfind("0..15:M ", 0) != 0) problems.push_back("after strcpy: " + snap(5));
      const TraceStep& last = tr.steps.back();
      if (last.label.kind != LabelKind::Call || last.label.callee != "strcpy") problems.push_back("last step");
    }
  }
  double secs = since(t0);
  if (secs >= kCopyChainSeconds) problems.push_back("too slow");
  std::string detail = problems.empty() ? "5-step trace, snapshots match" : problems.front();
  return {problems.empty(), detail + ", " + fmt("%.3f s", secs)};
}

Outcome ac3_monitor() {
  Monitor m = compile_monitor(bundled_properties().front());
  Monitor pos = m.positive();
  bool shape = m.states.size() == 2 && m.edges.size() == 3 && m.accepting.size() == 1 &&
               m.accepting[0] != m.initial && pos.states.size() == 1 && pos.edges.size() == 1 &&
               pos.edges[0].from == 0 && pos.edges[0].to == 0;
  std::mt19937_64 rng(0xac3);
  std::size_t disagreements = 0, traces = 0;
  for (const auto& [name, oracle] : property_oracles()) {
    Monitor mon;
    for (const auto& p : bundled_properties())
      if (p.name == name) mon = compile_monitor(p);
    for (int t = 0; t < kRandomTraces; ++t, ++traces) {
      std::size_t len = 1 + rng() % 8, s = mon.initial;
      std::optional<std::size_t> first_reject, first_false;
      for (std::size_t k = 0; k < len; ++k) {
        MemoryState st = random_state(rng);
        s = mon.step(s, st);
        if (mon.is_accepting(s) && !first_reject) first_reject = k;
        if (!oracle(st) && !first_false) first_false = k;
      }
      if (first_reject != first_false) ++disagreements;
    }
  }
  return {shape && disagreements == 0, std::string(shape ? "shape ok" : "shape wrong") + ", " +
                                           std::to_string(traces) + " random traces, " +
                                           std::to_string(disagreements) + " disagreements"};
}

Outcome ac4_properties(const std::vector<BinaryReport>& reports) {
  std::size_t compiled = 0;
  for (const auto& p : bundled_properties()) {
    compile_monitor(p);
    ++compiled;
  }
  std::map<std::string, std::pair<int, int>> seen;  // violated, holds
  for (const auto& r : reports)
    for (const auto& v : r.verdicts) {
      if (v.status == VerdictStatus::Violated) ++seen[v.property].first;
      if (v.status == VerdictStatus::Holds) ++seen[v.property].second;
    }
  std::vector<std::string> missing;
  for (const auto& p : bundled_properties())
    if (seen[p.name].first == 0 || seen[p.name].second == 0) missing.push_back(p.name);
  return {compiled == 7 && missing.empty(),
          std::to_string(compiled) + " properties compiled" +
              (missing.empty() ? ", each violated and held in the corpus" : ", not exercised: " + missing.front())};
}

Outcome ac5_detection(const std::vector<BinaryReport>& reports, double secs) {
  std::map<std::string, bool> truth;
  for (const auto& c : corpus_manifest()) truth[c.name] = c.vulnerable;
  Metrics m = report_metrics(reports, truth);
  bool pass = reports.size() == 24 && m.tp + m.fp + m.tn + m.fn == 24 && m.precision >= kMinPrecision &&
              m.recall >= kMinRecall && secs < kCorpusSeconds;
  std::ostringstream d;
  d << "TP=" << m.tp << " FP=" << m.fp << " TN=" << m.tn << " FN=" << m.fn << ", precision "
    << fmt("%.3f", m.precision) << ", recall " << fmt("%.3f", m.recall) << ", " << fmt("%.2f s", secs);
  return {pass, d.str()};
}

Outcome ac6_patching(const std::vector<BinaryReport>& reports) {
  static const std::set<std::string> patchable = {"strcpy", "strcat", "sprintf", "gets"};
  std::size_t total = 0, ok = 0, clean_pairs = 0;
  std::string first_failure;
  for (const auto& r : reports)
    for (const auto& s : r.sinks) {
      if (!patchable.count(s.sink.callee)) continue;
      ++total;
      bool good = s.plan && s.validation && s.validation->success;
      if (good) ++ok;
      else if (first_failure.empty()) first_failure = r.name + " @" + std::to_string(s.sink.address);
      if (good && !r.vulnerable) ++clean_pairs;
    }
  std::string d = std::to_string(ok) + "/" + std::to_string(total) + " patched sinks validated (" +
                  std::to_string(clean_pairs) + " in clean cases)";
  if (!first_failure.empty()) d += ", first failure " + first_failure;
  return {total > 0 && ok == total && clean_pairs > 0, d};
}

Outcome ac7_oracle_equivalence() {
  auto mons = bundled_monitors();
  std::size_t checks = 0, disagreements = 0, incomplete = 0;
  for (const auto& c : corpus_manifest()) {
    Built b = build(corpus_text(c.file));
    for (const auto& m : mons) {
      CheckOptions opts;
      opts.max_depth = kBruteForceDepth;
      Verdict v = check(b.space, m, opts);
      BruteForceResult bf = brute_force_check(b.space, m, kBruteForceDepth);
      ++checks;
      if (!bf.complete) ++incomplete;
      if ((v.status == VerdictStatus::Violated) != (bf.status == VerdictStatus::Violated)) ++disagreements;
    }
  }
  return {disagreements == 0 && incomplete == 0,
          std::to_string(checks) + " fixture/property pairs, " + std::to_string(disagreements) + " disagreements"};
}

Outcome ac8_crash_inputs(const std::vector<BinaryReport>& reports) {
  std::map<std::string, CorpusCase> cases;
  for (const auto& c : corpus_manifest()) cases[c.name] = c;
  std::size_t total = 0, ok = 0;
  std::string first_failure;
  for (const auto& r : reports) {
    const CorpusCase& c = cases.at(r.name);
    if (!c.input_source || !c.vulnerable) continue;
    ++total;
    const Verdict* canary = r.verdict("Canary Integrity");
    CrashCause want = canary && canary->status == VerdictStatus::Violated ? CrashCause::CanaryMismatch
                                                                          : CrashCause::ReturnAddressCorrupted;
    bool good = false;
    for (const auto& s : r.sinks) {
      if (!s.crash_input || !s.validation || s.validation->source != "concolic") continue;
      const ValidationTrial& t = s.validation->first();
      good = t.original.crashed() && t.original.cause == want && t.patched.clean();
      if (good) break;
    }
    if (good) ++ok;
    else if (first_failure.empty()) first_failure = r.name;
  }
  std::string d = std::to_string(ok) + "/" + std::to_string(total) + " input-source fixtures crash as predicted";
  if (!first_failure.empty()) d += ", first failure " + first_failure;
  return {total > 0 && ok == total, d};
}

Outcome ac9_determinism(const AnalysisOptions& opts, const std::vector<BinaryReport>& first) {
  std::string a = report_json(first, false);
  std::string b = report_json(analyze_corpus(opts), false);
  return {a == b, a == b ? "reports byte-identical (" + std::to_string(a.size()) + " bytes)" : "reports differ"};
}

}  // namespace

int main() {
  AnalysisOptions opts;
  opts.patch = true;
  opts.patch_all = true;
  opts.validate = true;

  std::vector<BinaryReport> reports;
  double corpus_secs = 0;

  auto guarded = [](const std::function<Outcome()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };

  std::vector<std::pair<std::string, Outcome>> results;
  results.emplace_back("AC1 byte automaton", guarded(ac1_byte_automaton));
  results.emplace_back("AC2 copy chain and trace", guarded(ac2_copy_chain));
  results.emplace_back("AC3 monitor shape", guarded(ac3_monitor));
  Outcome corpus_run = guarded([&] {
    auto t0 = Clock::now();
    reports = analyze_corpus(opts);
    corpus_secs = since(t0);
    return Outcome{true, ""};
  });
  if (!corpus_run.pass) {
    for (const char* name : {"AC4 properties exercised", "AC5 corpus detection", "AC6 patch validation",
                             "AC8 crash inputs", "AC9 determinism"})
      results.emplace_back(name, corpus_run);
  } else {
    results.emplace_back("AC4 properties exercised", guarded([&] { return ac4_properties(reports); }));
    results.emplace_back("AC5 corpus detection", guarded([&] { return ac5_detection(reports, corpus_secs); }));
    results.emplace_back("AC6 patch validation", guarded([&] { return ac6_patching(reports); }));
    results.emplace_back("AC8 crash inputs", guarded([&] { return ac8_crash_inputs(reports); }));
    results.emplace_back("AC9 determinism", guarded([&] { return ac9_determinism(opts, reports); }));
  }
  results.emplace_back("AC7 checker vs path enumeration", guarded(ac7_oracle_equivalence));
  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  bool all = true;
  for (const auto& [name, r] : results) {
    std::printf("%s %s: %s\n", r.pass ? "PASS" : "FAIL", name.c_str(), r.detail.c_str());
    all = all && r.pass;
  }
  std::printf("%s\n", all ? "all criteria pass" : "some criteria fail");
  return all ? 0 : 1;
}
