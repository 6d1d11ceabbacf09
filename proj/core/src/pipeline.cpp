#include "basics/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "basics/error.hpp"
#include "basics/frontend.hpp"

namespace basics {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

std::string hex(Address a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(a));
  return buf;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

void write_file(const fs::path& p, const std::string& data) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + p.string());
  out << data;
}

void add_note(std::vector<std::string>& notes, const std::string& s) {
  if (std::find(notes.begin(), notes.end(), s) == notes.end()) notes.push_back(s);
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const Verdict* BinaryReport::verdict(const std::string& property) const {
  for (const auto& v : verdicts)
    if (v.property == property) return &v;
  return nullptr;
}

Analyzer::Analyzer(AnalysisOptions opts) : opts_(std::move(opts)), libc_(LibcDatabase::bundled()) {
  const Config& cfg = opts_.cfg;
  cfg.validate();
  props_ = bundled_properties();
  if (cfg.props_path) props_ = merge_properties(std::move(props_), parse_property_file(read_file(*cfg.props_path)));
  for (const auto& p : props_) {
    Monitor m = compile_monitor(p);
    if (m.cwes.empty()) m.cwes = map_cwe(p.name, props_);
    monitors_.push_back(std::move(m));
  }
  templates_ = TemplateLibrary::bundled();
  if (cfg.templates_dir) templates_.merge(TemplateLibrary::from_directory(*cfg.templates_dir));
  if (cfg.libc_db_path) libc_.merge(LibcDatabase::from_json(read_file(*cfg.libc_db_path)));
  if (cfg.buffers_path) hints_ = BufferHints::from_json(read_file(*cfg.buffers_path));
}

BinaryReport Analyzer::analyze_file(const std::string& path) const {
  std::string name = fs::path(path).stem().string();
  try {
    return analyze_text(read_file(path), name, path);
  } catch (const std::exception& e) {
    BinaryReport r;
    r.name = name;
    r.path = path;
    r.ok = false;
    r.error = e.what();
    return r;
  }
}

BinaryReport Analyzer::analyze_text(const std::string& text, const std::string& name, const std::string& path) const {
  const Config& cfg = opts_.cfg;
  const auto t0 = Clock::now();
  BinaryReport rep;
  rep.name = name;
  rep.path = path;
  try {
    ProgramImage image = parse_disassembly(text);
    for (const auto& w : image.warnings) add_note(rep.notes, "line " + std::to_string(w.line) + ": " + w.message);
    BCfg bcfg = build_bcfg(image);
    for (const auto& w : bcfg.warnings) add_note(rep.notes, w);
    for (const auto& s : bcfg.external_sinks) add_note(rep.notes, "external transfer at " + hex(s.site) + ": " + s.reason);
    FunctionMap funcs = extract_user_functions(bcfg, image);
    auto root = cfg.entry ? cfg.entry : image.entry_function();
    if (!root || !image.find_function(*root)) throw Error(ErrorKind::TargetUnreachable, "no entry function");
    rep.root = *root;

    LoopAnalysis loops = detect_loops(bcfg);
    for (const auto& n : loops.notes) add_note(rep.notes, n);

    std::optional<Clock::time_point> deadline;
    if (cfg.timeout_seconds > 0)
      deadline = t0 + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(cfg.timeout_seconds));
    auto expired = [deadline] { return deadline && Clock::now() >= *deadline; };

    EffectsOracle effects(image, libc_, cfg, *root, loops.loops);
    BuildOptions bo;
    bo.hints = hints_;
    bo.cancelled = expired;
    auto space = std::make_shared<MemStaCe>(build_memstace(bcfg, funcs, image, loops, effects, cfg, *root, bo));
    rep.build_seconds = seconds_since(t0);
    rep.states = space->states.size();
    rep.transitions = space->transitions.size();
    rep.emulations = effects.emulations();
    rep.truncated = space->truncated;
    rep.timed_out = expired();
    for (const auto& n : space->notes) add_note(rep.notes, n);
    rep.space = space;

    const auto t1 = Clock::now();
    for (const auto& m : monitors_) {
      if (expired()) {
        rep.timed_out = true;
        Verdict v;
        v.property = m.property;
        v.cwes = m.cwes;
        v.status = VerdictStatus::Inconclusive;
        v.vacuity.push_back("not checked: timeout");
        rep.verdicts.push_back(std::move(v));
        continue;
      }
      rep.verdicts.push_back(check(*space, m));
    }
    rep.verify_seconds = seconds_since(t1);
    rep.vulnerable = std::any_of(rep.verdicts.begin(), rep.verdicts.end(),
                                 [](const Verdict& v) { return v.status == VerdictStatus::Violated; });

    // Sinks, one per distinct site.
    for (const auto& v : rep.verdicts) {
      if (v.status != VerdictStatus::Violated || !v.trace) continue;
      SinkSite sink;
      try {
        sink = locate_sink(*v.trace, bcfg, funcs, image);
      } catch (const Error& e) {
        add_note(rep.notes, v.property + ": " + e.what());
        continue;
      }
      auto it = std::find_if(rep.sinks.begin(), rep.sinks.end(),
                             [&](const SinkReport& s) { return s.sink.address == sink.address; });
      if (it == rep.sinks.end()) {
        SinkReport sr;
        sr.sink = sink;
        sr.call_state = v.trace->states[sink.step];
        rep.sinks.push_back(std::move(sr));
        it = rep.sinks.end() - 1;
      }
      it->properties.push_back(v.property);
      for (const auto& c : v.cwes)
        if (std::find(it->sink.cwes.begin(), it->sink.cwes.end(), c) == it->sink.cwes.end()) it->sink.cwes.push_back(c);
      for (const auto& [key, eff] : space->effects)
        if (key.first == sink.address && eff.crash_input && !it->crash_input) it->crash_input = eff.crash_input;
    }

    if (opts_.patch_all) {
      for (const auto& tr : space->transitions) {
        if (tr.label.kind != LabelKind::Call) continue;
        const std::string& callee = tr.label.callee;
        if (!templates_.find(callee, PatchMode::Static) && !templates_.find(callee, PatchMode::Runtime)) continue;
        if (std::any_of(rep.sinks.begin(), rep.sinks.end(),
                        [&](const SinkReport& s) { return s.sink.address == tr.label.address; }))
          continue;
        SinkReport sr;
        sr.sink.address = tr.label.address;
        sr.sink.callee = callee;
        if (auto f = funcs.function_containing(image, tr.label.address)) sr.sink.function = *f;
        sr.call_state = tr.src;
        for (const auto& [key, eff] : space->effects)
          if (key.first == sr.sink.address && eff.crash_input) {
            sr.crash_input = eff.crash_input;
            break;
          }
        rep.sinks.push_back(std::move(sr));
      }
      std::sort(rep.sinks.begin(), rep.sinks.end(),
                [](const SinkReport& a, const SinkReport& b) { return a.sink.address < b.sink.address; });
    }

    if (opts_.patch || opts_.validate || opts_.patch_all) {
      ProgramImage patched = image;
      for (auto& s : rep.sinks) {
        try {
          const MemoryState& call_state = space->states[s.call_state];
          CallEffect eff;
          for (const auto& [key, e] : space->effects)
            if (key.first == s.sink.address) {
              eff = e;
              break;
            }
          const LibcSpec* spec = libc_.find(s.sink.callee);
          if (!spec) throw Error(ErrorKind::NoTemplate, "no database entry for " + s.sink.callee);
          CallArgs args = recover_arguments(bcfg, s.sink.address, *spec, cfg.arg_search_depth);
          PatchPlan plan = select_template(s.sink, eff, args, templates_, &call_state, cfg);
          PatchResult pr = apply_trampoline(patched, plan);
          patched = std::move(pr.image);
          s.trampoline = pr.label;
          for (const auto& n : pr.notes) plan.notes.push_back(n);
          s.plan = std::move(plan);
        } catch (const Error& e) {
          s.patch_error = e.what();
        }
      }
      if (opts_.validate) {
        for (auto& s : rep.sinks) {
          if (!s.plan) continue;
          s.validation = validate_patch(image, patched, s.crash_input, cfg, libc_, rep.root);
        }
      }
      if (std::any_of(rep.sinks.begin(), rep.sinks.end(), [](const SinkReport& s) { return s.plan.has_value(); }))
        rep.patched = std::move(patched);
    }

    if (opts_.out_dir && rep.patched) write_file(fs::path(*opts_.out_dir) / (name + ".patched.asm"), rep.patched->serialize());
    if (opts_.export_memstace) {
      fs::path p(*opts_.export_memstace);
      std::error_code ec;
      bool dir = fs::is_directory(p, ec) || opts_.export_memstace->back() == '/';
      if (dir) {
        write_file(p / (name + ".dot"), space->to_dot());
        write_file(p / (name + ".json"), space->to_json());
      } else {
        write_file(p, p.extension() == ".json" ? space->to_json() : space->to_dot());
      }
    }
  } catch (const std::exception& e) {
    rep.ok = false;
    rep.error = e.what();
  }
  rep.total_seconds = seconds_since(t0);
  return rep;
}

Metrics compute_metrics(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  Metrics m{tp, fp, tn, fn};
  auto ratio = [](double a, double b) { return b > 0 ? a / b : 0.0; };
  m.accuracy = ratio(static_cast<double>(tp + tn), static_cast<double>(tp + tn + fp + fn));
  m.precision = ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
  m.recall = ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
  m.f1 = ratio(2 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

Metrics report_metrics(const std::vector<BinaryReport>& reports, const std::map<std::string, bool>& vulnerable) {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& r : reports) {
    auto it = vulnerable.find(r.name);
    if (it == vulnerable.end()) continue;
    bool predicted = r.ok && r.vulnerable;
    if (it->second) (predicted ? tp : fn)++;
    else (predicted ? fp : tn)++;
  }
  return compute_metrics(tp, fp, tn, fn);
}

int exit_code(const std::vector<BinaryReport>& reports) {
  bool vuln = false;
  for (const auto& r : reports) {
    if (!r.ok) return 2;
    vuln = vuln || r.vulnerable;
  }
  return vuln ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

using ojson = nlohmann::ordered_json;

ojson trace_json(const Trace& tr, const MemStaCe* space) {
  ojson steps = ojson::array();
  for (const auto& s : tr.steps) {
    ojson d = ojson::array();
    for (const auto& x : s.deltas) {
      std::string frame = "?";
      if (space) {
        const Transition& t = space->transitions[s.transition];
        const auto& fr = x.frame < space->states[t.dst].frames.size() ? space->states[t.dst].frames
                                                                       : space->states[t.src].frames;
        if (x.frame < fr.size()) frame = fr[x.frame].label;
      }
      d.push_back({{"frame", frame},
                   {"index", x.index},
                   {"before", x.before ? std::string(1, short_name(*x.before)) : "_"},
                   {"after", x.after ? std::string(1, short_name(*x.after)) : "_"}});
    }
    steps.push_back({{"address", hex(s.address)},
                     {"instruction", s.text},
                     {"operation", s.label.name()},
                     {"deltas", std::move(d)},
                     {"line", s.rendered}});
  }
  return steps;
}

ojson run_json(const RunOutcome& r) {
  return {{"status", to_string(r.status)},
          {"cause", to_string(r.cause)},
          {"steps", r.steps},
          {"exit_code", r.exit_code},
          {"stdout", r.stdout_data}};
}

ojson input_json(const ProgramInput& in) { return {{"stdin", in.stdin_data}, {"argv", in.argv}}; }

ojson binary_json(const BinaryReport& r, bool timings) {
  ojson b;
  b["name"] = r.name;
  b["path"] = r.path;
  b["status"] = r.ok ? "ok" : "error";
  if (!r.ok) b["error"] = r.error;
  b["root"] = r.root;
  b["vulnerable"] = r.vulnerable;
  b["truncated"] = r.truncated;
  b["timed_out"] = r.timed_out;
  b["memstace"] = {{"states", r.states}, {"transitions", r.transitions}, {"emulations", r.emulations}};
  ojson props = ojson::array();
  for (const auto& v : r.verdicts) {
    ojson p;
    p["name"] = v.property;
    p["status"] = to_string(v.status);
    p["cwes"] = v.cwes;
    p["trace"] = v.trace ? trace_json(*v.trace, r.space.get()) : ojson(nullptr);
    p["vacuity"] = v.vacuity;
    props.push_back(std::move(p));
  }
  b["properties"] = std::move(props);
  ojson sinks = ojson::array();
  for (const auto& s : r.sinks) {
    ojson j;
    j["address"] = hex(s.sink.address);
    j["function"] = s.sink.function;
    j["callee"] = s.sink.callee;
    j["properties"] = s.properties;
    j["cwes"] = s.sink.cwes;
    if (s.crash_input) {
      j["crash_input"] = {{"stream", s.crash_input->stream == CrashInput::Stream::Stdin ? "stdin" : "argv"},
                          {"argv_index", s.crash_input->argv_index},
                          {"length", s.crash_input->length},
                          {"bytes", s.crash_input->bytes}};
    } else {
      j["crash_input"] = nullptr;
    }
    if (s.plan) {
      const PatchPlan& p = *s.plan;
      j["patch"] = {{"template", p.tpl.name},
                    {"mode", to_string(p.tpl.mode)},
                    {"replacement", p.tpl.replacement},
                    {"dest_offset", p.dest_offset ? ojson(*p.dest_offset) : ojson(nullptr)},
                    {"dest_size", p.dest_size ? ojson(*p.dest_size) : ojson(nullptr)},
                    {"bound", p.bound ? ojson(*p.bound) : ojson(nullptr)},
                    {"trampoline", s.trampoline},
                    {"notes", p.notes}};
    } else {
      j["patch"] = nullptr;
    }
    j["patch_error"] = s.patch_error ? ojson(*s.patch_error) : ojson(nullptr);
    if (s.validation) {
      const ValidationReport& v = *s.validation;
      ojson trials = ojson::array();
      for (const auto& t : v.trials)
        trials.push_back({{"input", input_json(t.input)},
                          {"original", run_json(t.original)},
                          {"patched", run_json(t.patched)},
                          {"success", t.success}});
      j["validation"] = {{"source", v.source}, {"success", v.success}, {"trials", trials}, {"notes", v.notes}};
    } else {
      j["validation"] = nullptr;
    }
    sinks.push_back(std::move(j));
  }
  b["sinks"] = std::move(sinks);
  b["notes"] = r.notes;
  if (timings)
    b["timings"] = {{"build_seconds", r.build_seconds},
                    {"verify_seconds", r.verify_seconds},
                    {"total_seconds", r.total_seconds}};
  return b;
}

}  // namespace

std::string report_json(const std::vector<BinaryReport>& reports, bool include_timings,
                        const std::optional<Metrics>& metrics) {
  ojson doc;
  doc["schema"] = kReportSchema;
  doc["tool"] = {{"name", "basics"}, {"version", "0.1.0"}};
  ojson bins = ojson::array();
  std::size_t vuln = 0, errors = 0;
  for (const auto& r : reports) {
    bins.push_back(binary_json(r, include_timings));
    if (!r.ok) ++errors;
    else if (r.vulnerable) ++vuln;
  }
  doc["binaries"] = std::move(bins);
  doc["summary"] = {{"binaries", reports.size()},
                    {"vulnerable", vuln},
                    {"clean", reports.size() - vuln - errors},
                    {"errors", errors},
                    {"exit_code", exit_code(reports)}};
  if (metrics) {
    doc["metrics"] = {{"tp", metrics->tp},
                      {"fp", metrics->fp},
                      {"tn", metrics->tn},
                      {"fn", metrics->fn},
                      {"accuracy", metrics->accuracy},
                      {"precision", metrics->precision},
                      {"recall", metrics->recall},
                      {"f1", metrics->f1}};
  }
  return doc.dump(2, ' ', false, ojson::error_handler_t::replace) + "\n";
}

std::string report_text(const std::vector<BinaryReport>& reports, const std::optional<Metrics>& metrics) {
  std::ostringstream out;
  for (const auto& r : reports) {
    out << "== " << r.name << (r.path.empty() ? "" : " (" + r.path + ")") << "\n";
    if (!r.ok) {
      out << "  error: " << r.error << "\n\n";
      continue;
    }
    out << "  root " << r.root << ", " << r.states << " states, " << r.transitions << " transitions"
        << (r.truncated ? " (truncated)" : "") << "\n";
    for (const auto& v : r.verdicts) {
      out << "  [" << to_string(v.status) << "] " << v.property;
      if (!v.cwes.empty()) {
        out << " (";
        for (std::size_t i = 0; i < v.cwes.size(); ++i) out << (i ? ", " : "") << v.cwes[i];
        out << ")";
      }
      out << "\n";
      if (v.trace)
        for (const auto& s : v.trace->steps) out << "      " << s.rendered << "\n";
    }
    for (const auto& s : r.sinks) {
      out << "  sink " << hex(s.sink.address) << " in " << s.sink.function << ": " << s.sink.callee << "\n";
      if (s.plan)
        out << "    patch " << s.plan->tpl.name << " via " << s.trampoline
            << (s.plan->bound ? ", bound " + std::to_string(*s.plan->bound) : std::string(", runtime bound")) << "\n";
      if (s.patch_error) out << "    no patch: " << *s.patch_error << "\n";
      if (s.validation) {
        const auto& t = s.validation->first();
        out << "    validation (" << s.validation->source << "): original " << to_string(t.original.status);
        if (t.original.crashed()) out << " " << to_string(t.original.cause);
        out << ", patched " << to_string(t.patched.status);
        if (t.patched.crashed()) out << " " << to_string(t.patched.cause);
        out << " -> " << (s.validation->success ? "success" : "failure") << "\n";
      }
    }
    for (const auto& n : r.notes) out << "  note: " << n << "\n";
    out << "  verdict: " << (r.vulnerable ? "VULNERABLE" : "clean") << "\n\n";
  }
  if (metrics) {
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "TP=%zu FP=%zu TN=%zu FN=%zu accuracy=%.3f precision=%.3f recall=%.3f f1=%.3f\n", metrics->tp,
                  metrics->fp, metrics->tn, metrics->fn, metrics->accuracy, metrics->precision, metrics->recall,
                  metrics->f1);
    out << buf;
  }
  return out.str();
}

}  // namespace basics
