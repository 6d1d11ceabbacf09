#include <benchmark/benchmark.h>

#include <algorithm>
#include <filesystem>

#include "basics/checker.hpp"
#include "basics/effects.hpp"
#include "basics/frontend.hpp"
#include "basics/memstace.hpp"
#include "basics/pipeline.hpp"

using namespace basics;

namespace {

const std::filesystem::path kCorpus = BASICS_CORPUS_DIR;

std::string fixture(const std::string& name) { return read_file((kCorpus / name).string()); }

struct Prepared {
  ProgramImage image;
  BCfg bcfg;
  FunctionMap funcs;
  LoopAnalysis loops;
};

Prepared prepare(const std::string& text) {
  Prepared p;
  p.image = parse_disassembly(text);
  p.bcfg = build_bcfg(p.image);
  p.funcs = extract_user_functions(p.bcfg, p.image);
  p.loops = detect_loops(p.bcfg);
  return p;
}

MemStaCe space_of(const Prepared& p, const Config& cfg = {}) {
  EffectsOracle effects(p.image, LibcDatabase::bundled(), cfg, "main", p.loops.loops);
  return build_memstace(p.bcfg, p.funcs, p.image, p.loops, effects, cfg, "main");
}

std::vector<std::string> corpus_files() {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(kCorpus))
    if (e.path().extension() == ".asm") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

static void BM_ParseListing(benchmark::State& state) {
  std::string text = fixture("strcpy_interproc_vuln.asm");
  for (auto _ : state) benchmark::DoNotOptimize(parse_disassembly(text));
}
BENCHMARK(BM_ParseListing);

static void BM_BuildStateSpace(benchmark::State& state) {
  Prepared p = prepare(fixture("gets_canary_vuln.asm"));
  for (auto _ : state) benchmark::DoNotOptimize(space_of(p));
}
BENCHMARK(BM_BuildStateSpace);

static void BM_BuildStateSpaceWithLoop(benchmark::State& state) {
  Prepared p = prepare(fixture("loop_offbyone_vuln.asm"));
  for (auto _ : state) benchmark::DoNotOptimize(space_of(p));
}
BENCHMARK(BM_BuildStateSpaceWithLoop);

static void BM_CheckBundledProperties(benchmark::State& state) {
  MemStaCe space = space_of(prepare(fixture("strcpy_canary_vuln.asm")));
  std::vector<Monitor> monitors;
  for (const auto& p : bundled_properties()) monitors.push_back(compile_monitor(p));
  for (auto _ : state)
    for (const auto& m : monitors) benchmark::DoNotOptimize(check(space, m));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(monitors.size()));
}
BENCHMARK(BM_CheckBundledProperties);

// Whole corpus; arg 0 detects only, arg 1 also patches and validates every sink.
static void BM_AnalyzeCorpus(benchmark::State& state) {
  AnalysisOptions opts;
  opts.patch_all = state.range(0) != 0;
  opts.validate = opts.patch = opts.patch_all;
  Analyzer analyzer(opts);
  auto files = corpus_files();
  for (auto _ : state)
    for (const auto& f : files) benchmark::DoNotOptimize(analyzer.analyze_file(f));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(files.size()));
}
BENCHMARK(BM_AnalyzeCorpus)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
