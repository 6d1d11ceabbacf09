#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "basics/pipeline.hpp"
#include "json.hpp"
#include "schema_check.hpp"
#include "support.hpp"

using namespace basics;
using testing_support::corpus_dir;
using testing_support::corpus_manifest;
using testing_support::corpus_text;
using testing_support::docs_dir;

namespace fs = std::filesystem;

namespace {

testing_support::SchemaCheck report_schema() {
  return testing_support::SchemaCheck(
      nlohmann::json::parse(read_file((docs_dir() / "report.schema.json").string())));
}

std::vector<BinaryReport> analyze_corpus(const AnalysisOptions& opts) {
  Analyzer a(opts);
  std::vector<BinaryReport> out;
  for (const auto& c : corpus_manifest()) out.push_back(a.analyze_file((corpus_dir() / c.file).string()));
  return out;
}

}  // namespace

TEST(Metrics, ConfusionFormulas) {
  Metrics m = compute_metrics(95, 17, 36, 3);
  EXPECT_NEAR(m.precision, 95.0 / 112.0, 1e-12);
  EXPECT_NEAR(m.recall, 95.0 / 98.0, 1e-12);
  EXPECT_NEAR(m.accuracy, 131.0 / 151.0, 1e-12);
  double p = 95.0 / 112.0, r = 95.0 / 98.0;
  EXPECT_NEAR(m.f1, 2 * p * r / (p + r), 1e-12);
  // Published rounding of the same counts.
  EXPECT_NEAR(m.precision, 0.848, 5e-4);
  EXPECT_NEAR(m.recall, 0.969, 5e-4);
}

TEST(Metrics, AllCorrectAndEmpty) {
  Metrics m = compute_metrics(4, 0, 5, 0);
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(m.precision, 1.0);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
  EXPECT_DOUBLE_EQ(m.f1, 1.0);
  Metrics z = compute_metrics(0, 0, 0, 0);
  EXPECT_DOUBLE_EQ(z.precision, 0.0);
  EXPECT_DOUBLE_EQ(z.recall, 0.0);
  EXPECT_DOUBLE_EQ(z.f1, 0.0);
  EXPECT_DOUBLE_EQ(z.accuracy, 0.0);
}

TEST(Metrics, ReportsAgainstLabels) {
  BinaryReport v, c, u;
  v.name = "v";
  v.vulnerable = true;
  c.name = "c";
  u.name = "unlabelled";
  u.vulnerable = true;
  Metrics m = report_metrics({v, c, u}, {{"v", true}, {"c", true}});
  EXPECT_EQ(m.tp, 1u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_EQ(m.fp + m.tn, 0u);
}

TEST(Analyze, CleanFixtureHoldsEverythingAndExitsZero) {
  Analyzer a({});
  BinaryReport r = a.analyze_text(corpus_text("strcpy_const_clean.asm"), "clean");
  ASSERT_TRUE(r.ok) << r.error;
  EXPECT_EQ(r.verdicts.size(), 7u);
  for (const auto& v : r.verdicts) EXPECT_EQ(v.status, VerdictStatus::Holds) << v.property;
  EXPECT_FALSE(r.vulnerable);
  EXPECT_TRUE(r.sinks.empty());
  EXPECT_EQ(exit_code({r}), 0);
}

TEST(Analyze, CopyListingIsPatchedAndValidated) {
  AnalysisOptions opts;
  opts.validate = true;
  opts.patch = true;
  opts.cfg.entry = "copy";
  Analyzer a(opts);
  BinaryReport r = a.analyze_text(testing_support::copy_listing(), "copy_strcpy");
  ASSERT_TRUE(r.ok) << r.error;
  const Verdict* rip = r.verdict("RIP Integrity");
  ASSERT_NE(rip, nullptr);
  EXPECT_EQ(rip->status, VerdictStatus::Violated);
  EXPECT_EQ(rip->cwes, (std::vector<std::string>{"CWE-121", "CWE-787"}));
  ASSERT_EQ(r.sinks.size(), 1u);
  EXPECT_EQ(r.sinks[0].sink.callee, "strcpy");
  ASSERT_TRUE(r.sinks[0].plan.has_value());
  ASSERT_TRUE(r.sinks[0].validation.has_value());
  EXPECT_TRUE(r.sinks[0].validation->success);
  EXPECT_EQ(exit_code({r}), 1);
}

TEST(Analyze, FailuresStayWithTheirBinary) {
  Analyzer a({});
  std::vector<BinaryReport> rs;
  rs.push_back(a.analyze_text("main:\n  zz: ???\n", "broken"));
  rs.push_back(a.analyze_text(corpus_text("gets_vuln.asm"), "gets_vuln"));
  rs.push_back(a.analyze_file((corpus_dir() / "no_such_file.asm").string()));
  EXPECT_FALSE(rs[0].ok);
  EXPECT_NE(rs[0].error.find("MalformedLine"), std::string::npos);
  EXPECT_TRUE(rs[1].ok);
  EXPECT_TRUE(rs[1].vulnerable);
  EXPECT_FALSE(rs[2].ok);
  EXPECT_EQ(exit_code(rs), 2);
  auto doc = nlohmann::json::parse(report_json(rs));
  EXPECT_EQ(doc["summary"]["errors"], 2);
  EXPECT_EQ(doc["summary"]["vulnerable"], 1);
  EXPECT_EQ(doc["summary"]["exit_code"], 2);
}

TEST(Analyze, ExtraPropertiesOverrideAndExtend) {
  fs::path dir = fs::temp_directory_path() / "basics_props_test";
  fs::create_directories(dir);
  fs::path file = dir / "extra.ltl";
  {
    std::ofstream out(file);
    out << "property \"No strcpy\" {\n  ltl: G (previous_transition != call_strcpy)\n  cwe: [CWE-120]\n}\n";
  }
  AnalysisOptions opts;
  opts.cfg.props_path = file.string();
  Analyzer a(opts);
  EXPECT_EQ(a.monitors().size(), 8u);
  BinaryReport r = a.analyze_text(corpus_text("strcpy_const_clean.asm"), "x");
  const Verdict* v = r.verdict("No strcpy");
  ASSERT_NE(v, nullptr);
  EXPECT_EQ(v->status, VerdictStatus::Violated);
  EXPECT_EQ(v->cwes, std::vector<std::string>{"CWE-120"});
  fs::remove_all(dir);
}

TEST(Analyze, ExportsStateSpaceFiles) {
  fs::path dir = fs::temp_directory_path() / "basics_export_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  AnalysisOptions opts;
  opts.export_memstace = dir.string() + "/";
  Analyzer a(opts);
  a.analyze_text(corpus_text("gets_vuln.asm"), "gets_vuln");
  EXPECT_TRUE(fs::exists(dir / "gets_vuln.dot"));
  EXPECT_TRUE(fs::exists(dir / "gets_vuln.json"));
  EXPECT_NO_THROW(nlohmann::json::parse(read_file((dir / "gets_vuln.json").string())));
  fs::remove_all(dir);
}

TEST(Report, EveryFixtureConformsToTheSchema) {
  AnalysisOptions opts;
  opts.validate = true;
  opts.patch_all = true;
  opts.patch = true;
  auto reports = analyze_corpus(opts);
  std::map<std::string, bool> truth;
  for (const auto& c : corpus_manifest()) truth[c.name] = c.vulnerable;
  Metrics m = report_metrics(reports, truth);
  auto schema = report_schema();
  for (const auto& r : reports) {
    auto doc = nlohmann::json::parse(report_json({r}));
    auto errors = schema.validate(doc);
    EXPECT_TRUE(errors.empty()) << r.name << ": " << (errors.empty() ? "" : errors.front());
  }
  auto all = nlohmann::json::parse(report_json(reports, true, m));
  EXPECT_TRUE(schema.validate(all).empty());
  EXPECT_EQ(all["schema"], kReportSchema);
  // Every violated property carries a trace.
  for (const auto& b : all["binaries"])
    for (const auto& p : b["properties"])
      if (p["status"] == "violated") { EXPECT_FALSE(p["trace"].is_null()) << b["name"] << " " << p["name"]; }
}

TEST(Report, SchemaRejectsBrokenDocuments) {
  auto schema = report_schema();
  Analyzer a({});
  auto doc = nlohmann::json::parse(report_json({a.analyze_text(corpus_text("gets_vuln.asm"), "g")}));
  ASSERT_TRUE(schema.validate(doc).empty());
  auto bad = doc;
  bad["binaries"][0]["properties"][0]["status"] = "maybe";
  EXPECT_FALSE(schema.validate(bad).empty());
  bad = doc;
  bad["binaries"][0].erase("sinks");
  EXPECT_FALSE(schema.validate(bad).empty());
  bad = doc;
  bad["surprise"] = 1;
  EXPECT_FALSE(schema.validate(bad).empty());
}

TEST(Report, IdenticalModuloTimings) {
  AnalysisOptions opts;
  opts.validate = true;
  opts.patch = true;
  auto a = report_json(analyze_corpus(opts), false);
  auto b = report_json(analyze_corpus(opts), false);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.find("seconds"), std::string::npos);
}

TEST(Report, TextFormSummarizesVerdicts) {
  Analyzer a({});
  std::string text = report_text({a.analyze_text(corpus_text("gets_vuln.asm"), "gets_vuln")});
  EXPECT_NE(text.find("[violated] No gets"), std::string::npos);
  EXPECT_NE(text.find("verdict: VULNERABLE"), std::string::npos);
  EXPECT_NE(text.find("call 0x401050 <gets@plt> -> Call[main]"), std::string::npos);
}
