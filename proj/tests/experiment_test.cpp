#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "blab/experiment.hpp"
#include "blab/stats.hpp"

using namespace blab;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run_spec(const ExperimentSpec& spec) {
  std::ostringstream out, err;
  const int code = run(spec, out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "blab_experiment_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Run, BellmanEvalJson) {
  ExperimentSpec spec;
  spec.params = {2.0, 1.0, 4.0 / 3.0};
  const auto r = run_spec(spec);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_NEAR(j.at("s_p").get<double>(), 3.0, 1e-12);
  EXPECT_NEAR(j.at("omega").get<double>(), 1.5, 1e-12);
  EXPECT_NEAR(j.at("ratio").get<double>(), 0.75, 1e-15);
}

TEST(Run, ExitCodes) {
  ExperimentSpec bad;
  bad.params = {2.0, 2.0, 1.0};
  auto r = run_spec(bad);
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_EQ(json::parse(r.err).at("error"), "infeasible-moments");

  ExperimentSpec low_p;
  low_p.params = {1.005, 1.0, 2.0};
  EXPECT_EQ(run_spec(low_p).code, kExitUsage);

  ExperimentSpec tight;
  tight.params = {2.0, 1.0, 2.0};
  tight.tol = 1e-30;
  r = run_spec(tight);
  EXPECT_EQ(r.code, kExitNumeric);
  EXPECT_EQ(json::parse(r.err).at("error"), "numeric-failure");

  ExperimentSpec depth0;
  depth0.kind = ExperimentKind::extremal_search;
  depth0.params = {2.0, 1.0, 4.0 / 3.0};
  depth0.search = SearchConfig{.depth = 0};
  EXPECT_EQ(run_spec(depth0).code, kExitNumeric);

  ExperimentSpec no_search;
  no_search.kind = ExperimentKind::extremal_search;
  no_search.params = {2.0, 1.0, 4.0 / 3.0};
  EXPECT_EQ(run_spec(no_search).code, kExitUsage);
}

TEST(Run, ConcavityScanCsv) {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::concavity_scan;
  spec.params.p = 3.0;
  spec.scan = {1.1, 10.0, 5};
  const auto r = run_spec(spec);
  ASSERT_EQ(r.code, kExitOk);
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "t,G,second_diff");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 5);
}

TEST(Run, WeakTypeFuzz) {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::weak_type_fuzz;
  spec.tree = UniformTreeSpec{2, 4};
  spec.fuzz.count = 50;
  const auto r = run_spec(spec);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j.at("violations"), 0);
  EXPECT_LE(j.at("worst_ratio").get<double>(), 1.0 + 1e-12);
}

TEST(Run, SearchThenAudit) {
  const auto report_path = scratch("report.json");
  ExperimentSpec search;
  search.kind = ExperimentKind::extremal_search;
  search.params = {2.0, 1.0, 4.0 / 3.0};
  search.search = SearchConfig{.depth = 4, .restarts = 2, .max_iters = 30, .seed = 9};
  search.output_path = report_path.string();
  auto r = run_spec(search);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(r.out.empty());

  ExperimentSpec audit;
  audit.kind = ExperimentKind::extremal_audit;
  audit.audit_in = report_path.string();
  audit.audit_levels = {1, 2};
  r = run_spec(audit);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "node_id,level,mass,avg_phi,avg_phip,avg_maxenergy,dev_f,dev_F,dev_S,delta_slack");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 2 + 4);

  audit.audit_levels = {9};
  EXPECT_EQ(run_spec(audit).code, kExitUsage);
}

TEST(Run, TamperedReportFailsValidation) {
  const auto report = search_extremal({2.0, 1.0, 4.0 / 3.0}, SearchConfig{.depth = 3, .restarts = 1, .max_iters = 10});
  auto j = report_to_json(report);
  j["best"]["objective"] = 99.0;
  const auto path = scratch("tampered.json");
  write_atomic(path, dump_json(j));
  ExperimentSpec audit;
  audit.kind = ExperimentKind::extremal_audit;
  audit.audit_in = path.string();
  EXPECT_EQ(run_spec(audit).code, kExitInvariant);
}

TEST(ExperimentSpec, FromJson) {
  const auto s = experiment_from_json(json::parse(R"({
    "kind": "extremal-search",
    "params": {"p": 3, "f": 1, "F": 2},
    "search": {"depth": 5, "restarts": 2},
    "seed": 42,
    "output": {"path": "x.json", "format": "csv"}
  })"));
  EXPECT_EQ(s.kind, ExperimentKind::extremal_search);
  EXPECT_EQ(s.params.p, 3.0);
  ASSERT_TRUE(s.search.has_value());
  EXPECT_EQ(s.search->depth, 5);
  EXPECT_EQ(s.search->seed, 42u);
  EXPECT_EQ(s.effective_format(), OutputFormat::csv);
  EXPECT_EQ(s.output_path, "x.json");

  try {
    experiment_from_json(json::parse(R"({"kind": "nope"})"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_spec);
  }
}

TEST(WeakTypeSpike, RatioIsOne) {
  EXPECT_NEAR(weak_type_spike_probe(build_uniform_tree(2, 6)), 1.0, 1e-12);
  EXPECT_NEAR(weak_type_spike_probe(build_custom_tree({{{0.3, 0.7}}, {{0.2, 0.8}}})), 1.0, 1e-12);
}

TEST(WeakTypeFuzz, ConstantFunctionsAreTight) {
  const auto t = build_uniform_tree(2, 3);
  const auto c = TreeFunction::constant(t, 2.0);
  const auto w = weak_type_check(t, c, 2.0);
  EXPECT_EQ(w.lhs / w.rhs, 1.0);
}

TEST(Stats, Spearman) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{5, 6, 7, 8, 7};
  EXPECT_NEAR(spearman(x, x), 1.0, 1e-15);
  const std::vector<double> rev{5, 4, 3, 2, 1};
  EXPECT_NEAR(spearman(x, rev), -1.0, 1e-15);
  // ranks of y: 1, 2, 3.5, 5, 3.5
  EXPECT_NEAR(spearman(x, y), 0.8207826816681233, 1e-12);
  EXPECT_EQ(average_ranks(y), (std::vector<double>{1, 2, 3.5, 5, 3.5}));
}

TEST(Trend, AnalyzeSyntheticTrace) {
  SearchReport r;
  r.bellman = 3.0;
  const double gaps[] = {1.0, 0.5, 0.14, 0.1, 0.05};
  const double devs[] = {0.9, 0.6, 0.4, 0.3, 0.2};
  const double sets[] = {0.9, 0.8, 0.6, 0.5, 0.3};
  for (int i = 0; i < 5; ++i) {
    TraceEntry e;
    e.iter = i;
    e.gap = gaps[i];
    e.level1_max_dev = devs[i];
    e.levelset_mass = sets[i];
    r.trace.push_back(e);
  }
  const auto s = analyze_trend(r);
  ASSERT_TRUE(s.first_cross.has_value());
  EXPECT_EQ(*s.first_cross, 2u);
  EXPECT_EQ(s.near_extremal, 3u);
  EXPECT_TRUE(s.localization_trend());
  EXPECT_TRUE(s.levelset_trend());

  r.trace.erase(r.trace.begin() + 2, r.trace.end());
  const auto none = analyze_trend(r);
  EXPECT_FALSE(none.first_cross.has_value());
  EXPECT_FALSE(none.localization_trend());
}
