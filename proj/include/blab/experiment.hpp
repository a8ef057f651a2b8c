#pragma once

// Batch experiments: one JSON document (or the equivalent CLI flags) selects
// an operation, its inputs and where the result goes.

#include <cstdint>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "blab/bellman.hpp"
#include "blab/error.hpp"
#include "blab/extremal.hpp"
#include "blab/io.hpp"
#include "blab/maximal.hpp"
#include "blab/parallel.hpp"
#include "blab/rng.hpp"
#include "blab/stats.hpp"
#include "blab/tree.hpp"

namespace blab {

enum class ExperimentKind {
  bellman_eval,
  concavity_scan,
  weak_type_fuzz,
  extremal_search,
  extremal_audit,
  localization_trend,
};

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::bellman_eval: return "bellman-eval";
    case ExperimentKind::concavity_scan: return "concavity-scan";
    case ExperimentKind::weak_type_fuzz: return "weak-type-fuzz";
    case ExperimentKind::extremal_search: return "extremal-search";
    case ExperimentKind::extremal_audit: return "extremal-audit";
    case ExperimentKind::localization_trend: return "localization-trend";
  }
  return "unknown";
}

inline ExperimentKind experiment_kind_from_string(std::string_view s) {
  for (auto k : {ExperimentKind::bellman_eval, ExperimentKind::concavity_scan, ExperimentKind::weak_type_fuzz,
                 ExperimentKind::extremal_search, ExperimentKind::extremal_audit, ExperimentKind::localization_trend})
    if (to_string(k) == s) return k;
  fail(ErrorCode::invalid_spec, "unknown experiment kind '" + std::string(s) + "'");
}

enum class OutputFormat { json, csv };

inline OutputFormat output_format_from_string(std::string_view s) {
  if (s == "json") return OutputFormat::json;
  if (s == "csv") return OutputFormat::csv;
  fail(ErrorCode::invalid_spec, "format must be json or csv");
}

// ---------------------------------------------------------------------------
// Weak-type fuzzing
// ---------------------------------------------------------------------------

struct FuzzConfig {
  int count = 1000;
  int thresholds = 32;
  double tail_alpha = 1.5;  // Lomax shape of leaf values; smaller is heavier
  double zero_prob = 0.1;   // chance a leaf value is exactly zero
  std::uint64_t seed = 1;
};

struct FuzzResult {
  int cases = 0;
  long checks = 0;
  long violations = 0;
  double worst_ratio = 0.0;        // max lhs/rhs over all checks with rhs > 0
  double spike_ratio = 0.0;        // max lhs/rhs over single-spike functions
};

/// Heavy-tailed nonnegative leaf values, not all zero.
inline std::vector<double> heavy_tailed_values(std::size_t n, const FuzzConfig& cfg, Rng& rng) {
  std::vector<double> v(n);
  bool any = false;
  for (auto& x : v) {
    x = (rng.uniform() < cfg.zero_prob) ? 0.0 : rng.lomax(cfg.tail_alpha);
    any = any || x > 0.0;
  }
  if (!any) v[rng.below(n)] = 1.0;
  return v;
}

/// Evaluates lhs/rhs of the weak-type inequality for functions 1_leaf scaled
/// by `height`, at every threshold equal to an ancestor average of the spike.
inline double weak_type_spike_probe(const MeasureTree& tree, double height = 1e6) {
  double worst = 0.0;
  const std::size_t stride = std::max<std::size_t>(1, tree.leaf_count() / 8);
  for (std::size_t leaf = 0; leaf < tree.leaf_count(); leaf += stride) {
    std::vector<double> v(tree.leaf_count(), 0.0);
    v[leaf] = height;
    const TreeFunction phi(tree, std::move(v));
    const auto avg = node_averages(phi);
    const auto m = localized_maximal_from_averages(tree, avg, tree.root());
    for (std::optional<NodeId> id = tree.leaf_node(leaf); id; id = tree.node(*id).parent) {
      const auto w = weak_type_from_maximal(tree, phi, m.values, avg[*id]);
      if (w.rhs > 0.0) worst = std::max(worst, w.lhs / w.rhs);
    }
  }
  return worst;
}

/// Runs weak_type_check on `count` random functions, each at `thresholds`
/// levels spread from min to max of M_T phi. A violation is lhs > rhs + 1e-12.
inline FuzzResult fuzz_weak_type(const MeasureTree& tree, const FuzzConfig& cfg, unsigned workers = worker_count()) {
  if (cfg.count < 1) fail(ErrorCode::invalid_spec, "fuzz count must be >= 1");
  if (cfg.thresholds < 1) fail(ErrorCode::invalid_spec, "threshold count must be >= 1");
  struct CaseResult {
    long checks = 0;
    long violations = 0;
    double worst = 0.0;
  };
  std::vector<CaseResult> per_case(static_cast<std::size_t>(cfg.count));
  parallel_for(per_case.size(), workers, [&](std::size_t i) {
    Rng rng(cfg.seed, "weak-type-fuzz", i);
    const TreeFunction phi(tree, heavy_tailed_values(tree.leaf_count(), cfg, rng));
    const auto m = maximal_function(tree, phi);
    const auto [lo_it, hi_it] = std::minmax_element(m.values.begin(), m.values.end());
    auto& out = per_case[i];
    for (int t = 0; t < cfg.thresholds; ++t) {
      const double lambda =
          (cfg.thresholds == 1 || t == cfg.thresholds - 1)
              ? *hi_it
              : *lo_it + (*hi_it - *lo_it) * static_cast<double>(t) / static_cast<double>(cfg.thresholds - 1);
      if (!(lambda > 0.0)) continue;
      const auto w = weak_type_from_maximal(tree, phi, m.values, lambda);
      ++out.checks;
      if (w.lhs > w.rhs + 1e-12) ++out.violations;
      if (w.rhs > 0.0) out.worst = std::max(out.worst, w.lhs / w.rhs);
    }
  });
  FuzzResult res;
  res.cases = cfg.count;
  for (const auto& c : per_case) {
    res.checks += c.checks;
    res.violations += c.violations;
    res.worst_ratio = std::max(res.worst_ratio, c.worst);
  }
  res.spike_ratio = weak_type_spike_probe(tree);
  return res;
}

// ---------------------------------------------------------------------------
// Trend analysis over a search trace
// ---------------------------------------------------------------------------

struct TrendSummary {
  double threshold = 0.0;  // gap threshold, fraction * S_p
  std::optional<std::size_t> first_cross;  // first trace index with gap <= threshold
  std::size_t near_extremal = 0;           // trace entries with gap <= threshold
  double final_gap = 0.0;
  double min_gap = 0.0;
  double spearman_gap_dev = 0.0;  // over the whole trace
  double dev_first_cross = 0.0;
  double dev_final = 0.0;
  double levelset_first_cross = 0.0;
  double levelset_final = 0.0;

  bool localization_trend() const {
    return first_cross && dev_final < dev_first_cross && spearman_gap_dev > 0.0;
  }
  bool levelset_trend() const { return first_cross && levelset_final < levelset_first_cross; }
};

inline TrendSummary analyze_trend(const SearchReport& r, double fraction = kNearExtremalFraction) {
  if (r.trace.empty()) fail(ErrorCode::invalid_spec, "report has an empty trace");
  TrendSummary s;
  s.threshold = fraction * r.bellman;
  std::vector<double> gaps;
  std::vector<double> devs;
  s.min_gap = r.trace.front().gap;
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    const auto& e = r.trace[i];
    gaps.push_back(e.gap);
    devs.push_back(e.level1_max_dev);
    s.min_gap = std::min(s.min_gap, e.gap);
    if (e.gap <= s.threshold) {
      ++s.near_extremal;
      if (!s.first_cross) s.first_cross = i;
    }
  }
  s.final_gap = r.trace.back().gap;
  s.spearman_gap_dev = spearman(gaps, devs);
  s.dev_final = r.trace.back().level1_max_dev;
  s.levelset_final = r.trace.back().levelset_mass;
  if (s.first_cross) {
    s.dev_first_cross = r.trace[*s.first_cross].level1_max_dev;
    s.levelset_first_cross = r.trace[*s.first_cross].levelset_mass;
  }
  return s;
}

inline json trend_to_json(const TrendSummary& s) {
  json j = {{"threshold", s.threshold},
            {"near_extremal_iterates", s.near_extremal},
            {"final_gap", s.final_gap},
            {"min_gap", s.min_gap},
            {"spearman_gap_level1_dev", s.spearman_gap_dev},
            {"level1_dev_final", s.dev_final},
            {"levelset_final", s.levelset_final},
            {"localization_trend", s.localization_trend()},
            {"levelset_trend", s.levelset_trend()}};
  if (s.first_cross) {
    j["first_cross_index"] = *s.first_cross;
    j["level1_dev_first_cross"] = s.dev_first_cross;
    j["levelset_first_cross"] = s.levelset_first_cross;
  } else {
    j["first_cross_index"] = nullptr;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Experiment specs
// ---------------------------------------------------------------------------

struct ScanRange {
  double t_min = 1.1;
  double t_max = 10.0;
  int n = 100;
};

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::bellman_eval;
  BellmanParams params;
  TreeSpec tree = UniformTreeSpec{2, 6};
  std::optional<SearchConfig> search;
  FuzzConfig fuzz;
  ScanRange scan;
  double tol = kOmegaDefaultTol;
  std::string audit_in;
  std::vector<int> audit_levels{1, 2};
  std::string output_path;  // empty: standard output
  std::optional<OutputFormat> format;

  OutputFormat effective_format() const {
    if (format) return *format;
    switch (kind) {
      case ExperimentKind::concavity_scan:
      case ExperimentKind::extremal_audit:
      case ExperimentKind::localization_trend: return OutputFormat::csv;
      default: return OutputFormat::json;
    }
  }

  /// Kind-specific checks, run before dispatch.
  void validate() const {
    switch (kind) {
      case ExperimentKind::bellman_eval:
      case ExperimentKind::extremal_search:
      case ExperimentKind::localization_trend: params.validate(); break;
      case ExperimentKind::concavity_scan: require_exponent(params.p); break;
      default: break;
    }
    if (kind == ExperimentKind::extremal_search || kind == ExperimentKind::localization_trend) {
      if (!search) fail(ErrorCode::invalid_spec, std::string(to_string(kind)) + " needs a search section");
      search->validate();
    }
    if (kind == ExperimentKind::extremal_audit && audit_in.empty())
      fail(ErrorCode::invalid_spec, "extremal-audit needs an input report");
    if (kind == ExperimentKind::bellman_eval && !(tol > 0.0)) fail(ErrorCode::invalid_spec, "tol must be positive");
    if ((kind == ExperimentKind::bellman_eval || kind == ExperimentKind::concavity_scan) && params.p < 1.01)
      fail(ErrorCode::invalid_spec, "p must be >= 1.01");
  }
};

inline ExperimentSpec experiment_from_json(const json& j) {
  try {
    ExperimentSpec s;
    s.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("params")) {
      // missing entries keep their defaults; a scan only needs p
      const auto& pj = j.at("params");
      s.params = {pj.value("p", s.params.p), pj.value("f", s.params.f), pj.value("F", s.params.F)};
    }
    if (j.contains("tree")) s.tree = tree_spec_from_json(j.at("tree"));
    if (j.contains("search")) {
      SearchConfig c;
      const auto& sj = j.at("search");
      c.depth = sj.value("depth", c.depth);
      c.arity = sj.value("arity", c.arity);
      c.restarts = sj.value("restarts", c.restarts);
      c.max_iters = sj.value("max_iters", c.max_iters);
      c.step_init = sj.value("step_init", c.step_init);
      c.seed = sj.value("seed", c.seed);
      c.tol_moments = sj.value("tol_moments", c.tol_moments);
      s.search = c;
    }
    if (j.contains("fuzz")) {
      const auto& fj = j.at("fuzz");
      s.fuzz.count = fj.value("count", s.fuzz.count);
      s.fuzz.thresholds = fj.value("thresholds", s.fuzz.thresholds);
      s.fuzz.tail_alpha = fj.value("tail_alpha", s.fuzz.tail_alpha);
      s.fuzz.zero_prob = fj.value("zero_prob", s.fuzz.zero_prob);
      s.fuzz.seed = fj.value("seed", s.fuzz.seed);
    }
    if (j.contains("scan")) {
      const auto& sj = j.at("scan");
      s.scan.t_min = sj.value("tmin", s.scan.t_min);
      s.scan.t_max = sj.value("tmax", s.scan.t_max);
      s.scan.n = sj.value("n", s.scan.n);
    }
    if (j.contains("audit")) {
      const auto& aj = j.at("audit");
      s.audit_in = aj.value("in", std::string());
      if (aj.contains("levels")) s.audit_levels = aj.at("levels").get<std::vector<int>>();
    }
    s.tol = j.value("tol", s.tol);
    if (j.contains("seed")) {
      const auto seed = j.at("seed").get<std::uint64_t>();
      s.fuzz.seed = seed;
      if (s.search) s.search->seed = seed;
    }
    if (j.contains("output")) {
      const auto& oj = j.at("output");
      s.output_path = oj.value("path", std::string());
      if (oj.contains("format")) s.format = output_format_from_string(oj.at("format").get<std::string>());
    }
    return s;
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_spec, std::string("malformed experiment spec: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

enum ExitCode : int {
  kExitOk = 0,
  kExitInvariant = 1,
  kExitUsage = 2,
  kExitNumeric = 3,
};

namespace detail {

inline void emit(const ExperimentSpec& spec, const std::string& content, std::ostream& out) {
  if (spec.output_path.empty())
    out << content;
  else
    write_atomic(spec.output_path, content);
}

inline int run_unchecked(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  const auto format = spec.effective_format();
  switch (spec.kind) {
    case ExperimentKind::bellman_eval: {
      const double x = std::min(spec.params.ratio(), 1.0);
      const auto w = omega_p(spec.params.p, x, spec.tol);
      const double s = bellman_value(spec.params);
      if (format == OutputFormat::csv)
        emit(spec, "s_p,omega,ratio\n" + format_double(s) + "," + format_double(w.value) + "," + format_double(x) + "\n",
             out);
      else
        emit(spec, dump_json({{"s_p", s}, {"omega", w.value}, {"ratio", x}}), out);
      return kExitOk;
    }
    case ExperimentKind::concavity_scan: {
      const auto scan = concavity_scan(spec.params.p, spec.scan.t_min, spec.scan.t_max, spec.scan.n);
      if (format == OutputFormat::csv) {
        emit(spec, concavity_csv(scan), out);
      } else {
        json pts = json::array();
        for (const auto& pt : scan.points)
          pts.push_back({{"t", pt.t}, {"G", pt.g}, {"second_diff", pt.second_diff ? json(*pt.second_diff) : json()}});
        emit(spec, dump_json({{"p", spec.params.p}, {"strictly_concave", scan.strictly_concave()}, {"points", pts}}),
             out);
      }
      if (!scan.strictly_concave()) {
        err << "concavity violated: a second difference is >= 0\n";
        return kExitInvariant;
      }
      return kExitOk;
    }
    case ExperimentKind::weak_type_fuzz: {
      const auto tree = build_tree(spec.tree);
      const auto res = fuzz_weak_type(tree, spec.fuzz);
      const json j = {{"tree", tree_spec_to_json(spec.tree)}, {"cases", res.cases},
                      {"checks", res.checks},                 {"violations", res.violations},
                      {"worst_ratio", res.worst_ratio},       {"spike_ratio", res.spike_ratio},
                      {"seed", spec.fuzz.seed}};
      if (format == OutputFormat::csv)
        emit(spec,
             "cases,checks,violations,worst_ratio,spike_ratio\n" + std::to_string(res.cases) + "," +
                 std::to_string(res.checks) + "," + std::to_string(res.violations) + "," +
                 format_double(res.worst_ratio) + "," + format_double(res.spike_ratio) + "\n",
             out);
      else
        emit(spec, dump_json(j), out);
      err << "violations: " << res.violations << "\n";
      return res.violations == 0 ? kExitOk : kExitInvariant;
    }
    case ExperimentKind::extremal_search: {
      const auto report = search_extremal(spec.params, *spec.search);
      if (format == OutputFormat::csv)
        emit(spec, trace_csv(report.trace), out);
      else
        emit(spec, dump_json(report_to_json(report)), out);
      const auto problems = validate_report(report);
      for (const auto& p : problems) err << "invariant: " << p << "\n";
      return problems.empty() ? kExitOk : kExitInvariant;
    }
    case ExperimentKind::extremal_audit: {
      const auto report = report_from_json(parse_json(read_file(spec.audit_in), spec.audit_in));
      const auto problems = validate_report(report);
      const auto tree = build_uniform_tree(report.config.arity, report.config.depth);
      const TreeFunction phi(tree, report.best.leaf_values);
      for (int level : spec.audit_levels) tree.check_level(level);
      const auto loc = localization_report(tree, phi, report.params, spec.audit_levels);
      const auto slack = slack_audit(tree, phi, report.params.p, spec.audit_levels);
      if (format == OutputFormat::csv) {
        emit(spec, audit_csv(loc, slack), out);
      } else {
        json rows = json::array();
        for (std::size_t i = 0; i < loc.records.size(); ++i) {
          const auto& r = loc.records[i];
          rows.push_back({{"node_id", r.node},
                          {"level", r.level},
                          {"mass", r.mass},
                          {"avg_phi", r.avg_phi},
                          {"avg_phip", r.avg_phip},
                          {"avg_maxenergy", r.avg_maxenergy},
                          {"dev_f", r.dev_f},
                          {"dev_F", r.dev_F},
                          {"dev_S", r.dev_S},
                          {"delta_slack", slack[i].delta ? json(*slack[i].delta) : json()}});
        }
        emit(spec, dump_json({{"bellman", loc.bellman}, {"nodes", rows}}), out);
      }
      bool negative_slack = false;
      for (const auto& s : slack) negative_slack = negative_slack || (s.delta && *s.delta < -1e-10);
      for (const auto& p : problems) err << "invariant: " << p << "\n";
      if (negative_slack) err << "invariant: negative Hoelder slack\n";
      return (problems.empty() && !negative_slack) ? kExitOk : kExitInvariant;
    }
    case ExperimentKind::localization_trend: {
      const auto report = search_extremal(spec.params, *spec.search);
      const auto summary = analyze_trend(report);
      if (format == OutputFormat::csv)
        emit(spec, trace_csv(report.trace), out);
      else
        emit(spec, dump_json({{"trend", trend_to_json(summary)}, {"report", report_to_json(report)}}), out);
      err << trend_to_json(summary).dump() << "\n";
      const auto problems = validate_report(report);
      for (const auto& p : problems) err << "invariant: " << p << "\n";
      return problems.empty() ? kExitOk : kExitInvariant;
    }
  }
  return kExitUsage;
}

}  // namespace detail

/// Exit status: 0 success, 1 invariant violation, 2 invalid spec or input,
/// 3 numeric failure (with a JSON diagnostic on `err`).
inline int run(const ExperimentSpec& spec, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    spec.validate();
    return detail::run_unchecked(spec, out, err);
  } catch (const Error& e) {
    const json diag = {{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
    err << diag.dump() << "\n";
    switch (e.code()) {
      case ErrorCode::numeric_failure:
      case ErrorCode::cannot_normalize: return kExitNumeric;
      case ErrorCode::invariant_violation: return kExitInvariant;
      default: return kExitUsage;
    }
  }
}

}  // namespace blab
