// blab: command-line front end for the Bellman-function toolkit.
//
//   blab bellman eval --p 2 --f 1 --F 1.3333
//   blab bellman scan-concavity --p 2 --tmin 1.1 --tmax 10 --n 100
//   blab fuzz weak-type --arity 2 --depth 6 --count 1000 --thresholds 32
//   blab extremal search --p 2 --f 1 --F 1.3333 --depth 10 --arity 2 --restarts 4 --iters 300 --seed 7 --out r.json
//   blab extremal audit --in r.json --levels 1,2 --out audit.csv
//   blab extremal trend ... (same flags as search)
//   blab run --config spec.json
//
// Precedence: command-line flags, then the --config document, then defaults.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "blab/experiment.hpp"

namespace {

using blab::ExperimentKind;
using blab::ExperimentSpec;

struct Flags {
  std::string config;
  std::string out;
  std::string format;
  std::uint64_t seed = 0;

  double p = 2.0;
  double f = 1.0;
  double F = 1.0;
  double tol = blab::kOmegaDefaultTol;
  double tmin = 1.1;
  double tmax = 10.0;
  int n = 100;

  int depth = 6;
  int arity = 2;
  int restarts = 4;
  int iters = 400;
  double step = 0.1;

  std::string tree_file;
  int count = 1000;
  int thresholds = 32;
  double tail_alpha = 1.5;

  std::string in;
  std::string levels = "1,2";
};

// Options registered per subcommand, remembered so we can tell which ones the
// user actually set.
struct Registered {
  CLI::Option* config = nullptr;
  CLI::Option* out = nullptr;
  CLI::Option* format = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* p = nullptr;
  CLI::Option* f = nullptr;
  CLI::Option* F = nullptr;
  CLI::Option* tol = nullptr;
  CLI::Option* tmin = nullptr;
  CLI::Option* tmax = nullptr;
  CLI::Option* n = nullptr;
  CLI::Option* depth = nullptr;
  CLI::Option* arity = nullptr;
  CLI::Option* restarts = nullptr;
  CLI::Option* iters = nullptr;
  CLI::Option* step = nullptr;
  CLI::Option* tree_file = nullptr;
  CLI::Option* count = nullptr;
  CLI::Option* thresholds = nullptr;
  CLI::Option* tail_alpha = nullptr;
  CLI::Option* in = nullptr;
  CLI::Option* levels = nullptr;
};

bool given(const CLI::Option* opt) { return opt != nullptr && opt->count() > 0; }

void add_common(CLI::App* cmd, Flags& fl, Registered& r) {
  r.config = cmd->add_option("--config", fl.config, "Experiment spec JSON");
  r.out = cmd->add_option("--out", fl.out, "Output path (default: standard output)");
  r.format = cmd->add_option("--format", fl.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  r.seed = cmd->add_option("--seed", fl.seed, "Root random seed");
}

void add_params(CLI::App* cmd, Flags& fl, Registered& r) {
  r.p = cmd->add_option("--p", fl.p, "Exponent p > 1");
  r.f = cmd->add_option("--f", fl.f, "First moment f");
  r.F = cmd->add_option("--F", fl.F, "p-th moment F");
}

void add_search(CLI::App* cmd, Flags& fl, Registered& r) {
  add_params(cmd, fl, r);
  r.depth = cmd->add_option("--depth", fl.depth, "Tree depth");
  r.arity = cmd->add_option("--arity", fl.arity, "Tree arity");
  r.restarts = cmd->add_option("--restarts", fl.restarts, "Random restarts");
  r.iters = cmd->add_option("--iters", fl.iters, "Ascent iterations per refinement level");
  r.step = cmd->add_option("--step", fl.step, "Initial relative step");
}

ExperimentSpec load_base(ExperimentKind kind, const Flags& fl, const Registered& r) {
  ExperimentSpec spec;
  if (given(r.config)) {
    auto j = blab::parse_json(blab::read_file(fl.config), fl.config);
    if (!j.contains("kind")) j["kind"] = std::string(blab::to_string(kind));
    spec = blab::experiment_from_json(j);
    if (spec.kind != kind)
      blab::fail(blab::ErrorCode::invalid_spec,
                 "config describes " + std::string(blab::to_string(spec.kind)) + ", not " +
                     std::string(blab::to_string(kind)));
  }
  spec.kind = kind;
  return spec;
}

ExperimentSpec build_spec(ExperimentKind kind, const Flags& fl, const Registered& r) {
  ExperimentSpec spec = load_base(kind, fl, r);
  if (given(r.p)) spec.params.p = fl.p;
  if (given(r.f)) spec.params.f = fl.f;
  if (given(r.F)) spec.params.F = fl.F;
  if (given(r.tol)) spec.tol = fl.tol;
  if (given(r.tmin)) spec.scan.t_min = fl.tmin;
  if (given(r.tmax)) spec.scan.t_max = fl.tmax;
  if (given(r.n)) spec.scan.n = fl.n;

  if (kind == ExperimentKind::extremal_search || kind == ExperimentKind::localization_trend) {
    if (!spec.search) spec.search = blab::SearchConfig{};
    auto& s = *spec.search;
    if (given(r.depth)) s.depth = fl.depth;
    if (given(r.arity)) s.arity = fl.arity;
    if (given(r.restarts)) s.restarts = fl.restarts;
    if (given(r.iters)) s.max_iters = fl.iters;
    if (given(r.step)) s.step_init = fl.step;
    if (given(r.seed)) s.seed = fl.seed;
  }
  if (kind == ExperimentKind::weak_type_fuzz) {
    if (given(r.tree_file)) {
      spec.tree = blab::tree_spec_from_json(blab::parse_json(blab::read_file(fl.tree_file), fl.tree_file));
    } else if (given(r.arity) || given(r.depth)) {
      auto u = std::holds_alternative<blab::UniformTreeSpec>(spec.tree) ? std::get<blab::UniformTreeSpec>(spec.tree)
                                                                       : blab::UniformTreeSpec{};
      if (given(r.arity)) u.arity = fl.arity;
      if (given(r.depth)) u.depth = fl.depth;
      spec.tree = u;
    }
    if (given(r.count)) spec.fuzz.count = fl.count;
    if (given(r.thresholds)) spec.fuzz.thresholds = fl.thresholds;
    if (given(r.tail_alpha)) spec.fuzz.tail_alpha = fl.tail_alpha;
    if (given(r.seed)) spec.fuzz.seed = fl.seed;
  }
  if (kind == ExperimentKind::extremal_audit) {
    if (given(r.in)) spec.audit_in = fl.in;
    if (given(r.levels)) spec.audit_levels = blab::parse_levels(fl.levels);
  }
  if (given(r.out)) spec.output_path = fl.out;
  if (given(r.format)) spec.format = blab::output_format_from_string(fl.format);
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bellman function of the tree maximal operator: evaluation, extremal search, audits"};
  app.require_subcommand(1);
  Flags fl;

  auto* bellman = app.add_subcommand("bellman", "Closed-form Bellman function");
  bellman->require_subcommand(1);
  Registered r_eval;
  auto* eval = bellman->add_subcommand("eval", "Print {s_p, omega, ratio} for (p, f, F)");
  add_common(eval, fl, r_eval);
  add_params(eval, fl, r_eval);
  r_eval.tol = eval->add_option("--tol", fl.tol, "Residual tolerance for the inversion of H_p");

  Registered r_scan;
  auto* scan = bellman->add_subcommand("scan-concavity", "CSV of t, G(t) and second differences");
  add_common(scan, fl, r_scan);
  r_scan.p = scan->add_option("--p", fl.p, "Exponent p > 1");
  r_scan.tmin = scan->add_option("--tmin", fl.tmin, "Grid start (> 1)");
  r_scan.tmax = scan->add_option("--tmax", fl.tmax, "Grid end");
  r_scan.n = scan->add_option("--n", fl.n, "Grid points (>= 3)");

  auto* fuzz = app.add_subcommand("fuzz", "Property fuzzing");
  fuzz->require_subcommand(1);
  Registered r_fuzz;
  auto* weak = fuzz->add_subcommand("weak-type", "Fuzz the weak-type inequality");
  add_common(weak, fl, r_fuzz);
  r_fuzz.tree_file = weak->add_option("--tree", fl.tree_file, "Tree spec JSON file");
  r_fuzz.arity = weak->add_option("--arity", fl.arity, "Uniform tree arity");
  r_fuzz.depth = weak->add_option("--depth", fl.depth, "Uniform tree depth");
  r_fuzz.count = weak->add_option("--count", fl.count, "Random functions");
  r_fuzz.thresholds = weak->add_option("--thresholds", fl.thresholds, "Thresholds per function");
  r_fuzz.tail_alpha = weak->add_option("--tail-alpha", fl.tail_alpha, "Lomax shape of leaf values");

  auto* extremal = app.add_subcommand("extremal", "Near-extremal search and audits");
  extremal->require_subcommand(1);
  Registered r_search;
  auto* search = extremal->add_subcommand("search", "Write report.json for a projected-ascent search");
  add_common(search, fl, r_search);
  add_search(search, fl, r_search);

  Registered r_trend;
  auto* trend = extremal->add_subcommand("trend", "Search, then summarize localization and level-set trends");
  add_common(trend, fl, r_trend);
  add_search(trend, fl, r_trend);

  Registered r_audit;
  auto* audit = extremal->add_subcommand("audit", "Per-node localization and slack table from report.json");
  add_common(audit, fl, r_audit);
  r_audit.in = audit->add_option("--in", fl.in, "report.json from extremal search");
  r_audit.levels = audit->add_option("--levels", fl.levels, "Comma-separated levels");

  Registered r_run;
  auto* run = app.add_subcommand("run", "Run an experiment spec document");
  r_run.config = run->add_option("--config", fl.config, "Experiment spec JSON")->required();
  r_run.out = run->add_option("--out", fl.out, "Output path (overrides the spec)");
  r_run.format = run->add_option("--format", fl.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  r_run.seed = run->add_option("--seed", fl.seed, "Root random seed (overrides the spec)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return blab::kExitUsage;
  }

  try {
    ExperimentSpec spec;
    if (*eval) {
      spec = build_spec(ExperimentKind::bellman_eval, fl, r_eval);
    } else if (*scan) {
      spec = build_spec(ExperimentKind::concavity_scan, fl, r_scan);
    } else if (*weak) {
      spec = build_spec(ExperimentKind::weak_type_fuzz, fl, r_fuzz);
    } else if (*search) {
      spec = build_spec(ExperimentKind::extremal_search, fl, r_search);
    } else if (*trend) {
      spec = build_spec(ExperimentKind::localization_trend, fl, r_trend);
    } else if (*audit) {
      spec = build_spec(ExperimentKind::extremal_audit, fl, r_audit);
    } else {
      spec = blab::experiment_from_json(blab::parse_json(blab::read_file(fl.config), fl.config));
      if (given(r_run.out)) spec.output_path = fl.out;
      if (given(r_run.format)) spec.format = blab::output_format_from_string(fl.format);
      if (given(r_run.seed)) {
        spec.fuzz.seed = fl.seed;
        if (spec.search) spec.search->seed = fl.seed;
      }
    }
    return blab::run(spec);
  } catch (const blab::Error& e) {
    std::cerr << blab::json{{"error", std::string(blab::to_string(e.code()))}, {"message", e.what()}}.dump() << "\n";
    return blab::kExitUsage;
  }
}
