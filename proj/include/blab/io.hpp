#pragma once

// JSON and CSV encodings: tree specs, search reports, audit tables.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "blab/error.hpp"
#include "blab/extremal.hpp"
#include "blab/tree.hpp"

namespace blab {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Numbers and files
// ---------------------------------------------------------------------------

/// 17 significant digits, '.' separator: lossless for doubles.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Writes to a sibling temporary file, then renames over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::invalid_spec, "cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) fail(ErrorCode::invalid_spec, "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    fail(ErrorCode::invalid_spec, "cannot move output into " + path.string() + ": " + ec.message());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::invalid_spec, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_spec, what + " is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Tree specs: {"uniform": {"arity": k, "depth": m}} or {"custom": [...]}
// ---------------------------------------------------------------------------

struct UniformTreeSpec {
  int arity = 2;
  int depth = 0;
};

using TreeSpec = std::variant<UniformTreeSpec, CustomTreeSpec>;

inline TreeSpec tree_spec_from_json(const json& j) {
  try {
    if (j.contains("uniform")) {
      const auto& u = j.at("uniform");
      return UniformTreeSpec{u.at("arity").get<int>(), u.at("depth").get<int>()};
    }
    if (j.contains("custom")) {
      CustomTreeSpec spec;
      for (const auto& level : j.at("custom")) {
        if (!level.is_array() || level.empty()) fail(ErrorCode::invalid_spec, "custom levels must be nonempty arrays");
        if (level.front().is_number()) {
          spec.push_back({level.get<std::vector<double>>()});
        } else {
          spec.push_back(level.get<std::vector<std::vector<double>>>());
        }
      }
      return spec;
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_spec, std::string("malformed tree spec: ") + e.what());
  }
  fail(ErrorCode::invalid_spec, "tree spec needs a \"uniform\" or \"custom\" key");
}

inline json tree_spec_to_json(const TreeSpec& spec) {
  if (const auto* u = std::get_if<UniformTreeSpec>(&spec))
    return {{"uniform", {{"arity", u->arity}, {"depth", u->depth}}}};
  return {{"custom", std::get<CustomTreeSpec>(spec)}};
}

inline MeasureTree build_tree(const TreeSpec& spec) {
  if (const auto* u = std::get_if<UniformTreeSpec>(&spec)) return build_uniform_tree(u->arity, u->depth);
  return build_custom_tree(std::get<CustomTreeSpec>(spec));
}

// ---------------------------------------------------------------------------
// Search reports
// ---------------------------------------------------------------------------

inline json params_to_json(const BellmanParams& p) { return {{"p", p.p}, {"f", p.f}, {"F", p.F}}; }

inline BellmanParams params_from_json(const json& j) {
  return {j.at("p").get<double>(), j.at("f").get<double>(), j.at("F").get<double>()};
}

inline json config_to_json(const SearchConfig& c) {
  return {{"depth", c.depth},         {"arity", c.arity}, {"restarts", c.restarts}, {"max_iters", c.max_iters},
          {"step_init", c.step_init}, {"seed", c.seed},   {"tol_moments", c.tol_moments}};
}

inline SearchConfig config_from_json(const json& j) {
  SearchConfig c;
  c.depth = j.at("depth").get<int>();
  c.arity = j.at("arity").get<int>();
  c.restarts = j.at("restarts").get<int>();
  c.max_iters = j.at("max_iters").get<int>();
  c.step_init = j.value("step_init", c.step_init);
  c.seed = j.at("seed").get<std::uint64_t>();
  c.tol_moments = j.value("tol_moments", c.tol_moments);
  return c;
}

inline json report_to_json(const SearchReport& r) {
  json trace = json::array();
  for (const auto& e : r.trace)
    trace.push_back({{"iter", e.iter},
                     {"level", e.level},
                     {"objective", e.objective},
                     {"gap", e.gap},
                     {"level1_max_dev", e.level1_max_dev},
                     {"levelset_mass", e.levelset_mass},
                     {"slack_sum", e.slack_sum}});
  return {{"params", params_to_json(r.params)},
          {"config", config_to_json(r.config)},
          {"bellman", r.bellman},
          {"best",
           {{"leaf_values", r.best.leaf_values},
            {"moments", {{"f", r.best.moments.f}, {"F", r.best.moments.F}}},
            {"objective", r.best.objective},
            {"gap", r.best.gap},
            {"restart", r.best_restart}}},
          {"restart_objectives", r.restart_objectives},
          {"trace", std::move(trace)}};
}

inline SearchReport report_from_json(const json& j) {
  try {
    SearchReport r;
    r.params = params_from_json(j.at("params"));
    r.config = config_from_json(j.at("config"));
    r.bellman = j.contains("bellman") ? j.at("bellman").get<double>() : bellman_value(r.params);
    const auto& best = j.at("best");
    r.best.leaf_values = best.at("leaf_values").get<std::vector<double>>();
    r.best.moments = {best.at("moments").at("f").get<double>(), best.at("moments").at("F").get<double>()};
    r.best.objective = best.at("objective").get<double>();
    r.best.gap = best.at("gap").get<double>();
    r.best_restart = best.value("restart", 0);
    r.restart_objectives = j.value("restart_objectives", std::vector<double>{});
    for (const auto& e : j.at("trace"))
      r.trace.push_back({e.at("iter").get<int>(), e.value("level", r.config.depth), e.at("objective").get<double>(),
                         e.at("gap").get<double>(), e.at("level1_max_dev").get<double>(),
                         e.at("levelset_mass").get<double>(), e.at("slack_sum").get<double>()});
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_spec, std::string("malformed report: ") + e.what());
  }
}

inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

/// Re-derives what a report claims about its best candidate: tree partition,
/// moments, objective and the Bellman ceiling. Returns one message per failure.
inline std::vector<std::string> validate_report(const SearchReport& r) {
  std::vector<std::string> problems;
  try {
    r.params.validate();
    r.config.validate();
    const auto tree = build_uniform_tree(r.config.arity, r.config.depth);
    tree.validate();
    for (int level = 0; level <= tree.depth(); ++level) {
      auto [b, e] = tree.level_range(level);
      double sum = 0.0;
      for (NodeId id = b; id < e; ++id) sum += tree.node(id).mass;
      if (std::abs(sum - 1.0) > 1e-10) problems.push_back("level " + std::to_string(level) + " masses do not sum to 1");
    }
    const TreeFunction phi(tree, r.best.leaf_values);
    const Moments m = moments(tree, phi.values(), r.params.p);
    const double tol = std::max(1e-8, r.config.tol_moments);
    if (std::abs(m.f - r.params.f) > tol) problems.push_back("first moment off target: " + format_double(m.f));
    if (std::abs(m.F - r.params.F) > tol) problems.push_back("p-th moment off target: " + format_double(m.F));
    const double obj = objective(tree, phi, r.params.p);
    if (std::abs(obj - r.best.objective) > 1e-9 * std::max(1.0, obj))
      problems.push_back("recorded objective does not match recomputation");
    const double ceiling = bellman_value(r.params);
    if (obj > ceiling + kCeilingTolerance) problems.push_back("objective exceeds the Bellman value");
    for (const auto& e : r.trace)
      if (e.objective > ceiling + kCeilingTolerance)
        problems.push_back("trace iterate " + std::to_string(e.iter) + " exceeds the Bellman value");
  } catch (const Error& e) {
    problems.push_back(e.what());
  }
  return problems;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::vector<int> parse_levels(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorCode::invalid_spec, "bad level list entry '" + item + "'");
    }
  }
  if (out.empty()) fail(ErrorCode::invalid_spec, "empty level list");
  return out;
}

/// audit.csv: localization deviations and Hoelder slack per node.
inline std::string audit_csv(const LocalizationReport& loc, const std::vector<SlackEntry>& slack) {
  std::string out = "node_id,level,mass,avg_phi,avg_phip,avg_maxenergy,dev_f,dev_F,dev_S,delta_slack\n";
  for (std::size_t i = 0; i < loc.records.size(); ++i) {
    const auto& r = loc.records[i];
    const auto& s = slack.at(i);
    out += std::to_string(r.node) + "," + std::to_string(r.level) + "," + format_double(r.mass) + "," +
           format_double(r.avg_phi) + "," + format_double(r.avg_phip) + "," + format_double(r.avg_maxenergy) + "," +
           format_double(r.dev_f) + "," + format_double(r.dev_F) + "," + format_double(r.dev_S) + "," +
           (s.delta ? format_double(*s.delta) : std::string()) + "\n";
  }
  return out;
}

inline std::string concavity_csv(const ConcavityScan& scan) {
  std::string out = "t,G,second_diff\n";
  for (const auto& pt : scan.points)
    out += format_double(pt.t) + "," + format_double(pt.g) + "," +
           (pt.second_diff ? format_double(*pt.second_diff) : std::string()) + "\n";
  return out;
}

inline std::string trace_csv(const std::vector<TraceEntry>& trace) {
  std::string out = "iter,level,objective,gap,level1_max_dev,levelset_mass,slack_sum\n";
  for (const auto& e : trace)
    out += std::to_string(e.iter) + "," + std::to_string(e.level) + "," + format_double(e.objective) + "," +
           format_double(e.gap) + "," + format_double(e.level1_max_dev) + "," + format_double(e.levelset_mass) + "," +
           format_double(e.slack_sum) + "\n";
  return out;
}

}  // namespace blab
