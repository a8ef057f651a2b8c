#pragma once

// Near-extremal sequences for the Bellman function and the diagnostics that an
// extremal sequence must satisfy: local averages of phi, phi^p and (M phi)^p
// approach f, F and S_p on every node; the slack of the localized Bellman
// inequality vanishes; the level set {M phi = f} loses its mass.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blab/bellman.hpp"
#include "blab/error.hpp"
#include "blab/maximal.hpp"
#include "blab/parallel.hpp"
#include "blab/rng.hpp"
#include "blab/tree.hpp"

namespace blab {

inline constexpr double kCeilingTolerance = 1e-9;
inline constexpr double kDefaultLevelSetTolerance = 1e-9;
inline constexpr double kNearExtremalFraction = 0.05;

struct Moments {
  double f = 0.0;  // int phi
  double F = 0.0;  // int phi^p
};

inline Moments moments(const MeasureTree& tree, std::span<const double> values, double p) {
  return {integrate_power(tree, values, 1.0, tree.root()), integrate_power(tree, values, p, tree.root())};
}

// ---------------------------------------------------------------------------
// Moment normalization
// ---------------------------------------------------------------------------

namespace detail {

struct Normalized {
  std::vector<double> values;
  double scale = 1.0;  // a in a * phi^theta
  double theta = 1.0;
};

// Fits psi = a * phi^theta with int psi = f and int psi^p = F.
//
// Eliminating a leaves R(theta) = int u^{theta p} / (int u^theta)^p = F / f^p
// with u = phi / max phi. R is strictly increasing on (0, inf) unless phi is
// constant on its support, running from mu(supp)^{1-p} to mu(argmax)^{1-p},
// so the root is found by bracketing and bisection.
inline Normalized fit_power_family(const MeasureTree& tree, std::span<const double> phi, double p, double f, double F,
                                   double tol) {
  const std::size_t n = phi.size();
  const double top = *std::max_element(phi.begin(), phi.end());
  if (!(top > 0.0)) fail(ErrorCode::cannot_normalize, "function vanishes identically");

  std::vector<double> u(n);
  for (std::size_t k = 0; k < n; ++k) u[k] = phi[k] / top;

  auto moments_at = [&](double theta) {
    CompensatedSum first;
    CompensatedSum pth;
    for (std::size_t k = 0; k < n; ++k) {
      if (u[k] <= 0.0) continue;
      const double w = (theta == 1.0) ? u[k] : std::pow(u[k], theta);
      first.add(tree.leaf_mass(k) * w);
      pth.add(tree.leaf_mass(k) * power(w, p));
    }
    return std::pair{first.value(), pth.value()};
  };
  auto ratio_at = [&](double theta) {
    auto [a, b] = moments_at(theta);
    return b / std::pow(a, p);
  };
  auto build = [&](double theta) {
    auto [a, b] = moments_at(theta);
    Normalized out;
    out.theta = theta;
    out.scale = f / a / std::pow(top, theta);
    out.values.resize(n);
    for (std::size_t k = 0; k < n; ++k)
      out.values[k] = (u[k] <= 0.0) ? 0.0 : f * ((theta == 1.0) ? u[k] : std::pow(u[k], theta)) / a;
    return out;
  };
  auto accept = [&](Normalized out) {
    const Moments got = moments(tree, out.values, p);
    if (std::abs(got.f - f) > tol || std::abs(got.F - F) > tol)
      fail(ErrorCode::numeric_failure, "normalized moments miss target by " +
                                           std::to_string(std::max(std::abs(got.f - f), std::abs(got.F - F))));
    return out;
  };

  const double target = F / std::pow(f, p);
  double support = 0.0;
  double argmax = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (u[k] > 0.0) support += tree.leaf_mass(k);
    if (u[k] == 1.0) argmax += tree.leaf_mass(k);
  }
  const double low = std::pow(support, 1.0 - p);
  const double high = std::pow(argmax, 1.0 - p);

  if (high - low <= 1e-14 * high) {
    if (std::abs(target - low) <= 1e-12 * target) return accept(build(1.0));
    fail(ErrorCode::cannot_normalize, "function is constant on its support; only F/f^p = " + std::to_string(low) +
                                          " is reachable");
  }
  if (!(target > low && target < high))
    fail(ErrorCode::cannot_normalize, "target F/f^p = " + std::to_string(target) + " outside reachable range (" +
                                          std::to_string(low) + ", " + std::to_string(high) + ")");

  double lo = 1.0;
  double hi = 1.0;
  int guard = 0;
  while (ratio_at(hi) < target) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 80) fail(ErrorCode::numeric_failure, "could not bracket the normalization exponent");
  }
  while (ratio_at(lo) > target) {
    hi = lo;
    lo *= 0.5;
    if (++guard > 160) fail(ErrorCode::numeric_failure, "could not bracket the normalization exponent");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (ratio_at(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  const double r_lo = std::abs(ratio_at(lo) - target);
  const double r_hi = std::abs(ratio_at(hi) - target);
  return accept(build(r_lo <= r_hi ? lo : hi));
}

}  // namespace detail

/// Projects phi onto {int psi = f, int psi^p = F} within the family a * phi^theta.
/// Leaf ordering and zeros of phi are preserved.
inline TreeFunction normalize_moments(const TreeFunction& phi, double p, double f, double F, double tol = 1e-10) {
  BellmanParams{p, f, F}.validate();
  if (!(tol > 0.0)) fail(ErrorCode::domain_error, "tolerance must be positive");
  const auto& tree = phi.tree();
  const Moments now = moments(tree, phi.values(), p);
  if (std::abs(now.f - f) <= tol && std::abs(now.F - F) <= tol) return phi;
  return TreeFunction(tree, detail::fit_power_family(tree, phi.values(), p, f, F, tol).values);
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

/// int (M_T phi)^p.
inline double objective(const MeasureTree& tree, const TreeFunction& phi, double p) {
  return integrate_power(maximal_function(tree, phi), p);
}

namespace detail {

inline double objective_of(const MeasureTree& tree, std::span<const double> values, double p) {
  const auto avg = node_averages(tree, values);
  return integrate_power(localized_maximal_from_averages(tree, avg, tree.root()), p);
}

}  // namespace detail

/// Subgradient of int (M_T phi)^p with respect to the leaf values, expressed
/// per unit mass (the L^2(mu) gradient). Each leaf's maximal value is charged
/// to the shallowest node attaining it.
inline std::vector<double> objective_gradient(const MeasureTree& tree, std::span<const double> values, double p) {
  const auto& nodes = tree.nodes();
  const auto avg = node_averages(tree, values);
  std::vector<double> running(nodes.size());
  std::vector<NodeId> argmax(nodes.size());
  running[0] = avg[0];
  argmax[0] = 0;
  for (NodeId id = 1; id < nodes.size(); ++id) {
    const NodeId parent = *nodes[id].parent;
    if (avg[id] > running[parent]) {
      running[id] = avg[id];
      argmax[id] = id;
    } else {
      running[id] = running[parent];
      argmax[id] = argmax[parent];
    }
  }
  // weight[I] = sum over leaves charged to I of mass * p * M^{p-1}
  std::vector<double> weight(nodes.size(), 0.0);
  for (NodeId id = tree.first_leaf(); id < nodes.size(); ++id)
    weight[argmax[id]] += nodes[id].mass * p * std::pow(running[id], p - 1.0);
  // d avg(I) / d phi_k = mass_k / mass_I for leaves k under I.
  std::vector<double> acc(nodes.size());
  acc[0] = weight[0] / nodes[0].mass;
  for (NodeId id = 1; id < nodes.size(); ++id) acc[id] = acc[*nodes[id].parent] + weight[id] / nodes[id].mass;
  return {acc.begin() + static_cast<std::ptrdiff_t>(tree.first_leaf()), acc.end()};
}

/// Forward-difference estimate of the same gradient (per unit mass), with
/// step 1e-6 (1 + |value|).
inline std::vector<double> objective_gradient_fd(const MeasureTree& tree, std::span<const double> values, double p) {
  const double base = detail::objective_of(tree, values, p);
  std::vector<double> shifted(values.begin(), values.end());
  std::vector<double> grad(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double h = 1e-6 * (1.0 + std::abs(values[k]));
    shifted[k] = values[k] + h;
    grad[k] = (detail::objective_of(tree, shifted, p) - base) / h / tree.leaf_mass(k);
    shifted[k] = values[k];
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

struct SearchConfig {
  int depth = 6;
  int arity = 2;
  int restarts = 4;
  int max_iters = 400;  // ascent iterations per refinement level
  double step_init = 0.1;
  std::uint64_t seed = 1;
  double tol_moments = 1e-10;

  void validate() const {
    if (arity < 2) fail(ErrorCode::invalid_arity, "arity must be at least 2");
    if (depth < 0) fail(ErrorCode::invalid_level, "depth must be nonnegative");
    if (restarts < 1) fail(ErrorCode::invalid_spec, "restarts must be >= 1");
    if (max_iters < 1) fail(ErrorCode::invalid_spec, "max_iters must be >= 1");
    if (!(step_init > 0.0)) fail(ErrorCode::invalid_spec, "step_init must be positive");
    if (!(tol_moments > 0.0)) fail(ErrorCode::invalid_spec, "tol_moments must be positive");
  }
};

struct ExtremalCandidate {
  std::vector<double> leaf_values;
  Moments moments;
  double objective = 0.0;
  double gap = 0.0;  // bellman_value - objective
};

struct TraceEntry {
  int iter = 0;
  int level = 0;  // depth of the tree the iterate was optimized on
  double objective = 0.0;
  double gap = 0.0;
  double level1_max_dev = 0.0;
  double levelset_mass = 0.0;
  double slack_sum = 0.0;
};

struct SearchReport {
  BellmanParams params;
  SearchConfig config;
  double bellman = 0.0;
  ExtremalCandidate best;
  int best_restart = 0;
  std::vector<double> restart_objectives;
  std::vector<TraceEntry> trace;
};

/// Mass of {M_T phi <= f (1 + rel_tol)}, the approximate level set {M_T phi = f}.
inline double level_set_measure(const MeasureTree& tree, const TreeFunction& phi, double f,
                                double rel_tol = kDefaultLevelSetTolerance) {
  require_same_tree(tree, phi);
  if (!(rel_tol > 0.0)) fail(ErrorCode::domain_error, "relative tolerance must be positive");
  const auto m = maximal_function(tree, phi);
  detail::CompensatedSum mass;
  for (std::size_t k = 0; k < m.values.size(); ++k)
    if (m.values[k] <= f * (1.0 + rel_tol)) mass.add(tree.leaf_mass(k));
  return mass.value();
}

namespace detail {

inline TraceEntry trace_metrics(const MeasureTree& tree, std::span<const double> values, const BellmanParams& params,
                                double bellman) {
  const auto avg = node_averages(tree, values);
  const auto m = localized_maximal_from_averages(tree, avg, tree.root());
  TraceEntry e;
  e.level = tree.depth();
  e.objective = integrate_power(m, params.p);
  e.gap = bellman - e.objective;
  for (std::size_t k = 0; k < m.values.size(); ++k)
    if (m.values[k] <= params.f * (1.0 + kDefaultLevelSetTolerance)) e.levelset_mass += tree.leaf_mass(k);
  if (tree.depth() >= 1) {
    const TreeFunction phi(tree, std::vector<double>(values.begin(), values.end()));
    auto [b, end] = tree.level_range(1);
    for (NodeId id = b; id < end; ++id) {
      e.level1_max_dev = std::max(e.level1_max_dev, std::abs(avg[id] - params.f));
      if (avg[id] > 0.0) e.slack_sum += hoelder_slack_from_averages(tree, phi, avg, id, params.p);
    }
  }
  return e;
}

// Orthogonal projection (in L^2(mu)) of g onto the tangent space of the
// moment constraints at phi, i.e. the complement of span{1, phi^{p-1}}.
inline void project_tangent(const MeasureTree& tree, std::span<const double> phi, double p, std::vector<double>& g) {
  const std::size_t n = phi.size();
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    CompensatedSum s;
    for (std::size_t k = 0; k < n; ++k) s.add(tree.leaf_mass(k) * a[k] * b[k]);
    return s.value();
  };
  std::vector<double> ones(n, 1.0);
  std::vector<double> e2(n);
  for (std::size_t k = 0; k < n; ++k) e2[k] = std::pow(phi[k], p - 1.0);
  const double c1 = dot(e2, ones);
  for (auto& x : e2) x -= c1;
  const double n2 = std::sqrt(dot(e2, e2));
  const double g1 = dot(g, ones);
  for (auto& x : g) x -= g1;
  if (n2 > 0.0) {
    for (auto& x : e2) x /= n2;
    const double g2 = dot(g, e2);
    for (std::size_t k = 0; k < n; ++k) g[k] -= g2 * e2[k];
  }
}

struct RestartResult {
  std::vector<double> values;  // on the deepest tree
  double objective = 0.0;
  std::vector<TraceEntry> trace;
};

// Shallowest level at which a random start can be normalized to F/f^p.
inline int start_level(const BellmanParams& params, int arity, int depth) {
  const double target = params.F / std::pow(params.f, params.p);
  for (int d = 1; d <= depth; ++d)
    if (std::pow(static_cast<double>(arity), d * (params.p - 1.0)) > 2.0 * target) return d;
  return depth;
}

inline std::vector<double> random_start(const MeasureTree& tree, Rng& rng) {
  std::vector<double> v(tree.leaf_count());
  for (auto& x : v) x = std::exp(rng.normal());
  return v;
}

inline RestartResult run_restart(const std::vector<MeasureTree>& trees, const BellmanParams& params,
                                 const SearchConfig& cfg, double bellman, int restart) {
  const double p = params.p;
  const int first = trees.front().depth();
  RestartResult out;
  std::vector<double> phi;
  int iter = 0;
  for (const auto& tree : trees) {
    Rng rng(cfg.seed, "restart-level", static_cast<std::uint64_t>(restart) * 1024u + tree.depth());
    if (tree.depth() == first) {
      // A few random draws in case one is not normalizable (e.g. ties at the maximum).
      for (int attempt = 0;; ++attempt) {
        try {
          phi = fit_power_family(tree, random_start(tree, rng), p, params.f, params.F, cfg.tol_moments).values;
          break;
        } catch (const Error& e) {
          if (attempt >= 16) throw;
        }
      }
    } else {
      phi = refine_uniform(phi, cfg.arity, 1);
    }
    double value = objective_of(tree, phi, p);
    double step = cfg.step_init;
    for (int local = 0; local < cfg.max_iters; ++local, ++iter) {
      std::vector<double> cand(phi.size());
      const bool stalled = step < 1e-9;
      if (stalled) {
        // Random multiplicative kick; kept only if it improves the objective.
        const double sigma = 0.2 * rng.uniform();
        for (std::size_t k = 0; k < phi.size(); ++k) cand[k] = phi[k] * std::exp(sigma * rng.normal());
        step = cfg.step_init;
      } else {
        auto g = objective_gradient(tree, phi, p);
        project_tangent(tree, phi, p, g);
        double gnorm = 0.0;
        double pnorm = 0.0;
        for (std::size_t k = 0; k < phi.size(); ++k) {
          gnorm += tree.leaf_mass(k) * g[k] * g[k];
          pnorm += tree.leaf_mass(k) * phi[k] * phi[k];
        }
        gnorm = std::sqrt(gnorm);
        if (!(gnorm > 0.0)) {
          step = 0.0;
          TraceEntry e = trace_metrics(tree, phi, params, bellman);
          e.iter = iter;
          out.trace.push_back(e);
          continue;
        }
        const double scale = step * std::sqrt(pnorm) / gnorm;
        for (std::size_t k = 0; k < phi.size(); ++k) cand[k] = std::max(0.0, phi[k] + scale * g[k]);
      }
      bool improved = false;
      try {
        auto fitted = fit_power_family(tree, cand, p, params.f, params.F, cfg.tol_moments);
        const double v = objective_of(tree, fitted.values, p);
        if (v > value) {
          phi = std::move(fitted.values);
          value = v;
          improved = true;
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::cannot_normalize && e.code() != ErrorCode::numeric_failure) throw;
      }
      if (!stalled) step = improved ? std::min(step * 1.5, 1.0) : step * 0.5;
      if (value > bellman + kCeilingTolerance)
        fail(ErrorCode::invariant_violation, "objective " + std::to_string(value) + " exceeds the Bellman value");
      TraceEntry e = trace_metrics(tree, phi, params, bellman);
      e.iter = iter;
      out.trace.push_back(e);
    }
  }
  out.objective = objective_of(trees.back(), phi, p);
  out.values = std::move(phi);
  return out;
}

}  // namespace detail

/// Projected ascent on int (M_T phi)^p over functions with fixed moments on a
/// uniform tree, coarse to fine: each restart starts from a random function on
/// the shallowest feasible level, ascends for max_iters iterations, then is
/// repeated onto the next level and continues. The best restart wins (ties go
/// to the lowest index). Deterministic in config.seed.
inline SearchReport search_extremal(const BellmanParams& params, const SearchConfig& config,
                                    unsigned workers = worker_count()) {
  params.validate();
  config.validate();
  SearchReport report;
  report.params = params;
  report.config = config;
  report.bellman = bellman_value(params);

  const auto full = build_uniform_tree(config.arity, config.depth);
  const double target = params.F / std::pow(params.f, params.p);
  if (std::abs(target - 1.0) <= 1e-12) {
    // Only the constant f has these moments.
    std::vector<double> values(full.leaf_count(), params.f);
    TraceEntry e = detail::trace_metrics(full, values, params, report.bellman);
    report.best.leaf_values = values;
    report.best.moments = moments(full, values, params.p);
    report.best.objective = e.objective;
    report.best.gap = e.gap;
    report.restart_objectives.assign(static_cast<std::size_t>(config.restarts), e.objective);
    report.trace.push_back(e);
    return report;
  }
  if (config.depth == 0)
    fail(ErrorCode::cannot_normalize, "a depth-0 tree only carries constants, which need F = f^p");

  std::vector<MeasureTree> trees;
  for (int d = detail::start_level(params, config.arity, config.depth); d <= config.depth; ++d)
    trees.push_back(build_uniform_tree(config.arity, d));

  std::vector<detail::RestartResult> results(static_cast<std::size_t>(config.restarts));
  parallel_for(results.size(), workers, [&](std::size_t r) {
    results[r] = detail::run_restart(trees, params, config, report.bellman, static_cast<int>(r));
  });

  std::size_t best = 0;
  for (std::size_t r = 0; r < results.size(); ++r) {
    report.restart_objectives.push_back(results[r].objective);
    if (results[r].objective > results[best].objective) best = r;
  }
  auto& winner = results[best];
  report.best_restart = static_cast<int>(best);
  report.best.moments = moments(trees.back(), winner.values, params.p);
  report.best.objective = winner.objective;
  report.best.gap = report.bellman - winner.objective;
  report.best.leaf_values = std::move(winner.values);
  report.trace = std::move(winner.trace);
  return report;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct LocalizationRecord {
  NodeId node = 0;
  int level = 0;
  double mass = 0.0;
  double avg_phi = 0.0;
  double avg_phip = 0.0;
  double avg_maxenergy = 0.0;  // (1/mu(I)) int_I (M_T phi)^p
  double dev_f = 0.0;
  double dev_F = 0.0;
  double dev_S = 0.0;
};

struct LocalizationReport {
  double bellman = 0.0;
  std::vector<LocalizationRecord> records;

  double max_dev_f(int level) const {
    double out = 0.0;
    for (const auto& r : records)
      if (r.level == level) out = std::max(out, r.dev_f);
    return out;
  }
};

inline LocalizationReport localization_report(const MeasureTree& tree, const TreeFunction& phi,
                                              const BellmanParams& params, std::span<const int> levels) {
  require_same_tree(tree, phi);
  LocalizationReport rep;
  rep.bellman = bellman_value(params);
  const double p = params.p;
  const auto avg = node_averages(phi);
  const auto m = localized_maximal_from_averages(tree, avg, tree.root());
  for (int level : levels) {
    auto [b, e] = tree.level_range(level);
    for (NodeId id = b; id < e; ++id) {
      const auto& node = tree.node(id);
      LocalizationRecord r;
      r.node = id;
      r.level = level;
      r.mass = node.mass;
      r.avg_phi = avg[id];
      r.avg_phip = integrate_power(tree, phi.values(), p, id) / node.mass;
      r.avg_maxenergy = integrate_power(tree, m.values, p, id) / node.mass;
      r.dev_f = std::abs(r.avg_phi - params.f);
      r.dev_F = std::abs(r.avg_phip - params.F);
      r.dev_S = std::abs(r.avg_maxenergy - rep.bellman);
      rep.records.push_back(r);
    }
  }
  return rep;
}

struct SlackEntry {
  NodeId node = 0;
  int level = 0;
  std::optional<double> delta;  // absent when phi vanishes on the node
};

inline std::vector<SlackEntry> slack_audit(const MeasureTree& tree, const TreeFunction& phi, double p,
                                           std::span<const int> levels) {
  require_same_tree(tree, phi);
  require_exponent(p);
  const auto avg = node_averages(phi);
  std::vector<SlackEntry> out;
  for (int level : levels) {
    auto [b, e] = tree.level_range(level);
    for (NodeId id = b; id < e; ++id) {
      SlackEntry s{id, level, std::nullopt};
      if (avg[id] > 0.0) s.delta = hoelder_slack_from_averages(tree, phi, avg, id, p);
      out.push_back(s);
    }
  }
  return out;
}

/// int_J (phi - g) dmu.
inline double weak_pairing(const MeasureTree& tree, const TreeFunction& phi, const TreeFunction& g, NodeId j) {
  require_same_tree(tree, phi);
  require_same_tree(tree, g);
  tree.check_node(j);
  return integrate_power(tree, phi.values(), 1.0, j) - integrate_power(tree, g.values(), 1.0, j);
}

/// mu1 f1^p + (1 - mu1) f2^p - (mu1 f1 + (1 - mu1) f2)^p: nonnegative by
/// convexity of t^p, zero iff f1 = f2.
inline double split_convexity_excess(double mu1, double f1, double f2, double p) {
  const double f = mu1 * f1 + (1.0 - mu1) * f2;
  return mu1 * std::pow(f1, p) + (1.0 - mu1) * std::pow(f2, p) - std::pow(f, p);
}

}  // namespace blab
