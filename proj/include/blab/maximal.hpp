#pragma once

// Tree maximal operator, integrals over tree nodes, the weak-type functional
// and the per-node Hoelder slack of the localized Bellman inequality.

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "blab/error.hpp"
#include "blab/tree.hpp"

namespace blab {

namespace detail {

// Neumaier-compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double power(double x, double p) {
  if (p == 1.0) return x;
  if (p == 2.0) return x * x;
  return std::pow(x, p);
}

}  // namespace detail

/// Average of the leaf values over every node, indexed by node id.
///
/// Each average is the mass-weighted mean of its children's averages, clamped
/// to the children's range so that constant functions stay exactly constant.
inline std::vector<double> node_averages(const MeasureTree& tree, std::span<const double> leaf_values) {
  if (leaf_values.size() != tree.leaf_count())
    fail(ErrorCode::domain_mismatch, "leaf value count does not match the tree");
  const auto& nodes = tree.nodes();
  std::vector<double> avg(nodes.size());
  const NodeId first_leaf = tree.first_leaf();
  for (std::size_t k = 0; k < leaf_values.size(); ++k) avg[first_leaf + k] = leaf_values[k];
  for (NodeId id = first_leaf; id-- > 0;) {
    const auto& rec = nodes[id];
    detail::CompensatedSum s;
    double lo = avg[rec.children.front()];
    double hi = lo;
    for (NodeId c : rec.children) {
      s.add(nodes[c].mass * avg[c]);
      lo = std::min(lo, avg[c]);
      hi = std::max(hi, avg[c]);
    }
    avg[id] = std::clamp(s.value() / rec.mass, lo, hi);
  }
  return avg;
}

inline std::vector<double> node_averages(const TreeFunction& phi) {
  return node_averages(phi.tree(), phi.values());
}

// Same bottom-up recursion as node_averages, so the value agrees bit for bit
// with what the maximal function sees.
inline double node_average(const MeasureTree& tree, const TreeFunction& phi, NodeId j) {
  require_same_tree(tree, phi);
  tree.check_node(j);
  return node_averages(phi)[j];
}

/// M_J phi on the leaves under `node` (all leaves when `node` is the root).
struct MaximalValues {
  const MeasureTree* tree = nullptr;
  NodeId node = 0;
  std::vector<double> values;

  std::size_t leaf_begin() const { return tree->node(node).leaf_begin; }
};

/// Running maximum of node averages from `j` down to every leaf below it,
/// given precomputed averages for all nodes.
inline MaximalValues localized_maximal_from_averages(const MeasureTree& tree, std::span<const double> averages,
                                                     NodeId j) {
  tree.check_node(j);
  const auto& nodes = tree.nodes();
  const std::size_t base = nodes[j].leaf_begin;
  MaximalValues out{&tree, j, std::vector<double>(nodes[j].leaf_end - base)};
  std::vector<std::pair<NodeId, double>> stack{{j, averages[j]}};
  while (!stack.empty()) {
    auto [id, running] = stack.back();
    stack.pop_back();
    const auto& rec = nodes[id];
    if (rec.children.empty()) {
      out.values[rec.leaf_begin - base] = running;
      continue;
    }
    for (NodeId c : rec.children) stack.emplace_back(c, std::max(running, averages[c]));
  }
  return out;
}

inline MaximalValues localized_maximal(const MeasureTree& tree, const TreeFunction& phi, NodeId j) {
  require_same_tree(tree, phi);
  tree.check_node(j);
  return localized_maximal_from_averages(tree, node_averages(phi), j);
}

/// M_T phi on every leaf: the largest average over the leaf's ancestor chain.
inline MaximalValues maximal_function(const MeasureTree& tree, const TreeFunction& phi) {
  return localized_maximal(tree, phi, tree.root());
}

/// Sum over the leaves under `j` of mass * psi^p. `psi` holds one value per leaf
/// of the whole tree.
inline double integrate_power(const MeasureTree& tree, std::span<const double> psi, double p, NodeId j) {
  if (!(p >= 1.0)) fail(ErrorCode::invalid_exponent, "exponent must be >= 1");
  if (psi.size() != tree.leaf_count()) fail(ErrorCode::domain_mismatch, "leaf value count does not match the tree");
  const auto& rec = tree.node(j);
  detail::CompensatedSum s;
  for (std::size_t k = rec.leaf_begin; k < rec.leaf_end; ++k) {
    if (!(psi[k] >= 0.0)) fail(ErrorCode::invalid_function, "integrand must be nonnegative");
    s.add(tree.leaf_mass(k) * detail::power(psi[k], p));
  }
  return s.value();
}

/// Integral of psi^p over the leaves covered by a (possibly localized) maximal function.
inline double integrate_power(const MaximalValues& m, double p) {
  if (!(p >= 1.0)) fail(ErrorCode::invalid_exponent, "exponent must be >= 1");
  const std::size_t base = m.leaf_begin();
  detail::CompensatedSum s;
  for (std::size_t k = 0; k < m.values.size(); ++k) s.add(m.tree->leaf_mass(base + k) * detail::power(m.values[k], p));
  return s.value();
}

struct WeakTypeResult {
  double lhs = 0.0;  // mass of {M phi >= lambda}
  double rhs = 0.0;  // (1/lambda) * integral of phi over that set
};

inline WeakTypeResult weak_type_from_maximal(const MeasureTree& tree, const TreeFunction& phi,
                                             std::span<const double> maximal, double lambda) {
  if (!(lambda > 0.0)) fail(ErrorCode::invalid_threshold, "threshold must be positive");
  detail::CompensatedSum mass;
  detail::CompensatedSum integral;
  for (std::size_t k = 0; k < maximal.size(); ++k) {
    if (maximal[k] >= lambda) {
      mass.add(tree.leaf_mass(k));
      integral.add(tree.leaf_mass(k) * phi[k]);
    }
  }
  return {mass.value(), integral.value() / lambda};
}

inline WeakTypeResult weak_type_check(const MeasureTree& tree, const TreeFunction& phi, double lambda) {
  if (!(lambda > 0.0)) fail(ErrorCode::invalid_threshold, "threshold must be positive");
  const auto m = maximal_function(tree, phi);
  return weak_type_from_maximal(tree, phi, m.values, lambda);
}

/// Residual delta of
///   -(p-1) A + p B^{1/p} A^{1-1/p} = C^p / mu(J)^{p-1} + delta,
/// with A = int_J (M_J phi)^p, B = int_J phi^p, C = int_J phi.
/// The localized Bellman bound makes delta nonnegative.
inline double hoelder_slack_from_averages(const MeasureTree& tree, const TreeFunction& phi,
                                          std::span<const double> averages, NodeId j, double p) {
  if (!(p > 1.0)) fail(ErrorCode::invalid_exponent, "exponent must be > 1");
  const auto& rec = tree.node(j);
  const double mass = rec.mass;
  const double c = averages[j] * mass;
  if (!(c > 0.0)) fail(ErrorCode::degenerate_input, "function vanishes on node " + std::to_string(j));
  const auto local = localized_maximal_from_averages(tree, averages, j);
  const double a = integrate_power(local, p);
  const double b = integrate_power(tree, phi.values(), p, j);
  return -(p - 1.0) * a + p * std::pow(b, 1.0 / p) * std::pow(a, 1.0 - 1.0 / p) -
         std::pow(c, p) / std::pow(mass, p - 1.0);
}

inline double hoelder_slack(const MeasureTree& tree, const TreeFunction& phi, NodeId j, double p) {
  require_same_tree(tree, phi);
  tree.check_node(j);
  return hoelder_slack_from_averages(tree, phi, node_averages(phi), j, p);
}

}  // namespace blab
