#pragma once

// Finite-depth tree measure spaces and nonnegative functions on their leaves.
//
// Nodes are stored in level order, so every level and the leaves under any
// node occupy contiguous index ranges. Leaves all sit at level depth().

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blab/error.hpp"

namespace blab {

using NodeId = std::size_t;

inline constexpr double kPartitionTolerance = 1e-12;

struct NodeRecord {
  double mass = 0.0;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  int level = 0;
  // Leaves under this node, as indices into the leaf sequence [begin, end).
  std::size_t leaf_begin = 0;
  std::size_t leaf_end = 0;
};

/// Sibling groups of child mass fractions, one level at a time. A level holds
/// either one group per node of the previous level, or a single group that is
/// applied to every node of that level.
using CustomTreeSpec = std::vector<std::vector<std::vector<double>>>;

class MeasureTree {
 public:
  const std::vector<NodeRecord>& nodes() const noexcept { return nodes_; }
  const NodeRecord& node(NodeId id) const {
    check_node(id);
    return nodes_[id];
  }

  NodeId root() const noexcept { return 0; }
  int depth() const noexcept { return depth_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t leaf_count() const noexcept { return nodes_.size() - first_leaf(); }
  NodeId first_leaf() const noexcept { return level_begin_[depth_]; }

  NodeId leaf_node(std::size_t leaf_index) const noexcept { return first_leaf() + leaf_index; }
  double leaf_mass(std::size_t leaf_index) const noexcept { return nodes_[leaf_node(leaf_index)].mass; }

  /// Node ids [begin, end) at the given level.
  std::pair<NodeId, NodeId> level_range(int level) const {
    check_level(level);
    return {level_begin_[level], level_begin_[level + 1]};
  }

  std::vector<NodeId> level_nodes(int level) const {
    auto [b, e] = level_range(level);
    std::vector<NodeId> out;
    out.reserve(e - b);
    for (NodeId id = b; id < e; ++id) out.push_back(id);
    return out;
  }

  bool contains(NodeId id) const noexcept { return id < nodes_.size(); }

  void check_node(NodeId id) const {
    if (!contains(id)) fail(ErrorCode::unknown_node, "node " + std::to_string(id) + " does not exist");
  }

  void check_level(int level) const {
    if (level < 0 || level > depth_)
      fail(ErrorCode::invalid_level,
           "level " + std::to_string(level) + " outside [0, " + std::to_string(depth_) + "]");
  }

  /// Mass of the heaviest node at a level; a finite-depth proxy for the
  /// requirement that level masses shrink to zero.
  double max_level_mass(int level) const {
    auto [b, e] = level_range(level);
    double best = 0.0;
    for (NodeId id = b; id < e; ++id) best = std::max(best, nodes_[id].mass);
    return best;
  }

  /// `j` and all of its descendants, in level order.
  std::vector<NodeId> subtree_nodes(NodeId j) const {
    check_node(j);
    std::vector<NodeId> out{j};
    for (std::size_t i = 0; i < out.size(); ++i)
      for (NodeId c : nodes_[out[i]].children) out.push_back(c);
    return out;
  }

  /// Re-checks every structural invariant; throws on the first violation.
  void validate() const;

  friend MeasureTree build_uniform_tree(int arity, int depth);
  friend MeasureTree build_custom_tree(const CustomTreeSpec& spec);

 private:
  MeasureTree() = default;

  // Appends a level whose node masses are parent mass times the fraction.
  void append_level(const std::vector<std::vector<double>>& groups_per_parent);
  void finish();

  std::vector<NodeRecord> nodes_;
  std::vector<NodeId> level_begin_;  // size depth_ + 2
  int depth_ = 0;
};

inline constexpr std::size_t kMaxTreeNodes = std::size_t{1} << 24;

inline void MeasureTree::append_level(const std::vector<std::vector<double>>& groups) {
  const NodeId parent_begin = level_begin_.back();
  const NodeId parent_end = nodes_.size();
  const int level = depth_ + 1;
  std::size_t added = 0;
  for (const auto& g : groups) added += g.size();
  if (nodes_.size() + added > kMaxTreeNodes)
    fail(ErrorCode::invalid_spec, "tree exceeds " + std::to_string(kMaxTreeNodes) + " nodes");

  level_begin_.push_back(parent_end);
  for (NodeId parent = parent_begin; parent < parent_end; ++parent) {
    const auto& group = groups[parent - parent_begin];
    for (double fraction : group) {
      NodeRecord rec;
      rec.mass = nodes_[parent].mass * fraction;
      rec.parent = parent;
      rec.level = level;
      nodes_[parent].children.push_back(nodes_.size());
      nodes_.push_back(std::move(rec));
    }
  }
  depth_ = level;
}

inline void MeasureTree::finish() {
  level_begin_.push_back(nodes_.size());
  const NodeId leaves = level_begin_[depth_];
  for (NodeId id = nodes_.size(); id-- > 0;) {
    auto& rec = nodes_[id];
    if (rec.children.empty()) {
      rec.leaf_begin = id - leaves;
      rec.leaf_end = rec.leaf_begin + 1;
    } else {
      rec.leaf_begin = nodes_[rec.children.front()].leaf_begin;
      rec.leaf_end = nodes_[rec.children.back()].leaf_end;
    }
  }
  validate();
}

inline void MeasureTree::validate() const {
  if (nodes_.empty()) fail(ErrorCode::invalid_spec, "empty tree");
  if (std::abs(nodes_[0].mass - 1.0) > kPartitionTolerance)
    fail(ErrorCode::invalid_partition, "root mass is not 1");
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const auto& rec = nodes_[id];
    if (!(rec.mass > 0.0)) fail(ErrorCode::invalid_mass, "node " + std::to_string(id) + " has nonpositive mass");
    const bool is_leaf = rec.children.empty();
    if (is_leaf != (rec.level == depth_))
      fail(ErrorCode::invalid_spec, "node " + std::to_string(id) + " is a leaf above the last level");
    if (is_leaf) continue;
    if (rec.children.size() < 2)
      fail(ErrorCode::invalid_arity, "node " + std::to_string(id) + " has fewer than two children");
    double sum = 0.0;
    for (NodeId c : rec.children) {
      if (nodes_[c].level != rec.level + 1 || nodes_[c].parent != id)
        fail(ErrorCode::invalid_spec, "broken parent link at node " + std::to_string(c));
      sum += nodes_[c].mass;
    }
    if (std::abs(sum - rec.mass) > kPartitionTolerance)
      fail(ErrorCode::invalid_partition, "children of node " + std::to_string(id) + " do not partition it");
  }
}

/// Homogeneous tree: every internal node splits into `arity` children of equal mass.
inline MeasureTree build_uniform_tree(int arity, int depth) {
  if (arity < 2) fail(ErrorCode::invalid_arity, "arity must be at least 2");
  if (depth < 0) fail(ErrorCode::invalid_level, "depth must be nonnegative");
  if (std::pow(static_cast<double>(arity), depth) > static_cast<double>(kMaxTreeNodes))
    fail(ErrorCode::invalid_spec, "tree exceeds " + std::to_string(kMaxTreeNodes) + " nodes");

  MeasureTree t;
  t.nodes_.emplace_back().mass = 1.0;
  t.level_begin_.push_back(0);
  for (int level = 1; level <= depth; ++level) {
    const NodeId parent_begin = t.level_begin_.back();
    const NodeId parent_end = t.nodes_.size();
    // One division from an exact integer power keeps the mass correctly rounded.
    const double mass = 1.0 / std::pow(static_cast<double>(arity), level);
    t.level_begin_.push_back(parent_end);
    for (NodeId parent = parent_begin; parent < parent_end; ++parent) {
      for (int k = 0; k < arity; ++k) {
        t.nodes_[parent].children.push_back(t.nodes_.size());
        t.nodes_.push_back(NodeRecord{.mass = mass, .parent = parent, .children = {}, .level = level});
      }
    }
    t.depth_ = level;
  }
  t.finish();
  return t;
}

inline MeasureTree build_custom_tree(const CustomTreeSpec& spec) {
  MeasureTree t;
  t.nodes_.emplace_back().mass = 1.0;
  t.level_begin_.push_back(0);
  for (std::size_t level = 0; level < spec.size(); ++level) {
    const auto& groups = spec[level];
    const std::size_t parents = t.nodes_.size() - t.level_begin_.back();
    if (groups.size() != 1 && groups.size() != parents)
      fail(ErrorCode::invalid_spec, "level " + std::to_string(level) + " lists " + std::to_string(groups.size()) +
                                        " groups for " + std::to_string(parents) + " nodes");
    for (const auto& g : groups) {
      if (g.size() < 2) fail(ErrorCode::invalid_arity, "sibling group with fewer than two entries");
      double sum = 0.0;
      for (double x : g) {
        if (!(x > 0.0) || !std::isfinite(x)) fail(ErrorCode::invalid_mass, "mass fractions must be positive");
        sum += x;
      }
      if (std::abs(sum - 1.0) > kPartitionTolerance)
        fail(ErrorCode::invalid_partition, "sibling fractions sum to " + std::to_string(sum));
    }
    if (groups.size() == parents) {
      t.append_level(groups);
    } else {
      t.append_level(std::vector<std::vector<double>>(parents, groups.front()));
    }
  }
  t.finish();
  return t;
}

/// Nonnegative function that is constant on each leaf of a tree. Holds a
/// non-owning pointer to the tree, which must outlive the function.
class TreeFunction {
 public:
  TreeFunction(const MeasureTree& tree, std::vector<double> leaf_values)
      : tree_(&tree), values_(std::move(leaf_values)) {
    if (values_.size() != tree.leaf_count())
      fail(ErrorCode::domain_mismatch, "expected " + std::to_string(tree.leaf_count()) + " leaf values, got " +
                                           std::to_string(values_.size()));
    for (double v : values_)
      if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorCode::invalid_function, "leaf values must be finite and >= 0");
  }

  static TreeFunction constant(const MeasureTree& tree, double c) {
    return TreeFunction(tree, std::vector<double>(tree.leaf_count(), c));
  }

  const MeasureTree& tree() const noexcept { return *tree_; }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t leaf) const noexcept { return values_[leaf]; }
  std::size_t size() const noexcept { return values_.size(); }

  bool lives_on(const MeasureTree& tree) const noexcept { return tree_ == &tree; }

 private:
  const MeasureTree* tree_;
  std::vector<double> values_;
};

inline void require_same_tree(const MeasureTree& tree, const TreeFunction& phi) {
  if (!phi.lives_on(tree)) fail(ErrorCode::domain_mismatch, "function is defined on a different tree");
}

/// Leaf values of a coarser function repeated onto a deeper uniform tree of the
/// same arity. The maximal function and all node averages are unchanged.
inline std::vector<double> refine_uniform(std::span<const double> coarse, int arity, int extra_levels) {
  std::size_t factor = 1;
  for (int i = 0; i < extra_levels; ++i) factor *= static_cast<std::size_t>(arity);
  std::vector<double> out;
  out.reserve(coarse.size() * factor);
  for (double v : coarse) out.insert(out.end(), factor, v);
  return out;
}

}  // namespace blab
