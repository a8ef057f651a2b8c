#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "blab/maximal.hpp"
#include "blab/rng.hpp"

using namespace blab;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected blab::Error";
  return ErrorCode::invariant_violation;
}

// Brute force: for each leaf, scan every node of the tree, keep those whose
// subtree contains the leaf, average phi over the node's leaves directly.
std::vector<double> brute_force_maximal(const MeasureTree& t, const std::vector<double>& phi) {
  std::vector<double> out(t.leaf_count(), 0.0);
  for (std::size_t leaf = 0; leaf < t.leaf_count(); ++leaf) {
    const NodeId leaf_id = t.leaf_node(leaf);
    for (NodeId id = 0; id < t.node_count(); ++id) {
      const auto sub = t.subtree_nodes(id);
      if (std::find(sub.begin(), sub.end(), leaf_id) == sub.end()) continue;
      double integral = 0.0;
      double mass = 0.0;
      for (NodeId s : sub) {
        if (!t.node(s).children.empty()) continue;
        integral += t.node(s).mass * phi[s - t.first_leaf()];
        mass += t.node(s).mass;
      }
      out[leaf] = std::max(out[leaf], integral / mass);
    }
  }
  return out;
}

std::vector<MeasureTree> small_trees() {
  std::vector<MeasureTree> trees;
  trees.push_back(build_uniform_tree(2, 3));
  trees.push_back(build_uniform_tree(3, 1));
  trees.push_back(build_custom_tree({{{0.3, 0.7}}, {{0.6, 0.4}, {0.2, 0.3, 0.5}}}));
  trees.push_back(build_custom_tree({{{0.1, 0.2, 0.7}}, {{0.5, 0.5}}}));
  return trees;
}

std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = (rng.uniform() < 0.2) ? 0.0 : rng.lomax(1.5);
  return v;
}

}  // namespace

TEST(NodeAverage, Examples) {
  const auto t = build_uniform_tree(2, 1);
  const TreeFunction phi(t, {0.0, 2.0});
  EXPECT_EQ(node_average(t, phi, t.root()), 1.0);
  EXPECT_EQ(node_average(t, phi, 2), 2.0);
  const auto c = TreeFunction::constant(t, 0.3);
  for (NodeId id = 0; id < t.node_count(); ++id) EXPECT_EQ(node_average(t, c, id), 0.3);
}

TEST(NodeAverage, RejectsForeignFunction) {
  const auto t = build_uniform_tree(2, 1);
  const auto other = build_uniform_tree(2, 1);
  const TreeFunction phi(other, {0.0, 2.0});
  EXPECT_EQ(code_of([&] { node_average(t, phi, 0); }), ErrorCode::domain_mismatch);
}

TEST(MaximalFunction, Examples) {
  const auto t1 = build_uniform_tree(2, 1);
  EXPECT_EQ(maximal_function(t1, TreeFunction(t1, {0.0, 2.0})).values, (std::vector<double>{1.0, 2.0}));

  const auto t2 = build_uniform_tree(2, 2);
  const TreeFunction spike(t2, {4.0, 0.0, 0.0, 0.0});
  EXPECT_EQ(maximal_function(t2, spike).values, (std::vector<double>{4.0, 2.0, 1.0, 1.0}));

  const auto c = TreeFunction::constant(t2, 0.7);
  for (double v : maximal_function(t2, c).values) EXPECT_EQ(v, 0.7);
}

TEST(LocalizedMaximal, Examples) {
  const auto t = build_uniform_tree(2, 2);
  const TreeFunction spike(t, {4.0, 0.0, 0.0, 0.0});
  EXPECT_EQ(localized_maximal(t, spike, t.root()).values, maximal_function(t, spike).values);
  EXPECT_EQ(localized_maximal(t, spike, 1).values, (std::vector<double>{4.0, 2.0}));
  EXPECT_EQ(localized_maximal(t, spike, t.leaf_node(2)).values, (std::vector<double>{0.0}));
  EXPECT_EQ(code_of([&] { localized_maximal(t, spike, 42); }), ErrorCode::unknown_node);
}

TEST(IntegratePower, Examples) {
  const auto t = build_uniform_tree(2, 1);
  const std::vector<double> ones{1.0, 1.0};
  EXPECT_EQ(integrate_power(t, ones, 3.7, t.root()), 1.0);
  EXPECT_EQ(integrate_power(t, std::vector<double>{0.0, 2.0}, 2.0, t.root()), 2.0);
  EXPECT_EQ(integrate_power(t, std::vector<double>{1.0, 2.0}, 1.0, 2), 1.0);
  EXPECT_EQ(code_of([&] { integrate_power(t, ones, 0.5, t.root()); }), ErrorCode::invalid_exponent);
}

TEST(WeakTypeCheck, Examples) {
  const auto t = build_uniform_tree(2, 2);
  const auto c = TreeFunction::constant(t, 1.5);
  auto w = weak_type_check(t, c, 1.5);
  EXPECT_EQ(w.lhs, 1.0);
  EXPECT_EQ(w.rhs, 1.0);
  w = weak_type_check(t, c, 1.0);
  EXPECT_EQ(w.lhs, 1.0);
  EXPECT_DOUBLE_EQ(w.rhs, 1.5);
  w = weak_type_check(t, c, 2.0);
  EXPECT_EQ(w.lhs, 0.0);
  EXPECT_EQ(w.rhs, 0.0);

  const auto t1 = build_uniform_tree(2, 1);
  w = weak_type_check(t1, TreeFunction(t1, {0.0, 2.0}), 2.0);
  EXPECT_EQ(w.lhs, 0.5);
  EXPECT_EQ(w.rhs, 0.5);

  EXPECT_EQ(code_of([&] { weak_type_check(t, c, 0.0); }), ErrorCode::invalid_threshold);
  EXPECT_EQ(code_of([&] { weak_type_check(t, c, -1.0); }), ErrorCode::invalid_threshold);
}

TEST(HoelderSlack, Examples) {
  const auto t1 = build_uniform_tree(2, 1);
  const TreeFunction phi(t1, {0.0, 2.0});
  // A = int (M phi)^2 = 2.5, B = int phi^2 = 2, C = int phi = 1:
  // delta = -2.5 + 2 sqrt(2) sqrt(2.5) - 1 = 2 sqrt(5) - 3.5.
  EXPECT_NEAR(hoelder_slack(t1, phi, t1.root(), 2.0), 2.0 * std::sqrt(5.0) - 3.5, 1e-14);
  EXPECT_NEAR(hoelder_slack(t1, phi, 2, 2.0), 0.0, 1e-14);

  const auto t = build_uniform_tree(3, 2);
  const auto c = TreeFunction::constant(t, 1.7);
  for (double p : {1.5, 2.0, 3.0})
    for (NodeId id = 0; id < t.node_count(); ++id) EXPECT_NEAR(hoelder_slack(t, c, id, p), 0.0, 1e-12);
}

TEST(HoelderSlack, Errors) {
  const auto t1 = build_uniform_tree(2, 1);
  const TreeFunction phi(t1, {0.0, 2.0});
  EXPECT_EQ(code_of([&] { hoelder_slack(t1, phi, 1, 2.0); }), ErrorCode::degenerate_input);
  EXPECT_EQ(code_of([&] { hoelder_slack(t1, phi, 0, 1.0); }), ErrorCode::invalid_exponent);
}

TEST(MaximalProperties, BruteForceEquivalenceOnSmallTrees) {
  Rng rng(2024);
  for (const auto& t : small_trees()) {
    ASSERT_LE(t.leaf_count(), 8u);
    for (int trial = 0; trial < 200; ++trial) {
      const auto v = random_values(t.leaf_count(), rng);
      const auto fast = maximal_function(t, TreeFunction(t, v)).values;
      const auto slow = brute_force_maximal(t, v);
      for (std::size_t k = 0; k < v.size(); ++k) EXPECT_NEAR(fast[k], slow[k], 1e-12 * (1.0 + slow[k]));
    }
  }
}

TEST(MaximalProperties, DominationMonotonicityHomogeneity) {
  Rng rng(7);
  for (const auto& t : small_trees()) {
    for (int trial = 0; trial < 200; ++trial) {
      auto v = random_values(t.leaf_count(), rng);
      const TreeFunction phi(t, v);
      const auto m = maximal_function(t, phi).values;
      const double mean = node_average(t, phi, t.root());
      for (std::size_t k = 0; k < v.size(); ++k) {
        EXPECT_GE(m[k], v[k]);
        EXPECT_GE(m[k], mean);
      }

      auto bigger = v;
      for (auto& x : bigger) x += rng.uniform() * (rng.uniform() < 0.5 ? 0.0 : 3.0);
      const auto mb = maximal_function(t, TreeFunction(t, bigger)).values;
      for (std::size_t k = 0; k < v.size(); ++k) EXPECT_LE(m[k], mb[k] * (1 + 1e-15));

      const double c = 0.25;  // power of two: scaling is exact
      auto scaled = v;
      for (auto& x : scaled) x *= c;
      const auto ms = maximal_function(t, TreeFunction(t, scaled)).values;
      for (std::size_t k = 0; k < v.size(); ++k) EXPECT_EQ(ms[k], c * m[k]);

      for (NodeId j = 0; j < t.node_count(); ++j) {
        const auto local = localized_maximal(t, phi, j);
        for (std::size_t i = 0; i < local.values.size(); ++i)
          EXPECT_LE(local.values[i], m[local.leaf_begin() + i]);
      }
    }
  }
}

TEST(MaximalProperties, WeakTypeAndSlackNonnegative) {
  Rng rng(99);
  const auto t = build_uniform_tree(2, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const TreeFunction phi(t, random_values(t.leaf_count(), rng));
    const auto m = maximal_function(t, phi).values;
    for (double lambda : m) {
      if (lambda <= 0.0) continue;
      const auto w = weak_type_check(t, phi, lambda);
      EXPECT_LE(w.lhs, w.rhs + 1e-12);
    }
    const auto avg = node_averages(phi);
    for (double p : {1.5, 2.0, 3.0})
      for (NodeId j = 0; j < t.node_count(); ++j) {
        if (avg[j] > 0.0) {
          EXPECT_GE(hoelder_slack(t, phi, j, p), -1e-10);
        }
      }
  }
}
