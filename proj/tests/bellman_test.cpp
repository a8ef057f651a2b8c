#include <gtest/gtest.h>

#include <cmath>

#include "blab/bellman.hpp"
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

constexpr double kPs[] = {1.1, 1.5, 2.0, 3.0, 10.0};

double omega2_closed_form(double x) { return 1.0 + std::sqrt(1.0 - x); }

}  // namespace

TEST(HP, Endpoints) {
  for (double p : kPs) {
    EXPECT_NEAR(h_p(p, 1.0), 1.0, 1e-15);
    EXPECT_NEAR(h_p(p, p / (p - 1.0)), 0.0, 1e-14);
  }
  EXPECT_DOUBLE_EQ(h_p(2.0, 1.5), 0.75);
}

TEST(HP, DomainErrors) {
  EXPECT_EQ(code_of([] { h_p(2.0, 0.99); }), ErrorCode::domain_error);
  EXPECT_EQ(code_of([] { h_p(2.0, 2.01); }), ErrorCode::domain_error);
  EXPECT_EQ(code_of([] { h_p(1.0, 1.0); }), ErrorCode::invalid_exponent);
}

TEST(HP, StrictlyDecreasing) {
  for (double p : kPs) {
    const double q = p / (p - 1.0);
    double prev = h_p(p, 1.0);
    for (int i = 1; i <= 200; ++i) {
      const double z = 1.0 + (q - 1.0) * i / 200.0;
      const double h = h_p(p, std::min(z, q));
      EXPECT_LT(h, prev);
      prev = h;
    }
  }
}

TEST(Omega, Endpoints) {
  for (double p : kPs) {
    EXPECT_EQ(omega(p, 1.0), 1.0);
    EXPECT_EQ(omega(p, 0.0), p / (p - 1.0));
  }
  EXPECT_NEAR(omega(2.0, 0.75), 1.5, 1e-14);
}

TEST(Omega, DomainErrors) {
  EXPECT_EQ(code_of([] { omega_p(2.0, -0.1); }), ErrorCode::domain_error);
  EXPECT_EQ(code_of([] { omega_p(2.0, 1.1); }), ErrorCode::domain_error);
  EXPECT_EQ(code_of([] { omega_p(2.0, 0.5, 0.0); }), ErrorCode::numeric_failure);
}

TEST(Omega, RoundTripAndMonotone) {
  for (double p : kPs) {
    double prev = omega(p, 0.0);
    for (int i = 0; i <= 1000; ++i) {
      const double x = i / 1000.0;
      const auto sol = omega_p(p, x);
      EXPECT_LE(std::abs(h_p(p, sol.value) - x), 1e-12) << "p=" << p << " x=" << x;
      EXPECT_GE(sol.value, 1.0);
      EXPECT_LE(sol.value, p / (p - 1.0));
      EXPECT_LE(sol.iterations, kOmegaMaxIterations);
      if (i > 0) {
        EXPECT_LT(sol.value, prev);
      }
      prev = sol.value;
    }
  }
}

TEST(Omega, ClosedFormAtPTwo) {
  for (int i = 0; i <= 1000; ++i) {
    const double x = i / 1000.0;
    EXPECT_NEAR(omega(2.0, x), omega2_closed_form(x), 1e-10);
  }
}

TEST(BellmanValue, Examples) {
  EXPECT_NEAR(bellman_value({2.0, 1.0, 4.0 / 3.0}), 3.0, 1e-12);
  for (double p : kPs) {
    const double f = 1.3;
    const double F = std::pow(f, p);
    EXPECT_NEAR(bellman_value({p, f, F}), F, 1e-12 * F);
  }
  EXPECT_NEAR(bellman_value({2.0, 1.0, 1e12}) / 1e12, 4.0, 1e-9);
}

TEST(BellmanValue, Errors) {
  EXPECT_EQ(code_of([] { bellman_value({2.0, 2.0, 3.0}); }), ErrorCode::infeasible_moments);
  EXPECT_EQ(code_of([] { bellman_value({0.9, 1.0, 1.0}); }), ErrorCode::invalid_exponent);
  EXPECT_EQ(code_of([] { bellman_value({2.0, 0.0, 1.0}); }), ErrorCode::domain_error);
}

TEST(BellmanValue, BoundsAndScaling) {
  Rng rng(5);
  for (double p : kPs) {
    const double q = p / (p - 1.0);
    for (int i = 0; i < 200; ++i) {
      const double f = rng.uniform(0.1, 5.0);
      const double F = std::pow(f, p) * (1.0 + rng.lomax(1.0));
      const double s = bellman_value({p, f, F});
      EXPECT_GE(s, F * (1 - 1e-14));
      EXPECT_LE(s, std::pow(q, p) * F * (1 + 1e-14));

      const double c = rng.uniform(0.2, 7.0);
      const double scaled = bellman_value({p, c * f, std::pow(c, p) * F});
      EXPECT_NEAR(scaled, std::pow(c, p) * s, 1e-12 * scaled);
    }
  }
}

TEST(BellmanValue, IncreasingInSecondMoment) {
  for (double p : {1.5, 2.0, 3.0}) {
    double prev = bellman_value({p, 1.0, 1.0});
    for (int i = 1; i <= 100; ++i) {
      const double s = bellman_value({p, 1.0, 1.0 + 0.2 * i});
      EXPECT_GT(s, prev);
      prev = s;
    }
  }
}

TEST(OmegaDerivative, Examples) {
  EXPECT_NEAR(omega_derivative(2.0, 0.75), -3.0, 1e-12);
  EXPECT_NEAR(omega_derivative(2.0, 0.0), -2.0, 1e-12);
  EXPECT_EQ(code_of([] { omega_derivative(2.0, 1.0); }), ErrorCode::singularity_guard);
  EXPECT_EQ(code_of([] { omega_derivative(2.0, 1.0 - 1e-10); }), ErrorCode::singularity_guard);
}

TEST(OmegaDerivative, MatchesCentralDifferences) {
  const double h = 1e-5;
  for (double p : {1.5, 2.0, 3.0}) {
    auto wp = [p](double x) { return std::pow(omega(p, x), p); };
    for (int i = 1; i <= 99; ++i) {
      const double x = i / 100.0;
      const double fd = (wp(x + h) - wp(x - h)) / (2.0 * h);
      const double exact = omega_derivative(p, x);
      EXPECT_NEAR(fd, exact, 1e-6 * std::abs(exact)) << "p=" << p << " x=" << x;
    }
  }
}

TEST(GCurve, Examples) {
  EXPECT_NEAR(g_curve(2.0, 4.0 / 3.0), 3.0, 1e-12);
  const double expect = 2.0 * std::pow(1.0 + std::sqrt(0.5), 2);
  EXPECT_NEAR(g_curve(2.0, 2.0), expect, 1e-12);
  EXPECT_NEAR(g_curve(2.0, 1.0 + 1e-12), 1.0, 1e-5);
  EXPECT_EQ(code_of([] { g_curve(2.0, 1.0); }), ErrorCode::domain_error);
}

TEST(GCurve, DerivativePositiveAndMatchesDifferences) {
  for (double p : {1.5, 2.0, 3.0}) {
    for (int i = 0; i < 100; ++i) {
      const double t = 1.05 + 0.5 * i;
      const double d = g_curve_derivative(p, t);
      EXPECT_GT(d, 0.0);
      const double h = 1e-5 * t;
      const double fd = (g_curve(p, t + h) - g_curve(p, t - h)) / (2.0 * h);
      EXPECT_NEAR(fd, d, 1e-6 * d);
    }
  }
}

TEST(ConcavityScan, NegativeSecondDifferences) {
  for (double p : {1.5, 2.0, 3.0}) {
    const auto scan = concavity_scan(p, 1.1, 10.0, 100);
    EXPECT_EQ(scan.points.size(), 100u);
    EXPECT_EQ(scan.second_differences().size(), 98u);
    EXPECT_TRUE(scan.strictly_concave());
    EXPECT_FALSE(scan.points.front().second_diff.has_value());
    EXPECT_EQ(scan.points.back().t, 10.0);
  }
  const auto minimal = concavity_scan(2.0, 1.1, 10.0, 3);
  ASSERT_EQ(minimal.second_differences().size(), 1u);
  EXPECT_LT(minimal.second_differences()[0], 0.0);
}

TEST(ConcavityScan, InvalidGrid) {
  EXPECT_EQ(code_of([] { concavity_scan(2.0, 1.0, 10.0, 10); }), ErrorCode::domain_error);
  EXPECT_EQ(code_of([] { concavity_scan(2.0, 5.0, 2.0, 10); }), ErrorCode::domain_error);
  EXPECT_EQ(code_of([] { concavity_scan(2.0, 1.1, 10.0, 2); }), ErrorCode::domain_error);
}

TEST(BellmanValue, BoundsEveryTreeFunction) {
  Rng rng(31);
  const auto t = build_uniform_tree(3, 3);
  for (double p : {1.5, 2.0, 3.0}) {
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<double> v(t.leaf_count());
      for (auto& x : v) x = rng.lomax(1.2) + 1e-3;
      const TreeFunction phi(t, v);
      const double f = integrate_power(t, phi.values(), 1.0, t.root());
      const double F = integrate_power(t, phi.values(), p, t.root());
      const double energy = integrate_power(maximal_function(t, phi), p);
      EXPECT_LE(energy, bellman_value({p, f, F}) + 1e-9 * std::max(1.0, F));
    }
  }
}
