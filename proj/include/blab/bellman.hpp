#pragma once

// Closed-form Bellman function of the tree maximal operator.
//
//   H_p(z)     = -(p-1) z^p + p z^{p-1},  decreasing from 1 to 0 on [1, p/(p-1)]
//   omega_p    = H_p^{-1} : [0,1] -> [1, p/(p-1)]
//   S_p(f, F)  = F * omega_p(f^p / F)^p,  0 < f^p <= F
//   G(t)       = t * omega_p(1/t)^p,      strictly concave on (1, inf)

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "blab/error.hpp"

namespace blab {

inline void require_exponent(double p) {
  if (!(p > 1.0) || !std::isfinite(p)) fail(ErrorCode::invalid_exponent, "exponent must be finite and > 1");
}

/// Right end of the range of omega_p, p/(p-1).
inline double conjugate_exponent(double p) {
  require_exponent(p);
  return p / (p - 1.0);
}

/// Exponent p together with target moments f = int phi and F = int phi^p.
struct BellmanParams {
  double p = 2.0;
  double f = 1.0;
  double F = 1.0;

  /// f^p / F, the argument of omega_p.
  double ratio() const { return std::pow(f, p) / F; }

  /// Throws unless p > 1, f > 0, F > 0 and f^p <= F (relative slack 1e-12).
  void validate() const {
    require_exponent(p);
    if (!(f > 0.0) || !std::isfinite(f)) fail(ErrorCode::domain_error, "first moment must be positive");
    if (!(F > 0.0) || !std::isfinite(F)) fail(ErrorCode::domain_error, "p-th moment must be positive");
    if (std::pow(f, p) > F * (1.0 + 1e-12))
      fail(ErrorCode::infeasible_moments, "f^p exceeds F; no nonnegative function has these moments");
  }
};

inline double h_p(double p, double z) {
  const double q = conjugate_exponent(p);
  if (!(z >= 1.0 && z <= q)) fail(ErrorCode::domain_error, "z = " + std::to_string(z) + " outside [1, p/(p-1)]");
  return std::pow(z, p - 1.0) * (p - (p - 1.0) * z);
}

struct OmegaSolve {
  double value = 1.0;
  double residual = 0.0;
  int iterations = 0;
};

inline constexpr int kOmegaMaxIterations = 200;
inline constexpr double kOmegaDefaultTol = 1e-12;

/// Inverts H_p by bisection on [1, p/(p-1)]. The bracket is halved until it
/// cannot shrink in double precision; the result must satisfy
/// |H_p(z) - x| <= tol.
inline OmegaSolve omega_p(double p, double x, double tol = kOmegaDefaultTol) {
  const double q = conjugate_exponent(p);
  if (!(x >= 0.0 && x <= 1.0)) fail(ErrorCode::domain_error, "x = " + std::to_string(x) + " outside [0, 1]");
  if (x == 1.0) return {1.0, 0.0, 0};
  if (x == 0.0) return {q, 0.0, 0};

  double lo = 1.0;  // H_p(lo) >= x
  double hi = q;    // H_p(hi) <= x
  int it = 0;
  for (; it < kOmegaMaxIterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (h_p(p, mid) >= x)
      lo = mid;
    else
      hi = mid;
  }
  const double r_lo = std::abs(h_p(p, lo) - x);
  const double r_hi = std::abs(h_p(p, hi) - x);
  OmegaSolve out{r_lo <= r_hi ? lo : hi, std::min(r_lo, r_hi), it};
  if (!(out.residual <= tol))
    fail(ErrorCode::numeric_failure,
         "omega_p residual " + std::to_string(out.residual) + " exceeds tolerance after " + std::to_string(it) +
             " iterations");
  return out;
}

inline double omega(double p, double x) { return omega_p(p, x).value; }

/// S_p(f, F) = F omega_p(f^p/F)^p.
inline double bellman_value(const BellmanParams& params) {
  params.validate();
  const double x = std::min(params.ratio(), 1.0);
  return params.F * std::pow(omega(params.p, x), params.p);
}

inline constexpr double kSingularityGuard = 1e-9;

/// d/dx [omega_p(x)^p] = -(1/(p-1)) omega_p(x) / (omega_p(x) - 1), for x < 1.
inline double omega_derivative(double p, double x) {
  require_exponent(p);
  if (!(x >= 0.0)) fail(ErrorCode::domain_error, "x must be >= 0");
  if (x >= 1.0 - kSingularityGuard) fail(ErrorCode::singularity_guard, "derivative is singular at x = 1");
  const double w = omega(p, x);
  return -(1.0 / (p - 1.0)) * w / (w - 1.0);
}

inline double g_curve(double p, double t) {
  require_exponent(p);
  if (!(t > 1.0) || !std::isfinite(t)) fail(ErrorCode::domain_error, "G is defined for t > 1");
  return t * std::pow(omega(p, 1.0 / t), p);
}

/// G'(t) = omega_p(1/t)^p + (1/(p-1)) (1/t) omega_p(1/t) / (omega_p(1/t) - 1).
inline double g_curve_derivative(double p, double t) {
  require_exponent(p);
  if (!(t > 1.0) || !std::isfinite(t)) fail(ErrorCode::domain_error, "G is defined for t > 1");
  if (1.0 / t >= 1.0 - kSingularityGuard) fail(ErrorCode::singularity_guard, "G' is singular at t = 1");
  const double w = omega(p, 1.0 / t);
  return std::pow(w, p) + (1.0 / (p - 1.0)) * (1.0 / t) * w / (w - 1.0);
}

struct ConcavityPoint {
  double t = 0.0;
  double g = 0.0;
  std::optional<double> second_diff;  // absent at the two grid ends
};

struct ConcavityScan {
  std::vector<ConcavityPoint> points;

  std::vector<double> second_differences() const {
    std::vector<double> out;
    for (const auto& pt : points)
      if (pt.second_diff) out.push_back(*pt.second_diff);
    return out;
  }

  bool strictly_concave() const {
    for (const auto& pt : points)
      if (pt.second_diff && !(*pt.second_diff < 0.0)) return false;
    return true;
  }
};

/// Samples G on n equally spaced points of [t_min, t_max] and records
/// G(t-h) - 2G(t) + G(t+h) at every interior point.
inline ConcavityScan concavity_scan(double p, double t_min, double t_max, int n) {
  require_exponent(p);
  if (!(t_min > 1.0) || !(t_max > t_min) || !std::isfinite(t_max) || n < 3)
    fail(ErrorCode::domain_error, "concavity scan needs 1 < t_min < t_max and n >= 3");
  const double h = (t_max - t_min) / (n - 1);
  ConcavityScan scan;
  scan.points.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = (i == n - 1) ? t_max : t_min + h * i;
    scan.points[i] = {t, g_curve(p, t), std::nullopt};
  }
  for (int i = 1; i + 1 < n; ++i)
    scan.points[i].second_diff = scan.points[i - 1].g - 2.0 * scan.points[i].g + scan.points[i + 1].g;
  return scan;
}

}  // namespace blab
