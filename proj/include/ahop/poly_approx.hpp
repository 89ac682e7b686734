#pragma once

// Low-degree power-basis approximations of exp with a certified entrywise
// relative error on a symmetric interval [-B', B'].

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahop/error.hpp"

namespace ahop {

inline constexpr int kDefaultMaxDegree = 32;
inline constexpr int kValidationGridPoints = 4096;

struct ExpPolynomial {
  std::vector<double> coeffs;  // c_0 .. c_g, power basis
  int degree = 0;
  double interval_bound = 0.0;
  double target_rel_error = 0.0;
  double certified_rel_error = 0.0;
  // Reference degree from the asymptotic bound, and whether that bound
  // degenerated to its first branch for these inputs.
  int reference_degree = 0;
  bool reference_degenerate = false;
};

/// Horner evaluation of sum_i c_i x^i. An empty coefficient list is the zero polynomial.
inline double eval_poly(std::span<const double> coeffs, double x) {
  double acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
  return acc;
}

inline double eval_poly(const ExpPolynomial& p, double x) { return eval_poly(p.coeffs, x); }

/// Max of |P(x) - e^x| / e^x over `grid_points` uniformly spaced points on
/// [-bound, bound], endpoints included.
inline double sup_relative_error(std::span<const double> coeffs, double bound, int grid_points) {
  require(grid_points >= 2, ErrorCode::InvalidArgument, "sup_relative_error: grid_points must be >= 2");
  double worst = 0.0;
  const double step = 2.0 * bound / (grid_points - 1);
  for (int k = 0; k < grid_points; ++k) {
    const double x = (k == grid_points - 1) ? bound : -bound + step * k;
    const double ex = std::exp(x);
    const double rel = std::abs(eval_poly(coeffs, x) - ex) / ex;
    // Past |x| ~ 709 e^x over- or underflows and rel turns NaN; std::max would
    // drop it silently, so an unrepresentable point counts as a miss.
    if (!std::isfinite(rel)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, rel);
  }
  return worst;
}

inline double sup_relative_error(const ExpPolynomial& p, int grid_points) {
  return sup_relative_error(p.coeffs, p.interval_bound, grid_points);
}

struct DegreeBound {
  int value = 0;
  bool degenerate = false;  // second branch undefined (inner log <= 0)
};

/// ceil(max{S, log(1/delta)/log(log(1/delta)/S)}) with S = B^2 beta d. When the
/// inner logarithm is non-positive only the first branch is used.
inline DegreeBound degree_bound_detail(double scaled_bound, double delta_a) {
  require(scaled_bound > 0.0 && std::isfinite(scaled_bound), ErrorCode::InvalidBound,
          "degree_bound: scaled bound must be positive, got " + std::to_string(scaled_bound));
  require(delta_a > 0.0 && delta_a < 0.1, ErrorCode::InvalidArgument, "degree_bound: delta_a must lie in (0, 0.1)");
  const double log_inv = std::log(1.0 / delta_a);
  const double inner = std::log(log_inv / scaled_bound);
  DegreeBound out;
  double value = scaled_bound;
  if (inner > 0.0) {
    value = std::max(value, log_inv / inner);
  } else {
    out.degenerate = true;
  }
  out.value = static_cast<int>(std::ceil(value));
  return out;
}

inline int degree_bound(double scaled_bound, double delta_a) {
  return degree_bound_detail(scaled_bound, delta_a).value;
}

namespace detail {

// Degree-`degree` Chebyshev interpolant of exp(bound * t) on t in [-1, 1],
// returned as power-basis coefficients in x = bound * t.
inline std::vector<double> chebyshev_exp_power_basis(double bound, int degree) {
  const int n = degree + 1;
  std::vector<double> values(n);
  for (int j = 0; j < n; ++j) {
    const double theta = std::numbers::pi * (j + 0.5) / n;
    values[j] = std::exp(bound * std::cos(theta));
  }
  std::vector<double> cheb(n);
  for (int k = 0; k < n; ++k) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += values[j] * std::cos(k * std::numbers::pi * (j + 0.5) / n);
    cheb[k] = 2.0 * s / n;
  }
  cheb[0] *= 0.5;

  // T_k power coefficients by T_{k+1} = 2t T_k - T_{k-1}; integers, exact for k <= 52.
  std::vector<double> power(n, 0.0);
  std::vector<double> prev(n, 0.0), cur(n, 0.0), next(n, 0.0);
  prev[0] = 1.0;
  power[0] += cheb[0];
  if (n > 1) {
    cur[1] = 1.0;
    power[1] += cheb[1];
  }
  for (int k = 1; k + 1 < n; ++k) {
    std::fill(next.begin(), next.end(), 0.0);
    for (int i = 0; i <= k; ++i) next[i + 1] += 2.0 * cur[i];
    for (int i = 0; i < n; ++i) next[i] -= prev[i];
    for (int i = 0; i < n; ++i) power[i] += cheb[k + 1] * next[i];
    std::swap(prev, cur);
    std::swap(cur, next);
  }

  double scale = 1.0;
  for (int i = 0; i < n; ++i) {
    power[i] /= scale;
    scale *= bound;
  }
  return power;
}

}  // namespace detail

/// Smallest degree g in [1, max_degree] whose Chebyshev interpolant of e^x on
/// [-B', B'] meets the relative error target on the validation grid.
/// Conditioning of the power basis limits this to modest degrees; 32 is the
/// default cap.
inline ExpPolynomial fit_exp_poly(double interval_bound, double delta_a, int max_degree = kDefaultMaxDegree) {
  require(interval_bound > 0.0 && std::isfinite(interval_bound), ErrorCode::InvalidBound,
          "fit_exp_poly: interval bound must be positive and finite");
  require(delta_a > 0.0 && delta_a < 0.1, ErrorCode::InvalidArgument, "fit_exp_poly: delta_a must lie in (0, 0.1)");
  require(max_degree >= 1, ErrorCode::InvalidArgument, "fit_exp_poly: max_degree must be >= 1");

  for (int g = 1; g <= max_degree; ++g) {
    auto coeffs = detail::chebyshev_exp_power_basis(interval_bound, g);
    const double err = sup_relative_error(coeffs, interval_bound, kValidationGridPoints);
    if (err <= delta_a) {
      ExpPolynomial p;
      p.coeffs = std::move(coeffs);
      p.degree = g;
      p.interval_bound = interval_bound;
      p.target_rel_error = delta_a;
      p.certified_rel_error = err;
      const auto ref = degree_bound_detail(interval_bound, delta_a);
      p.reference_degree = ref.value;
      p.reference_degenerate = ref.degenerate;
      return p;
    }
  }
  fail(ErrorCode::DegreeExhausted, "fit_exp_poly: no degree <= " + std::to_string(max_degree) +
                                       " reaches relative error " + std::to_string(delta_a) +
                                       " on [-" + std::to_string(interval_bound) + ", " +
                                       std::to_string(interval_bound) + "]");
}

inline nlohmann::json to_json(const ExpPolynomial& p) {
  return nlohmann::json{{"degree", p.degree},
                        {"interval_bound", p.interval_bound},
                        {"target_rel_error", p.target_rel_error},
                        {"certified_rel_error", p.certified_rel_error},
                        {"coeffs", p.coeffs}};
}

inline ExpPolynomial exp_polynomial_from_json(const nlohmann::json& j) {
  ExpPolynomial p;
  p.degree = j.at("degree").get<int>();
  p.interval_bound = j.at("interval_bound").get<double>();
  p.target_rel_error = j.at("target_rel_error").get<double>();
  p.certified_rel_error = j.at("certified_rel_error").get<double>();
  p.coeffs = j.at("coeffs").get<std::vector<double>>();
  require(static_cast<int>(p.coeffs.size()) == p.degree + 1, ErrorCode::InvalidArgument,
          "ExpPolynomial JSON: coeffs length must equal degree + 1");
  return p;
}

}  // namespace ahop
