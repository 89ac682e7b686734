#pragma once

// Storage capacity: Lambert W, the well-separation threshold for the
// approximate model, the formal capacity lower bound, and a Monte Carlo
// store-and-retrieve experiment.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahop/error.hpp"
#include "ahop/hopfield.hpp"
#include "ahop/linalg.hpp"
#include "ahop/pattern.hpp"

namespace ahop {

/// Principal branch W_0 by Halley iteration.
inline double lambert_w0(double x) {
  constexpr double kBranch = -1.0 / std::numbers::e;
  if (x < kBranch) {
    // Allow the rounding of -1/e itself.
    require(x >= kBranch - 1e-15, ErrorCode::OutOfDomain, "lambert_w0: x = " + std::to_string(x) + " < -1/e");
    return -1.0;
  }
  require(std::isfinite(x), ErrorCode::OutOfDomain, "lambert_w0: x must be finite");
  if (x == 0.0) return 0.0;
  double w;
  if (x < -0.25) {
    // Branch-point series in p = sqrt(2 (e x + 1)).
    const double p = std::sqrt(std::max(0.0, 2.0 * (std::numbers::e * x + 1.0)));
    w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
  } else if (x < 3.0) {
    w = std::log1p(x);
    if (x < 0.0) w = x * (1.0 - x);
  } else {
    const double l = std::log(x);
    w = l - std::log(l);
  }
  for (int iter = 0; iter < 64; ++iter) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    if (wp1 == 0.0) break;
    const double step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
    w -= step;
    if (std::abs(step) <= 1e-16 * (1.0 + std::abs(w))) break;
  }
  return w;
}

/// W_0(e^y) without forming e^y: solves w + ln w = y for large y.
inline double lambert_w0_exp(double y) {
  if (y < 500.0) return lambert_w0(std::exp(y));
  double w = y - std::log(y);
  for (int iter = 0; iter < 64; ++iter) {
    const double step = (w + std::log(w) - y) / (1.0 + 1.0 / w);
    w -= step;
    if (std::abs(step) <= 1e-16 * w) break;
  }
  return w;
}

struct CapacityParams {
  double p = 0.5;
  int d = 2;
  double m = 1.0;        // sphere radius of the patterns
  double beta = 1.0;
  double R = 0.5;        // radius of the retrieval spheres S_mu
  int M = 2;
  double B = 1.0;        // max-norm bound
  double delta_a = 0.0;  // zero recovers the dense model
};

/// (1/beta) ln(2 (M - 1) m / (R - 2 M B delta_a)) + 2 m R.
inline double well_separation_threshold(const CapacityParams& p) {
  require(p.M >= 2, ErrorCode::SingleMemory, "well_separation_threshold needs M >= 2");
  require(p.beta > 0.0 && p.m > 0.0 && p.R > 0.0 && p.B >= 0.0 && p.delta_a >= 0.0, ErrorCode::InvalidArgument,
          "well_separation_threshold: parameters must be positive");
  const double slack = p.R - 2.0 * p.M * p.B * p.delta_a;
  if (!(slack > 0.0))
    fail(ErrorCode::InfeasibleStorage, "R = " + std::to_string(p.R) + " must exceed 2 M B delta_a = " +
                                           std::to_string(2.0 * p.M * p.B * p.delta_a));
  return std::log(2.0 * (p.M - 1) * p.m / slack) / p.beta + 2.0 * p.m * p.R;
}

struct SeparationReport {
  double threshold = 0.0;
  std::vector<double> separation;
  std::vector<bool> separated;

  bool all() const { return std::all_of(separated.begin(), separated.end(), [](bool b) { return b; }); }
};

/// Delta_mu >= threshold for each stored pattern. M is taken from the memory.
inline SeparationReport check_well_separated(const PatternMatrix& memory, CapacityParams params) {
  require(memory.count() >= 2, ErrorCode::SingleMemory, "check_well_separated needs at least two memories");
  params.M = memory.count();
  SeparationReport out;
  out.threshold = well_separation_threshold(params);
  for (int mu = 0; mu < memory.count(); ++mu) {
    out.separation.push_back(separation(memory, mu));
    out.separated.push_back(out.separation.back() >= out.threshold);
  }
  return out;
}

struct CapacityBound {
  double a = 0.0;
  double b = 0.0;
  double w = 0.0;  // W_0(e^{a + ln b})
  double C = 0.0;
  double value = 0.0;  // sqrt(p) C^{(d-1)/4}
};

/// The formula exactly as stated: a = 4/(d-1) (ln[2m(sqrt p - 1)/(R - 2MB delta_a)] + 1),
/// b = 4 m^2 beta / (5 (d - 1)), C = b / W_0(exp(a + ln b)). For p < 1 the log
/// argument is negative and OutOfDomain is raised rather than patched.
inline CapacityBound capacity_lower_bound_detail(const CapacityParams& p) {
  require(p.d >= 2, ErrorCode::OutOfDomain, "capacity_lower_bound needs d >= 2");
  require(p.p > 0.0, ErrorCode::OutOfDomain, "capacity_lower_bound needs p > 0");
  const double slack = p.R - 2.0 * p.M * p.B * p.delta_a;
  const double arg = 2.0 * p.m * (std::sqrt(p.p) - 1.0) / slack;
  if (!(arg > 0.0) || !std::isfinite(arg))
    fail(ErrorCode::OutOfDomain, "log argument 2m(sqrt(p) - 1)/(R - 2MB delta_a) = " + std::to_string(arg) +
                                     " is not positive");
  CapacityBound out;
  out.a = 4.0 / (p.d - 1) * (std::log(arg) + 1.0);
  out.b = 4.0 * p.m * p.m * p.beta / (5.0 * (p.d - 1));
  if (!(out.b > 0.0)) fail(ErrorCode::OutOfDomain, "b = 4 m^2 beta / (5 (d - 1)) must be positive");
  out.w = lambert_w0_exp(out.a + std::log(out.b));
  out.C = out.b / out.w;
  out.value = std::sqrt(p.p) * std::pow(out.C, (p.d - 1) / 4.0);
  return out;
}

inline double capacity_lower_bound(const CapacityParams& p) { return capacity_lower_bound_detail(p).value; }

enum class PatternLayout { Sphere, Orthogonal };

struct CapacityExperiment {
  int d = 8;
  double m = 0.0;  // 0: sqrt(d)
  double beta = 1.0;
  std::vector<int> M_list;
  int trials = 100;
  double perturbation = 0.1;            // query offset as a fraction of R
  std::optional<double> eps;            // default R/2 + 2 M B delta_a
  double delta_a = 1e-3;
  RetrievalMode solver = RetrievalMode::LowRank;
  PatternLayout layout = PatternLayout::Sphere;
  int max_degree = kDefaultMaxDegree;
  std::size_t rank_cap = kDefaultRankCap;
  unsigned threads = 1;
  std::uint64_t seed = 0;
};

struct CapacityTrial {
  int M = 0;
  int trial = 0;
  int mu = 0;
  int retrieved = -1;                // nearest pattern to T(x); -1 if retrieval was infeasible
  double error = std::numeric_limits<double>::quiet_NaN();  // ||T(x) - xi_mu||_2
  double max_error = std::numeric_limits<double>::quiet_NaN();
  double bound = 0.0;                // retrieval_error_bound at x
  bool success = false;
  std::string failure;               // error name when infeasible
};

struct CapacityRow {
  int d = 0;
  double m = 0.0;
  double beta = 0.0;
  int M = 0;
  int trials = 0;
  double success_rate = 0.0;
  double mean_error = 0.0;  // over feasible trials; NaN if none
  std::uint64_t seed = 0;
  double R = 0.0;
  double eps = 0.0;
  int infeasible = 0;
  int bound_violations = 0;
  std::map<std::string, int> failures;
};

struct CapacityResult {
  std::vector<CapacityRow> rows;
  std::vector<CapacityTrial> trials;
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

inline Vector unit_gaussian(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vector v(d);
  do {
    for (int l = 0; l < d; ++l) v(l) = g(rng);
  } while (v.norm() == 0.0);
  return v.normalized();
}

// Sylvester Hadamard columns when d is a power of two (smallest max-norm),
// scaled basis vectors otherwise.
inline Matrix orthogonal_patterns(int d, int count, double m) {
  require(count <= d, ErrorCode::InvalidArgument, "orthogonal layout needs M <= d");
  Matrix out = Matrix::Zero(d, count);
  if ((d & (d - 1)) == 0) {
    for (int l = 0; l < d; ++l)
      for (int c = 0; c < count; ++c) out(l, c) = (std::popcount(static_cast<unsigned>(l & c)) % 2 ? -1.0 : 1.0);
    out *= m / std::sqrt(static_cast<double>(d));
  } else {
    for (int c = 0; c < count; ++c) out(c, c) = m;
  }
  return out;
}

}  // namespace detail

/// Patterns for one M; independent of every other M in the list.
inline Matrix capacity_patterns(const CapacityExperiment& cfg, int M) {
  const double m = cfg.m > 0.0 ? cfg.m : std::sqrt(static_cast<double>(cfg.d));
  if (cfg.layout == PatternLayout::Orthogonal) return detail::orthogonal_patterns(cfg.d, M, m);
  auto rng = detail::stream(cfg.seed, static_cast<std::uint64_t>(M), ~std::uint64_t{0});
  Matrix out(cfg.d, M);
  for (int c = 0; c < M; ++c) out.col(c) = m * detail::unit_gaussian(cfg.d, rng);
  return out;
}

/// For each M: store M patterns, and per trial pick mu, place x at distance
/// perturbation * R from xi_mu, run one update step and score it. Success
/// needs ||T(x) - xi_mu||_2 <= eps and xi_mu to be the nearest pattern to
/// T(x). Failed low-rank fits (degree, rank, normalizer) count as failures.
inline CapacityResult run_capacity_experiment(const CapacityExperiment& cfg) {
  require(cfg.d >= 1 && cfg.beta > 0.0 && cfg.trials >= 0, ErrorCode::InvalidArgument,
          "capacity experiment: d, beta must be positive and trials >= 0");
  require(cfg.perturbation > 0.0 && cfg.perturbation < 1.0, ErrorCode::InvalidArgument,
          "capacity experiment: perturbation must lie in (0, 1)");
  const double m = cfg.m > 0.0 ? cfg.m : std::sqrt(static_cast<double>(cfg.d));
  CapacityResult result;
  if (cfg.trials == 0) return result;

  for (int M : cfg.M_list) {
    require(M >= 1, ErrorCode::InvalidArgument, "capacity experiment: every M must be >= 1");
    const PatternMatrix memory(capacity_patterns(cfg, M));
    // A single pattern has no neighbour; its sphere radius is taken as m.
    const double R = M >= 2 ? pattern_radius(memory) : m;

    RetrievalConfig rc;
    rc.beta = cfg.beta;
    rc.delta_a = cfg.delta_a;
    rc.mode = cfg.solver;
    rc.max_degree = cfg.max_degree;
    rc.rank_cap = cfg.rank_cap;
    rc.normalization = Normalization::QueryNormalized;

    std::vector<CapacityTrial> trials(cfg.trials);
    std::vector<double> eps_used(cfg.trials);
    parallel_for(static_cast<std::size_t>(cfg.trials), cfg.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t k = begin; k < end; ++k) {
        auto rng = detail::stream(cfg.seed, static_cast<std::uint64_t>(M), k);
        CapacityTrial& tr = trials[k];
        tr.M = M;
        tr.trial = static_cast<int>(k);
        tr.mu = std::uniform_int_distribution<int>(0, M - 1)(rng);
        const Vector x = memory.pattern(tr.mu) + cfg.perturbation * R * detail::unit_gaussian(cfg.d, rng);
        const PatternMatrix query(Matrix(x), PatternRole::Query);
        const double b = std::max(memory.max_norm(), query.max_norm());
        const double eps = cfg.eps.value_or(R / 2.0 + 2.0 * M * b * cfg.delta_a);
        eps_used[k] = eps;
        tr.bound = retrieval_error_bound(memory, x, tr.mu, cfg.beta, b, cfg.delta_a);
        try {
          const auto res = retrieve(memory, query, rc);
          const Vector out = res.z.col(0);
          tr.error = (out - memory.pattern(tr.mu)).norm();
          tr.max_error = (out - memory.pattern(tr.mu)).cwiseAbs().maxCoeff();
          (memory.data().colwise() - out).colwise().squaredNorm().minCoeff(&tr.retrieved);
          tr.success = tr.error <= eps && tr.retrieved == tr.mu;
        } catch (const Error& e) {
          tr.failure = std::string(e.name());
        }
      }
    });

    CapacityRow row;
    row.d = cfg.d;
    row.m = m;
    row.beta = cfg.beta;
    row.M = M;
    row.trials = cfg.trials;
    row.seed = cfg.seed;
    row.R = R;
    row.eps = *std::max_element(eps_used.begin(), eps_used.end());
    int successes = 0, feasible = 0;
    double error_sum = 0.0;
    for (const auto& tr : trials) {
      successes += tr.success;
      if (tr.failure.empty()) {
        ++feasible;
        error_sum += tr.error;
        row.bound_violations += tr.max_error > tr.bound;
      } else {
        ++row.infeasible;
        ++row.failures[tr.failure];
      }
    }
    row.success_rate = static_cast<double>(successes) / cfg.trials;
    row.mean_error = feasible ? error_sum / feasible : std::numeric_limits<double>::quiet_NaN();
    result.rows.push_back(row);
    result.trials.insert(result.trials.end(), trials.begin(), trials.end());
  }
  return result;
}

/// Largest M whose success rate reaches `level`; empty when none does.
inline std::optional<int> largest_reliable_m(const std::vector<CapacityRow>& rows, double level = 0.9) {
  std::optional<int> best;
  for (const auto& r : rows)
    if (r.success_rate >= level && (!best || r.M > *best)) best = r.M;
  return best;
}

namespace io {

inline std::string capacity_to_csv(const std::vector<CapacityRow>& rows) {
  std::string out = "d,m,beta,M,trials,success_rate,mean_error,seed\n";
  for (const auto& r : rows) {
    out += std::to_string(r.d) + ',' + format_double(r.m) + ',' + format_double(r.beta) + ',' + std::to_string(r.M) +
           ',' + std::to_string(r.trials) + ',' + format_double(r.success_rate) + ',' + format_double(r.mean_error) +
           ',' + std::to_string(r.seed) + '\n';
  }
  return out;
}

}  // namespace io

inline nlohmann::json to_json(const CapacityRow& r) {
  nlohmann::json failures = nlohmann::json::object();
  for (const auto& [name, count] : r.failures) failures[name] = count;
  return {{"d", r.d},
          {"m", r.m},
          {"beta", r.beta},
          {"M", r.M},
          {"trials", r.trials},
          {"success_rate", r.success_rate},
          {"mean_error", std::isnan(r.mean_error) ? nlohmann::json(nullptr) : nlohmann::json(r.mean_error)},
          {"seed", r.seed},
          {"R", r.R},
          {"eps", r.eps},
          {"infeasible", r.infeasible},
          {"bound_violations", r.bound_violations},
          {"failures", failures}};
}

}  // namespace ahop
