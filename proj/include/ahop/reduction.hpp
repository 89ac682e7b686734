#pragma once

// Gap-ANNS -> AHop reduction: turn two sets of binary vectors into a Hopfield
// retrieval instance whose last output row separates "some b_j is within t of
// an a_i" from "every pair is beyond (1 + delta) t", plus the brute-force
// oracles used to check it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahop/error.hpp"
#include "ahop/feature_map.hpp"
#include "ahop/hopfield.hpp"
#include "ahop/linalg.hpp"
#include "ahop/pattern.hpp"
#include "ahop/poly_approx.hpp"

namespace ahop {

using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct AnnsInstance {
  BinaryMatrix set_a;  // n x d, rows a_i
  BinaryMatrix set_b;  // n x d, rows b_j
  double t = 1.0;
  double delta = 0.05;

  int n() const { return static_cast<int>(set_a.rows()); }
  int d() const { return static_cast<int>(set_a.cols()); }
};

inline void validate(const AnnsInstance& inst) {
  require(inst.n() >= 1 && inst.d() >= 1, ErrorCode::InvalidArgument, "ANNS instance must be non-empty");
  require(inst.set_b.rows() == inst.set_a.rows() && inst.set_b.cols() == inst.set_a.cols(),
          ErrorCode::DimensionMismatch, "ANNS instance: A and B must both be n x d");
  require(inst.t > 0.0, ErrorCode::InvalidArgument, "ANNS instance: t must be positive");
  require(inst.delta > 0.0 && inst.delta < 0.1, ErrorCode::InvalidArgument, "ANNS instance: delta must lie in (0, 0.1)");
  for (const BinaryMatrix* m : {&inst.set_a, &inst.set_b})
    require((m->array() <= 1).all(), ErrorCode::InvalidArgument, "ANNS instance: entries must be 0 or 1");
}

/// Squared Euclidean distance of two 0/1 rows, i.e. their Hamming distance.
inline int hamming(const BinaryMatrix& a, int i, const BinaryMatrix& b, int j) {
  int dist = 0;
  for (Eigen::Index l = 0; l < a.cols(); ++l) dist += a(i, l) != b(j, l);
  return dist;
}

struct AnnsMatch {
  int i = 0;
  int j = 0;
  int distance = 0;
};

/// Exhaustive O(n^2 d) closest pair; ties go to the smallest i, then smallest j.
inline AnnsMatch brute_force_anns(const AnnsInstance& inst) {
  validate(inst);
  AnnsMatch best{0, 0, std::numeric_limits<int>::max()};
  for (int i = 0; i < inst.n(); ++i)
    for (int j = 0; j < inst.n(); ++j) {
      const int dist = hamming(inst.set_a, i, inst.set_b, j);
      if (dist < best.distance) best = {i, j, dist};
    }
  return best;
}

enum class CaseVerdict { Case1, Case2, Indeterminate };

inline std::string_view verdict_name(CaseVerdict v) {
  switch (v) {
    case CaseVerdict::Case1: return "case1";
    case CaseVerdict::Case2: return "case2";
    case CaseVerdict::Indeterminate: return "indeterminate";
  }
  return "indeterminate";
}

/// Ground truth per query b_j: Case1 if some a_i is within t, Case2 if every
/// a_i is beyond (1 + delta) t, Indeterminate when the promise does not hold.
inline std::vector<CaseVerdict> oracle_verdicts(const AnnsInstance& inst) {
  validate(inst);
  std::vector<CaseVerdict> out(inst.n());
  for (int j = 0; j < inst.n(); ++j) {
    int nearest = std::numeric_limits<int>::max();
    for (int i = 0; i < inst.n(); ++i) nearest = std::min(nearest, hamming(inst.set_a, i, inst.set_b, j));
    if (nearest <= inst.t)
      out[j] = CaseVerdict::Case1;
    else if (nearest > (1.0 + inst.delta) * inst.t)
      out[j] = CaseVerdict::Case2;
    else
      out[j] = CaseVerdict::Indeterminate;
  }
  return out;
}

inline constexpr double kDefaultScenario1Cap = 1e8;

/// Short-distance regime: for each a_i, enumerate every 0/1 vector at Hamming
/// distance < t and look it up in a hash set of B's rows. Case1 at i iff a hit.
inline std::vector<CaseVerdict> scenario1_brute_force(const AnnsInstance& inst, double cost_cap = kDefaultScenario1Cap) {
  validate(inst);
  const int d = inst.d();
  const int radius = std::min(d, static_cast<int>(std::ceil(inst.t)) - 1);
  double per_row = 0.0;
  for (int k = 0; k <= radius; ++k) per_row += binomial(d, k);
  const double cost = per_row * inst.n();
  if (!(cost <= cost_cap))
    fail(ErrorCode::CostCapExceeded, "scenario1_brute_force: " + std::to_string(cost) + " candidate vectors exceed cap " +
                                         std::to_string(cost_cap));

  auto key = [d](const BinaryMatrix& m, int row) {
    std::string s(static_cast<std::size_t>(d), '0');
    for (int l = 0; l < d; ++l) s[l] = m(row, l) ? '1' : '0';
    return s;
  };
  std::unordered_set<std::string> b_rows;
  for (int j = 0; j < inst.n(); ++j) b_rows.insert(key(inst.set_b, j));

  std::vector<CaseVerdict> out(inst.n(), CaseVerdict::Case2);
  std::vector<int> flips;
  for (int i = 0; i < inst.n(); ++i) {
    std::string probe = key(inst.set_a, i);
    bool hit = false;
    // Enumerate flip sets of size k in lexicographic order.
    for (int k = 0; k <= radius && !hit; ++k) {
      flips.resize(k);
      std::iota(flips.begin(), flips.end(), 0);
      while (true) {
        for (int f : flips) probe[f] ^= 1;
        hit = b_rows.contains(probe);
        for (int f : flips) probe[f] ^= 1;
        if (hit) break;
        int pos = k - 1;
        while (pos >= 0 && flips[pos] == d - k + pos) --pos;
        if (pos < 0) break;
        ++flips[pos];
        for (int q = pos + 1; q < k; ++q) flips[q] = flips[q - 1] + 1;
      }
    }
    if (hit) out[i] = CaseVerdict::Case1;
  }
  return out;
}

struct ReductionParams {
  int n = 0;
  int d = 0;
  double C = 0.0;        // d / ln n
  double C0 = 0.0;       // t / ln n
  double C_beta = 0.0;
  double C_alpha = 0.0;
  double B = 0.0;        // C_beta sqrt(ln n)
  double beta = 0.0;     // 1 / (2d)
  double log_t_tilde = 0.0;
  double log_delta_h = 0.0;  // -C_alpha ln n
  double t_tilde = 0.0;      // exp(log_t_tilde); underflows to 0 for large B
  double delta_h = 0.0;
  bool exp_b2_representable = true;  // e^{B^2} < 1e300
};

/// log t~ with t~ = (1/3) exp(B^2 (1 - t/d) / 4) / (2 n e^{B^2}).
inline double log_t_tilde(double b, int n, int d, double t) {
  const double b2 = b * b;
  return -std::log(3.0) + 0.25 * b2 * (1.0 - t / d) - std::log(2.0 * n) - b2;
}

namespace detail {

inline ReductionParams fill_params(const AnnsInstance& inst, double c_beta, double c_alpha, double b) {
  ReductionParams p;
  p.n = inst.n();
  p.d = inst.d();
  const double ln_n = std::log(static_cast<double>(p.n));
  p.C = p.d / ln_n;
  p.C0 = inst.t / ln_n;
  p.C_beta = c_beta;
  p.C_alpha = c_alpha;
  p.B = b;
  p.beta = 1.0 / (2.0 * p.d);
  p.log_t_tilde = log_t_tilde(b, p.n, p.d, inst.t);
  p.log_delta_h = -c_alpha * ln_n;
  p.t_tilde = std::exp(p.log_t_tilde);
  p.delta_h = std::exp(p.log_delta_h);
  p.exp_b2_representable = b * b < std::log(1e300);
  return p;
}

}  // namespace detail

/// Checks every constant constraint of the construction and reports the first
/// one that fails.
inline ReductionParams reduction_params(const AnnsInstance& inst, double c_beta, double c_alpha) {
  validate(inst);
  require(inst.n() >= 2, ErrorCode::InvalidParams, "reduction needs n >= 2 so that log n > 0");
  const double ln_n = std::log(static_cast<double>(inst.n()));
  const double c = inst.d() / ln_n, c0 = inst.t / ln_n;
  const double beta_floor = 2.0 * std::sqrt(c / (c0 * inst.delta));
  if (!(c_beta > beta_floor))
    fail(ErrorCode::InvalidParams, "C_beta > 2 sqrt(C / (C0 delta)) violated: C_beta = " + std::to_string(c_beta) +
                                       ", bound = " + std::to_string(beta_floor));
  const double alpha_floor = c_beta * c_beta / 4.0 * (3.0 + c0 / c) + 1.0;
  if (!(c_alpha > alpha_floor))
    fail(ErrorCode::InvalidParams, "C_alpha > C_beta^2 (3 + C0/C) / 4 + 1 violated: C_alpha = " +
                                       std::to_string(c_alpha) + ", bound = " + std::to_string(alpha_floor));
  const auto p = detail::fill_params(inst, c_beta, c_alpha, c_beta * std::sqrt(ln_n));
  if (!(p.log_t_tilde >= p.log_delta_h))
    fail(ErrorCode::InvalidParams, "t~ >= delta_H violated: log t~ = " + std::to_string(p.log_t_tilde) +
                                       ", log delta_H = " + std::to_string(p.log_delta_h));
  return p;
}

/// C_beta = 2.1 sqrt(C / (C0 delta)). C_alpha takes the smallest slack over the
/// strict bound that still leaves t~ >= delta_H: the 1/6 factor in t~ costs
/// ln 6 / ln n in the exponent, which a fixed +0.1 does not cover for small n.
inline ReductionParams default_reduction_params(const AnnsInstance& inst) {
  validate(inst);
  require(inst.n() >= 2, ErrorCode::InvalidParams, "reduction needs n >= 2 so that log n > 0");
  const double ln_n = std::log(static_cast<double>(inst.n()));
  const double c = inst.d() / ln_n, c0 = inst.t / ln_n;
  const double c_beta = 2.1 * std::sqrt(c / (c0 * inst.delta));
  const double slack = std::max(0.1, std::log(6.0) / ln_n + 0.01);
  const double c_alpha = c_beta * c_beta / 4.0 * (3.0 + c0 / c) + 1.0 + slack;
  return reduction_params(inst, c_beta, c_alpha);
}

/// Same construction with an arbitrary B and no constant checks. Only for
/// exercising the solvers on instances small enough for the low-rank path.
inline ReductionParams unchecked_reduction_params(const AnnsInstance& inst, double b) {
  validate(inst);
  require(inst.n() >= 2, ErrorCode::InvalidParams, "reduction needs n >= 2 so that log n > 0");
  require(b > 0.0, ErrorCode::InvalidParams, "B must be positive");
  return detail::fill_params(inst, b / std::sqrt(std::log(static_cast<double>(inst.n()))), 0.0, b);
}

struct AhopInstance {
  PatternMatrix memory;   // 2d x 2n
  PatternMatrix queries;  // 2d x 2n
  ReductionParams params;
};

/// Xi = B [[a_1 .. a_n, 0 .. 0], [1 .. 1]], X = B [[b_1 .. b_n, 0 .. 0], [0 .. 0, 1 .. 1]].
inline AhopInstance build_ahop_instance(const AnnsInstance& inst, const ReductionParams& params) {
  validate(inst);
  const int n = inst.n(), d = inst.d();
  require(params.n == n && params.d == d, ErrorCode::InvalidParams, "parameters were derived for another instance");
  const double b = params.B;
  Matrix xi = Matrix::Zero(2 * d, 2 * n), x = Matrix::Zero(2 * d, 2 * n);
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < d; ++l) {
      xi(l, i) = b * inst.set_a(i, l);
      x(l, i) = b * inst.set_b(i, l);
    }
  xi.bottomRows(d).setConstant(b);
  x.bottomRightCorner(d, n).setConstant(b);
  AhopInstance out{PatternMatrix(std::move(xi), PatternRole::Memory), PatternMatrix(std::move(x), PatternRole::Query),
                   params};
  require(out.memory.max_norm() <= b && out.queries.max_norm() <= b, ErrorCode::InvalidParams,
          "constructed patterns exceed the norm bound B");
  return out;
}

inline AhopInstance build_ahop_instance(const AnnsInstance& inst, double c_beta, double c_alpha) {
  return build_ahop_instance(inst, reduction_params(inst, c_beta, c_alpha));
}

/// AsWritten: the block matrix used in the case analysis, A_2 = A_4 = e^{B^2}
/// and A_3 = 0. Literal: A = exp(beta Xi^T X) as constructed, which gives
/// A_2 = A_4 = e^{B^2 / 2} and A_3 = 1.
enum class ReductionAConvention { AsWritten, Literal };

inline std::string_view convention_name(ReductionAConvention c) {
  return c == ReductionAConvention::AsWritten ? "as-written" : "literal";
}

/// Entrywise log A (2n x 2n), -inf for zero entries.
inline Matrix reduction_log_kernel(const AhopInstance& inst, ReductionAConvention convention) {
  const auto& p = inst.params;
  Matrix log_a = p.beta * (inst.memory.data().transpose() * inst.queries.data());
  if (convention == ReductionAConvention::AsWritten) {
    const double b2 = p.B * p.B;
    log_a.topRightCorner(p.n, p.n).setConstant(b2);
    log_a.bottomRightCorner(p.n, p.n).setConstant(b2);
    log_a.bottomLeftCorner(p.n, p.n).setConstant(-std::numeric_limits<double>::infinity());
  }
  return log_a;
}

enum class ReductionSolver { Dense, LowRank };

struct CaseDecision {
  std::vector<CaseVerdict> verdicts;     // per query j in [0, n)
  std::vector<double> statistic;         // z~_{2d}[j] / B
  std::vector<double> log_statistic;
  double threshold = 0.0;                // 2 t~
  double log_threshold = 0.0;
  std::size_t rank_used = 0;
  int degree_used = 0;
};

namespace detail {

inline double log_sum_exp(const double* v, Eigen::Index count, Eigen::Index stride) {
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < count; ++k) top = std::max(top, v[k * stride]);
  if (!std::isfinite(top)) return top;
  double sum = 0.0;
  for (Eigen::Index k = 0; k < count; ++k) sum += std::exp(v[k * stride] - top);
  return top + std::log(sum);
}

inline CaseVerdict classify(double log_stat, double log_threshold) {
  if (std::isnan(log_stat)) return CaseVerdict::Indeterminate;
  return log_stat >= log_threshold ? CaseVerdict::Case1 : CaseVerdict::Case2;
}

// Every exponential stays in log space: log D_i = lse_j log A_ij and the
// statistic is lse_i(log A_ij - log D_i). The last row of Xi is the constant
// B, so the statistic is the last row of Xi D^-1 A divided by B.
inline void solve_dense(const AhopInstance& inst, ReductionAConvention convention, CaseDecision& out) {
  const int n = inst.params.n;
  const Matrix log_a = reduction_log_kernel(inst, convention);
  Vector log_d(2 * n);
  for (int i = 0; i < 2 * n; ++i) log_d(i) = log_sum_exp(&log_a(i, 0), 2 * n, log_a.outerStride());
  Matrix shifted = log_a;
  shifted.colwise() -= log_d;
  for (int j = 0; j < n; ++j) out.log_statistic[j] = log_sum_exp(&shifted(0, j), 2 * n, 1);
}

// Low-rank: A_1 = exp(beta B^2 <a_i, b_j>) comes from the polynomial feature
// map; the constant blocks are added in closed form.
inline void solve_lowrank(const AhopInstance& inst, ReductionAConvention convention, const RetrievalConfig& cfg,
                          CaseDecision& out) {
  const auto& p = inst.params;
  const int n = p.n, d = p.d;
  if (convention == ReductionAConvention::Literal) {
    RetrievalConfig lr = cfg;
    lr.beta = p.beta;
    lr.normalization = Normalization::MemoryNormalized;
    const auto res = retrieve_lowrank(inst.memory, inst.queries, lr);
    out.rank_used = res.rank_used;
    out.degree_used = res.degree_used;
    for (int j = 0; j < n; ++j) out.log_statistic[j] = std::log(res.z(2 * d - 1, j) / p.B);
    return;
  }
  const double interval = std::max(p.B * p.B * p.beta * (2.0 * d), 1e-12);
  const ExpPolynomial poly = fit_exp_poly(interval, cfg.delta_a, cfg.max_degree);
  const MonomialFeatureMap map = build_feature_map(poly, d, cfg.rank_cap);
  const double root = std::sqrt(p.beta);
  const Matrix a_rows = root * inst.memory.data().topLeftCorner(d, n).transpose();
  const Matrix b_rows = root * inst.queries.data().topLeftCorner(d, n).transpose();
  const FactorMatrices f = build_factor_matrices(map, a_rows, b_rows, cfg.threads);
  out.rank_used = map.rank();
  out.degree_used = poly.degree;
  const double const_block = n * std::exp(p.B * p.B);
  Vector rows = factored_row_sums(f.u1, f.u2).array() + const_block;
  for (int i = 0; i < n; ++i)
    if (!(rows(i) > 0.0) || !std::isfinite(rows(i)))
      fail(ErrorCode::NonPositiveNormalizer, "approximate row normalizer " + std::to_string(i) + " is " +
                                                 std::to_string(rows(i)));
  const Vector weighted = f.u1.transpose() * rows.cwiseInverse();
  const Vector stat = f.u2 * weighted;
  for (int j = 0; j < n; ++j) out.log_statistic[j] = std::log(stat(j));
}

}  // namespace detail

/// Decides Case1 at query j iff z~_{2d}[j] / B >= 2 t~ (ties go to Case1).
inline CaseDecision solve_gap_anns_via_ahop(const AhopInstance& inst, ReductionSolver solver,
                                            ReductionAConvention convention = ReductionAConvention::AsWritten,
                                            const RetrievalConfig& cfg = {}) {
  const int n = inst.params.n;
  CaseDecision out;
  out.log_statistic.assign(n, 0.0);
  if (solver == ReductionSolver::Dense)
    detail::solve_dense(inst, convention, out);
  else
    detail::solve_lowrank(inst, convention, cfg, out);
  out.log_threshold = inst.params.log_t_tilde + std::log(2.0);
  out.threshold = std::exp(out.log_threshold);
  out.statistic.resize(n);
  out.verdicts.resize(n);
  for (int j = 0; j < n; ++j) {
    out.statistic[j] = std::exp(out.log_statistic[j]);
    out.verdicts[j] = detail::classify(out.log_statistic[j], out.log_threshold);
  }
  return out;
}

inline BinaryMatrix balanced_rows(int n, int d, std::mt19937_64& rng) {
  BinaryMatrix m(n, d);
  std::vector<std::uint8_t> row(d, 0);
  for (int i = 0; i < n; ++i) {
    std::fill(row.begin(), row.end(), 0);
    std::fill(row.begin(), row.begin() + d / 2, 1);
    std::shuffle(row.begin(), row.end(), rng);
    for (int l = 0; l < d; ++l) m(i, l) = row[l];
  }
  return m;
}

struct BalancedInstanceOptions {
  std::optional<int> planted_distance;  // plant one (i, j) pair at exactly this Hamming distance
  std::optional<double> min_distance;   // resample each b_j until every pair is strictly beyond this
  int max_attempts = 10000;
};

struct PlantedPair {
  int i = -1;
  int j = -1;
};

/// Balanced instance: every row has exactly d/2 ones. A planted pair swaps k/2
/// ones with k/2 zeros of a_i, so k must be even.
inline AnnsInstance generate_balanced_instance(int n, int d, double t, double delta, const BalancedInstanceOptions& opt,
                                               std::uint64_t seed, PlantedPair* planted = nullptr) {
  require(n >= 1, ErrorCode::InvalidArgument, "generate_balanced_instance: n must be >= 1");
  require(d >= 2 && d % 2 == 0, ErrorCode::InvalidArgument, "generate_balanced_instance: d must be even and >= 2");
  if (opt.planted_distance) {
    const int k = *opt.planted_distance;
    if (k < 0 || k > d || k % 2 != 0)
      fail(ErrorCode::InfeasiblePlant, "planted distance " + std::to_string(k) + " must be even and in [0, " +
                                           std::to_string(d) + "]");
  }
  std::mt19937_64 rng(seed);
  AnnsInstance inst;
  inst.t = t;
  inst.delta = delta;
  inst.set_a = balanced_rows(n, d, rng);
  inst.set_b = balanced_rows(n, d, rng);

  if (opt.min_distance) {
    const double floor = *opt.min_distance;
    for (int j = 0; j < n; ++j) {
      int attempts = 0;
      auto clear = [&] {
        for (int i = 0; i < n; ++i)
          if (!(hamming(inst.set_a, i, inst.set_b, j) > floor)) return false;
        return true;
      };
      while (!clear()) {
        if (++attempts > opt.max_attempts)
          fail(ErrorCode::InfeasiblePlant, "could not place b_" + std::to_string(j) + " beyond distance " +
                                               std::to_string(floor) + " after " + std::to_string(opt.max_attempts) +
                                               " attempts");
        inst.set_b.row(j) = balanced_rows(1, d, rng).row(0);
      }
    }
  }

  if (opt.planted_distance) {
    const int k = *opt.planted_distance;
    std::uniform_int_distribution<int> pick(0, n - 1);
    const int i = pick(rng), j = pick(rng);
    std::vector<int> ones, zeros;
    for (int l = 0; l < d; ++l) (inst.set_a(i, l) ? ones : zeros).push_back(l);
    std::shuffle(ones.begin(), ones.end(), rng);
    std::shuffle(zeros.begin(), zeros.end(), rng);
    inst.set_b.row(j) = inst.set_a.row(i);
    for (int q = 0; q < k / 2; ++q) {
      inst.set_b(j, ones[q]) = 0;
      inst.set_b(j, zeros[q]) = 1;
    }
    if (planted) *planted = {i, j};
  }
  return inst;
}

/// Dimension used by the experiment drivers: ceil(C ln n) rounded up to even.
inline int reduction_dimension(int n, double c) {
  int d = static_cast<int>(std::ceil(c * std::log(static_cast<double>(n))));
  if (d % 2) ++d;
  return std::max(d, 2);
}

enum class PlantMode { Alternate, Case1, Case2 };

struct ReductionExperiment {
  int n = 16;
  int d = 0;              // 0: reduction_dimension(n, C)
  double C = 6.0;
  double t = 0.0;         // 0: d / 4
  double delta = 0.09;
  int planted_distance = 2;
  int trials = 1;
  PlantMode plant = PlantMode::Alternate;
  ReductionAConvention convention = ReductionAConvention::AsWritten;
  ReductionSolver solver = ReductionSolver::Dense;
  std::uint64_t seed = 0;
};

struct QueryOutcome {
  int j = 0;
  CaseVerdict verdict = CaseVerdict::Indeterminate;
  CaseVerdict oracle = CaseVerdict::Indeterminate;
  double statistic = 0.0;
  double log_statistic = 0.0;
};

struct TrialOutcome {
  int trial = 0;
  std::uint64_t seed = 0;
  bool planted_case1 = false;
  PlantedPair planted;
  AnnsInstance instance;
  ReductionParams params;
  double log_threshold = 0.0;
  std::vector<QueryOutcome> queries;
  int promised = 0;
  int agreements = 0;
};

struct ReductionReport {
  ReductionExperiment config;
  std::vector<TrialOutcome> trials;
  int promised_queries = 0;
  int agreements = 0;
  int unpromised_queries = 0;

  double agreement_fraction() const {
    return promised_queries == 0 ? 1.0 : static_cast<double>(agreements) / promised_queries;
  }
};

inline ReductionExperiment resolved(ReductionExperiment cfg) {
  if (cfg.d == 0) cfg.d = reduction_dimension(cfg.n, cfg.C);
  if (cfg.t == 0.0) cfg.t = cfg.d / 4.0;
  return cfg;
}

/// Runs `trials` instances. Case1 trials plant one pair at `planted_distance`;
/// Case2 trials resample queries until every pair is beyond (1 + delta) t.
/// Every query is compared against the brute-force verdict; unpromised
/// queries are counted but not scored.
inline ReductionReport verify_reduction(const ReductionExperiment& requested) {
  const ReductionExperiment cfg = resolved(requested);
  require(cfg.trials >= 0, ErrorCode::InvalidArgument, "verify_reduction: trials must be >= 0");
  ReductionReport report;
  report.config = cfg;
  for (int trial = 0; trial < cfg.trials; ++trial) {
    TrialOutcome out;
    out.trial = trial;
    out.seed = cfg.seed + static_cast<std::uint64_t>(trial);
    out.planted_case1 = cfg.plant == PlantMode::Case1 || (cfg.plant == PlantMode::Alternate && trial % 2 == 0);
    BalancedInstanceOptions opt;
    if (out.planted_case1)
      opt.planted_distance = cfg.planted_distance;
    else
      opt.min_distance = (1.0 + cfg.delta) * cfg.t;
    out.instance = generate_balanced_instance(cfg.n, cfg.d, cfg.t, cfg.delta, opt, out.seed, &out.planted);
    out.params = default_reduction_params(out.instance);
    const auto ahop_inst = build_ahop_instance(out.instance, out.params);
    const auto decision = solve_gap_anns_via_ahop(ahop_inst, cfg.solver, cfg.convention);
    const auto oracle = oracle_verdicts(out.instance);
    out.log_threshold = decision.log_threshold;
    for (int j = 0; j < cfg.n; ++j) {
      QueryOutcome q{j, decision.verdicts[j], oracle[j], decision.statistic[j], decision.log_statistic[j]};
      if (oracle[j] == CaseVerdict::Indeterminate) {
        ++report.unpromised_queries;
      } else {
        ++out.promised;
        out.agreements += q.verdict == q.oracle;
      }
      out.queries.push_back(q);
    }
    report.promised_queries += out.promised;
    report.agreements += out.agreements;
    report.trials.push_back(std::move(out));
  }
  return report;
}

namespace io {

inline std::string binary_to_csv(const BinaryMatrix& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index l = 0; l < m.cols(); ++l) {
      if (l) out += ',';
      out += m(i, l) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

inline BinaryMatrix binary_from_csv(const std::string& text, int n, int d) {
  BinaryMatrix m(n, d);
  std::istringstream in(text);
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    require(row < n, ErrorCode::IoError, "binary CSV: more than n = " + std::to_string(n) + " rows");
    std::istringstream fields(line);
    std::string cell;
    int col = 0;
    while (std::getline(fields, cell, ',')) {
      require(col < d && (cell == "0" || cell == "1"), ErrorCode::IoError,
              "binary CSV: row " + std::to_string(row + 1) + " must hold d = " + std::to_string(d) + " values of 0/1");
      m(row, col++) = cell == "1";
    }
    require(col == d, ErrorCode::IoError, "binary CSV: row " + std::to_string(row + 1) + " has " +
                                              std::to_string(col) + " values, expected " + std::to_string(d));
    ++row;
  }
  require(row == n, ErrorCode::IoError, "binary CSV: expected " + std::to_string(n) + " rows, got " +
                                            std::to_string(row));
  return m;
}

/// Writes A.csv, B.csv and instance.json (n, d, t, delta) into `dir`.
inline void save_anns_instance(const AnnsInstance& inst, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_atomic(dir / "A.csv", binary_to_csv(inst.set_a));
  write_atomic(dir / "B.csv", binary_to_csv(inst.set_b));
  const nlohmann::json meta{{"n", inst.n()}, {"d", inst.d()}, {"t", inst.t}, {"delta", inst.delta}};
  write_atomic(dir / "instance.json", meta.dump(2) + "\n");
}

inline AnnsInstance load_anns_instance(const std::filesystem::path& dir) {
  const auto meta = nlohmann::json::parse(read_file(dir / "instance.json"));
  const int n = meta.at("n").get<int>(), d = meta.at("d").get<int>();
  AnnsInstance inst;
  inst.t = meta.at("t").get<double>();
  inst.delta = meta.at("delta").get<double>();
  inst.set_a = binary_from_csv(read_file(dir / "A.csv"), n, d);
  inst.set_b = binary_from_csv(read_file(dir / "B.csv"), n, d);
  validate(inst);
  return inst;
}

}  // namespace io

inline nlohmann::json to_json(const ReductionParams& p) {
  return {{"n", p.n},
          {"d", p.d},
          {"C", p.C},
          {"C0", p.C0},
          {"C_beta", p.C_beta},
          {"C_alpha", p.C_alpha},
          {"B", p.B},
          {"beta", p.beta},
          {"log_t_tilde", p.log_t_tilde},
          {"log_delta_h", p.log_delta_h},
          {"exp_b2_representable", p.exp_b2_representable}};
}

inline nlohmann::json to_json(const ReductionReport& r) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : r.trials) {
    nlohmann::json queries = nlohmann::json::array();
    for (const auto& q : t.queries)
      queries.push_back({{"j", q.j},
                         {"verdict", verdict_name(q.verdict)},
                         {"oracle", verdict_name(q.oracle)},
                         {"statistic", q.statistic},
                         {"log_statistic", q.log_statistic}});
    nlohmann::json entry{{"trial", t.trial},
                         {"seed", t.seed},
                         {"planted", t.planted_case1 ? "case1" : "case2"},
                         {"params", to_json(t.params)},
                         {"log_threshold", t.log_threshold},
                         {"promised", t.promised},
                         {"agreements", t.agreements},
                         {"queries", queries}};
    if (t.planted_case1) entry["planted_pair"] = {t.planted.i, t.planted.j};
    // Disagreements carry the whole instance so they can be replayed.
    if (t.agreements != t.promised)
      entry["instance"] = {{"A", io::binary_to_csv(t.instance.set_a)}, {"B", io::binary_to_csv(t.instance.set_b)}};
    trials.push_back(std::move(entry));
  }
  const auto& c = r.config;
  return {{"n", c.n},
          {"d", c.d},
          {"t", c.t},
          {"delta", c.delta},
          {"convention", convention_name(c.convention)},
          {"solver", c.solver == ReductionSolver::Dense ? "dense" : "lowrank"},
          {"seed", c.seed},
          {"promised_queries", r.promised_queries},
          {"unpromised_queries", r.unpromised_queries},
          {"agreements", r.agreements},
          {"agreement_fraction", r.agreement_fraction()},
          {"trials", trials}};
}

}  // namespace ahop
