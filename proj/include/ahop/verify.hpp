#pragma once

// Seeded property suite over every module. Outputs carry no timing fields so
// two runs with the same seed are byte-identical.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahop/bench.hpp"
#include "ahop/capacity.hpp"
#include "ahop/feature_map.hpp"
#include "ahop/hopfield.hpp"
#include "ahop/poly_approx.hpp"
#include "ahop/reduction.hpp"

namespace ahop {

struct PropertyResult {
  std::string name;
  std::string module;
  long cases = 0;
  long violations = 0;
  double worst = 0.0;  // largest observed value of the checked quantity (property specific)
  std::string note;

  bool passed() const { return violations == 0; }
};

struct VerifyConfig {
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct VerifyReport {
  std::uint64_t seed = 0;
  std::vector<PropertyResult> properties;

  bool all_passed() const {
    return std::all_of(properties.begin(), properties.end(), [](const PropertyResult& p) { return p.passed(); });
  }
};

namespace detail {

inline std::mt19937_64 property_rng(std::uint64_t seed, std::uint64_t property) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(property)};
  return std::mt19937_64(seq);
}

inline void tally(PropertyResult& r, double value, bool ok) {
  ++r.cases;
  if (!ok) ++r.violations;
  if (std::isnan(value) || value > r.worst) r.worst = value;
}

inline PropertyResult poly_relative_contract(std::uint64_t seed) {
  PropertyResult r{"relative_error_contract", "poly_approx"};
  auto rng = property_rng(seed, 1);
  for (double b : {0.5, 1.0, 2.0, 3.0})
    for (double delta : {1e-2, 1e-3, 1e-4}) {
      const auto p = fit_exp_poly(b, delta);
      std::uniform_real_distribution<double> u(-b, b);
      double worst = 0.0;
      for (int k = 0; k < 100000; ++k) {
        const double x = u(rng);
        worst = std::max(worst, std::abs(eval_poly(p, x) - std::exp(x)) / std::exp(x) / delta);
      }
      // Measured in units of delta_a; the contract allows 1.05.
      tally(r, worst, worst <= 1.05 && p.certified_rel_error <= delta);
    }
  return r;
}

inline PropertyResult poly_determinism() {
  PropertyResult r{"fit_determinism", "poly_approx"};
  for (double b : {0.5, 1.0, 3.0}) {
    const auto a = fit_exp_poly(b, 1e-4), c = fit_exp_poly(b, 1e-4);
    tally(r, 0.0, a.coeffs == c.coeffs && a.degree == c.degree);
  }
  return r;
}

inline PropertyResult horner_vs_naive(std::uint64_t seed) {
  PropertyResult r{"horner_matches_power_sum", "poly_approx"};
  auto rng = property_rng(seed, 2);
  for (double b : {0.5, 1.0, 2.0, 3.0}) {
    const auto p = fit_exp_poly(b, 1e-4);
    std::uniform_real_distribution<double> u(-b, b);
    for (int k = 0; k < 1000; ++k) {
      const double x = u(rng);
      double naive = 0.0;
      for (std::size_t i = 0; i < p.coeffs.size(); ++i) naive += p.coeffs[i] * std::pow(x, static_cast<double>(i));
      const double rel = std::abs(eval_poly(p, x) - naive) / std::abs(naive);
      tally(r, rel, rel <= 1e-12);
    }
  }
  return r;
}

inline PropertyResult feature_exactness(std::uint64_t seed) {
  PropertyResult r{"feature_map_exactness", "feature_map"};
  auto rng = property_rng(seed, 3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int d = 1; d <= 6; ++d)
    for (int g = 0; g <= 6; ++g) {
      std::vector<double> coeffs(g + 1);
      for (auto& c : coeffs) c = u(rng);
      const MonomialFeatureMap map(coeffs, d);
      std::vector<double> a(d), b(d);
      for (int k = 0; k < 200; ++k) {
        for (int l = 0; l < d; ++l) {
          a[l] = u(rng);
          b[l] = u(rng);
        }
        const auto pu = map.phi_u(a), pv = map.phi_v(b);
        double inner = 0.0, dot = 0.0;
        for (std::size_t q = 0; q < pu.size(); ++q) inner += pu[q] * pv[q];
        for (int l = 0; l < d; ++l) dot += a[l] * b[l];
        const double want = eval_poly(coeffs, dot);
        const double rel = std::abs(inner - want) / (1.0 + std::abs(want));
        tally(r, rel, rel <= 1e-9);
      }
    }
  return r;
}

inline PropertyResult rank_economy() {
  PropertyResult r{"rank_economy", "feature_map"};
  for (int d = 1; d <= 8; ++d)
    for (int g = 0; g <= 8; ++g) {
      const std::vector<double> coeffs(g + 1, 1.0);
      const MonomialFeatureMap map(coeffs, d);
      const bool ok = static_cast<double>(map.rank()) == binomial(d + g, g) &&
                      static_cast<double>(map.rank()) <= binomial(2 * (d + g), 2 * g);
      tally(r, static_cast<double>(map.rank()) / binomial(2 * (d + g), 2 * g), ok);
    }
  return r;
}

inline PropertyResult factored_sums(std::uint64_t seed) {
  PropertyResult r{"factored_sums_match_dense", "feature_map"};
  auto rng = property_rng(seed, 4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const int m = 1 + k % 17, l = 1 + (k * 7) % 23, rank = 1 + k % 9;
    RowMatrix u1(m, rank), u2(l, rank);
    for (auto& v : u1.reshaped()) v = u(rng);
    for (auto& v : u2.reshaped()) v = u(rng);
    const Matrix full = u1 * u2.transpose();
    const double e1 = max_abs(factored_row_sums(u1, u2) - full.rowwise().sum());
    const double e2 = max_abs(factored_col_sums(u1, u2) - full.colwise().sum().transpose());
    tally(r, std::max(e1, e2), std::max(e1, e2) <= 1e-12);
  }
  return r;
}

inline PropertyResult permutation_commutes(std::uint64_t seed) {
  PropertyResult r{"row_permutation_commutes", "feature_map"};
  auto rng = property_rng(seed, 5);
  const auto p = fit_exp_poly(1.0, 1e-3);
  const auto map = build_feature_map(p, 3);
  for (int k = 0; k < 10; ++k) {
    Matrix x(12, 3);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& v : x.reshaped()) v = u(rng);
    std::vector<int> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix xp(12, 3);
    for (int i = 0; i < 12; ++i) xp.row(i) = x.row(perm[i]);
    const auto f = build_factor_matrices(map, x, x);
    const auto fp = build_factor_matrices(map, xp, x);
    bool ok = true;
    for (int i = 0; i < 12; ++i) ok &= fp.u1.row(i) == f.u1.row(perm[i]);
    tally(r, 0.0, ok);
  }
  return r;
}

struct RandomSuiteCase {
  PatternMatrix memory;
  PatternMatrix queries;
  RetrievalConfig cfg;
};

/// The shared random suite: d <= 8, M, L <= 128, B <= 2, beta = 1/d.
inline std::vector<RandomSuiteCase> random_retrieval_suite(std::uint64_t seed, int count) {
  auto rng = property_rng(seed, 6);
  std::uniform_int_distribution<int> dim(1, 8), size(1, 128);
  std::uniform_real_distribution<double> bound(0.05, 2.0);
  std::vector<RandomSuiteCase> out;
  for (int k = 0; k < count; ++k) {
    const int d = dim(rng), m = size(rng), l = size(rng);
    const double b = bound(rng);
    RandomSuiteCase c{PatternMatrix(uniform_patterns(d, m, b, rng), PatternRole::Memory),
                      PatternMatrix(uniform_patterns(d, l, b, rng), PatternRole::Query),
                      {}};
    c.cfg.beta = 1.0 / d;
    // delta_a 1e-4 keeps the rank moderate only for small d.
    c.cfg.delta_a = d <= 4 ? 1e-4 : 1e-3;
    c.cfg.normalization = k % 2 ? Normalization::MemoryNormalized : Normalization::QueryNormalized;
    out.push_back(std::move(c));
  }
  return out;
}

inline std::pair<PropertyResult, PropertyResult> error_and_normalizer_laws(std::uint64_t seed, unsigned threads) {
  PropertyResult law{"error_bound_law", "hopfield"};
  PropertyResult norm{"normalizer_relative_contract", "hopfield"};
  for (auto& c : random_retrieval_suite(seed, 100)) {
    c.cfg.threads = threads;
    try {
      const auto low = retrieve_lowrank(c.memory, c.queries, c.cfg);
      const auto dense = retrieve_dense(c.memory, c.queries, c.cfg);
      const double err = max_norm_error(low.z, dense.z);
      tally(law, err / low.error_bound, err <= low.error_bound);
      const Vector exact = dense_normalizer(c.memory, c.queries, c.cfg.beta, c.cfg.normalization);
      const double rel = ((low.normalizer - exact).array().abs() / exact.array()).maxCoeff() / c.cfg.delta_a;
      tally(norm, rel, rel <= 1.0);
    } catch (const Error& e) {
      law.note = norm.note = std::string(e.name());
      tally(law, 0.0, false);
      tally(norm, 0.0, false);
    }
  }
  return {law, norm};
}

inline PropertyResult softmax_columns(std::uint64_t seed) {
  PropertyResult r{"softmax_columns_convex", "hopfield"};
  auto rng = property_rng(seed, 7);
  for (int k = 0; k < 20; ++k) {
    const PatternMatrix m(uniform_patterns(5, 1 + 3 * k, 2.0, rng), PatternRole::Memory);
    const PatternMatrix q(uniform_patterns(5, 64, 2.0, rng), PatternRole::Query);
    const Matrix w = softmax_weights(m, q, 0.7, Normalization::QueryNormalized);
    const double sum_err = (w.colwise().sum().array() - 1.0).abs().maxCoeff();
    RetrievalConfig cfg;
    cfg.beta = 0.7;
    const auto res = retrieve_dense(m, q, cfg);
    const Vector lo = m.data().rowwise().minCoeff(), hi = m.data().rowwise().maxCoeff();
    double outside = 0.0;
    for (Eigen::Index j = 0; j < res.z.cols(); ++j) {
      outside = std::max(outside, (lo - res.z.col(j)).maxCoeff());
      outside = std::max(outside, (res.z.col(j) - hi).maxCoeff());
    }
    tally(r, sum_err, sum_err <= 1e-12 && outside <= 1e-12);
  }
  return r;
}

inline PropertyResult energy_monotone(std::uint64_t seed) {
  PropertyResult r{"energy_non_increasing", "hopfield"};
  auto rng = property_rng(seed, 8);
  for (int k = 0; k < 30; ++k) {
    const PatternMatrix m(uniform_patterns(6, 10, 1.5, rng), PatternRole::Memory);
    RetrievalConfig cfg;
    cfg.beta = 0.3 + 0.1 * k;
    const Vector x0 = uniform_patterns(6, 1, 2.0, rng);
    const auto trace = fixed_point_iterate(m, x0, cfg, 25, 1e-12);
    for (std::size_t s = 1; s < trace.energies.size(); ++s) {
      const double rise = trace.energies[s] - trace.energies[s - 1];
      tally(r, rise, rise <= 1e-9);
    }
  }
  return r;
}

inline PropertyResult convention_equivalence(std::uint64_t seed) {
  PropertyResult r{"convention_equivalence_symmetric", "hopfield"};
  auto rng = property_rng(seed, 9);
  for (int k = 0; k < 10; ++k) {
    const Matrix xi = uniform_patterns(4, 8 + k, 1.0, rng);
    const PatternMatrix m(xi, PatternRole::Memory), q(xi, PatternRole::Query);
    const Vector rows = dense_normalizer(m, q, 0.5, Normalization::MemoryNormalized);
    const Vector cols = dense_normalizer(m, q, 0.5, Normalization::QueryNormalized);
    const double rel = ((rows - cols).array().abs() / cols.array()).maxCoeff();
    tally(r, rel, rel <= 1e-12);
  }
  return r;
}

inline PropertyResult shift_invariance(std::uint64_t seed) {
  PropertyResult r{"softmax_shift_invariance", "hopfield"};
  auto rng = property_rng(seed, 10);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k < 10; ++k) {
    const Matrix xi = uniform_patterns(3, 7, 1.0, rng), x = uniform_patterns(3, 9, 1.0, rng);
    Matrix xi2(4, 7), x2(4, 9);
    xi2 << xi, Matrix::Constant(1, 7, u(rng));
    x2 << x, Matrix::Constant(1, 9, u(rng));
    const Matrix w1 = softmax_weights(PatternMatrix(xi), PatternMatrix(x, PatternRole::Query), 1.0,
                                      Normalization::QueryNormalized);
    const Matrix w2 = softmax_weights(PatternMatrix(xi2), PatternMatrix(x2, PatternRole::Query), 1.0,
                                      Normalization::QueryNormalized);
    const double diff = max_abs(w1 - w2);
    tally(r, diff, diff <= 1e-12);
  }
  return r;
}

inline std::vector<PropertyResult> reduction_properties(std::uint64_t seed) {
  PropertyResult bounds{"reduction_row_sum_bounds", "reduction"};
  PropertyResult chain{"reduction_t_tilde_above_delta_h", "reduction"};
  PropertyResult norms{"reduction_norm_bound", "reduction"};
  PropertyResult decisions{"reduction_decisions_match_oracle", "reduction"};
  for (int n : {8, 16}) {
    ReductionExperiment cfg;
    cfg.n = n;
    cfg.trials = 4;
    cfg.seed = seed * 1000 + static_cast<std::uint64_t>(n);
    const auto report = verify_reduction(cfg);
    for (const auto& t : report.trials) {
      const auto built = build_ahop_instance(t.instance, t.params);
      const double b2 = t.params.B * t.params.B;
      const Matrix log_a = reduction_log_kernel(built, ReductionAConvention::AsWritten);
      for (Eigen::Index i = 0; i < log_a.rows(); ++i) {
        const double top = log_a.row(i).maxCoeff();
        const double log_d = top + std::log((log_a.row(i).array() - top).exp().sum());
        const double lo = std::log(static_cast<double>(n)) + b2, hi = std::log(2.0 * n) + b2;
        tally(bounds, log_d - hi, log_d >= lo - 1e-9 && log_d <= hi + 1e-9);
      }
      tally(chain, t.params.log_delta_h - t.params.log_t_tilde, t.params.log_t_tilde >= t.params.log_delta_h);
      tally(norms, std::max(built.memory.max_norm(), built.queries.max_norm()) - t.params.B,
            built.memory.max_norm() <= t.params.B && built.queries.max_norm() <= t.params.B);
      tally(decisions, static_cast<double>(t.promised - t.agreements), t.promised == t.agreements);
    }
  }
  return {bounds, chain, norms, decisions};
}

inline PropertyResult lambert_residual() {
  PropertyResult r{"lambert_w0_residual", "capacity"};
  const double lo = -1.0 / std::numbers::e + 1e-9;
  for (int k = 0; k < 10000; ++k) {
    const double offset = 1e-9 * std::pow((1e6 - lo) / 1e-9, k / 9999.0);
    const double x = std::min(lo + offset - 1e-9, 1e6);
    const double w = lambert_w0(x);
    const double res = std::abs(w * std::exp(w) - x) / std::max(1.0, std::abs(x));
    tally(r, res, res <= 1e-12);
  }
  return r;
}

inline PropertyResult separation_monotone() {
  PropertyResult r{"well_separation_monotone", "capacity"};
  CapacityParams p;
  p.m = 2.0;
  p.R = 1.0;
  p.B = 1.0;
  p.beta = 0.5;
  for (double delta : {0.0, 1e-3, 1e-2}) {
    p.delta_a = delta;
    for (int M = 2; M < 20; ++M) {
      p.M = M;
      const double a = well_separation_threshold(p);
      p.M = M + 1;
      const double b = well_separation_threshold(p);
      tally(r, a - b, b > a);
    }
  }
  p.M = 4;
  for (double delta = 0.0; delta < 0.11; delta += 0.01) {
    p.delta_a = delta;
    const double a = well_separation_threshold(p);
    p.delta_a = delta + 0.005;
    const double b = well_separation_threshold(p);
    tally(r, a - b, b > a);
  }
  return r;
}

inline std::vector<int> capacity_m_grid() { return {1, 2, 4, 8, 16, 32, 64, 128}; }

/// Largest M with >= 0.9 success per d in {8, 16, 32, 64}, dense updates.
inline PropertyResult capacity_monotone(std::uint64_t seed, unsigned threads, std::vector<CapacityRow>* rows_out) {
  PropertyResult r{"empirical_capacity_monotone_dense", "capacity"};
  std::optional<int> prev;
  for (int d : {8, 16, 32, 64}) {
    CapacityExperiment cfg;
    cfg.d = d;
    cfg.beta = 1.0;
    cfg.M_list = capacity_m_grid();
    cfg.trials = 200;
    cfg.solver = RetrievalMode::Dense;
    cfg.threads = threads;
    cfg.seed = seed;
    const auto res = run_capacity_experiment(cfg);
    if (rows_out) rows_out->insert(rows_out->end(), res.rows.begin(), res.rows.end());
    const auto best = largest_reliable_m(res.rows);
    const bool ok = best.has_value() && (!prev || *best >= *prev);
    tally(r, best ? *best : 0.0, ok);
    prev = best;
  }
  return r;
}

inline PropertyResult error_sweep_bounded(std::uint64_t seed) {
  PropertyResult r{"error_sweep_below_bound", "bench"};
  ErrorSweepConfig cfg;
  cfg.delta_a_list = {1e-2, 1e-3, 1e-4};
  cfg.M = 128;
  cfg.L = 128;
  cfg.seed = seed;
  const auto recs = error_sweep(cfg);
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& rec : recs) {
    tally(r, rec.measured_error / rec.bound, rec.status == "ok" && rec.measured_error <= rec.bound);
    if (rec.measured_error > prev) r.note = "measured error increased as delta_a shrank";
    prev = rec.measured_error;
  }
  return r;
}

}  // namespace detail

/// Runs every property and returns the collected results. Capacity rows are
/// appended to `capacity_rows` when given.
inline VerifyReport run_verify(const VerifyConfig& cfg, std::vector<CapacityRow>* capacity_rows = nullptr) {
  VerifyReport rep;
  rep.seed = cfg.seed;
  auto& p = rep.properties;
  p.push_back(detail::poly_relative_contract(cfg.seed));
  p.push_back(detail::poly_determinism());
  p.push_back(detail::horner_vs_naive(cfg.seed));
  p.push_back(detail::feature_exactness(cfg.seed));
  p.push_back(detail::rank_economy());
  p.push_back(detail::factored_sums(cfg.seed));
  p.push_back(detail::permutation_commutes(cfg.seed));
  auto [law, norm] = detail::error_and_normalizer_laws(cfg.seed, cfg.threads);
  p.push_back(law);
  p.push_back(norm);
  p.push_back(detail::softmax_columns(cfg.seed));
  p.push_back(detail::energy_monotone(cfg.seed));
  p.push_back(detail::convention_equivalence(cfg.seed));
  p.push_back(detail::shift_invariance(cfg.seed));
  for (auto& r : detail::reduction_properties(cfg.seed)) p.push_back(std::move(r));
  p.push_back(detail::lambert_residual());
  p.push_back(detail::separation_monotone());
  p.push_back(detail::capacity_monotone(cfg.seed, cfg.threads, capacity_rows));
  p.push_back(detail::error_sweep_bounded(cfg.seed));
  return rep;
}

namespace io {

inline std::string verify_to_csv(const VerifyReport& rep) {
  std::string out = "property,module,cases,violations,worst,status\n";
  for (const auto& p : rep.properties)
    out += p.name + ',' + p.module + ',' + std::to_string(p.cases) + ',' + std::to_string(p.violations) + ',' +
           format_double(p.worst) + ',' + (p.passed() ? "pass" : "fail") + '\n';
  return out;
}

}  // namespace io

inline nlohmann::json to_json(const VerifyReport& rep) {
  nlohmann::json props = nlohmann::json::array();
  for (const auto& p : rep.properties) {
    nlohmann::json entry{{"property", p.name},
                         {"module", p.module},
                         {"cases", p.cases},
                         {"violations", p.violations},
                         {"worst", io::format_double(p.worst)},
                         {"status", p.passed() ? "pass" : "fail"}};
    if (!p.note.empty()) entry["note"] = p.note;
    props.push_back(std::move(entry));
  }
  return {{"seed", rep.seed}, {"all_passed", rep.all_passed()}, {"properties", props}};
}

}  // namespace ahop
