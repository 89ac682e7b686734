#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ahop/capacity.hpp"

namespace {

using ahop::CapacityExperiment;
using ahop::CapacityParams;
using ahop::Matrix;
using ahop::PatternMatrix;

// Bisection on w e^w = x over the principal branch, in long double.
long double bisect_w0(long double x) {
  long double lo = -1.0L, hi = std::max(1.0L, std::log1p(x) + 1.0L);
  for (int i = 0; i < 200; ++i) {
    const long double mid = 0.5L * (lo + hi);
    (mid * std::exp(mid) < x ? lo : hi) = mid;
  }
  return 0.5L * (lo + hi);
}

TEST(LambertW0, FixedPoints) {
  EXPECT_EQ(ahop::lambert_w0(0.0), 0.0);
  EXPECT_NEAR(ahop::lambert_w0(std::numbers::e), 1.0, 1e-15);
  EXPECT_NEAR(ahop::lambert_w0(1.0), 0.5671432904097838, 1e-15);
  EXPECT_NEAR(ahop::lambert_w0(1.0), static_cast<double>(bisect_w0(1.0L)), 1e-15);
  EXPECT_NEAR(ahop::lambert_w0(-1.0 / std::numbers::e), -1.0, 1e-7);
}

TEST(LambertW0, OutOfDomain) {
  try {
    ahop::lambert_w0(-0.4);
    FAIL();
  } catch (const ahop::Error& e) {
    EXPECT_EQ(e.code(), ahop::ErrorCode::OutOfDomain);
  }
}

TEST(LambertW0, ResidualOnLogSpacedGrid) {
  const double lo = -1.0 / std::numbers::e + 1e-9;
  // 10^4 points: a log-spaced offset above the branch point up to 1e6.
  for (int k = 0; k < 10000; ++k) {
    const double offset = 1e-9 * std::pow(1e6 / 1e-9 * std::numbers::e, k / 9999.0);
    const double x = std::min(lo + offset - 1e-9, 1e6);
    const double w = ahop::lambert_w0(x);
    EXPECT_LE(std::abs(w * std::exp(w) - x), 1e-12 * std::max(1.0, std::abs(x))) << x;
  }
  for (double x : {-0.3, -0.1, 0.01, 0.5, 2.0, 10.0, 1e3, 1e6})
    EXPECT_NEAR(ahop::lambert_w0(x), static_cast<double>(bisect_w0(x)), 1e-12 * std::max(1.0, std::abs(x))) << x;
}

TEST(LambertW0, ExpArgumentMatchesDirectEvaluation) {
  for (double y : {-3.0, 0.0, 4.0, 50.0, 499.0})
    EXPECT_NEAR(ahop::lambert_w0_exp(y), ahop::lambert_w0(std::exp(y)), 1e-12 * (1 + y * y));
  const double w = ahop::lambert_w0_exp(2000.0);
  EXPECT_NEAR(w + std::log(w), 2000.0, 1e-10);
}

TEST(WellSeparation, ScalarExample) {
  CapacityParams p;
  p.M = 2;
  p.m = 1.0;
  p.R = 0.5;
  p.beta = 1.0;
  p.delta_a = 0.0;
  p.B = 1.0;
  EXPECT_NEAR(ahop::well_separation_threshold(p), std::log(4.0) + 1.0, 1e-15);
  EXPECT_NEAR(ahop::well_separation_threshold(p), 2.386294, 1e-6);
}

TEST(WellSeparation, DenseLimit) {
  CapacityParams p;
  p.M = 7;
  p.m = 3.0;
  p.R = 0.8;
  p.beta = 0.6;
  p.delta_a = 0.0;
  EXPECT_NEAR(ahop::well_separation_threshold(p), std::log(2.0 * 6 * 3.0 / 0.8) / 0.6 + 2 * 3.0 * 0.8, 1e-12);
}

TEST(WellSeparation, InfeasibleAtSingularity) {
  CapacityParams p;
  p.M = 5;
  p.B = 1.0;
  p.delta_a = 0.01;
  p.R = 2.0 * 5 * 1.0 * 0.01;
  try {
    ahop::well_separation_threshold(p);
    FAIL();
  } catch (const ahop::Error& e) {
    EXPECT_EQ(e.code(), ahop::ErrorCode::InfeasibleStorage);
  }
}

TEST(WellSeparation, MonotoneInMAndDeltaAndDiverges) {
  CapacityParams p;
  p.m = 2.0;
  p.R = 1.0;
  p.B = 1.0;
  p.beta = 0.5;
  for (double delta : {0.0, 1e-3, 1e-2}) {
    p.delta_a = delta;
    double prev = -1e300;
    for (int M = 2; M <= 20; ++M) {
      p.M = M;
      const double v = ahop::well_separation_threshold(p);
      EXPECT_GT(v, prev);
      prev = v;
    }
  }
  p.M = 4;
  double prev = -1e300;
  for (double delta = 0.0; delta < 0.12; delta += 0.01) {
    p.delta_a = delta;
    const double v = ahop::well_separation_threshold(p);
    EXPECT_GT(v, prev);
    prev = v;
  }
  p.delta_a = 0.1;
  const double edge = 2.0 * p.M * p.B * p.delta_a;
  p.R = edge * (1 + 1e-12);
  EXPECT_GT(ahop::well_separation_threshold(p), 40.0);
}

TEST(CheckWellSeparated, OrthogonalPatterns) {
  const double m = 2.0;
  const PatternMatrix mem(m * Matrix::Identity(3, 3));
  CapacityParams p;
  p.m = m;
  p.beta = 10.0;
  p.R = 0.1;
  p.delta_a = 0.0;
  const auto r = ahop::check_well_separated(mem, p);
  EXPECT_NEAR(r.threshold, std::log(2.0 * 2 * m / 0.1) / 10.0 + 2 * m * 0.1, 1e-12);
  for (std::size_t mu = 0; mu < 3; ++mu) {
    EXPECT_DOUBLE_EQ(r.separation[mu], m * m);
    EXPECT_EQ(r.separated[mu], m * m >= r.threshold);
  }
  EXPECT_TRUE(r.all());
}

TEST(CheckWellSeparated, DuplicatesFailAndSingleMemoryErrors) {
  Matrix dup(2, 3);
  dup << 1, 1, 0, 0, 0, 1;
  CapacityParams p;
  const auto r = ahop::check_well_separated(PatternMatrix(dup), p);
  EXPECT_FALSE(r.separated[0]);
  EXPECT_FALSE(r.separated[1]);
  try {
    ahop::check_well_separated(PatternMatrix(Matrix::Ones(2, 1)), p);
    FAIL();
  } catch (const ahop::Error& e) {
    EXPECT_EQ(e.code(), ahop::ErrorCode::SingleMemory);
  }
}

// Independent long double evaluation of the bound with a bisection W_0.
long double bound_oracle(const CapacityParams& p) {
  const long double arg = 2.0L * p.m * (std::sqrt(static_cast<long double>(p.p)) - 1.0L) /
                          (p.R - 2.0L * p.M * p.B * p.delta_a);
  const long double a = 4.0L / (p.d - 1) * (std::log(arg) + 1.0L);
  const long double b = 4.0L * p.m * p.m * p.beta / (5.0L * (p.d - 1));
  const long double c = b / bisect_w0(std::exp(a + std::log(b)));
  return std::sqrt(static_cast<long double>(p.p)) * std::pow(c, (p.d - 1) / 4.0L);
}

TEST(CapacityLowerBound, IncreasesWithDimension) {
  CapacityParams p;
  p.p = 4.0;  // the formula needs sqrt(p) > 1
  p.m = 10.0;
  p.R = 1.0;
  p.beta = 1.0;
  p.delta_a = 0.0;
  double prev = 0.0;
  for (int d = 5; d <= 41; d += 4) {
    p.d = d;
    const double v = ahop::capacity_lower_bound(p);
    EXPECT_GT(v, prev) << d;
    EXPECT_NEAR(v, static_cast<double>(bound_oracle(p)), 1e-10 * v) << d;
    prev = v;
  }
}

TEST(CapacityLowerBound, DefiningEquationOfC) {
  CapacityParams p;
  p.p = 2.25;
  p.m = 3.0;
  p.R = 0.7;
  p.d = 12;
  const auto c = ahop::capacity_lower_bound_detail(p);
  EXPECT_LE(std::abs(c.C * ahop::lambert_w0(std::exp(c.a + std::log(c.b))) - c.b), 1e-9 * std::abs(c.b));
}

TEST(CapacityLowerBound, ProbabilityBelowOneIsOutOfDomain) {
  CapacityParams p;
  p.d = 16;
  for (double prob : {0.01, 0.5, 0.99, 1.0}) {
    p.p = prob;
    try {
      ahop::capacity_lower_bound(p);
      FAIL() << prob;
    } catch (const ahop::Error& e) {
      EXPECT_EQ(e.code(), ahop::ErrorCode::OutOfDomain);
    }
  }
}

TEST(CapacityExperiment, ZeroTrialsIsEmpty) {
  CapacityExperiment cfg;
  cfg.M_list = {1, 2};
  cfg.trials = 0;
  const auto r = ahop::run_capacity_experiment(cfg);
  EXPECT_TRUE(r.rows.empty());
  EXPECT_EQ(ahop::io::capacity_to_csv(r.rows), "d,m,beta,M,trials,success_rate,mean_error,seed\n");
}

TEST(CapacityExperiment, SingleMemoryAlwaysRetrieved) {
  CapacityExperiment cfg;
  cfg.d = 4;
  cfg.m = 1.0;
  cfg.beta = 0.25;
  cfg.M_list = {1};
  cfg.trials = 50;
  for (auto solver : {ahop::RetrievalMode::Dense, ahop::RetrievalMode::LowRank}) {
    cfg.solver = solver;
    const auto r = ahop::run_capacity_experiment(cfg);
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_EQ(r.rows[0].success_rate, 1.0);
    EXPECT_LE(r.rows[0].mean_error, 1e-9);
    EXPECT_EQ(r.rows[0].bound_violations, 0);
  }
}

TEST(CapacityExperiment, DenseOracleAtFourPatterns) {
  // d = 32, m = sqrt(d), beta = 1, M = 4, 10% offset, 200 trials.
  CapacityExperiment cfg;
  cfg.d = 32;
  cfg.M_list = {4};
  cfg.trials = 200;
  cfg.solver = ahop::RetrievalMode::Dense;
  cfg.seed = 3;
  const auto r = ahop::run_capacity_experiment(cfg);
  EXPECT_GE(r.rows[0].success_rate, 0.95);
  EXPECT_EQ(r.rows[0].bound_violations, 0);
}

TEST(CapacityExperiment, InfeasibleLowrankTrialsAreRecorded) {
  CapacityExperiment cfg;
  cfg.d = 32;
  cfg.M_list = {4};
  cfg.trials = 5;
  const auto r = ahop::run_capacity_experiment(cfg);
  EXPECT_EQ(r.rows[0].success_rate, 0.0);
  EXPECT_EQ(r.rows[0].infeasible, 5);
  EXPECT_EQ(r.rows[0].failures.at("DegreeExhausted"), 5);
  EXPECT_TRUE(std::isnan(r.rows[0].mean_error));
}

TEST(CapacityExperiment, DeterministicAcrossThreadCounts) {
  CapacityExperiment cfg;
  cfg.d = 8;
  cfg.M_list = {2, 8, 32};
  cfg.trials = 40;
  cfg.solver = ahop::RetrievalMode::Dense;
  cfg.seed = 17;
  const auto one = ahop::run_capacity_experiment(cfg);
  cfg.threads = 4;
  const auto four = ahop::run_capacity_experiment(cfg);
  EXPECT_EQ(ahop::io::capacity_to_csv(one.rows), ahop::io::capacity_to_csv(four.rows));
  // Patterns for one M do not depend on the rest of the list.
  cfg.M_list = {8};
  EXPECT_EQ(ahop::capacity_patterns(cfg, 8), ahop::capacity_patterns(CapacityExperiment{cfg}, 8));
  const auto alone = ahop::run_capacity_experiment(cfg);
  EXPECT_EQ(alone.rows[0].success_rate, one.rows[1].success_rate);
}

TEST(CapacityExperiment, OrthogonalLayoutIsOrthogonal) {
  CapacityExperiment cfg;
  cfg.d = 16;
  cfg.layout = ahop::PatternLayout::Orthogonal;
  const Matrix h = ahop::capacity_patterns(cfg, 8);
  const Matrix gram = h.transpose() * h;
  EXPECT_LE(ahop::max_abs(gram - 16.0 * Matrix::Identity(8, 8)), 1e-12);
  EXPECT_DOUBLE_EQ(ahop::max_abs(h), 1.0);
  cfg.d = 6;
  const Matrix basis = ahop::capacity_patterns(cfg, 3);
  EXPECT_LE(ahop::max_abs(basis.transpose() * basis - 6.0 * Matrix::Identity(3, 3)), 1e-12);
}

}  // namespace
