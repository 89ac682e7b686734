#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ahop/bench.hpp"

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// Slope via the normal-equation sums, independent of loglog_slope.
double slope_from_sums(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = std::log(x[i]), b = std::log(y[i]);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

TEST(LoglogSlope, ExactPowerLaws) {
  const std::vector<double> x{1, 2, 4, 8};
  EXPECT_NEAR(*ahop::loglog_slope(x, {3, 12, 48, 192}), 2.0, 1e-12);
  EXPECT_NEAR(*ahop::loglog_slope(x, {5, 5, 5, 5}), 0.0, 1e-12);
  EXPECT_FALSE(ahop::loglog_slope({4}, {1}).has_value());
}

TEST(RuntimeScaling, RecordsAndReproducibleSlopes) {
  ahop::ScalingConfig cfg;
  cfg.tau_list = {64, 128, 256, 512};
  cfg.seed = 5;
  const auto res = ahop::runtime_scaling(cfg);
  ASSERT_EQ(res.records.size(), 4u);
  for (const auto& r : res.records) {
    EXPECT_EQ(r.status, "ok");
    EXPECT_LE(r.measured_error, r.bound);
    EXPECT_GT(r.wall_time_dense, 0.0);
    EXPECT_GT(r.wall_time_lowrank, 0.0);
    EXPECT_EQ(r.rank, static_cast<std::size_t>(ahop::binomial(4 + r.g, r.g)));
  }
  ASSERT_TRUE(res.dense_slope && res.lowrank_slope);

  const auto rows = parse_csv(ahop::io::records_to_csv(res.records));
  ASSERT_EQ(rows[0][8], "wall_time_dense");
  std::vector<double> tau, dense, low;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    tau.push_back(std::stod(rows[i][1]));
    dense.push_back(std::stod(rows[i][8]));
    low.push_back(std::stod(rows[i][9]));
  }
  EXPECT_NEAR(slope_from_sums(tau, dense), *res.dense_slope, 1e-9);
  EXPECT_NEAR(slope_from_sums(tau, low), *res.lowrank_slope, 1e-9);
}

TEST(RuntimeScaling, SingleTauHasNoSlope) {
  ahop::ScalingConfig cfg;
  cfg.tau_list = {128};
  const auto res = ahop::runtime_scaling(cfg);
  EXPECT_EQ(res.records.size(), 1u);
  EXPECT_FALSE(res.dense_slope.has_value());
  EXPECT_FALSE(res.lowrank_slope.has_value());
}

TEST(RuntimeScaling, ErrorIdenticalAcrossRuns) {
  ahop::ScalingConfig cfg;
  cfg.tau_list = {100, 300};
  cfg.seed = 9;
  const auto a = ahop::runtime_scaling(cfg);
  const auto b = ahop::runtime_scaling(cfg);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(a.records[i].measured_error, b.records[i].measured_error);
  EXPECT_EQ(ahop::io::records_to_csv(a.records, false), ahop::io::records_to_csv(b.records, false));
}

TEST(RuntimeScaling, RejectsBadConfig) {
  ahop::ScalingConfig cfg;
  cfg.tau_list = {64, 32};
  EXPECT_THROW(ahop::runtime_scaling(cfg), ahop::Error);
  cfg.tau_list = {32, 64};
  cfg.repeats = 2;
  EXPECT_THROW(ahop::runtime_scaling(cfg), ahop::Error);
}

TEST(RuntimeScaling, DenseCapSkipsLargeInstances) {
  ahop::ScalingConfig cfg;
  cfg.tau_list = {256, 1024};
  cfg.dense_cap_seconds = 1e-9;
  const auto res = ahop::runtime_scaling(cfg);
  EXPECT_EQ(res.records[0].status, "dense_capped");
  EXPECT_EQ(res.records[1].status, "dense_capped");
  EXPECT_TRUE(std::isnan(res.records[1].wall_time_dense));
  EXPECT_FALSE(res.dense_slope.has_value());
  EXPECT_TRUE(res.lowrank_slope.has_value());
}

TEST(ErrorSweep, BoundLinearAndErrorsBelowIt) {
  ahop::ErrorSweepConfig cfg;
  cfg.delta_a_list = {1e-2, 5e-3, 1e-3, 1e-4};
  cfg.M = 128;
  cfg.L = 96;
  cfg.seed = 2;
  const auto recs = ahop::error_sweep(cfg);
  ASSERT_EQ(recs.size(), 4u);
  EXPECT_DOUBLE_EQ(recs[1].bound, recs[0].bound / 2.0);
  for (const auto& r : recs) {
    EXPECT_EQ(r.status, "ok");
    EXPECT_LE(r.measured_error, r.bound);
    EXPECT_DOUBLE_EQ(r.bound, 2.0 * 128 * r.B * r.delta_a);
  }
  EXPECT_LE(recs[3].measured_error, recs[0].measured_error);
}

TEST(PhaseSweep, DegreeGrowsThenExhausts) {
  ahop::PhaseConfig cfg;
  cfg.B_list = {0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
  cfg.tau = 256;
  const auto recs = ahop::phase_sweep(cfg);
  ASSERT_EQ(recs.size(), 6u);
  EXPECT_EQ(recs[0].status, "ok");
  EXPECT_LE(static_cast<double>(recs[0].rank), std::sqrt(256.0));
  int prev = 0;
  for (const auto& r : recs) {
    if (r.status != "ok") continue;
    EXPECT_GE(r.g, prev);
    prev = r.g;
    EXPECT_LE(r.measured_error, r.bound);
  }
  EXPECT_TRUE(recs.back().status == "DegreeExhausted" || recs.back().status == "SizeOverflow");
  EXPECT_TRUE(ahop::phase_sweep(ahop::PhaseConfig{}).empty());
}

TEST(MachineInfo, HasCoresAndModel) {
  const auto m = ahop::machine_info();
  EXPECT_GE(m.cores, 1u);
  EXPECT_FALSE(m.cpu_model.empty());
}

}  // namespace
