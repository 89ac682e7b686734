#pragma once

// Benchmark drivers: dense vs low-rank runtime scaling in tau = max{M, L},
// measured error against the 2 M B delta_a line, and the degree/rank blow-up
// as the norm bound B grows.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahop/error.hpp"
#include "ahop/hopfield.hpp"
#include "ahop/linalg.hpp"
#include "ahop/pattern.hpp"

namespace ahop {

enum class RecordKind { Scaling, Error, Phase };

inline std::string_view kind_name(RecordKind k) {
  switch (k) {
    case RecordKind::Scaling: return "scaling";
    case RecordKind::Error: return "error";
    case RecordKind::Phase: return "phase";
  }
  return "scaling";
}

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct ExperimentRecord {
  RecordKind kind = RecordKind::Scaling;
  int tau = 0;
  int d = 0;
  int g = 0;
  std::size_t rank = 0;
  double B = 0.0;
  double beta = 0.0;
  double delta_a = 0.0;
  double wall_time_dense = kNaN;    // seconds; NaN when skipped
  double wall_time_lowrank = kNaN;
  double measured_error = kNaN;     // ||Z~ - Z||_max; NaN when not measured
  double bound = kNaN;              // 2 M B delta_a
  std::uint64_t seed = 0;
  std::string status = "ok";        // ok, bound_violated, dense_capped, or an error name
};

namespace detail {

inline Matrix uniform_patterns(int d, int count, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(d, count);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  return m;
}

inline std::mt19937_64 instance_rng(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  return std::mt19937_64(seq);
}

template <typename Fn>
double time_once(Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Least-squares slope of log(y) against log(x). Empty with fewer than two points.
inline std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), ErrorCode::DimensionMismatch, "loglog_slope: length mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] > 0.0 && y[i] > 0.0 && std::isfinite(y[i])) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  if (lx.size() < 2) return std::nullopt;
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

struct ScalingConfig {
  std::vector<int> tau_list;
  int d = 4;
  double beta = 0.25;
  double B = 1.0;
  double delta_a = 1e-3;
  int repeats = 3;
  double dense_cap_seconds = 30.0;
  unsigned threads = 1;
  std::uint64_t seed = 0;
};

struct ScalingResult {
  std::vector<ExperimentRecord> records;
  std::optional<double> dense_slope;
  std::optional<double> lowrank_slope;
};

/// M = L = tau, entries uniform in [-B, B]. Each path gets one discarded
/// warm-up run, then the median of `repeats` timed runs. Dense runs whose
/// projected time (quadratic extrapolation from the previous tau) passes the
/// cap are skipped and flagged.
inline ScalingResult runtime_scaling(const ScalingConfig& cfg) {
  require(cfg.repeats >= 3, ErrorCode::InvalidArgument, "runtime_scaling: repeats must be >= 3");
  require(std::is_sorted(cfg.tau_list.begin(), cfg.tau_list.end()) &&
              std::adjacent_find(cfg.tau_list.begin(), cfg.tau_list.end()) == cfg.tau_list.end(),
          ErrorCode::InvalidArgument, "runtime_scaling: tau values must be strictly increasing");
  RetrievalConfig rc;
  rc.beta = cfg.beta;
  rc.delta_a = cfg.delta_a;
  rc.threads = cfg.threads;

  ScalingResult out;
  double prev_dense = kNaN;
  int prev_tau = 0;
  for (int tau : cfg.tau_list) {
    require(tau >= 1, ErrorCode::InvalidArgument, "runtime_scaling: tau must be >= 1");
    auto rng = detail::instance_rng(cfg.seed, static_cast<std::uint64_t>(tau));
    const PatternMatrix memory(detail::uniform_patterns(cfg.d, tau, cfg.B, rng), PatternRole::Memory);
    const PatternMatrix queries(detail::uniform_patterns(cfg.d, tau, cfg.B, rng), PatternRole::Query);

    ExperimentRecord rec;
    rec.kind = RecordKind::Scaling;
    rec.tau = tau;
    rec.d = cfg.d;
    rec.beta = cfg.beta;
    rec.delta_a = cfg.delta_a;
    rec.seed = cfg.seed;

    RetrievalResult low;
    try {
      low = retrieve_lowrank(memory, queries, rc);
      std::vector<double> times;
      for (int k = 0; k < cfg.repeats; ++k) times.push_back(detail::time_once([&] { retrieve_lowrank(memory, queries, rc); }));
      rec.wall_time_lowrank = detail::median(times);
      rec.g = low.degree_used;
      rec.rank = low.rank_used;
      rec.B = low.norm_bound;
      rec.bound = low.error_bound;
    } catch (const Error& e) {
      rec.status = std::string(e.name());
      out.records.push_back(rec);
      continue;
    }

    const double projected =
        std::isnan(prev_dense) ? 0.0 : prev_dense * (static_cast<double>(tau) / prev_tau) * (static_cast<double>(tau) / prev_tau);
    if (projected > cfg.dense_cap_seconds) {
      rec.status = "dense_capped";
    } else {
      RetrievalResult dense;
      const double warm = detail::time_once([&] { dense = retrieve_dense(memory, queries, rc); });
      rec.measured_error = max_norm_error(low.z, dense.z);
      if (warm > cfg.dense_cap_seconds) {
        rec.wall_time_dense = warm;
        rec.status = "dense_capped";
      } else {
        std::vector<double> times;
        for (int k = 0; k < cfg.repeats; ++k) times.push_back(detail::time_once([&] { retrieve_dense(memory, queries, rc); }));
        rec.wall_time_dense = detail::median(times);
      }
      prev_dense = rec.wall_time_dense;
      prev_tau = tau;
      if (rec.measured_error > rec.bound) rec.status = "bound_violated";
    }
    out.records.push_back(rec);
  }

  std::vector<double> taus_d, td, taus_l, tl;
  for (const auto& r : out.records) {
    if (r.status == "ok" || r.status == "bound_violated") {
      taus_d.push_back(r.tau);
      td.push_back(r.wall_time_dense);
    }
    if (!std::isnan(r.wall_time_lowrank)) {
      taus_l.push_back(r.tau);
      tl.push_back(r.wall_time_lowrank);
    }
  }
  out.dense_slope = loglog_slope(taus_d, td);
  out.lowrank_slope = loglog_slope(taus_l, tl);
  return out;
}

struct ErrorSweepConfig {
  std::vector<double> delta_a_list;
  int d = 4;
  int M = 256;
  int L = 256;
  double B = 1.0;
  double beta = 0.25;
  Normalization normalization = Normalization::QueryNormalized;
  unsigned threads = 1;
  std::uint64_t seed = 0;
};

/// One fixed instance, one low-rank solve per delta_a, each checked against
/// the same dense result.
inline std::vector<ExperimentRecord> error_sweep(const ErrorSweepConfig& cfg) {
  auto rng = detail::instance_rng(cfg.seed, 0x5eed);
  const PatternMatrix memory(detail::uniform_patterns(cfg.d, cfg.M, cfg.B, rng), PatternRole::Memory);
  const PatternMatrix queries(detail::uniform_patterns(cfg.d, cfg.L, cfg.B, rng), PatternRole::Query);
  RetrievalConfig rc;
  rc.beta = cfg.beta;
  rc.normalization = cfg.normalization;
  rc.threads = cfg.threads;
  RetrievalResult dense;
  const double dense_time = detail::time_once([&] { dense = retrieve_dense(memory, queries, rc); });

  std::vector<ExperimentRecord> out;
  for (double delta : cfg.delta_a_list) {
    ExperimentRecord rec;
    rec.kind = RecordKind::Error;
    rec.tau = std::max(cfg.M, cfg.L);
    rec.d = cfg.d;
    rec.beta = cfg.beta;
    rec.delta_a = delta;
    rec.seed = cfg.seed;
    rec.wall_time_dense = dense_time;
    rc.delta_a = delta;
    try {
      RetrievalResult low;
      rec.wall_time_lowrank = detail::time_once([&] { low = retrieve_lowrank(memory, queries, rc); });
      rec.g = low.degree_used;
      rec.rank = low.rank_used;
      rec.B = low.norm_bound;
      rec.bound = low.error_bound;
      rec.measured_error = max_norm_error(low.z, dense.z);
      if (rec.measured_error > rec.bound) rec.status = "bound_violated";
    } catch (const Error& e) {
      rec.status = std::string(e.name());
    }
    out.push_back(rec);
  }
  return out;
}

struct PhaseConfig {
  std::vector<double> B_list;
  int tau = 1024;
  int d = 4;
  double beta = 0.25;
  double delta_a = 1e-3;
  int degree_cap = kDefaultMaxDegree;
  std::size_t rank_cap = kDefaultRankCap;
  bool measure_error = true;
  unsigned threads = 1;
  std::uint64_t seed = 0;
};

/// Low-rank retrieval at growing B under a fixed degree cap. Failures are
/// recorded per row with the error name as status.
inline std::vector<ExperimentRecord> phase_sweep(const PhaseConfig& cfg) {
  require(std::is_sorted(cfg.B_list.begin(), cfg.B_list.end()), ErrorCode::InvalidArgument,
          "phase_sweep: B values must be increasing");
  RetrievalConfig rc;
  rc.beta = cfg.beta;
  rc.delta_a = cfg.delta_a;
  rc.max_degree = cfg.degree_cap;
  rc.rank_cap = cfg.rank_cap;
  rc.threads = cfg.threads;
  std::vector<ExperimentRecord> out;
  for (std::size_t k = 0; k < cfg.B_list.size(); ++k) {
    const double b = cfg.B_list[k];
    // Same unit-range draw for every B, rescaled, so only B changes along the sweep.
    auto rng = detail::instance_rng(cfg.seed, 0xb0b);
    const PatternMatrix memory(b * detail::uniform_patterns(cfg.d, cfg.tau, 1.0, rng), PatternRole::Memory);
    const PatternMatrix queries(b * detail::uniform_patterns(cfg.d, cfg.tau, 1.0, rng), PatternRole::Query);
    ExperimentRecord rec;
    rec.kind = RecordKind::Phase;
    rec.tau = cfg.tau;
    rec.d = cfg.d;
    rec.B = b;
    rec.beta = cfg.beta;
    rec.delta_a = cfg.delta_a;
    rec.seed = cfg.seed;
    rec.bound = 2.0 * cfg.tau * b * cfg.delta_a;
    try {
      RetrievalResult low;
      rec.wall_time_lowrank = detail::time_once([&] { low = retrieve_lowrank(memory, queries, rc); });
      rec.g = low.degree_used;
      rec.rank = low.rank_used;
      rec.bound = low.error_bound;
      if (cfg.measure_error) {
        RetrievalResult dense;
        rec.wall_time_dense = detail::time_once([&] { dense = retrieve_dense(memory, queries, rc); });
        rec.measured_error = max_norm_error(low.z, dense.z);
        if (rec.measured_error > rec.bound) rec.status = "bound_violated";
      }
    } catch (const Error& e) {
      rec.status = std::string(e.name());
    }
    out.push_back(rec);
  }
  return out;
}

struct MachineInfo {
  std::string cpu_model;
  unsigned cores = 0;
};

inline MachineInfo machine_info() {
  MachineInfo info;
  info.cores = std::thread::hardware_concurrency();
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) info.cpu_model = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  if (info.cpu_model.empty()) info.cpu_model = "unknown";
  return info;
}

namespace io {

inline std::string records_to_csv(const std::vector<ExperimentRecord>& records, bool include_timing = true) {
  std::string out = "kind,tau,d,g,rank,B,beta,delta_a,";
  if (include_timing) out += "wall_time_dense,wall_time_lowrank,";
  out += "measured_error,bound,seed,status\n";
  for (const auto& r : records) {
    out += std::string(kind_name(r.kind)) + ',' + std::to_string(r.tau) + ',' + std::to_string(r.d) + ',' +
           std::to_string(r.g) + ',' + std::to_string(r.rank) + ',' + format_double(r.B) + ',' +
           format_double(r.beta) + ',' + format_double(r.delta_a) + ',';
    if (include_timing) out += format_double(r.wall_time_dense) + ',' + format_double(r.wall_time_lowrank) + ',';
    out += format_double(r.measured_error) + ',' + format_double(r.bound) + ',' + std::to_string(r.seed) + ',' +
           r.status + '\n';
  }
  return out;
}

}  // namespace io

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const MachineInfo& m) { return {{"cpu_model", m.cpu_model}, {"cores", m.cores}}; }

}  // namespace ahop
