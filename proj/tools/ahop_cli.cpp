// ahop: command-line driver for retrieval, benchmarks, capacity runs, the
// Gap-ANNS reduction, and the property suite.
//
// Exit codes: 0 success, 1 runtime error (or failed properties for `verify`),
// 2 bad arguments.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahop/bench.hpp"
#include "ahop/capacity.hpp"
#include "ahop/error.hpp"
#include "ahop/feature_map.hpp"
#include "ahop/hopfield.hpp"
#include "ahop/pattern.hpp"
#include "ahop/poly_approx.hpp"
#include "ahop/reduction.hpp"
#include "ahop/verify.hpp"

#ifndef AHOP_REVISION
#define AHOP_REVISION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
  unsigned threads = 0;
  std::uint64_t seed = 0;
  std::string format = "csv";
  std::string out;
};

void usage_error(const std::string& msg) { throw CLI::ValidationError(msg); }

void add_common(CLI::App* sub, Common& c, bool with_format = true) {
  sub->add_option("--threads", c.threads, "Worker threads, 0 = hardware concurrency");
  sub->add_option("--seed", c.seed, "RNG seed");
  if (with_format)
    sub->add_option("--format", c.format, "Primary output format")->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--out", c.out, "Output file; stdout when omitted");
}

/// Primary output goes to --out when given, stdout otherwise.
void emit(const std::string& path, const std::string& contents) {
  if (path.empty())
    std::cout << contents;
  else
    ahop::io::write_atomic(path, contents);
}

/// Sidecar next to the primary output (`z.csv` -> `z.json`). Returns an empty
/// path when the primary already is JSON or goes to stdout.
fs::path sidecar_path(const std::string& out) {
  if (out.empty()) return {};
  fs::path p(out);
  if (p.extension() == ".json") return fs::path(out + ".summary.json");
  return p.replace_extension(".json");
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json records_to_json(const std::vector<ahop::ExperimentRecord>& records) {
  json arr = json::array();
  for (const auto& r : records)
    arr.push_back({{"kind", ahop::kind_name(r.kind)},
                   {"tau", r.tau},
                   {"d", r.d},
                   {"g", r.g},
                   {"rank", r.rank},
                   {"B", r.B},
                   {"beta", r.beta},
                   {"delta_a", r.delta_a},
                   {"wall_time_dense", number_or_null(r.wall_time_dense)},
                   {"wall_time_lowrank", number_or_null(r.wall_time_lowrank)},
                   {"measured_error", number_or_null(r.measured_error)},
                   {"bound", number_or_null(r.bound)},
                   {"seed", r.seed},
                   {"status", r.status}});
  return arr;
}

std::string records_output(const Common& c, const std::vector<ahop::ExperimentRecord>& records) {
  return c.format == "json" ? dump(records_to_json(records)) : ahop::io::records_to_csv(records);
}

void write_summary(const Common& c, const json& summary) {
  const auto side = sidecar_path(c.out);
  if (side.empty())
    std::cerr << summary.dump(2) << "\n";
  else
    ahop::io::write_atomic(side, dump(summary));
}

double default_beta(const std::optional<double>& beta, int d) { return beta ? *beta : 1.0 / d; }

void check_beta(const std::optional<double>& beta) {
  if (beta && !(*beta > 0.0 && std::isfinite(*beta))) usage_error("--beta must be positive");
}

void check_delta(double delta_a, const char* flag = "--delta-a") {
  if (!(delta_a > 0.0 && delta_a < 0.1)) usage_error(std::string(flag) + " must lie in (0, 0.1)");
}

// ---------------------------------------------------------------------------
// approx-exp

struct ApproxArgs {
  Common c{.format = "json"};
  std::optional<double> interval_bound;
  std::optional<double> B;
  std::optional<double> beta;
  int d = 0;
  double delta_a = 1e-3;
  int max_degree = ahop::kDefaultMaxDegree;
};

void run_approx(const ApproxArgs& a) {
  check_delta(a.delta_a);
  double bound = 0.0;
  if (a.interval_bound) {
    bound = *a.interval_bound;
  } else {
    if (!a.B || a.d < 1) usage_error("give --interval-bound, or --B with --d (and optionally --beta)");
    check_beta(a.beta);
    const double beta = default_beta(a.beta, a.d);
    bound = (*a.B) * (*a.B) * beta * a.d;
  }
  if (!(bound > 0.0 && std::isfinite(bound))) usage_error("interval bound must be positive");
  const auto p = ahop::fit_exp_poly(bound, a.delta_a, a.max_degree);
  if (a.c.format == "json") {
    emit(a.c.out, dump(ahop::to_json(p)));
  } else {
    std::string csv = "i,coeff\n";
    for (std::size_t i = 0; i < p.coeffs.size(); ++i)
      csv += std::to_string(i) + ',' + ahop::io::format_double(p.coeffs[i]) + '\n';
    emit(a.c.out, csv);
  }
}

// ---------------------------------------------------------------------------
// retrieve

struct RetrieveArgs {
  Common c;
  std::string memory;
  std::string queries;
  std::optional<double> beta;
  double delta_a = 1e-3;
  std::string mode = "dense";
  std::string normalization = "query";
  int max_degree = ahop::kDefaultMaxDegree;
  std::size_t rank_cap = ahop::kDefaultRankCap;
  std::string dump_factors;
};

void dump_factor_csv(const ahop::PatternMatrix& memory, const ahop::PatternMatrix& queries,
                     const ahop::RetrievalConfig& cfg, const ahop::RetrievalResult& res, const fs::path& dir) {
  const auto poly = ahop::fit_exp_poly(res.interval_bound, cfg.delta_a, cfg.max_degree);
  const auto map = ahop::build_feature_map(poly, memory.dim(), cfg.rank_cap);
  const double s = std::sqrt(cfg.beta);
  const ahop::Matrix xi_rows = s * memory.data().transpose();
  const ahop::Matrix x_rows = s * queries.data().transpose();
  const auto f = ahop::build_factor_matrices(map, xi_rows, x_rows, cfg.threads);
  auto to_csv = [](const ahop::RowMatrix& m) {
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index k = 0; k < m.cols(); ++k) {
        if (k) out += ',';
        out += ahop::io::format_double(m(i, k));
      }
      out += '\n';
    }
    return out;
  };
  fs::create_directories(dir);
  ahop::io::write_atomic(dir / "U1.csv", to_csv(f.u1));
  ahop::io::write_atomic(dir / "U2.csv", to_csv(f.u2));
}

void run_retrieve(const RetrieveArgs& a) {
  check_beta(a.beta);
  check_delta(a.delta_a);
  if (a.max_degree < 1) usage_error("--max-degree must be >= 1");
  if (!a.dump_factors.empty() && a.mode != "lowrank") usage_error("--dump-factors needs --mode lowrank");
  const auto memory = ahop::io::load_patterns(a.memory, ahop::PatternRole::Memory);
  const auto queries = ahop::io::load_patterns(a.queries, ahop::PatternRole::Query);

  ahop::RetrievalConfig cfg;
  cfg.beta = default_beta(a.beta, memory.dim());
  cfg.delta_a = a.delta_a;
  cfg.mode = a.mode == "dense" ? ahop::RetrievalMode::Dense : ahop::RetrievalMode::LowRank;
  cfg.normalization =
      a.normalization == "query" ? ahop::Normalization::QueryNormalized : ahop::Normalization::MemoryNormalized;
  cfg.max_degree = a.max_degree;
  cfg.rank_cap = a.rank_cap;
  cfg.threads = ahop::resolve_threads(a.c.threads);
  const auto res = ahop::retrieve(memory, queries, cfg);

  json meta{{"d", memory.dim()},
            {"M", memory.count()},
            {"L", queries.count()},
            {"mode", a.mode},
            {"normalization", a.normalization},
            {"beta", cfg.beta},
            {"delta_a", cfg.delta_a},
            {"B", res.norm_bound},
            {"interval_bound", res.interval_bound},
            {"g", res.degree_used},
            {"rank", res.rank_used},
            {"delta_h", res.error_bound},
            {"wall_time", res.wall_time}};

  if (a.c.format == "json") {
    json z = json::array();
    for (Eigen::Index j = 0; j < res.z.cols(); ++j) {
      std::vector<double> col(res.z.col(j).data(), res.z.col(j).data() + res.z.rows());
      z.push_back(col);
    }
    json full = meta;
    full["z"] = z;  // one array per output column
    emit(a.c.out, dump(full));
  } else {
    emit(a.c.out, ahop::io::patterns_to_csv(res.z));
    write_summary(a.c, meta);
  }
  if (!a.dump_factors.empty()) {
    dump_factor_csv(memory, queries, cfg, res, a.dump_factors);
  }
}

// ---------------------------------------------------------------------------
// bench-scaling / bench-error / bench-phase

struct ScalingArgs {
  Common c;
  std::vector<int> tau_list{1024, 2048, 4096, 8192, 16384};
  int d = 4;
  std::optional<double> beta;
  double B = 1.0;
  double delta_a = 1e-3;
  int repeats = 3;
  double dense_cap = 30.0;
};

void run_scaling(const ScalingArgs& a) {
  check_beta(a.beta);
  check_delta(a.delta_a);
  if (a.repeats < 3) usage_error("--repeats must be >= 3");
  if (!std::is_sorted(a.tau_list.begin(), a.tau_list.end()) ||
      std::adjacent_find(a.tau_list.begin(), a.tau_list.end()) != a.tau_list.end())
    usage_error("--tau-list must be strictly increasing");
  ahop::ScalingConfig cfg;
  cfg.tau_list = a.tau_list;
  cfg.d = a.d;
  cfg.beta = default_beta(a.beta, a.d);
  cfg.B = a.B;
  cfg.delta_a = a.delta_a;
  cfg.repeats = a.repeats;
  cfg.dense_cap_seconds = a.dense_cap;
  cfg.threads = ahop::resolve_threads(a.c.threads);
  cfg.seed = a.c.seed;
  const auto res = ahop::runtime_scaling(cfg);
  emit(a.c.out, records_output(a.c, res.records));
  write_summary(a.c, {{"sweep", "scaling"},
                      {"dense_slope", ahop::optional_json(res.dense_slope)},
                      {"lowrank_slope", ahop::optional_json(res.lowrank_slope)},
                      {"machine", ahop::to_json(ahop::machine_info())},
                      {"threads", cfg.threads}});
}

struct ErrorArgs {
  Common c;
  std::vector<double> delta_a_list{1e-2, 1e-3, 1e-4};
  int d = 4;
  int M = 256;
  int L = 256;
  double B = 1.0;
  std::optional<double> beta;
  std::string normalization = "query";
};

void run_error(const ErrorArgs& a) {
  check_beta(a.beta);
  for (double v : a.delta_a_list) check_delta(v, "--delta-a-list entries");
  ahop::ErrorSweepConfig cfg;
  cfg.delta_a_list = a.delta_a_list;
  cfg.d = a.d;
  cfg.M = a.M;
  cfg.L = a.L;
  cfg.B = a.B;
  cfg.beta = default_beta(a.beta, a.d);
  cfg.normalization =
      a.normalization == "query" ? ahop::Normalization::QueryNormalized : ahop::Normalization::MemoryNormalized;
  cfg.threads = ahop::resolve_threads(a.c.threads);
  cfg.seed = a.c.seed;
  const auto records = ahop::error_sweep(cfg);
  emit(a.c.out, records_output(a.c, records));
  const auto violations = std::count_if(records.begin(), records.end(),
                                        [](const ahop::ExperimentRecord& r) { return r.status != "ok"; });
  write_summary(a.c, {{"sweep", "error"},
                      {"records", records.size()},
                      {"flagged", violations},
                      {"machine", ahop::to_json(ahop::machine_info())},
                      {"threads", cfg.threads}});
}

struct PhaseArgs {
  Common c;
  std::vector<double> B_list{0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0};
  int tau = 1024;
  int d = 4;
  std::optional<double> beta;
  double delta_a = 1e-3;
  int degree_cap = ahop::kDefaultMaxDegree;
  std::size_t rank_cap = ahop::kDefaultRankCap;
  bool skip_error = false;
};

void run_phase(const PhaseArgs& a) {
  check_beta(a.beta);
  check_delta(a.delta_a);
  if (!std::is_sorted(a.B_list.begin(), a.B_list.end())) usage_error("--B-list must be increasing");
  ahop::PhaseConfig cfg;
  cfg.B_list = a.B_list;
  cfg.tau = a.tau;
  cfg.d = a.d;
  cfg.beta = default_beta(a.beta, a.d);
  cfg.delta_a = a.delta_a;
  cfg.degree_cap = a.degree_cap;
  cfg.rank_cap = a.rank_cap;
  cfg.measure_error = !a.skip_error;
  cfg.threads = ahop::resolve_threads(a.c.threads);
  cfg.seed = a.c.seed;
  const auto records = ahop::phase_sweep(cfg);
  emit(a.c.out, records_output(a.c, records));
  json failures = json::object();
  for (const auto& r : records)
    if (r.status != "ok") failures[ahop::io::format_double(r.B)] = r.status;
  write_summary(a.c, {{"sweep", "phase"},
                      {"tau", cfg.tau},
                      {"sqrt_log_tau", std::sqrt(std::log(static_cast<double>(cfg.tau)))},
                      {"failures", failures},
                      {"machine", ahop::to_json(ahop::machine_info())},
                      {"threads", cfg.threads}});
}

// ---------------------------------------------------------------------------
// capacity

struct CapacityArgs {
  Common c;
  int d = 8;
  std::optional<double> m;
  std::optional<double> beta;
  std::vector<int> M_list{1, 2, 4, 8, 16, 32, 64, 128};
  int trials = 100;
  double perturbation = 0.1;
  std::optional<double> eps;
  double delta_a = 1e-3;
  std::string solver = "lowrank";
  std::string layout = "sphere";
  int max_degree = ahop::kDefaultMaxDegree;
};

void run_capacity(const CapacityArgs& a) {
  check_beta(a.beta);
  check_delta(a.delta_a);
  if (!(a.perturbation > 0.0 && a.perturbation < 1.0)) usage_error("--perturbation must lie in (0, 1)");
  if (a.m && !(*a.m > 0.0)) usage_error("--m must be positive");
  if (a.eps && !(*a.eps > 0.0)) usage_error("--eps must be positive");
  for (int M : a.M_list)
    if (M < 1) usage_error("--M-list entries must be >= 1");
  ahop::CapacityExperiment cfg;
  cfg.d = a.d;
  cfg.m = a.m.value_or(0.0);
  cfg.beta = default_beta(a.beta, a.d);
  cfg.M_list = a.M_list;
  cfg.trials = a.trials;
  cfg.perturbation = a.perturbation;
  cfg.eps = a.eps;
  cfg.delta_a = a.delta_a;
  cfg.solver = a.solver == "dense" ? ahop::RetrievalMode::Dense : ahop::RetrievalMode::LowRank;
  cfg.layout = a.layout == "sphere" ? ahop::PatternLayout::Sphere : ahop::PatternLayout::Orthogonal;
  cfg.max_degree = a.max_degree;
  cfg.threads = ahop::resolve_threads(a.c.threads);
  cfg.seed = a.c.seed;
  const auto res = ahop::run_capacity_experiment(cfg);

  json rows = json::array();
  for (const auto& r : res.rows) rows.push_back(ahop::to_json(r));
  if (a.c.format == "json") {
    emit(a.c.out, dump(rows));
  } else {
    emit(a.c.out, ahop::io::capacity_to_csv(res.rows));
  }
  const auto reliable = ahop::largest_reliable_m(res.rows, 0.9);
  write_summary(a.c, {{"solver", a.solver},
                      {"layout", a.layout},
                      {"largest_M_at_0.9", reliable ? json(*reliable) : json(nullptr)},
                      {"rows", rows}});
}

// ---------------------------------------------------------------------------
// reduction

struct ReductionArgs {
  Common c{.format = "json"};
  int n = 16;
  int d = 0;
  double C = 6.0;
  double t = 0.0;
  double delta = 0.09;
  int planted_distance = 2;
  int trials = 1;
  std::string plant = "alternate";
  std::string convention = "as-written";
  std::string solver = "dense";
  std::string instance_dir;
  std::string dump_instance;
};

ahop::ReductionAConvention parse_convention(const std::string& s) {
  return s == "literal" ? ahop::ReductionAConvention::Literal : ahop::ReductionAConvention::AsWritten;
}

void run_reduction(const ReductionArgs& a) {
  if (a.n < 2) usage_error("--n must be >= 2");
  if (a.d < 0 || a.d % 2 != 0) usage_error("--d must be even (0 = derived from --C)");
  if (!(a.delta > 0.0 && a.delta < 1.0)) usage_error("--delta must lie in (0, 1)");
  const auto convention = parse_convention(a.convention);
  const auto solver = a.solver == "dense" ? ahop::ReductionSolver::Dense : ahop::ReductionSolver::LowRank;

  if (!a.instance_dir.empty()) {
    // Replay a stored instance: one decision, compared with the oracle.
    const auto inst = ahop::io::load_anns_instance(a.instance_dir);
    const auto ahop_inst = ahop::build_ahop_instance(inst, ahop::default_reduction_params(inst));
    ahop::RetrievalConfig rc;
    rc.threads = ahop::resolve_threads(a.c.threads);
    const auto decision = ahop::solve_gap_anns_via_ahop(ahop_inst, solver, convention, rc);
    const auto oracle = ahop::oracle_verdicts(inst);
    json queries = json::array();
    int promised = 0, agree = 0;
    for (std::size_t j = 0; j < oracle.size(); ++j) {
      const bool prom = oracle[j] != ahop::CaseVerdict::Indeterminate;
      promised += prom;
      agree += prom && oracle[j] == decision.verdicts[j];
      queries.push_back({{"j", j},
                         {"verdict", ahop::verdict_name(decision.verdicts[j])},
                         {"oracle", ahop::verdict_name(oracle[j])},
                         {"statistic", decision.statistic[j]},
                         {"log_statistic", decision.log_statistic[j]}});
    }
    emit(a.c.out, dump({{"instance_dir", a.instance_dir},
                        {"convention", ahop::convention_name(convention)},
                        {"solver", a.solver},
                        {"params", ahop::to_json(ahop_inst.params)},
                        {"log_threshold", decision.log_threshold},
                        {"promised_queries", promised},
                        {"agreements", agree},
                        {"queries", queries}}));
    return;
  }

  ahop::ReductionExperiment cfg;
  cfg.n = a.n;
  cfg.d = a.d;
  cfg.C = a.C;
  cfg.t = a.t;
  cfg.delta = a.delta;
  cfg.planted_distance = a.planted_distance;
  cfg.trials = a.trials;
  cfg.plant = a.plant == "case1"   ? ahop::PlantMode::Case1
              : a.plant == "case2" ? ahop::PlantMode::Case2
                                   : ahop::PlantMode::Alternate;
  cfg.convention = convention;
  cfg.solver = solver;
  cfg.seed = a.c.seed;
  const auto report = ahop::verify_reduction(cfg);
  emit(a.c.out, dump(ahop::to_json(report)));
  if (!a.dump_instance.empty()) {
    for (const auto& t : report.trials) {
      const fs::path dir = report.trials.size() == 1 ? fs::path(a.dump_instance)
                                                     : fs::path(a.dump_instance) / ("trial" + std::to_string(t.trial));
      ahop::io::save_anns_instance(t.instance, dir);
    }
  }
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
  Common c;
  std::string out_dir;
  bool quiet = false;
};

int run_verify_cmd(const VerifyArgs& a) {
  ahop::VerifyConfig cfg;
  cfg.seed = a.c.seed;
  cfg.threads = ahop::resolve_threads(a.c.threads);
  std::vector<ahop::CapacityRow> rows;
  const auto rep = ahop::run_verify(cfg, &rows);

  const std::string csv = ahop::io::verify_to_csv(rep);
  json j = ahop::to_json(rep);
  if (!a.out_dir.empty()) {
    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    ahop::io::write_atomic(dir / "verify.csv", csv);
    ahop::io::write_atomic(dir / "verify.json", dump(j));
    ahop::io::write_atomic(dir / "capacity.csv", ahop::io::capacity_to_csv(rows));
  }
  if (!a.c.out.empty()) ahop::io::write_atomic(a.c.out, a.c.format == "json" ? dump(j) : csv);

  if (!a.quiet) {
    int failed = 0;
    for (const auto& p : rep.properties) {
      std::cout << (p.passed() ? "PASS " : "FAIL ") << p.module << '/' << p.name << "  cases=" << p.cases
                << " violations=" << p.violations << '\n';
      failed += !p.passed();
    }
    std::cout << (rep.properties.size() - failed) << '/' << rep.properties.size() << " properties passed\n";
  }
  return rep.all_passed() ? 0 : 1;
}

// ---------------------------------------------------------------------------
// --config handling

const std::vector<std::string> kSubcommands{"approx-exp",  "retrieve", "bench-scaling", "bench-error",
                                            "bench-phase", "capacity", "reduction",     "verify"};

bool flag_given(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

/// Expands a JSON config file into extra `--flag=value` arguments for every
/// key not already given on the command line. Keys may use '_' for '-'. An
/// object under the subcommand's name takes precedence over top-level keys.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config needs a file path");
      config_path = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      args.erase(args.begin() + i);
      break;
    }
  }
  if (config_path.empty()) return args;

  json cfg;
  try {
    cfg = json::parse(ahop::io::read_file(config_path));
  } catch (const json::exception& e) {
    throw CLI::ValidationError("--config", std::string("cannot parse ") + config_path + ": " + e.what());
  }
  if (!cfg.is_object()) throw CLI::ValidationError("--config", "config file must hold a JSON object");

  const auto sub = std::find_if(args.begin(), args.end(), [](const std::string& a) {
    return std::find(kSubcommands.begin(), kSubcommands.end(), a) != kSubcommands.end();
  });
  if (sub == args.end()) return args;

  std::map<std::string, json> entries;
  for (const auto& [key, value] : cfg.items()) {
    if (std::find(kSubcommands.begin(), kSubcommands.end(), key) != kSubcommands.end()) continue;
    entries[key] = value;
  }
  if (cfg.contains(*sub) && cfg[*sub].is_object())
    for (const auto& [key, value] : cfg[*sub].items()) entries[key] = value;

  for (const auto& [raw_key, value] : entries) {
    std::string key = raw_key;
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string flag = "--" + key;
    if (flag_given(args, flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) joined += (joined.empty() ? "" : ",") + scalar_text(v);
      args.push_back(flag + "=" + joined);
    } else if (!value.is_null()) {
      args.push_back(flag + "=" + scalar_text(value));
    }
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modern Hopfield retrieval: dense and almost-linear low-rank solvers, benchmarks and checks", "ahop"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", std::string("ahop ") + kVersion + " (revision " + AHOP_REVISION + ")");
  std::string config_unused;
  app.add_option("--config", config_unused,
                 "JSON file supplying any flag (keys are flag names; an object under a subcommand name applies to "
                 "that subcommand). Explicit flags win.");

  const auto delta_help = "Relative error target for the exp polynomial, in (0, 0.1)";
  const auto beta_help = "Inverse temperature (default 1/d)";

  ApproxArgs approx;
  auto* s_approx = app.add_subcommand("approx-exp", "Fit the exp polynomial on [-B', B'] and print it as JSON");
  add_common(s_approx, approx.c);
  s_approx->add_option("--interval-bound", approx.interval_bound, "Half-width B' of the fit interval");
  s_approx->add_option("--B", approx.B, "Max-norm bound; with --d and --beta gives B' = B^2 beta d");
  s_approx->add_option("--d", approx.d, "Pattern dimension")->check(CLI::NonNegativeNumber);
  s_approx->add_option("--beta", approx.beta, beta_help);
  s_approx->add_option("--delta-a", approx.delta_a, delta_help);
  s_approx->add_option("--max-degree", approx.max_degree, "Largest degree tried");

  RetrieveArgs ret;
  auto* s_ret = app.add_subcommand("retrieve", "One retrieval step Z = T(X) for a memory and query batch");
  add_common(s_ret, ret.c);
  s_ret->add_option("--memory", ret.memory, "Memory patterns (CSV or AHOP binary)")->required()->check(CLI::ExistingFile);
  s_ret->add_option("--queries", ret.queries, "Query patterns (CSV or AHOP binary)")->required()->check(CLI::ExistingFile);
  s_ret->add_option("--beta", ret.beta, beta_help);
  s_ret->add_option("--delta-a", ret.delta_a, delta_help);
  s_ret->add_option("--mode", ret.mode, "Solver")->check(CLI::IsMember({"dense", "lowrank"}));
  s_ret->add_option("--normalization", ret.normalization, "query: softmax over memories; memory: row-normalized")
      ->check(CLI::IsMember({"query", "memory"}));
  s_ret->add_option("--max-degree", ret.max_degree, "Largest polynomial degree");
  s_ret->add_option("--rank-cap", ret.rank_cap, "Largest feature rank");
  s_ret->add_option("--dump-factors", ret.dump_factors, "Directory for U1.csv / U2.csv (low-rank only)");

  ScalingArgs scal;
  auto* s_scal = app.add_subcommand("bench-scaling", "Dense vs low-rank wall time over tau = M = L");
  add_common(s_scal, scal.c);
  s_scal->add_option("--tau-list", scal.tau_list, "Comma-separated tau values")->delimiter(',');
  s_scal->add_option("--d", scal.d, "Pattern dimension")->check(CLI::PositiveNumber);
  s_scal->add_option("--beta", scal.beta, beta_help);
  s_scal->add_option("--B", scal.B, "Entries drawn uniformly from [-B, B]")->check(CLI::PositiveNumber);
  s_scal->add_option("--delta-a", scal.delta_a, delta_help);
  s_scal->add_option("--repeats", scal.repeats, "Timed runs per point (median reported)");
  s_scal->add_option("--dense-cap", scal.dense_cap, "Skip dense runs projected to exceed this many seconds")
      ->check(CLI::PositiveNumber);

  ErrorArgs err;
  auto* s_err = app.add_subcommand("bench-error", "Measured low-rank error against 2 M B delta_a");
  add_common(s_err, err.c);
  s_err->add_option("--delta-a-list", err.delta_a_list, "Comma-separated delta_a values")->delimiter(',');
  s_err->add_option("--d", err.d, "Pattern dimension")->check(CLI::PositiveNumber);
  s_err->add_option("--M", err.M, "Memory count")->check(CLI::PositiveNumber);
  s_err->add_option("--L", err.L, "Query count")->check(CLI::PositiveNumber);
  s_err->add_option("--B", err.B, "Entries drawn uniformly from [-B, B]")->check(CLI::PositiveNumber);
  s_err->add_option("--beta", err.beta, beta_help);
  s_err->add_option("--normalization", err.normalization, "query or memory")
      ->check(CLI::IsMember({"query", "memory"}));

  PhaseArgs phase;
  auto* s_phase = app.add_subcommand("bench-phase", "Low-rank degree and rank as the norm bound B grows");
  add_common(s_phase, phase.c);
  s_phase->add_option("--B-list", phase.B_list, "Comma-separated increasing B values")->delimiter(',');
  s_phase->add_option("--tau", phase.tau, "M = L = tau")->check(CLI::PositiveNumber);
  s_phase->add_option("--d", phase.d, "Pattern dimension")->check(CLI::PositiveNumber);
  s_phase->add_option("--beta", phase.beta, beta_help);
  s_phase->add_option("--delta-a", phase.delta_a, delta_help);
  s_phase->add_option("--degree-cap", phase.degree_cap, "Largest polynomial degree")->check(CLI::PositiveNumber);
  s_phase->add_option("--rank-cap", phase.rank_cap, "Largest feature rank")->check(CLI::PositiveNumber);
  s_phase->add_flag("--skip-error", phase.skip_error, "Do not run the dense oracle per B");

  CapacityArgs cap;
  auto* s_cap = app.add_subcommand("capacity", "Empirical one-step storage and retrieval success rates");
  add_common(s_cap, cap.c);
  s_cap->add_option("--d", cap.d, "Pattern dimension")->check(CLI::PositiveNumber);
  s_cap->add_option("--m", cap.m, "Pattern norm (default sqrt(d))");
  s_cap->add_option("--beta", cap.beta, beta_help);
  s_cap->add_option("--M-list", cap.M_list, "Comma-separated memory counts")->delimiter(',');
  s_cap->add_option("--trials", cap.trials, "Trials per M")->check(CLI::NonNegativeNumber);
  s_cap->add_option("--perturbation", cap.perturbation, "Query offset as a fraction of R");
  s_cap->add_option("--eps", cap.eps, "Success radius (default R/2 + 2 M B delta_a)");
  s_cap->add_option("--delta-a", cap.delta_a, delta_help);
  s_cap->add_option("--solver", cap.solver, "Retrieval path")->check(CLI::IsMember({"dense", "lowrank"}));
  s_cap->add_option("--layout", cap.layout, "sphere: uniform on the radius-m sphere; orthogonal: Hadamard columns")
      ->check(CLI::IsMember({"sphere", "orthogonal"}));
  s_cap->add_option("--max-degree", cap.max_degree, "Largest polynomial degree")->check(CLI::PositiveNumber);

  ReductionArgs red;
  auto* s_red = app.add_subcommand("reduction", "Decide Gap-ANNS instances through AHop and compare with brute force");
  add_common(s_red, red.c, false);
  s_red->add_option("--n", red.n, "Points per side");
  s_red->add_option("--d", red.d, "Binary dimension, even (0 = ceil(C ln n) rounded up to even)");
  s_red->add_option("--C", red.C, "Dimension constant")->check(CLI::PositiveNumber);
  s_red->add_option("--t", red.t, "Distance threshold (0 = d/4)")->check(CLI::NonNegativeNumber);
  s_red->add_option("--delta", red.delta, "Gap parameter");
  s_red->add_option("--planted-distance", red.planted_distance, "Hamming distance of the planted pair (even)")
      ->check(CLI::PositiveNumber);
  s_red->add_option("--trials", red.trials, "Instances to generate")->check(CLI::PositiveNumber);
  s_red->add_option("--plant", red.plant, "Planted case per instance")
      ->check(CLI::IsMember({"case1", "case2", "alternate"}));
  s_red->add_option("--convention", red.convention, "Constant-block convention")
      ->check(CLI::IsMember({"as-written", "literal"}));
  s_red->add_option("--solver", red.solver, "AHop solver")->check(CLI::IsMember({"dense", "lowrank"}));
  s_red->add_option("--instance", red.instance_dir, "Replay a saved instance directory (A.csv, B.csv, instance.json)")
      ->check(CLI::ExistingDirectory);
  s_red->add_option("--dump-instance", red.dump_instance, "Save generated instances under this directory");

  VerifyArgs ver;
  auto* s_ver = app.add_subcommand("verify", "Run the property suite; exit 0 iff every property holds");
  add_common(s_ver, ver.c);
  s_ver->add_option("--out-dir", ver.out_dir, "Write verify.csv, verify.json and capacity.csv here");
  s_ver->add_flag("--quiet", ver.quiet, "No summary on stdout");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());  // CLI11 consumes the vector from the back
    app.parse(args);

    if (app.got_subcommand(s_approx)) run_approx(approx);
    else if (app.got_subcommand(s_ret)) run_retrieve(ret);
    else if (app.got_subcommand(s_scal)) run_scaling(scal);
    else if (app.got_subcommand(s_err)) run_error(err);
    else if (app.got_subcommand(s_phase)) run_phase(phase);
    else if (app.got_subcommand(s_cap)) run_capacity(cap);
    else if (app.got_subcommand(s_red)) run_reduction(red);
    else if (app.got_subcommand(s_ver)) return run_verify_cmd(ver);
    return 0;
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ahop::Error& e) {
    std::cerr << "error: " << e.name() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
