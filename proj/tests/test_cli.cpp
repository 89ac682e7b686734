// End-to-end checks of the `ahop` executable: exit codes, file formats,
// config merging and agreement with the library.

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "ahop/hopfield.hpp"
#include "ahop/pattern.hpp"
#include "test_util.hpp"

#ifndef AHOP_CLI_PATH
#error "AHOP_CLI_PATH must point at the ahop executable"
#endif

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunResult {
  int code = -1;
  std::string out;  // stdout and stderr combined
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string("\"") + AHOP_CLI_PATH + "\" " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ahop_test_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::mt19937_64 rng(21);
    memory_ = ahop::testing::uniform_matrix(3, 20, 1.0, rng);
    queries_ = ahop::testing::uniform_matrix(3, 7, 1.0, rng);
    ahop::io::write_atomic(dir_ / "m.csv", ahop::io::patterns_to_csv(memory_));
    ahop::io::write_atomic(dir_ / "q.bin", ahop::io::patterns_to_binary(queries_));
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return "\"" + (dir_ / name).string() + "\""; }
  json read_json(const std::string& name) const { return json::parse(ahop::io::read_file(dir_ / name)); }

  fs::path dir_;
  ahop::Matrix memory_, queries_;
};

TEST_F(Cli, VersionAndUsageErrors) {
  const auto v = run("--version");
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find("revision"), std::string::npos);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("verify --no-such-flag").code, 2);
  EXPECT_EQ(run("approx-exp --interval-bound 1 --delta-a 0.5").code, 2);
  EXPECT_EQ(run("capacity --perturbation 1.5").code, 2);
}

TEST_F(Cli, HelpShowsDefaults) {
  const auto h = run("retrieve --help");
  EXPECT_EQ(h.code, 0);
  EXPECT_NE(h.out.find("[0.001]"), std::string::npos);
  EXPECT_NE(h.out.find("default 1/d"), std::string::npos);
  const auto s = run("bench-scaling --help");
  EXPECT_NE(s.out.find("1024,2048,4096,8192,16384"), std::string::npos) << s.out;
}

TEST_F(Cli, RuntimeErrorExitsOneWithErrorName) {
  const auto r = run("approx-exp --interval-bound 500 --max-degree 4");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("DegreeExhausted"), std::string::npos);
  EXPECT_EQ(run("retrieve --memory " + path("q.bin") + " --queries " + path("m.csv")).code, 0);
}

TEST_F(Cli, RetrieveMatchesLibraryAndWritesSidecar) {
  const auto r = run("retrieve --memory " + path("m.csv") + " --queries " + path("q.bin") +
                     " --mode lowrank --beta 0.25 --out " + path("z.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const ahop::Matrix z = ahop::io::patterns_from_csv(ahop::io::read_file(dir_ / "z.csv"));
  ASSERT_EQ(z.rows(), 3);
  ASSERT_EQ(z.cols(), 7);

  ahop::RetrievalConfig cfg;
  cfg.beta = 0.25;
  const ahop::PatternMatrix mem(memory_, ahop::PatternRole::Memory), q(queries_, ahop::PatternRole::Query);
  const auto expected = ahop::retrieve_lowrank(mem, q, cfg);
  EXPECT_EQ(ahop::max_norm_error(z, expected.z), 0.0);

  const json side = read_json("z.json");
  EXPECT_EQ(side.at("g").get<int>(), expected.degree_used);
  EXPECT_EQ(side.at("rank").get<std::size_t>(), expected.rank_used);
  EXPECT_DOUBLE_EQ(side.at("delta_h").get<double>(), expected.error_bound);
  EXPECT_EQ(side.at("L").get<int>(), 7);

  // Low-rank output stays within delta_H of the dense path.
  const auto dense = ahop::retrieve_dense(mem, q, cfg);
  EXPECT_LE(ahop::max_norm_error(z, dense.z), side.at("delta_h").get<double>());
}

TEST_F(Cli, RetrieveJsonAndFactorDump) {
  const auto r = run("retrieve --memory " + path("m.csv") + " --queries " + path("q.bin") +
                     " --mode lowrank --format json --out " + path("z.json") + " --dump-factors " + path("f"));
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = read_json("z.json");
  ASSERT_EQ(j.at("z").size(), 7u);
  EXPECT_EQ(j.at("z")[0].size(), 3u);
  const auto u1 = ahop::io::read_file(dir_ / "f" / "U1.csv");
  EXPECT_EQ(std::count(u1.begin(), u1.end(), '\n'), 20);
  EXPECT_EQ(run("retrieve --memory " + path("m.csv") + " --queries " + path("q.bin") + " --dump-factors " + path("g"))
                .code,
            2);
}

TEST_F(Cli, ConfigFileSuppliesFlagsAndExplicitFlagsWin) {
  ahop::io::write_atomic(dir_ / "cfg.json",
                         R"({"beta": 0.5, "retrieve": {"mode": "lowrank", "delta_a": 1e-4}, "capacity": {"d": 99}})");
  const std::string base = "retrieve --memory " + path("m.csv") + " --queries " + path("q.bin");
  ASSERT_EQ(run("--config " + path("cfg.json") + " " + base + " --out " + path("a.csv")).code, 0);
  json a = read_json("a.json");
  EXPECT_EQ(a.at("mode"), "lowrank");
  EXPECT_DOUBLE_EQ(a.at("beta").get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(a.at("delta_a").get<double>(), 1e-4);

  ASSERT_EQ(run(base + " --config " + path("cfg.json") + " --delta-a 1e-2 --mode dense --out " + path("b.csv")).code, 0);
  json b = read_json("b.json");
  EXPECT_EQ(b.at("mode"), "dense");
  EXPECT_DOUBLE_EQ(b.at("delta_a").get<double>(), 1e-2);

  ahop::io::write_atomic(dir_ / "bad.json", R"({"bogus_flag": 1})");
  EXPECT_EQ(run("--config " + path("bad.json") + " " + base).code, 2);
  ahop::io::write_atomic(dir_ / "broken.json", "{not json");
  EXPECT_EQ(run("--config " + path("broken.json") + " " + base).code, 2);
}

TEST_F(Cli, ReductionReportAgreesWithOracle) {
  const auto r = run("reduction --n 16 --plant case1 --seed 7 --out " + path("r.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = read_json("r.json");
  EXPECT_EQ(j.at("agreement_fraction").get<double>(), 1.0);
  EXPECT_GT(j.at("promised_queries").get<int>(), 0);
  for (const auto& q : j.at("trials")[0].at("queries")) EXPECT_EQ(q.at("verdict"), q.at("oracle"));
}

TEST_F(Cli, ReductionInstanceDumpReplays) {
  ASSERT_EQ(run("reduction --n 8 --plant case2 --seed 3 --dump-instance " + path("inst") + " --out " + path("r.json"))
                .code,
            0);
  for (const char* f : {"A.csv", "B.csv", "instance.json"}) EXPECT_TRUE(fs::exists(dir_ / "inst" / f)) << f;
  const json meta = read_json("inst/instance.json");
  EXPECT_EQ(meta.at("n").get<int>(), 8);
  ASSERT_EQ(run("reduction --instance " + path("inst") + " --out " + path("replay.json")).code, 0);
  const json replay = read_json("replay.json");
  const json original = read_json("r.json");
  EXPECT_EQ(replay.at("agreements"), replay.at("promised_queries"));
  const auto& q0 = original.at("trials")[0].at("queries");
  const auto& q1 = replay.at("queries");
  ASSERT_EQ(q0.size(), q1.size());
  for (std::size_t k = 0; k < q0.size(); ++k) EXPECT_EQ(q0[k].at("verdict"), q1[k].at("verdict"));
}

TEST_F(Cli, CapacityCsvColumns) {
  ASSERT_EQ(run("capacity --d 8 --M-list 1,2 --trials 5 --solver dense --out " + path("c.csv")).code, 0);
  const auto csv = ahop::io::read_file(dir_ / "c.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "d,m,beta,M,trials,success_rate,mean_error,seed");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  const json side = read_json("c.json");
  EXPECT_EQ(side.at("rows").size(), 2u);
}

TEST_F(Cli, BenchSummariesCarrySlopesAndMachine) {
  ASSERT_EQ(run("bench-scaling --tau-list 64,128,256 --out " + path("s.csv")).code, 0);
  const json s = read_json("s.json");
  EXPECT_TRUE(s.at("dense_slope").is_number());
  EXPECT_TRUE(s.at("lowrank_slope").is_number());
  EXPECT_TRUE(s.at("machine").contains("cpu_model"));
  EXPECT_GE(s.at("machine").at("cores").get<int>(), 0);
  const auto csv = ahop::io::read_file(dir_ / "s.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "kind,tau,d,g,rank,B,beta,delta_a,wall_time_dense,wall_time_lowrank,measured_error,bound,seed,status");
  EXPECT_EQ(run("bench-scaling --tau-list 128,64").code, 2);

  ASSERT_EQ(run("bench-error --M 64 --L 64 --format json --out " + path("e.json")).code, 0);
  EXPECT_EQ(read_json("e.json").size(), 3u);
  ASSERT_EQ(run("bench-phase --tau 64 --B-list 0.5,8 --out " + path("p.csv")).code, 0);
  EXPECT_EQ(read_json("p.json").at("failures").size(), 1u);
}

TEST_F(Cli, VerifyIsDeterministic) {
  ASSERT_EQ(run("verify --quiet --seed 4 --out-dir " + path("v1")).code, 0);
  ASSERT_EQ(run("verify --quiet --seed 4 --out-dir " + path("v2")).code, 0);
  for (const char* f : {"verify.csv", "verify.json", "capacity.csv"})
    EXPECT_EQ(ahop::io::read_file(dir_ / "v1" / f), ahop::io::read_file(dir_ / "v2" / f)) << f;
  const auto summary = run("verify --seed 4");
  EXPECT_NE(summary.out.find("properties passed"), std::string::npos);
}

}  // namespace
