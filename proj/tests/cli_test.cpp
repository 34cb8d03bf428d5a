#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

namespace redist {
namespace {

namespace fs = std::filesystem;

const fs::path kFixtures = REDIST_FIXTURE_DIR;

std::string fixture(const std::string& name) { return (kFixtures / name).string(); }

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "redist");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("redist_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string out(const std::string& sub) const { return (dir_ / sub).string(); }

  std::vector<std::string> grid8() const {
    return {"--units", fixture("grid8_units.csv"), "--adjacency", fixture("grid8_adjacency.csv")};
  }

  fs::path dir_;
};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

TEST_F(CliTest, IngestFixture) {
  const Outcome r = run(cat({"ingest", "--out", out("ingest")}, grid8()));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("units=64 edges=112 connected=yes"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("state-level invariant holds"), std::string::npos);
  EXPECT_NE(r.out.find("dataset published: pop="), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "ingest" / "graph.snap"));
  const auto m = cli::json::parse(slurp(dir_ / "ingest" / "manifest.json"));
  EXPECT_EQ(m["command"], "ingest");
  EXPECT_EQ(m["adjacency_provenance"]["pairs"], 112);
  EXPECT_TRUE(m["graph_fingerprint"].is_string());
}

TEST_F(CliTest, IngestDisconnectedListsComponents) {
  const Outcome r = run({"ingest", "--units", fixture("disconnected_units.csv"), "--adjacency",
                     fixture("disconnected_adjacency.csv"), "--out", out("x")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("connected=no"), std::string::npos);
  EXPECT_NE(r.out.find("component 1 (3 units): A B C"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("component 2 (3 units): D E F"), std::string::npos);
  EXPECT_NE(r.err.find("DisconnectedGraph"), std::string::npos);
}

TEST_F(CliTest, IngestReportsTotalsMismatch) {
  std::ofstream(dir_ / "units.csv") << "unit_id,dataset,pop,vap\nA,published,10,5\nA,reference,12,5\nB,published,3,1\n"
                                       "B,reference,3,1\n";
  std::ofstream(dir_ / "adj.csv") << "unit_id_a,unit_id_b\nA,B\n";
  const Outcome r = run({"ingest", "--units", (dir_ / "units.csv").string(), "--adjacency", (dir_ / "adj.csv").string(),
                     "--out", out("x")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("state-level totals differ by 2 persons"), std::string::npos) << r.out;
}

TEST_F(CliTest, SampleWritesHundredRecords) {
  const Outcome r = run({"sample", "--config", fixture("sample.cfg"), "--out", out("s")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto e = io::read_records((dir_ / "s" / "ensemble.rden").string());
  EXPECT_EQ(e.records.size(), 100u);
  EXPECT_EQ(e.header.k, 4u);
  const DualGraph g = io::load_graph(fixture("grid8_units.csv"), fixture("grid8_adjacency.csv"), {});
  const auto m = cli::json::parse(slurp(dir_ / "s" / "manifest.json"));
  EXPECT_EQ(m["seed"], "7");
  EXPECT_EQ(m["params"]["steps"], "1000");
  EXPECT_EQ(m["graph_fingerprint"], cli::hex64(g.fingerprint()));
  EXPECT_EQ(m["outputs"]["ensemble.rden"], cli::hex64(cli::fnv64(slurp(dir_ / "s" / "ensemble.rden"))));
  for (const auto& rec : e.records)
    EXPECT_LE(metrics::plan_deviation(rec.published(), metrics::ideal_population(rec.published())), 0.05);
}

TEST_F(CliTest, SampleIsDeterministic) {
  ASSERT_EQ(run({"sample", "--config", fixture("sample.cfg"), "--out", out("a")}).code, 0);
  ASSERT_EQ(run({"sample", "--config", fixture("sample.cfg"), "--out", out("b")}).code, 0);
  EXPECT_EQ(slurp(dir_ / "a" / "ensemble.rden"), slurp(dir_ / "b" / "ensemble.rden"));
  ASSERT_EQ(run({"sample", "--config", fixture("sample.cfg"), "--seed", "8", "--out", out("c")}).code, 0);
  EXPECT_NE(slurp(dir_ / "a" / "ensemble.rden"), slurp(dir_ / "c" / "ensemble.rden"));
}

TEST_F(CliTest, ManifestRerunsBitIdentically) {
  ASSERT_EQ(run({"sample", "--config", fixture("sample.cfg"), "--chains", "3", "--workers", "3", "--out", out("a")}).code,
            0);
  const Outcome r = run({"sample", "--config", (dir_ / "a" / "manifest.json").string(), "--workers", "1", "--out", out("b")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir_ / "a" / "ensemble.rden"), slurp(dir_ / "b" / "ensemble.rden"));
  const auto e = io::read_records((dir_ / "b" / "ensemble.rden").string());
  ASSERT_EQ(e.records.size(), 300u);
  EXPECT_EQ(e.records[150].subchain, 1u);
  EXPECT_TRUE(fs::exists(dir_ / "b" / "final_assignment_2.csv"));
}

TEST_F(CliTest, FlagsOverrideConfig) {
  const Outcome r = run({"sample", "--config", fixture("sample.cfg"), "--steps", "200", "--interval", "20", "--out", out("s")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::read_records((dir_ / "s" / "ensemble.rden").string()).records.size(), 10u);
  const auto m = cli::json::parse(slurp(dir_ / "s" / "manifest.json"));
  EXPECT_EQ(m["params"]["interval"], "20");
  EXPECT_EQ(m["params"]["k"], "4");
}

TEST_F(CliTest, ConfigErrors) {
  std::ofstream(dir_ / "bad.cfg") << "k = 4\nbogus_key = 1\n";
  Outcome r = run({"sample", "--config", (dir_ / "bad.cfg").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("bad.cfg:2"), std::string::npos) << r.err;
  r = run({"sample", "--config", fixture("sample.cfg"), "--k", "four", "--out", out("x")});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(run({"sample", "--no-such-flag"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
}

TEST_F(CliTest, InfeasibleExitsTwo) {
  const Outcome r = run(cat({"sample", "--k", "3", "--tau", "0", "--out", out("x")}, grid8()));
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_NE(r.err.find("Infeasible"), std::string::npos);
}

TEST_F(CliTest, MissingFileIsValidationError) {
  const Outcome r = run({"sample", "--units", fixture("nope.csv"), "--adjacency", fixture("grid8_adjacency.csv")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("nope.csv"), std::string::npos);
}

TEST_F(CliTest, GraphSnapshotFeedsSampling) {
  ASSERT_EQ(run(cat({"ingest", "--out", out("i")}, grid8())).code, 0);
  ASSERT_EQ(run({"sample", "--graph", out("i") + "/graph.snap", "--k", "4", "--steps", "100", "--seed", "3", "--out",
                 out("a")})
                .code,
            0);
  ASSERT_EQ(run(cat({"sample", "--k", "4", "--steps", "100", "--seed", "3", "--out", out("b")}, grid8())).code, 0);
  EXPECT_EQ(slurp(dir_ / "a" / "ensemble.rden"), slurp(dir_ / "b" / "ensemble.rden"));
}

TEST_F(CliTest, BurstsEmitBestPlan) {
  const Outcome r = run({"bursts", "--units", fixture("planted6_units.csv"), "--adjacency", fixture("grid6_adjacency.csv"),
                     "--k", "3", "--tau", "0.05", "--group", "black", "--burst-len", "10", "--num-bursts", "50",
                     "--subchains", "10", "--seed", "500", "--workers", "4", "--out", out("b")});
  ASSERT_EQ(r.code, 0) << r.err;
  const DualGraph g = io::load_graph(fixture("planted6_units.csv"), fixture("grid6_adjacency.csv"), {});
  const auto best = io::load_assignment((dir_ / "b" / "best_assignment.csv").string(), g);
  EXPECT_TRUE(best.contiguous);
  EXPECT_TRUE(is_valid_plan(g, best.partition, 0.05));
  // exhaustive maximum of the planted fixture
  EXPECT_EQ(score_mmd(g, best.partition, kPublished, "black"), 2);
  const auto progress = lines(slurp(dir_ / "b" / "burst_progress.csv"));
  EXPECT_EQ(progress.size(), 1u + 10 * 50);
  EXPECT_EQ(io::read_records((dir_ / "b" / "ensemble.rden").string()).records.size(), 10u * 50 * 10);
}

TEST_F(CliTest, MmdReportOnIdenticalDataIsZero) {
  ASSERT_EQ(run({"sample", "--units", fixture("identical_units.csv"), "--adjacency", fixture("grid6_adjacency.csv"),
                 "--k", "4", "--tau", "0.1", "--steps", "500", "--interval", "5", "--out", out("s")})
                .code,
            0);
  const Outcome r = run({"mmd-report", "--ensemble", out("s") + "/ensemble.rden", "--group", "black", "--out", out("m")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = lines(slurp(dir_ / "m" / "mmd_summary.csv"));
  ASSERT_EQ(summary.size(), 2u);
  const auto fields = io::detail::split_csv(summary[1]);
  EXPECT_EQ(fields[0], "100");
  EXPECT_EQ(fields[1], "0");
  EXPECT_EQ(fields[2], "0");
  EXPECT_EQ(fields[4], "yes");
  EXPECT_EQ(fields[6], "0");
  EXPECT_EQ(fields[7], "0");
  std::uint64_t plans = 0;
  const auto hist = lines(slurp(dir_ / "m" / "mmd_histogram.csv"));
  for (std::size_t i = 1; i < hist.size(); ++i) {
    const auto f = io::detail::split_csv(hist[i]);
    EXPECT_EQ(f[1], "0");
    plans += std::stoull(f[2]);
  }
  EXPECT_EQ(plans, 100u);
  const auto bins = lines(slurp(dir_ / "m" / "margin_bins.csv"));
  EXPECT_EQ(bins.size(), 1u + 14);
  for (std::size_t i = 1; i < bins.size(); ++i) EXPECT_EQ(io::detail::split_csv(bins[i])[3], "0");
}

TEST_F(CliTest, MmdReportNeedsKnownGroup) {
  ASSERT_EQ(run(cat({"sample", "--k", "4", "--steps", "20", "--out", out("s")}, grid8())).code, 0);
  EXPECT_EQ(run({"mmd-report", "--ensemble", out("s") + "/ensemble.rden", "--group", "hispanic", "--out", out("m")}).code,
            1);
}

TEST_F(CliTest, DiagnoseIidChains) {
  Rng rng(11);
  {
    std::ofstream f(dir_ / "chains.csv");
    f << "chain,value\n";
    for (int c = 0; c < 4; ++c)
      for (int i = 0; i < 1000; ++i) f << c << ',' << rng.normal(0, 1) << '\n';
  }
  const Outcome r = run({"diagnose", "--chains-csv", (dir_ / "chains.csv").string(), "--name", "synthetic", "--out",
                     out("d")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(slurp(dir_ / "d" / "diagnostics.csv"));
  ASSERT_EQ(rows.size(), 2u);
  const auto f = io::detail::split_csv(rows[1]);
  EXPECT_EQ(f[0], "synthetic");
  EXPECT_EQ(f[2], "4");
  EXPECT_EQ(f[3], "1000");
  EXPECT_NEAR(std::stod(f[4]), 1.0, 0.01);
  EXPECT_EQ(f[7], "yes");
}

TEST_F(CliTest, DiagnoseEnsembleConstantIsUndefined) {
  // identical data: the balance indicator is constant zero
  ASSERT_EQ(run({"sample", "--units", fixture("identical_units.csv"), "--adjacency", fixture("grid6_adjacency.csv"),
                 "--k", "4", "--tau", "0.1", "--steps", "200", "--interval", "5", "--chains", "2", "--out", out("s")})
                .code,
            0);
  const Outcome r = run({"diagnose", "--ensemble", out("s") + "/ensemble.rden", "--group", "black", "--threshold", "0.1", "--out", out("d")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(slurp(dir_ / "d" / "diagnostics.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1], "geography,population_balance,2,40,undefined,undefined,undefined,no");
  EXPECT_EQ(rows[2], "geography,mmd,2,40,undefined,undefined,undefined,no");
}

TEST_F(CliTest, ModelCurve) {
  const Outcome r = run({"model", "--k", "39", "--tau", "0.05", "--sigma", "0.0006", "--mu", "0", "--out", out("m")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(slurp(dir_ / "m" / "model_curve.csv"));
  ASSERT_EQ(rows.size(), 22u);
  EXPECT_EQ(rows[0], "delta,tau,rate");
  double prev = 2.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = io::detail::split_csv(rows[i]);
    EXPECT_NEAR(std::stod(f[0]), 0.0005 * static_cast<double>(i - 1), 1e-12);
    const double rate = std::stod(f[2]);
    noise::NoiseModelParams p;
    p.k = 39;
    p.delta = std::stod(f[0]);
    EXPECT_NEAR(rate, noise::exceed_rate_quadrature(p), 1e-11 + 1e-11 * rate);
    EXPECT_LE(rate, prev);
    prev = rate;
  }
}

TEST_F(CliTest, ModelWithMonteCarloColumns) {
  const Outcome r = run({"model", "--k", "5", "--delta-max", "0.001", "--mc-samples", "2000", "--sigma", "0.002", "--out",
                     out("m")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(slurp(dir_ / "m" / "model_curve.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], "delta,tau,rate,mc_rate,mc_standard_error");
  EXPECT_EQ(run({"model", "--k", "5", "--delta-max", "0.2"}).code, 1);
}

TEST_F(CliTest, SweepEmitsGrid) {
  const Outcome r = run(cat({"sweep", "--k", "4", "--plans", "20", "--interval", "2", "--workers", "4", "--out", out("s")},
                        grid8()));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(slurp(dir_ / "s" / "sweep.csv"));
  ASSERT_EQ(rows.size(), 22u);
  EXPECT_EQ(rows[0], "delta,tau,plans,exceed,rate");
  const Outcome again = run(cat({"sweep", "--k", "4", "--plans", "20", "--interval", "2", "--out", out("t")}, grid8()));
  EXPECT_EQ(slurp(dir_ / "s" / "sweep.csv"), slurp(dir_ / "t" / "sweep.csv"));
}

TEST_F(CliTest, CriticalOffsetOverGeographies) {
  const Outcome r = run({"critical-offset", "--geographies", fixture("geographies.csv"), "--plans", "50", "--interval", "2",
                     "--repetitions", "2", "--workers", "2", "--out", out("c")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(slurp(dir_ / "c" / "critical_offset.csv"));
  ASSERT_EQ(rows.size(), 3u);
  // identical datasets on the planted grid: no discrepancy at zero offset
  EXPECT_EQ(rows[2], "planted6,0.05,0.02,0.0005,2,found,0,0,0");
  const auto summary = lines(slurp(dir_ / "c" / "critical_offset_summary.csv"));
  ASSERT_EQ(summary.size(), 3u);
  EXPECT_EQ(summary[1].substr(0, 17), "discrepancy_rate,");
  const auto runs = lines(slurp(dir_ / "c" / "critical_offset_runs.csv"));
  EXPECT_EQ(runs.size(), 5u);
}

TEST_F(CliTest, EnactedErrorsMatchHandSums) {
  const Outcome r = run(cat({"enacted-errors", "--assignment", fixture("grid8_enacted.csv"), "--name", "grid8", "--out",
                         out("e")},
                        grid8()));
  ASSERT_EQ(r.code, 0) << r.err;

  // independent sums straight from the unit table
  std::map<int, std::array<long, 2>> pops;
  std::ifstream units(fixture("grid8_units.csv"));
  std::string line;
  std::getline(units, line);
  while (std::getline(units, line)) {
    const auto f = io::detail::split_csv(line);
    const int row = f[0][1] - '0', col = f[0][3] - '0';
    pops[1 + (row / 4) * 2 + col / 4][f[1] == "reference"] += std::stol(f[2]);
  }
  long total = 0;
  for (const auto& [d, p] : pops) total += p[0];
  const double ideal = total / 4.0;
  double worst = 0;
  for (const auto& [d, p] : pops) worst = std::max(worst, std::abs(p[0] - p[1]) / ideal);

  const auto districts = lines(slurp(dir_ / "e" / "enacted_districts.csv"));
  ASSERT_EQ(districts.size(), 5u);
  for (std::size_t i = 1; i < districts.size(); ++i) {
    const auto f = io::detail::split_csv(districts[i]);
    const int d = std::stoi(f[1]);
    EXPECT_EQ(std::stol(f[3]), pops[d][0]);
    EXPECT_EQ(std::stol(f[4]), pops[d][1]);
  }
  const auto table = lines(slurp(dir_ / "e" / "enacted_errors.csv"));
  ASSERT_EQ(table.size(), 1u + 8);
  const auto first = io::detail::split_csv(table[1]);
  EXPECT_EQ(first[0], "<8k");
  EXPECT_EQ(first[1], "4");
  EXPECT_NEAR(std::stod(first[2]), worst, 1e-12);
  EXPECT_EQ(io::detail::split_csv(table[2])[1], "0");
}

TEST_F(CliTest, BinaryExitCodes) {
  const std::string bin = REDIST_CLI_PATH;
  auto status = [&](const std::string& args) {
    const int s = std::system((bin + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("--help"), 0);
  EXPECT_EQ(status("ingest --units " + fixture("disconnected_units.csv") + " --adjacency " +
                   fixture("disconnected_adjacency.csv") + " --out " + out("x")),
            1);
  EXPECT_EQ(status("model --k 3 --out " + out("m")), 0);
  EXPECT_EQ(status("sample --units " + fixture("grid8_units.csv") + " --adjacency " + fixture("grid8_adjacency.csv") +
                   " --k 3 --tau 0 --out " + out("y")),
            2);
}

}  // namespace
}  // namespace redist
