#include <gtest/gtest.h>

#include "redist/bursts.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace redist {
namespace {

BurstParams planted_params(std::uint64_t seed) {
  BurstParams bp;
  bp.burst_length = 10;
  bp.num_bursts = 50;
  bp.num_subchains = 10;
  bp.group = "black";
  bp.chain.tolerance = 0.05;
  bp.chain.rng_seed = seed;
  return bp;
}

int exhaustive_max(const DualGraph& g, int k, double tol) {
  const int group = g.schema().vap_group_index("black");
  int best = 0;
  for (const auto& a : oracle::balanced_partitions(g, k, tol)) {
    std::vector<Count> gv(k, 0), vap(k, 0);
    for (int u = 0; u < g.num_units(); ++u) {
      gv[a[u]] += g.row(kPublished, u).group_vap[group];
      vap[a[u]] += g.row(kPublished, u).vap;
    }
    int m = 0;
    for (int d = 0; d < k; ++d) m += 2 * gv[d] > vap[d];
    best = std::max(best, m);
  }
  return best;
}

TEST(ScoreMmd, StrictMajority) {
  const DualGraph g = testing::make_grid(1, 3, [](int, int c) {
    const Count b = std::array<Count, 3>{60, 50, 20}[c];
    return std::pair{testing::row(100, 100, b, b), testing::row(100, 100, b, b)};
  });
  const Partition p(g, {0, 1, 2}, 3);
  EXPECT_EQ(score_mmd(g, p, kPublished, "black"), 1);
  EXPECT_THROW(score_mmd(g, p, kPublished, "hispanic"), Error);
}

TEST(ShortBursts, DegenerateIsOneStep) {
  const DualGraph g = testing::noisy_grid(5, 5, 100, 2.0, 3);
  Rng srng(1);
  const Partition seed = seed_partition(g, 3, 0.1, srng);
  BurstParams bp;
  bp.burst_length = 1;
  bp.num_bursts = 1;
  bp.num_subchains = 1;
  bp.group = "black";
  bp.chain.tolerance = 0.1;
  bp.chain.rng_seed = 77;
  bp.chain.keep_assignments = true;
  std::vector<EnsembleRecord> records;
  const auto res = short_burst_run(g, seed, bp, [&](const EnsembleRecord& r) { records.push_back(r); });

  Partition p = seed;
  Rng rng = Rng(77).split(0);
  recom_step(g, p, bp.chain, rng);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0], make_record(p, 0, 1, 0, true));
  const int score = score_mmd(g, p, kPublished, "black");
  const int start = score_mmd(g, seed, kPublished, "black");
  EXPECT_EQ(res.best_score, std::max(score, start));
}

TEST(ShortBursts, FindsPlantedOptimum) {
  const DualGraph g = testing::planted_grid();
  const int optimum = exhaustive_max(g, 3, 0.05);
  EXPECT_EQ(optimum, 2);
  int hits = 0;
  for (std::uint64_t run = 0; run < 5; ++run) {
    Rng srng(1000 + run);
    const Partition seed = seed_partition(g, 3, 0.05, srng);
    const auto res = short_burst_run(g, seed, planted_params(500 + run), [](const EnsembleRecord&) {});
    EXPECT_LE(res.best_score, optimum);
    EXPECT_EQ(score_mmd(g, res.best, kPublished, "black"), res.best_score);
    EXPECT_TRUE(is_valid_plan(g, res.best, 0.05));
    hits += res.best_score == optimum;
  }
  EXPECT_GE(hits, 4);
}

TEST(ShortBursts, BestIsNonDecreasingAndRecordsAreComplete) {
  const DualGraph g = testing::planted_grid();
  Rng srng(3);
  const Partition seed = seed_partition(g, 3, 0.05, srng);
  BurstParams bp = planted_params(9);
  bp.num_bursts = 20;
  bp.chain.keep_assignments = true;
  std::vector<EnsembleRecord> records;
  const auto res = short_burst_run(g, seed, bp, [&](const EnsembleRecord& r) { records.push_back(r); });
  ASSERT_EQ(res.best_after_burst.size(), 10u);
  for (const auto& per : res.best_after_burst) {
    ASSERT_EQ(per.size(), 20u);
    for (std::size_t b = 1; b < per.size(); ++b) EXPECT_GE(per[b], per[b - 1]);
  }
  ASSERT_EQ(records.size(), 10u * 20u * 10u);
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(records[i].ordinal, i);
    EXPECT_EQ(records[i].subchain, i / 200);
    EXPECT_EQ(records[i].step, i % 200 + 1);
    EXPECT_TRUE(is_valid_plan(g, Partition(g, records[i].assignment, 3), 0.05));
  }
}

TEST(ShortBursts, WorkerCountDoesNotChangeOutput) {
  const DualGraph g = testing::planted_grid();
  Rng srng(4);
  const Partition seed = seed_partition(g, 3, 0.05, srng);
  BurstParams bp = planted_params(21);
  bp.num_bursts = 5;
  std::vector<EnsembleRecord> one, three;
  const auto a = short_burst_run(g, seed, bp, [&](const EnsembleRecord& r) { one.push_back(r); }, 1);
  const auto b = short_burst_run(g, seed, bp, [&](const EnsembleRecord& r) { three.push_back(r); }, 3);
  EXPECT_EQ(one, three);
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(a.best_after_burst, b.best_after_burst);
}

TEST(ShortBursts, GroupSwapUsesSameMachinery) {
  const DualGraph g = testing::make_grid(4, 4, [](int r, int c) {
    AttributeRow row = testing::row(10, 10, (r + c) % 3 == 0 ? 8 : 1, 0);
    row.group_vap["hispanic"] = (r * c) % 4 == 0 ? 7 : 2;
    return std::pair{row, row};
  });
  Rng srng(5);
  const Partition seed = seed_partition(g, 2, 0.1, srng);
  BurstParams bp = planted_params(1);
  bp.group = "hispanic";
  bp.num_bursts = 3;
  bp.chain.tolerance = 0.1;
  const auto res = short_burst_run(g, seed, bp, [](const EnsembleRecord&) {});
  EXPECT_EQ(score_mmd(g, res.best, kPublished, "hispanic"), res.best_score);
}

TEST(ShortBursts, Validation) {
  const DualGraph g = testing::unit_grid(2, 2);
  const Partition seed(g, {0, 0, 1, 1}, 2);
  BurstParams bp;
  bp.group = "black";
  bp.burst_length = 0;
  EXPECT_THROW(short_burst_run(g, seed, bp, [](const EnsembleRecord&) {}), Error);
  bp = {};
  EXPECT_THROW(short_burst_run(g, seed, bp, [](const EnsembleRecord&) {}), Error);
  bp.group = "black";
  bp.chain.tolerance = 0.0;
  EXPECT_THROW(short_burst_run(g, Partition(g, {0, 1, 1, 1}, 2), bp, [](const EnsembleRecord&) {}), Error);
}

}  // namespace
}  // namespace redist
