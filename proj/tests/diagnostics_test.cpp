#include <gtest/gtest.h>

#include "redist/diagnostics.hpp"
#include "redist/rng.hpp"

namespace redist::diagnostics {
namespace {

using Chains = std::vector<std::vector<double>>;

Chains iid(Rng& rng, int m, int n, double mean = 0.0) {
  Chains c(m, std::vector<double>(n));
  for (auto& ch : c)
    for (double& v : ch) v = rng.normal(mean, 1.0);
  return c;
}

Chains ar1(Rng& rng, int m, int n, double phi) {
  Chains c(m, std::vector<double>(n));
  for (auto& ch : c) {
    double x = rng.normal(0.0, 1.0 / std::sqrt(1 - phi * phi));
    for (double& v : ch) {
      x = phi * x + rng.normal(0.0, 1.0);
      v = x;
    }
  }
  return c;
}

TEST(ChainMatrix, Validation) {
  EXPECT_THROW(ChainMatrix(Chains{{1, 2, 3}, {1, 2}}), Error);
  try {
    split_rhat(ChainMatrix(Chains{{1, 2, 3}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ChainTooShort);
  }
}

TEST(ChainMatrix, SplitDropsOddDraw) {
  const ChainMatrix m(Chains{{1, 2, 3, 4, 5}});
  const auto s = m.split();
  EXPECT_EQ(s.num_chains(), 2u);
  EXPECT_EQ(s.num_draws(), 2u);
  EXPECT_EQ(s.chain(1)[0], 3.0);
}

TEST(SplitRhat, ConstantChainsAreUndefined) {
  const ChainMatrix m(Chains(4, std::vector<double>(100, 1.0)));
  EXPECT_FALSE(split_rhat(m).has_value());
  EXPECT_FALSE(ess(m).has_value());
  EXPECT_FALSE(ess(m, true).has_value());
  EXPECT_FALSE(converged(split_rhat(m), ess(m)));
}

TEST(SplitRhat, IidNearOne) {
  Rng rng(1);
  int inside = 0;
  for (int t = 0; t < 100; ++t) {
    const double r = *split_rhat(ChainMatrix(iid(rng, 4, 1000)));
    inside += r >= 0.99 && r <= 1.01;
  }
  EXPECT_GE(inside, 99);
}

TEST(SplitRhat, SeparatedMeans) {
  Rng rng(2);
  auto c = iid(rng, 1, 1000, 0.0);
  c.push_back(iid(rng, 1, 1000, 10.0)[0]);
  EXPECT_GT(*split_rhat(ChainMatrix(c)), 1.1);
}

TEST(SplitRhat, DetectsDriftWithinAChain) {
  std::vector<double> trend(1000);
  for (int i = 0; i < 1000; ++i) trend[i] = i / 100.0;
  EXPECT_GT(*split_rhat(ChainMatrix(Chains{trend})), 1.1);
}

TEST(SplitRhat, AffineInvariance) {
  Rng rng(3);
  const Chains c = ar1(rng, 3, 500, 0.7);
  for (auto [a, b] : {std::pair{2.5, -1.0}, std::pair{-0.1, 100.0}}) {
    Chains d = c;
    for (auto& ch : d)
      for (double& v : ch) v = a * v + b;
    EXPECT_NEAR(*split_rhat(ChainMatrix(c)), *split_rhat(ChainMatrix(d)), 1e-10);
    EXPECT_NEAR(*ess(ChainMatrix(c)), *ess(ChainMatrix(d)), 1e-6);
  }
}

TEST(Ess, IidNearTotal) {
  Rng rng(4);
  int ok = 0, ok_rank = 0;
  for (int t = 0; t < 100; ++t) {
    const ChainMatrix m(iid(rng, 4, 1000));
    ok += std::abs(*ess(m) - 4000) <= 800;
    ok_rank += std::abs(*ess(m, true) - 4000) <= 800;
  }
  EXPECT_GE(ok, 95);
  EXPECT_GE(ok_rank, 95);
}

TEST(Ess, Ar1MatchesTheory) {
  Rng rng(5);
  const double phi = 0.5, theory = 4000 * (1 - phi) / (1 + phi);
  int ok = 0;
  for (int t = 0; t < 50; ++t) ok += std::abs(*ess(ChainMatrix(ar1(rng, 4, 1000, phi))) - theory) <= 0.25 * theory;
  EXPECT_GE(ok, 48);
}

TEST(Ess, BoundedByDrawsForCorrelatedChains) {
  Rng rng(6);
  for (double phi : {0.2, 0.5, 0.9})
    for (int t = 0; t < 50; ++t) {
      const ChainMatrix m(ar1(rng, 4, 1000, phi));
      EXPECT_LE(*ess(m), 4000 * 1.05);
      EXPECT_LE(*ess(m, true), 4000 * 1.05);
    }
}

TEST(Ess, IidRarelyExceedsDraws) {
  // on white noise the estimator can be mildly super-efficient
  Rng rng(7);
  int over = 0;
  for (int t = 0; t < 200; ++t) over += *ess(ChainMatrix(iid(rng, 4, 1000))) > 4000 * 1.05;
  EXPECT_LE(over, 20);
}

TEST(Ess, RankNormalizedIgnoresMonotoneTransforms) {
  Rng rng(8);
  const Chains c = ar1(rng, 4, 400, 0.3);
  Chains d = c;
  for (auto& ch : d)
    for (double& v : ch) v = std::exp(3 * v);
  EXPECT_NEAR(*ess(ChainMatrix(c), true), *ess(ChainMatrix(d), true), 1e-9);
}

TEST(Converged, Thresholds) {
  EXPECT_TRUE(converged(1.01, 400.0));
  EXPECT_FALSE(converged(1.011, 1e6));
  EXPECT_FALSE(converged(1.0, 399.9));
  EXPECT_FALSE(converged(std::nullopt, 1e6));
}

TEST(Pearson, Identity) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const auto c = pearson_ci(x, x);
  EXPECT_DOUBLE_EQ(c.r, 1.0);
  EXPECT_DOUBLE_EQ(c.lo, 1.0);
  EXPECT_DOUBLE_EQ(c.hi, 1.0);
}

TEST(Pearson, IndependentStraddlesZero) {
  Rng rng(9);
  std::vector<double> x(20000), y(20000);
  for (auto& v : x) v = rng.normal(0, 1);
  for (auto& v : y) v = rng.normal(0, 1);
  const auto c = pearson_ci(x, y);
  EXPECT_LT(c.lo, 0.0);
  EXPECT_GT(c.hi, 0.0);
  EXPECT_NEAR(c.r, 0.0, 0.03);
}

TEST(Pearson, LargeSampleHalfWidth) {
  const auto c = detail::fisher_interval(0.029, 1626525, 0.95, 1.0);
  EXPECT_NEAR((c.hi - c.lo) / 2, 0.0015, 0.0001);
  EXPECT_NEAR(c.lo, 0.028, 0.0006);
  EXPECT_NEAR(c.hi, 0.031, 0.0006);
}

TEST(Spearman, MonotoneExtremes) {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  const std::vector<double> up{0.1, 0.5, 2, 9, 10, 100};
  const std::vector<double> down(up.rbegin(), up.rend());
  EXPECT_DOUBLE_EQ(spearman_ci(x, up).r, 1.0);
  EXPECT_DOUBLE_EQ(spearman_ci(x, down).r, -1.0);
}

TEST(Spearman, AdjustedFisherInterval) {
  const auto c = detail::fisher_interval(-0.645, 93, 0.95, 1.06);
  EXPECT_NEAR(c.lo, -0.76, 0.01);
  EXPECT_NEAR(c.hi, -0.49, 0.015);
}

TEST(Spearman, InvariantUnderMonotoneTransforms) {
  Rng rng(10);
  std::vector<double> x(200), y(200);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.normal(0, 1);
    y[i] = x[i] + rng.normal(0, 1);
  }
  std::vector<double> fx = x, gy = y;
  for (double& v : fx) v = std::exp(v);
  for (double& v : gy) v = v * v * v;
  EXPECT_NEAR(spearman_ci(x, y).r, spearman_ci(fx, gy).r, 1e-12);
}

TEST(Spearman, TiesGetMidRanks) {
  const std::vector<double> x{1, 2, 2, 3};
  EXPECT_EQ(detail::mid_ranks(x), (std::vector<double>{1, 2.5, 2.5, 4}));
}

}  // namespace
}  // namespace redist::diagnostics
