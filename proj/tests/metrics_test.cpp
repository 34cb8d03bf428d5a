#include <gtest/gtest.h>

#include "redist/metrics.hpp"
#include "redist/rng.hpp"

namespace redist::metrics {
namespace {

DistrictAggregate district(Count pop, Count vap = 0, Count bvap = 0, std::vector<Count> pops = {}) {
  DistrictAggregate d;
  d.pop = pop;
  d.vap = vap;
  d.group_vap = {bvap};
  d.group_pops = std::move(pops);
  return d;
}

TEST(Deviation, Basics) {
  EXPECT_DOUBLE_EQ(deviation(105, 100.0), 0.05);
  EXPECT_DOUBLE_EQ(deviation(100, 100.0), 0.0);
  EXPECT_DOUBLE_EQ(deviation(0, 100.0), 1.0);
  EXPECT_THROW(deviation(1, 0.0), Error);
}

TEST(PlanDeviation, IsTheMaximum) {
  const std::vector<DistrictAggregate> plan{district(101), district(96), district(103)};
  EXPECT_DOUBLE_EQ(plan_deviation(plan, 100.0), 0.04);
  EXPECT_DOUBLE_EQ(plan_deviation(std::vector{district(100)}, 100.0), 0.0);
}

TEST(CourtMeasure, Formula) {
  EXPECT_NEAR(court_measure(std::vector{district(95), district(105)}), 10.0 / 95.0, 1e-15);
  EXPECT_DOUBLE_EQ(court_measure(std::vector{district(7), district(7)}), 0.0);
  try {
    court_measure(std::vector{district(0), district(5)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroMinimum);
  }
}

TEST(CourtTolerance, Conversion) {
  EXPECT_NEAR(court_tolerance_convert(0.10), 0.1 / 2.1, 1e-15);
  EXPECT_DOUBLE_EQ(court_tolerance_convert(0.0), 0.0);
  EXPECT_DOUBLE_EQ(court_tolerance_convert(2.0), 0.5);
}

TEST(CourtTolerance, BoundIsTight) {
  // two districts at exactly +t and -t
  for (double tstar : {0.01, 0.05, 0.10}) {
    const double t = court_tolerance_convert(tstar);
    const double lo = 1 - t, hi = 1 + t;
    EXPECT_NEAR((hi - lo) / lo, tstar, 1e-12);
  }
}

TEST(CourtTolerance, DoubledBoundIsNotSufficient) {
  // 2c/(2+c) at c = 10% allows a 21% court measure
  const double t = 2 * 0.10 / 2.10;
  const std::vector<DistrictAggregate> plan{district(static_cast<Count>(100000 * (1 + t))),
                                            district(static_cast<Count>(std::ceil(100000 * (1 - t))))};
  EXPECT_LE(plan_deviation(plan, ideal_population(plan)), t);
  EXPECT_GT(court_measure(plan), 0.2);
}

TEST(CourtTolerance, BoundHoldsOnRandomPlans) {
  Rng rng(1);
  for (double tstar : {0.01, 0.05, 0.10}) {
    const double bound = court_tolerance_convert(tstar);
    for (int trial = 0; trial < 2000; ++trial) {
      const int k = 2 + static_cast<int>(rng.below(10));
      std::vector<DistrictAggregate> plan;
      const Count spread = static_cast<Count>(200000 * bound) + 2;
      for (int i = 0; i < k; ++i) plan.push_back(district(100000 - spread / 2 + static_cast<Count>(rng.below(spread + 1))));
      if (plan_deviation(plan, ideal_population(plan)) <= bound) EXPECT_LE(court_measure(plan), tstar + 1e-12);
    }
  }
}

TEST(ErrDas, DecompositionArithmetic) {
  EXPECT_DOUBLE_EQ(err_das(1000, 1000, 1000.0), 0.0);
  const double e = err_das(1040, 1035, 1000.0);
  EXPECT_NEAR(e, -0.005, 1e-15);
  EXPECT_NEAR(std::abs(signed_deviation(1040, 1000.0) + e), deviation(1035, 1000.0), 1e-15);
}

TEST(ErrDas, LargestEnactedDistrictMagnitude) {
  // 301 persons at an ideal population of about 14,050
  EXPECT_NEAR(std::abs(err_das(14050, 14050 - 301, 14050.0)), 0.0214, 5e-5);
}

TEST(Majority, StrictInequality) {
  EXPECT_TRUE(is_majority(district(200, 100, 51), 0));
  EXPECT_FALSE(is_majority(district(200, 100, 50), 0));
  const std::vector<DistrictAggregate> plan{district(200, 100, 60), district(200, 100, 50), district(200, 100, 20)};
  EXPECT_EQ(count_majority(plan, 0), 1);
}

TEST(Margin, HalfPersonUnits) {
  EXPECT_DOUBLE_EQ(margin(district(200, 100, 51), 0), 1.0);
  EXPECT_DOUBLE_EQ(margin(district(200, 100, 50), 0), 0.0);
  EXPECT_DOUBLE_EQ(margin(district(200, 100, 49), 0), -1.0);
  EXPECT_EQ(margin_twice(district(200, 101, 50), 0), -1);
}

TEST(Hhi, Shares) {
  EXPECT_DOUBLE_EQ(hhi(district(10, 0, 0, {10})), 1.0);
  EXPECT_DOUBLE_EQ(hhi(district(10, 0, 0, {5, 5})), 0.5);
  EXPECT_NEAR(hhi(district(10, 0, 0, {5, 3, 2})), 0.38, 1e-15);
  // uncovered population is a category of its own
  EXPECT_DOUBLE_EQ(hhi(district(10, 0, 0, {5})), 0.5);
  EXPECT_THROW(hhi(district(10, 0, 0, {})), Error);
}

TEST(MmdDiscrepancy, NetAndFlips) {
  const std::vector<DistrictAggregate> pub{district(200, 100, 51), district(200, 100, 10)};
  EXPECT_EQ(mmd_discrepancy(pub, pub, 0).net, 0);
  const std::vector<DistrictAggregate> ref{district(200, 100, 49), district(200, 100, 10)};
  EXPECT_EQ(mmd_discrepancy(pub, ref, 0).net, 1);
  const std::vector<DistrictAggregate> pub2{district(200, 100, 51), district(200, 100, 49)};
  const std::vector<DistrictAggregate> ref2{district(200, 100, 49), district(200, 100, 51)};
  const auto d = mmd_discrepancy(pub2, ref2, 0);
  EXPECT_EQ(d.net, 0);
  EXPECT_EQ(d.districts_flipped, 2);
}

TEST(Invariance, CommonScalingLeavesMetricsUnchanged) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<DistrictAggregate> a, b;
    const Count scale = 1 + static_cast<Count>(rng.below(9));
    for (int i = 0; i < 5; ++i) {
      const Count pop = 1000 + static_cast<Count>(rng.below(100));
      const Count vap = pop * 3 / 4, bvap = static_cast<Count>(rng.below(vap + 1)), bpop = bvap;
      a.push_back(district(pop, vap, bvap, {bpop}));
      b.push_back(district(pop * scale, vap * scale, bvap * scale, {bpop * scale}));
    }
    EXPECT_NEAR(plan_deviation(a, ideal_population(a)), plan_deviation(b, ideal_population(b)), 1e-12);
    EXPECT_NEAR(court_measure(a), court_measure(b), 1e-12);
    EXPECT_EQ(count_majority(a, 0), count_majority(b, 0));
    for (int i = 0; i < 5; ++i) {
      EXPECT_EQ(margin(a[i], 0) > 0, margin(b[i], 0) > 0);
      EXPECT_NEAR(hhi(a[i]), hhi(b[i]), 1e-12);
    }
  }
}

TEST(DeviationReport, DecompositionWhenIdealsAgree) {
  const std::vector<DistrictAggregate> pub{district(1040), district(960)};
  const std::vector<DistrictAggregate> ref{district(1035), district(965)};
  const auto r = deviation_report(pub, ref);
  ASSERT_TRUE(r.decomposition_applies);
  for (std::size_t i = 0; i < pub.size(); ++i)
    EXPECT_NEAR(r.dev_reference[i], std::abs(r.signed_dev_published[i] + r.err_das[i]), 1e-15);
  const std::vector<DistrictAggregate> drift{district(1035), district(970)};
  EXPECT_FALSE(deviation_report(pub, drift).decomposition_applies);
}

}  // namespace
}  // namespace redist::metrics
