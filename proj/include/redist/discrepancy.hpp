#pragma once

// Ensemble-level analyses of how reference data disagree with plans drawn
// on published data: offset sweeps, critical offsets, majority-minority
// discrepancy reports and enacted-plan error tables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "redist/diagnostics.hpp"
#include "redist/error.hpp"
#include "redist/graph.hpp"
#include "redist/metrics.hpp"
#include "redist/parallel.hpp"
#include "redist/recom.hpp"
#include "redist/record.hpp"
#include "redist/rng.hpp"

namespace redist::lab {

// ---------------------------------------------------------------------------
// Offsets

struct RateCount {
  std::uint64_t exceed = 0;
  std::uint64_t plans = 0;
  double rate() const noexcept { return plans == 0 ? 0.0 : static_cast<double>(exceed) / static_cast<double>(plans); }
};

inline bool exceeds_reference(const EnsembleRecord& r, double tau) {
  return metrics::plan_deviation(r.reference(), metrics::ideal_population(r.reference())) > tau;
}

/// Fraction of plans whose reference-data deviation exceeds tau.
inline double discrepancy_rate(std::span<const EnsembleRecord> records, double tau) {
  if (records.empty()) throw Error(ErrorKind::EmptyEnsemble, "no plans");
  RateCount c;
  for (const auto& r : records) c.exceed += exceeds_reference(r, tau), ++c.plans;
  return c.rate();
}

/// Offsets 0, step, 2*step, ... up to max (inclusive, to rounding).
inline std::vector<double> offset_grid(double step, double max) {
  if (!(step > 0)) throw Error(ErrorKind::InvalidArgument, "offset step must be positive");
  if (!(max >= 0)) throw Error(ErrorKind::InvalidArgument, "offset maximum must be nonnegative");
  const auto count = static_cast<std::size_t>(std::floor(max / step + 1e-9)) + 1;
  std::vector<double> grid(count);
  for (std::size_t i = 0; i < count; ++i) grid[i] = static_cast<double>(i) * step;
  return grid;
}

/// What a sweep needs to sample one geography.
struct Geography {
  std::string name;
  const DualGraph* graph = nullptr;
  int k = 1;
  ChainParams chain;  // seed, interval, retries; tolerance and steps set per point
  SeedOptions seeding;
};

enum class SweepMode {
  FreshChain,  // one chain per offset, sampled at tau - delta
  Filter,      // approximate: one chain at tau, plans filtered to tau - delta
};

struct SweepPoint {
  double delta = 0.0;
  std::uint64_t plans = 0;
  std::uint64_t exceed = 0;
  double rate = 0.0;
};

struct SweepResult {
  double tau = 0.0;
  std::vector<SweepPoint> points;
};

/// Seed of the chain for (repetition, grid index); shared by every caller so
/// sweeps and critical-offset scans sample identical chains.
inline std::uint64_t point_seed(std::uint64_t base, std::uint64_t repetition, std::uint64_t grid_index) {
  return splitmix64(splitmix64(base ^ splitmix64(repetition + 1)) ^ (grid_index + 0x5851F42D4C957F2DULL));
}

/// Samples `plans` plans at tolerance tau - delta and counts reference exceedances.
inline RateCount sample_offset(const Geography& geo, double tau, double delta, std::uint64_t plans,
                               std::uint64_t seed) {
  if (geo.graph == nullptr) throw Error(ErrorKind::InvalidArgument, "geography has no graph");
  if (plans == 0) throw Error(ErrorKind::InvalidArgument, "plans per offset must be positive");
  const double tolerance = tau - delta;
  ChainParams params = geo.chain;
  params.tolerance = tolerance;
  params.steps = plans * params.subsample_interval;
  params.rng_seed = seed;
  params.keep_assignments = false;
  Rng seeding = Rng(seed).split(0xC0FFEE);
  Partition start;
  try {
    start = seed_partition(*geo.graph, geo.k, tolerance, seeding, params.balance_dataset(*geo.graph), geo.seeding);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Infeasible) throw;
    throw Error(ErrorKind::Infeasible, geo.name + ": no seed plan at offset " + std::to_string(delta) + " (" +
                                           e.what() + ")");
  }
  RateCount c;
  run_chain(*geo.graph, start, params, [&](const EnsembleRecord& r) {
    c.exceed += exceeds_reference(r, tau);
    ++c.plans;
  });
  return c;
}

/// Discrepancy rate at tau for each offset in `deltas`.
inline SweepResult offset_sweep(const Geography& geo, double tau, std::span<const double> deltas,
                                std::uint64_t plans_per_delta, std::uint64_t seed, int workers = 1,
                                SweepMode mode = SweepMode::FreshChain, std::uint64_t repetition = 0) {
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (deltas[i] < 0 || deltas[i] > tau) throw Error(ErrorKind::InvalidArgument, "offsets must lie in [0, tau]");
    if (i > 0 && deltas[i] <= deltas[i - 1]) throw Error(ErrorKind::InvalidArgument, "offsets must increase");
  }
  SweepResult result{tau, std::vector<SweepPoint>(deltas.size())};
  if (mode == SweepMode::FreshChain) {
    parallel_for(deltas.size(), workers, [&](std::size_t i) {
      const RateCount c = sample_offset(geo, tau, deltas[i], plans_per_delta, point_seed(seed, repetition, i));
      result.points[i] = {deltas[i], c.plans, c.exceed, c.rate()};
    });
    return result;
  }
  // Filter mode: plans whose published deviation fits tau - delta.
  const std::uint64_t s = point_seed(seed, repetition, 0);
  ChainParams params = geo.chain;
  params.tolerance = tau;
  params.steps = plans_per_delta * params.subsample_interval;
  params.rng_seed = s;
  Rng seeding = Rng(s).split(0xC0FFEE);
  const Partition start =
      seed_partition(*geo.graph, geo.k, tau, seeding, params.balance_dataset(*geo.graph), geo.seeding);
  for (std::size_t i = 0; i < deltas.size(); ++i) result.points[i].delta = deltas[i];
  run_chain(*geo.graph, start, params, [&](const EnsembleRecord& r) {
    const double dev = metrics::plan_deviation(r.published(), metrics::ideal_population(r.published()));
    const bool over = exceeds_reference(r, tau);
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      if (dev > tau - deltas[i]) continue;
      ++result.points[i].plans;
      result.points[i].exceed += over;
    }
  });
  for (auto& p : result.points)
    p.rate = p.plans == 0 ? 0.0 : static_cast<double>(p.exceed) / static_cast<double>(p.plans);
  return result;
}

struct CriticalOffsetOptions {
  double threshold = 0.02;
  double step = 0.0005;
  std::optional<double> cap;  // defaults to tau
  int repetitions = 1;
  std::uint64_t plans_per_delta = 10000;
};

struct CriticalOffsetResult {
  double tau = 0.0;
  double threshold = 0.0;
  double step = 0.0;
  std::vector<std::optional<double>> per_repetition;  // nullopt: not found within the grid
  std::vector<std::vector<SweepPoint>> scans;          // points visited per repetition
  double mean = 0.0;
  double stdev = 0.0;  // population standard deviation over repetitions
  bool all_found() const {
    return std::all_of(per_repetition.begin(), per_repetition.end(), [](const auto& d) { return d.has_value(); });
  }
};

/// Smallest grid offset whose discrepancy rate falls below the threshold,
/// scanning delta = 0, step, 2 step, ... Repetitions use independent seeds.
inline CriticalOffsetResult critical_offset(const Geography& geo, double tau, const CriticalOffsetOptions& opt,
                                            std::uint64_t seed, int workers = 1) {
  if (opt.repetitions < 1) throw Error(ErrorKind::InvalidArgument, "repetitions must be at least 1");
  const double cap = opt.cap.value_or(tau);
  if (cap > tau) throw Error(ErrorKind::InvalidArgument, "offset cap exceeds tau");
  const std::vector<double> grid = offset_grid(opt.step, cap);

  CriticalOffsetResult result{tau, opt.threshold, opt.step, {}, {}, 0.0, 0.0};
  result.per_repetition.resize(opt.repetitions);
  result.scans.resize(opt.repetitions);
  parallel_for(static_cast<std::size_t>(opt.repetitions), workers, [&](std::size_t rep) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const RateCount c = sample_offset(geo, tau, grid[i], opt.plans_per_delta, point_seed(seed, rep, i));
      result.scans[rep].push_back({grid[i], c.plans, c.exceed, c.rate()});
      if (c.rate() < opt.threshold) {
        result.per_repetition[rep] = grid[i];
        return;
      }
    }
  });

  std::vector<double> found;
  for (const auto& d : result.per_repetition)
    if (d) found.push_back(*d);
  if (found.empty())
    throw Error(ErrorKind::NotFoundWithinGrid,
                geo.name + ": no offset up to " + std::to_string(cap) + " brings the rate below threshold");
  for (double d : found) result.mean += d;
  result.mean /= static_cast<double>(found.size());
  for (double d : found) result.stdev += (d - result.mean) * (d - result.mean);
  result.stdev = std::sqrt(result.stdev / static_cast<double>(found.size()));
  return result;
}

// ---------------------------------------------------------------------------
// Majority-minority discrepancies

struct MarginBin {
  double lo = 0.0;  // persons, inclusive
  double hi = 0.0;  // persons, exclusive; +/-inf for the tails
  std::uint64_t districts = 0;
  std::uint64_t disagreements = 0;
  double rate() const noexcept {
    return districts == 0 ? 0.0 : static_cast<double>(disagreements) / static_cast<double>(districts);
  }
};

struct MmdReportOptions {
  double bin_width = 50.0;
  double bin_range = 300.0;
  bool dedup_margin_districts = true;  // count each distinct district once in margin bins
};

struct MmdReport {
  std::uint64_t plans = 0;
  double mean_discrepancy = 0.0;
  double nonzero_rate = 0.0;
  std::map<std::pair<int, int>, std::uint64_t> histogram;  // (published MMD, net discrepancy) -> plans
  int max_published = 0;
  bool max_agreement = false;
  std::uint64_t near_max_plans = 0;
  std::uint64_t near_max_inversions = 0;
  double inversion_rate = 0.0;
  std::optional<double> pearson_mmd_discrepancy;
  std::vector<MarginBin> margin_bins;
};

inline MmdReport mmd_report(std::span<const EnsembleRecord> records, int group, const MmdReportOptions& opt = {}) {
  if (records.empty()) throw Error(ErrorKind::EmptyEnsemble, "no plans");
  if (!(opt.bin_width > 0) || !(opt.bin_range > 0)) throw Error(ErrorKind::InvalidArgument, "bad margin bins");
  MmdReport rep;
  rep.plans = records.size();

  std::vector<metrics::MmdDiscrepancy> per_plan;
  per_plan.reserve(records.size());
  std::uint64_t nonzero = 0;
  double sum = 0.0;
  for (const auto& r : records) {
    per_plan.push_back(metrics::mmd_discrepancy(r.published(), r.reference(), group));
    const auto& d = per_plan.back();
    ++rep.histogram[{d.published, d.net}];
    sum += d.net;
    nonzero += d.net != 0;
    rep.max_published = std::max(rep.max_published, d.published);
  }
  rep.mean_discrepancy = sum / static_cast<double>(rep.plans);
  rep.nonzero_rate = static_cast<double>(nonzero) / static_cast<double>(rep.plans);
  for (const auto& d : per_plan) {
    if (d.published == rep.max_published && d.net == 0) rep.max_agreement = true;
    if (d.published == rep.max_published - 1) {
      ++rep.near_max_plans;
      rep.near_max_inversions += d.reference > d.published;
    }
  }
  rep.inversion_rate = rep.near_max_plans == 0 ? 0.0
                                                : static_cast<double>(rep.near_max_inversions) /
                                                      static_cast<double>(rep.near_max_plans);

  std::vector<double> x, y;
  for (const auto& d : per_plan) x.push_back(d.published), y.push_back(d.net);
  try {
    rep.pearson_mmd_discrepancy = diagnostics::pearson(x, y);
  } catch (const Error&) {
    rep.pearson_mmd_discrepancy.reset();
  }

  const int inner = static_cast<int>(std::ceil(2 * opt.bin_range / opt.bin_width));
  rep.margin_bins.push_back({-INFINITY, -opt.bin_range, 0, 0});
  for (int i = 0; i < inner; ++i) {
    const double lo = -opt.bin_range + i * opt.bin_width;
    rep.margin_bins.push_back({lo, std::min(lo + opt.bin_width, opt.bin_range), 0, 0});
  }
  rep.margin_bins.push_back({opt.bin_range, INFINITY, 0, 0});

  std::set<std::vector<Count>> seen;
  for (const auto& r : records) {
    for (int i = 0; i < r.k(); ++i) {
      const DistrictAggregate& pub = r.published()[i];
      const DistrictAggregate& ref = r.reference()[i];
      if (opt.dedup_margin_districts) {
        std::vector<Count> key{pub.pop, pub.vap, ref.pop, ref.vap};
        key.insert(key.end(), pub.group_vap.begin(), pub.group_vap.end());
        key.insert(key.end(), ref.group_vap.begin(), ref.group_vap.end());
        key.insert(key.end(), pub.group_pops.begin(), pub.group_pops.end());
        key.insert(key.end(), ref.group_pops.begin(), ref.group_pops.end());
        if (!seen.insert(std::move(key)).second) continue;
      }
      const double m = metrics::margin(pub, group);
      std::size_t bin;
      if (m < -opt.bin_range) {
        bin = 0;
      } else if (m >= opt.bin_range) {
        bin = rep.margin_bins.size() - 1;
      } else {
        bin = 1 + std::min<std::size_t>(static_cast<std::size_t>(std::floor((m + opt.bin_range) / opt.bin_width)),
                                        static_cast<std::size_t>(inner - 1));
      }
      ++rep.margin_bins[bin].districts;
      rep.margin_bins[bin].disagreements += metrics::is_majority(pub, group) != metrics::is_majority(ref, group);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Enacted plans

struct DistrictError {
  double ideal = 0.0;
  double abs_error = 0.0;  // |err_das| as a fraction of ideal
};

/// |err_das| of every district of a plan, using the published ideal population.
inline std::vector<DistrictError> district_errors(std::span<const DistrictAggregate> published,
                                                  std::span<const DistrictAggregate> reference) {
  const double ideal = metrics::ideal_population(published);
  std::vector<DistrictError> out;
  for (std::size_t i = 0; i < published.size(); ++i)
    out.push_back({ideal, std::abs(metrics::err_das(published[i].pop, reference[i].pop, ideal))});
  return out;
}

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value.
inline double nearest_rank(std::vector<double> values, double percentile) {
  if (values.empty()) throw Error(ErrorKind::InvalidArgument, "percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(percentile / 100.0 * static_cast<double>(values.size()) - 1e-9);
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size()))) - 1;
  return values[idx];
}

struct ErrorBucket {
  std::string label;
  double lo = 0.0;  // ideal population, inclusive
  double hi = 0.0;  // exclusive
  std::uint64_t count = 0;
  double max = 0.0;
  double p98 = 0.0;
  double p90 = 0.0;
};

/// Districts grouped by ideal population into <8k, 8-16k, ..., 256-512k,
/// >=512k (k = 1000 persons), with max, 98th and 90th percentile of |err_das|.
inline std::vector<ErrorBucket> enacted_error_table(std::span<const DistrictError> districts) {
  std::vector<ErrorBucket> buckets;
  buckets.push_back({"<8k", 0.0, 8000.0});
  for (double lo = 8000.0; lo < 512000.0; lo *= 2)
    buckets.push_back({std::to_string(static_cast<int>(lo / 1000)) + "-" + std::to_string(static_cast<int>(2 * lo / 1000)) + "k",
                       lo, 2 * lo});
  buckets.push_back({">=512k", 512000.0, INFINITY});

  std::vector<std::vector<double>> values(buckets.size());
  for (const auto& d : districts) {
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      if (d.ideal >= buckets[b].lo && d.ideal < buckets[b].hi) {
        values[b].push_back(d.abs_error);
        break;
      }
    }
  }
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    buckets[b].count = values[b].size();
    if (values[b].empty()) continue;
    buckets[b].max = *std::max_element(values[b].begin(), values[b].end());
    buckets[b].p98 = nearest_rank(values[b], 98);
    buckets[b].p90 = nearest_rank(values[b], 90);
  }
  return buckets;
}

/// Min, quartiles, max with linear interpolation between order statistics.
struct FiveNumber {
  double min = 0, q25 = 0, q50 = 0, q75 = 0, max = 0;
};

inline FiveNumber five_number_summary(std::vector<double> v) {
  if (v.empty()) throw Error(ErrorKind::InvalidArgument, "summary of empty sample");
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {v.front(), q(0.25), q(0.5), q(0.75), v.back()};
}

}  // namespace redist::lab
