#pragma once

// Short-burst optimization of the majority-minority district count.
//
// Each subchain repeatedly runs a short ReCom burst starting from the best
// plan it has seen so far. Within a burst, a visited plan replaces the best
// whenever its score is at least as high, so ties go to the most recent plan
// and the best score never decreases.

#include <cstdint>
#include <string>
#include <vector>

#include "redist/error.hpp"
#include "redist/graph.hpp"
#include "redist/metrics.hpp"
#include "redist/parallel.hpp"
#include "redist/recom.hpp"
#include "redist/record.hpp"
#include "redist/rng.hpp"

namespace redist {

struct BurstParams {
  int burst_length = 10;
  int num_bursts = 1;
  int num_subchains = 10;
  std::string group;  // VAP group label scored for majorities
  ChainParams chain;  // tolerance, seed, retries; steps and interval unused

  void validate() const {
    if (burst_length < 1 || num_bursts < 1 || num_subchains < 1)
      throw Error(ErrorKind::InvalidArgument, "burst counts must be at least 1");
    if (group.empty()) throw Error(ErrorKind::InvalidArgument, "burst group label is required");
  }
};

/// Number of districts with a strict group majority in the given dataset.
inline int score_mmd(const DualGraph& graph, const Partition& p, int dataset, const std::string& group) {
  return metrics::count_majority(p.aggregates(dataset), graph.schema().vap_group_index(group));
}

struct SubchainOutcome {
  Partition best;
  int best_score = 0;
  std::vector<int> best_after_burst;  // best-so-far score after each burst
  std::vector<EnsembleRecord> records;
};

struct BurstResult {
  Partition best;
  int best_score = 0;
  int best_subchain = 0;
  std::vector<std::vector<int>> best_after_burst;  // [subchain][burst]
  std::uint64_t records = 0;
};

namespace detail {

inline SubchainOutcome run_subchain(const DualGraph& graph, const Partition& seed, const BurstParams& params,
                                    std::uint32_t subchain) {
  const int group = graph.schema().vap_group_index(params.group);
  Rng rng = Rng(params.chain.rng_seed).split(subchain);
  SubchainOutcome out{seed, metrics::count_majority(seed.aggregates(kPublished), group), {}, {}};
  std::uint64_t step = 0;
  for (int burst = 0; burst < params.num_bursts; ++burst) {
    Partition current = out.best;
    for (int s = 0; s < params.burst_length; ++s) {
      recom_step(graph, current, params.chain, rng);
      ++step;
      out.records.push_back(make_record(current, 0, step, subchain, params.chain.keep_assignments));
      const int score = metrics::count_majority(current.aggregates(kPublished), group);
      if (score >= out.best_score) {
        out.best_score = score;
        out.best = current;
      }
    }
    out.best_after_burst.push_back(out.best_score);
  }
  return out;
}

}  // namespace detail

/// Runs num_subchains independent short-burst chains from `seed`. Every
/// visited plan goes to `sink`, ordered by (subchain, step), with ordinals
/// numbered consecutively across the merged stream.
inline BurstResult short_burst_run(const DualGraph& graph, const Partition& seed, const BurstParams& params,
                                   const RecordSink& sink, int workers = 1) {
  params.validate();
  params.chain.validate();
  const int dataset = params.chain.balance_dataset(graph);
  if (!is_valid_plan(graph, seed, params.chain.tolerance, dataset))
    throw Error(ErrorKind::InvalidInputPartition, "seed plan is discontiguous or outside tolerance");
  graph.schema().vap_group_index(params.group);

  std::vector<SubchainOutcome> outcomes(params.num_subchains);
  parallel_for(outcomes.size(), workers, [&](std::size_t i) {
    outcomes[i] = detail::run_subchain(graph, seed, params, static_cast<std::uint32_t>(i));
  });

  BurstResult result;
  result.best_score = -1;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    SubchainOutcome& o = outcomes[i];
    for (EnsembleRecord& r : o.records) {
      r.ordinal = result.records++;
      sink(r);
    }
    if (o.best_score > result.best_score) {
      result.best_score = o.best_score;
      result.best = o.best;
      result.best_subchain = static_cast<int>(i);
    }
    result.best_after_burst.push_back(std::move(o.best_after_burst));
  }
  return result;
}

}  // namespace redist
