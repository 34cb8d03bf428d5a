#pragma once

// Merge-split recombination (ReCom) chain over partitions of a DualGraph.
//
// One step: pick a uniformly random edge of the district adjacency graph,
// merge its two districts, draw a spanning tree of the merged region as the
// minimum spanning tree under i.i.d. uniform edge weights, and cut a
// uniformly random tree edge whose two sides both fall within tolerance of
// the ideal population. If no tree among max_cut_retries draws has such an
// edge the chain stays put for that step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "redist/error.hpp"
#include "redist/graph.hpp"
#include "redist/metrics.hpp"
#include "redist/record.hpp"
#include "redist/rng.hpp"

namespace redist {

struct ChainParams {
  double tolerance = 0.05;  // fraction of the ideal population
  std::uint64_t steps = 1;
  std::uint64_t subsample_interval = 10;
  std::uint64_t rng_seed = 0;
  int max_cut_retries = 100;
  std::string dataset;  // balance dataset label; empty means the published one
  bool keep_assignments = false;

  void validate() const {
    if (!(tolerance >= 0 && tolerance < 1)) throw Error(ErrorKind::InvalidArgument, "tolerance must lie in [0, 1)");
    if (steps < 1) throw Error(ErrorKind::InvalidArgument, "steps must be at least 1");
    if (subsample_interval < 1) throw Error(ErrorKind::InvalidArgument, "subsample_interval must be at least 1");
    if (max_cut_retries < 1) throw Error(ErrorKind::InvalidArgument, "max_cut_retries must be at least 1");
  }

  int balance_dataset(const DualGraph& graph) const {
    return dataset.empty() ? static_cast<int>(kPublished) : graph.dataset_index(dataset);
  }
};

/// Spanning tree over a node subset, rooted at the lowest-indexed unit.
/// Local index i refers to nodes[i]; parent[root] == -1.
struct SpanningTree {
  std::vector<int> nodes;
  std::vector<int> parent;
  std::vector<int> order;  // root first, every parent before its children
  std::vector<Count> subtree_pop;

  int size() const noexcept { return static_cast<int>(nodes.size()); }
  Count total_pop() const noexcept { return subtree_pop.empty() ? 0 : subtree_pop[order.front()]; }

  /// Graph units on the child side of the tree edge (child, parent[child]).
  std::vector<int> subtree_units(int child) const {
    std::vector<char> inside(nodes.size(), 0);
    inside[child] = 1;
    std::vector<int> out;
    for (int v : order) {
      if (v != child && (parent[v] < 0 || !inside[parent[v]])) continue;
      inside[v] = 1;
      out.push_back(nodes[v]);
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

namespace detail {

inline bool within_tolerance(double pop, double ideal, double tolerance) {
  return std::abs(pop - ideal) / ideal <= tolerance;
}

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

}  // namespace detail

/// Random spanning tree of the subgraph induced by `nodes` (random-weight MST).
inline SpanningTree random_spanning_tree(const DualGraph& graph, std::span<const int> nodes, Rng& rng,
                                         int dataset = kPublished) {
  SpanningTree tree;
  tree.nodes.assign(nodes.begin(), nodes.end());
  std::sort(tree.nodes.begin(), tree.nodes.end());
  const int m = tree.size();
  if (m == 0) throw Error(ErrorKind::DisconnectedSubset, "empty node subset");

  std::vector<int> local(graph.num_units(), -1);
  for (int i = 0; i < m; ++i) local[tree.nodes[i]] = i;

  struct WeightedEdge {
    std::uint64_t weight;
    int a, b;
  };
  std::vector<WeightedEdge> edges;
  for (int i = 0; i < m; ++i)
    for (int v : graph.neighbors(tree.nodes[i]))
      if (const int j = local[v]; j > i) edges.push_back({rng(), i, j});
  std::sort(edges.begin(), edges.end(), [](const WeightedEdge& x, const WeightedEdge& y) {
    return std::tie(x.weight, x.a, x.b) < std::tie(y.weight, y.a, y.b);
  });

  detail::DisjointSets sets(m);
  std::vector<std::vector<int>> adj(m);
  int joined = 0;
  for (const WeightedEdge& e : edges) {
    if (!sets.unite(e.a, e.b)) continue;
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
    if (++joined == m - 1) break;
  }
  if (joined != m - 1) throw Error(ErrorKind::DisconnectedSubset, "node subset does not induce a connected subgraph");

  tree.parent.assign(m, -1);
  tree.order.reserve(m);
  tree.order.push_back(0);
  std::vector<char> seen(m, 0);
  seen[0] = 1;
  for (std::size_t head = 0; head < tree.order.size(); ++head) {
    const int u = tree.order[head];
    for (int v : adj[u]) {
      if (seen[v]) continue;
      seen[v] = 1;
      tree.parent[v] = u;
      tree.order.push_back(v);
    }
  }
  tree.subtree_pop.assign(m, 0);
  for (int i = 0; i < m; ++i) tree.subtree_pop[i] = graph.row(dataset, tree.nodes[i]).pop;
  for (int i = m - 1; i > 0; --i) {
    const int v = tree.order[i];
    tree.subtree_pop[tree.parent[v]] += tree.subtree_pop[v];
  }
  return tree;
}

/// Tree edges, named by their child endpoint, whose removal leaves two
/// components each within `tolerance` of `ideal`.
inline std::vector<int> find_balanced_cuts(const SpanningTree& tree, double ideal, double tolerance) {
  if (!(ideal > 0)) throw Error(ErrorKind::NonpositiveIdeal, "ideal population must be positive");
  std::vector<int> cuts;
  const Count total = tree.total_pop();
  for (int c = 0; c < tree.size(); ++c) {
    if (tree.parent[c] < 0) continue;
    const Count below = tree.subtree_pop[c];
    if (metrics::deviation(below, ideal) <= tolerance && metrics::deviation(total - below, ideal) <= tolerance)
      cuts.push_back(c);
  }
  return cuts;
}

/// True iff the partition is contiguous and every district is within tolerance.
inline bool is_valid_plan(const DualGraph& graph, const Partition& p, double tolerance, int dataset = kPublished) {
  const double ideal = metrics::ideal_population(graph.total(dataset).pop, p.k());
  return metrics::plan_deviation(p.aggregates(dataset), ideal) <= tolerance && contiguity_check(graph, p);
}

enum class StepResult { Moved, Unchanged };

/// Distinct adjacent district pairs (a < b), sorted.
inline std::vector<std::pair<int, int>> district_adjacency(const DualGraph& graph, const Partition& p) {
  std::vector<std::pair<int, int>> pairs;
  for (const Edge& e : graph.edges()) {
    const int a = p.district_of(e.a), b = p.district_of(e.b);
    if (a != b) pairs.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

/// One ReCom transition applied in place. After a cut the side holding the
/// merged region's lowest-indexed unit keeps the smaller district label.
inline StepResult recom_step(const DualGraph& graph, Partition& partition, const ChainParams& params, Rng& rng) {
  if (partition.num_units() != graph.num_units())
    throw Error(ErrorKind::InvalidInputPartition, "partition does not match graph");
  if (partition.k() < 2) return StepResult::Unchanged;

  const auto pairs = district_adjacency(graph, partition);
  if (pairs.empty()) return StepResult::Unchanged;
  const auto [lo, hi] = pairs[rng.below(pairs.size())];

  std::vector<int> merged;
  merged.reserve(partition.district_size(lo) + partition.district_size(hi));
  for (int u = 0; u < graph.num_units(); ++u) {
    const int d = partition.district_of(u);
    if (d == lo || d == hi) merged.push_back(u);
  }

  const int dataset = params.balance_dataset(graph);
  const double ideal = metrics::ideal_population(graph.total(dataset).pop, partition.k());
  for (int attempt = 0; attempt < params.max_cut_retries; ++attempt) {
    const SpanningTree tree = random_spanning_tree(graph, merged, rng, dataset);
    const std::vector<int> cuts = find_balanced_cuts(tree, ideal, params.tolerance);
    if (cuts.empty()) continue;
    const int child = cuts[rng.below(cuts.size())];
    const std::vector<int> moved = tree.subtree_units(child);
    partition.move_units(graph, merged, lo);
    partition.move_units(graph, moved, hi);
    return StepResult::Moved;
  }
  return StepResult::Unchanged;
}

struct ChainSummary {
  Partition final_partition;
  std::uint64_t records = 0;
  std::uint64_t moved_steps = 0;
};

/// Runs params.steps ReCom steps from `seed`, emitting a record after every
/// subsample_interval-th step. Unchanged steps re-emit the current plan.
inline ChainSummary run_chain(const DualGraph& graph, const Partition& seed, const ChainParams& params,
                              const RecordSink& sink, std::uint32_t subchain = 0, std::uint64_t first_ordinal = 0) {
  params.validate();
  const int dataset = params.balance_dataset(graph);
  if (!is_valid_plan(graph, seed, params.tolerance, dataset))
    throw Error(ErrorKind::InvalidInputPartition, "seed plan is discontiguous or outside tolerance");

  Rng rng(params.rng_seed);
  ChainSummary summary{seed, 0, 0};
  for (std::uint64_t step = 1; step <= params.steps; ++step) {
    if (recom_step(graph, summary.final_partition, params, rng) == StepResult::Moved) ++summary.moved_steps;
    if (step % params.subsample_interval == 0) {
      sink(make_record(summary.final_partition, first_ordinal + summary.records, step, subchain,
                       params.keep_assignments));
      ++summary.records;
    }
  }
  return summary;
}

struct SeedOptions {
  int max_attempts = 50;
  int trees_per_split = 50;
};

/// Recursive balanced tree splitting into k districts. Each split carves off
/// one district within tolerance while leaving a remainder whose average
/// population per remaining district is also within tolerance.
inline Partition seed_partition(const DualGraph& graph, int k, double tolerance, Rng& rng, int dataset = kPublished,
                                SeedOptions options = {}) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be positive");
  if (!(tolerance >= 0 && tolerance < 1)) throw Error(ErrorKind::InvalidArgument, "tolerance must lie in [0, 1)");
  const int n = graph.num_units();
  if (k > n) throw Error(ErrorKind::Infeasible, "more districts than units");
  if (k == 1) return Partition(graph, std::vector<int>(n, 0), 1);

  const double ideal = metrics::ideal_population(graph.total(dataset).pop, k);
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    std::vector<int> assignment(n, -1);
    std::vector<int> region(n);
    std::iota(region.begin(), region.end(), 0);
    bool failed = false;
    for (int district = 0; district < k - 1 && !failed; ++district) {
      const int remaining = k - district - 1;
      failed = true;
      for (int t = 0; t < options.trees_per_split; ++t) {
        const SpanningTree tree = random_spanning_tree(graph, region, rng, dataset);
        const Count total = tree.total_pop();
        // (child, carve the subtree side?) candidates
        std::vector<std::pair<int, bool>> candidates;
        for (int c = 0; c < tree.size(); ++c) {
          if (tree.parent[c] < 0) continue;
          const Count below = tree.subtree_pop[c];
          // Units on each side are not tracked per edge; size is checked after the pick.
          const auto fits = [&](Count piece, Count rest) {
            return metrics::deviation(piece, ideal) <= tolerance &&
                   detail::within_tolerance(static_cast<double>(rest) / remaining, ideal, tolerance);
          };
          if (fits(below, total - below)) candidates.emplace_back(c, true);
          if (fits(total - below, below)) candidates.emplace_back(c, false);
        }
        while (!candidates.empty()) {
          const std::size_t pick = rng.below(candidates.size());
          const auto [child, carve_subtree] = candidates[pick];
          std::vector<int> sub = tree.subtree_units(child);
          std::vector<int> piece;
          std::vector<int> rest;
          if (carve_subtree) {
            piece = std::move(sub);
            std::set_difference(region.begin(), region.end(), piece.begin(), piece.end(), std::back_inserter(rest));
          } else {
            rest = std::move(sub);
            std::set_difference(region.begin(), region.end(), rest.begin(), rest.end(), std::back_inserter(piece));
          }
          if (static_cast<int>(rest.size()) < remaining) {
            candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(pick));
            continue;
          }
          for (int u : piece) assignment[u] = district;
          region = std::move(rest);
          failed = false;
          break;
        }
        if (!failed) break;
      }
    }
    if (failed) continue;
    for (int u : region) assignment[u] = k - 1;
    return Partition(graph, std::move(assignment), k);
  }
  throw Error(ErrorKind::Infeasible, "no plan within tolerance " + std::to_string(tolerance) + " found after " +
                                         std::to_string(options.max_attempts) + " attempts");
}

}  // namespace redist
