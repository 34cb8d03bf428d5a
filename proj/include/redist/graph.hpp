#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "redist/error.hpp"

namespace redist {

using Count = std::int64_t;

/// Dataset slots. Every graph carries exactly two: the published data that
/// plans are drawn against, and the reference data they are judged against.
enum Dataset : int { kPublished = 0, kReference = 1 };
inline constexpr int kNumDatasets = 2;

/// Census counts for one unit in one dataset, keyed by open group labels.
struct AttributeRow {
  Count pop = 0;
  Count vap = 0;
  std::map<std::string, Count> group_vap;
  std::map<std::string, Count> group_pops;
};

struct GeoUnit {
  std::string unit_id;
  std::map<std::string, AttributeRow> attrs_by_dataset;
};

/// Group labels in column order. Per-unit and per-district tallies store
/// group counts as vectors aligned with these lists.
struct Schema {
  std::vector<std::string> vap_groups;
  std::vector<std::string> pop_groups;

  int vap_group_index(const std::string& label) const {
    auto it = std::find(vap_groups.begin(), vap_groups.end(), label);
    if (it == vap_groups.end()) throw Error(ErrorKind::UnknownGroup, "no VAP group '" + label + "'");
    return static_cast<int>(it - vap_groups.begin());
  }

  bool operator==(const Schema&) const = default;
};

/// Integer sums of one unit or one district in one dataset.
struct Tally {
  Count pop = 0;
  Count vap = 0;
  std::vector<Count> group_vap;
  std::vector<Count> group_pops;

  static Tally zero(const Schema& schema) {
    Tally t;
    t.group_vap.assign(schema.vap_groups.size(), 0);
    t.group_pops.assign(schema.pop_groups.size(), 0);
    return t;
  }

  Tally& operator+=(const Tally& o) {
    pop += o.pop;
    vap += o.vap;
    for (std::size_t i = 0; i < group_vap.size(); ++i) group_vap[i] += o.group_vap[i];
    for (std::size_t i = 0; i < group_pops.size(); ++i) group_pops[i] += o.group_pops[i];
    return *this;
  }

  Tally& operator-=(const Tally& o) {
    pop -= o.pop;
    vap -= o.vap;
    for (std::size_t i = 0; i < group_vap.size(); ++i) group_vap[i] -= o.group_vap[i];
    for (std::size_t i = 0; i < group_pops.size(); ++i) group_pops[i] -= o.group_pops[i];
    return *this;
  }

  bool operator==(const Tally&) const = default;
};

using DistrictAggregate = Tally;

struct Edge {
  int a = 0;
  int b = 0;
  bool operator==(const Edge&) const = default;
  auto operator<=>(const Edge&) const = default;
};

/// Sizes of the connected components of an undirected graph, largest first.
inline std::vector<int> component_sizes(int num_nodes, std::span<const Edge> edges) {
  std::vector<int> parent(num_nodes);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const Edge& e : edges) parent[find(e.a)] = find(e.b);
  std::map<int, int> sizes;
  for (int v = 0; v < num_nodes; ++v) ++sizes[find(v)];
  std::vector<int> out;
  for (const auto& [root, size] : sizes) out.push_back(size);
  std::sort(out.rbegin(), out.rend());
  return out;
}

/// Immutable adjacency graph of geographic units carrying counts for two
/// datasets. Construct through build_graph.
class DualGraph {
 public:
  int num_units() const noexcept { return static_cast<int>(ids_.size()); }
  int num_edges() const noexcept { return static_cast<int>(edges_.size()); }

  const std::string& unit_id(int u) const { return ids_[u]; }
  std::span<const Edge> edges() const noexcept { return edges_; }

  std::span<const int> neighbors(int u) const noexcept {
    return {adjacency_.data() + offsets_[u], adjacency_.data() + offsets_[u + 1]};
  }

  const Tally& row(int dataset, int u) const { return rows_[dataset][u]; }
  const Tally& total(int dataset) const { return totals_[dataset]; }
  const Schema& schema() const noexcept { return schema_; }

  const std::array<std::string, kNumDatasets>& dataset_labels() const noexcept { return labels_; }

  int dataset_index(const std::string& label) const {
    for (int d = 0; d < kNumDatasets; ++d)
      if (labels_[d] == label) return d;
    throw Error(ErrorKind::UnknownDataset, "no dataset '" + label + "'");
  }

  /// Index of a unit id, or -1.
  int find_unit(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? -1 : it->second;
  }

  /// FNV-1a over ids, counts, and edges; identifies a graph in run manifests.
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }

 private:
  friend DualGraph build_graph(const std::vector<GeoUnit>&, const std::vector<std::pair<int, int>>&,
                               const std::array<std::string, kNumDatasets>&);

  std::vector<std::string> ids_;
  std::unordered_map<std::string, int> index_;
  std::vector<Edge> edges_;
  std::vector<int> offsets_;
  std::vector<int> adjacency_;
  std::array<std::vector<Tally>, kNumDatasets> rows_;
  std::array<Tally, kNumDatasets> totals_;
  std::array<std::string, kNumDatasets> labels_;
  Schema schema_;
  std::uint64_t fingerprint_ = 0;
};

namespace detail {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 0x100000001b3ULL;
    }
  }
  void i64(std::int64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * i));
    bytes(b, 8);
  }
  void str(const std::string& s) {
    i64(static_cast<std::int64_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

inline void check_row(const GeoUnit& unit, const std::string& label, const AttributeRow& r) {
  auto fail = [&](ErrorKind kind, const std::string& what) {
    throw Error(kind, "unit '" + unit.unit_id + "' dataset '" + label + "': " + what);
  };
  if (r.pop < 0 || r.vap < 0) fail(ErrorKind::NegativeCount, "negative pop/vap");
  if (r.vap > r.pop) fail(ErrorKind::InconsistentCounts, "vap exceeds pop");
  for (const auto& [g, c] : r.group_vap) {
    if (c < 0) fail(ErrorKind::NegativeCount, "negative " + g + " vap");
    if (c > r.vap) fail(ErrorKind::InconsistentCounts, g + " vap exceeds vap");
  }
  for (const auto& [g, c] : r.group_pops)
    if (c < 0) fail(ErrorKind::NegativeCount, "negative " + g + " pop");
}

}  // namespace detail

/// Validates units and edges and freezes them into a DualGraph. Group labels
/// are the union over all rows; a label absent from a row counts as zero.
inline DualGraph build_graph(const std::vector<GeoUnit>& units, const std::vector<std::pair<int, int>>& edges,
                             const std::array<std::string, kNumDatasets>& labels) {
  if (units.empty()) throw Error(ErrorKind::InvalidArgument, "graph has no units");
  if (labels[0] == labels[1]) throw Error(ErrorKind::InvalidArgument, "dataset labels must differ");

  DualGraph g;
  g.labels_ = labels;
  const int n = static_cast<int>(units.size());

  std::map<std::string, int> vap_groups, pop_groups;
  for (const GeoUnit& u : units) {
    if (!g.index_.emplace(u.unit_id, static_cast<int>(g.ids_.size())).second)
      throw Error(ErrorKind::DuplicateUnitId, "unit '" + u.unit_id + "' appears twice");
    g.ids_.push_back(u.unit_id);
    for (const std::string& label : labels) {
      auto it = u.attrs_by_dataset.find(label);
      if (it == u.attrs_by_dataset.end())
        throw Error(ErrorKind::MissingDataset, "unit '" + u.unit_id + "' lacks dataset '" + label + "'");
      detail::check_row(u, label, it->second);
      for (const auto& kv : it->second.group_vap) vap_groups.emplace(kv.first, 0);
      for (const auto& kv : it->second.group_pops) pop_groups.emplace(kv.first, 0);
    }
  }
  for (auto& [label, idx] : vap_groups) {
    idx = static_cast<int>(g.schema_.vap_groups.size());
    g.schema_.vap_groups.push_back(label);
  }
  for (auto& [label, idx] : pop_groups) {
    idx = static_cast<int>(g.schema_.pop_groups.size());
    g.schema_.pop_groups.push_back(label);
  }

  for (int d = 0; d < kNumDatasets; ++d) {
    g.totals_[d] = Tally::zero(g.schema_);
    g.rows_[d].reserve(n);
    for (const GeoUnit& u : units) {
      const AttributeRow& r = u.attrs_by_dataset.at(labels[d]);
      Tally t = Tally::zero(g.schema_);
      t.pop = r.pop;
      t.vap = r.vap;
      for (const auto& [label, c] : r.group_vap) t.group_vap[vap_groups.at(label)] = c;
      for (const auto& [label, c] : r.group_pops) t.group_pops[pop_groups.at(label)] = c;
      g.totals_[d] += t;
      g.rows_[d].push_back(std::move(t));
    }
  }

  g.edges_.reserve(edges.size());
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw Error(ErrorKind::DanglingEdge, "edge (" + std::to_string(a) + "," + std::to_string(b) + ") out of range");
    if (a == b) throw Error(ErrorKind::DanglingEdge, "self-loop on unit '" + units[a].unit_id + "'");
    g.edges_.push_back({std::min(a, b), std::max(a, b)});
  }
  std::sort(g.edges_.begin(), g.edges_.end());
  if (auto dup = std::adjacent_find(g.edges_.begin(), g.edges_.end()); dup != g.edges_.end())
    throw Error(ErrorKind::DuplicateEdge,
                "edge '" + units[dup->a].unit_id + "'-'" + units[dup->b].unit_id + "' listed twice");

  const std::vector<int> sizes = component_sizes(n, g.edges_);
  if (sizes.size() > 1) {
    std::string listing;
    for (int s : sizes) listing += (listing.empty() ? "" : ",") + std::to_string(s);
    throw Error(ErrorKind::DisconnectedGraph,
                std::to_string(sizes.size()) + " components of sizes {" + listing + "}");
  }

  std::vector<int> degree(n, 0);
  for (const Edge& e : g.edges_) ++degree[e.a], ++degree[e.b];
  g.offsets_.assign(n + 1, 0);
  for (int u = 0; u < n; ++u) g.offsets_[u + 1] = g.offsets_[u] + degree[u];
  g.adjacency_.resize(g.offsets_[n]);
  std::vector<int> fill(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const Edge& e : g.edges_) {
    g.adjacency_[fill[e.a]++] = e.b;
    g.adjacency_[fill[e.b]++] = e.a;
  }

  detail::Fnv1a h;
  for (const std::string& l : labels) h.str(l);
  for (const std::string& s : g.schema_.vap_groups) h.str(s);
  for (const std::string& s : g.schema_.pop_groups) h.str(s);
  for (int u = 0; u < n; ++u) {
    h.str(g.ids_[u]);
    for (int d = 0; d < kNumDatasets; ++d) {
      const Tally& t = g.rows_[d][u];
      h.i64(t.pop);
      h.i64(t.vap);
      for (Count c : t.group_vap) h.i64(c);
      for (Count c : t.group_pops) h.i64(c);
    }
  }
  for (const Edge& e : g.edges_) h.i64(e.a), h.i64(e.b);
  g.fingerprint_ = h.h;
  return g;
}

/// Assignment of every unit to one of k districts with cached per-district
/// tallies for both datasets. Owned by one chain at a time.
class Partition {
 public:
  Partition() = default;

  Partition(const DualGraph& graph, std::vector<int> assignment, int k) : k_(k), assignment_(std::move(assignment)) {
    if (k < 1) throw Error(ErrorKind::InvalidInputPartition, "k must be positive");
    if (static_cast<int>(assignment_.size()) != graph.num_units())
      throw Error(ErrorKind::InvalidInputPartition, "assignment does not cover every unit");
    sizes_.assign(k, 0);
    for (int d : assignment_) {
      if (d < 0 || d >= k) throw Error(ErrorKind::InvalidInputPartition, "district index out of range");
      ++sizes_[d];
    }
    for (int d = 0; d < k; ++d)
      if (sizes_[d] == 0) throw Error(ErrorKind::InvalidInputPartition, "district " + std::to_string(d) + " is empty");
    for (int ds = 0; ds < kNumDatasets; ++ds) {
      aggregates_[ds].assign(k, Tally::zero(graph.schema()));
      for (int u = 0; u < graph.num_units(); ++u) aggregates_[ds][assignment_[u]] += graph.row(ds, u);
    }
  }

  int k() const noexcept { return k_; }
  int num_units() const noexcept { return static_cast<int>(assignment_.size()); }
  int district_of(int u) const { return assignment_[u]; }
  std::span<const int> assignment() const noexcept { return assignment_; }
  int district_size(int d) const { return sizes_[d]; }

  const std::vector<Tally>& aggregates(int dataset) const { return aggregates_[dataset]; }

  /// Reassigns units and updates the cached tallies incrementally.
  void move_units(const DualGraph& graph, std::span<const int> units, int to) {
    for (int u : units) {
      const int from = assignment_[u];
      if (from == to) continue;
      for (int ds = 0; ds < kNumDatasets; ++ds) {
        aggregates_[ds][from] -= graph.row(ds, u);
        aggregates_[ds][to] += graph.row(ds, u);
      }
      --sizes_[from];
      ++sizes_[to];
      assignment_[u] = to;
    }
  }

  std::vector<std::vector<int>> members() const {
    std::vector<std::vector<int>> out(k_);
    for (int u = 0; u < num_units(); ++u) out[assignment_[u]].push_back(u);
    return out;
  }

  bool operator==(const Partition& o) const { return k_ == o.k_ && assignment_ == o.assignment_; }

 private:
  int k_ = 0;
  std::vector<int> assignment_;
  std::vector<int> sizes_;
  std::array<std::vector<Tally>, kNumDatasets> aggregates_;
};

/// True iff every district induces a connected subgraph.
inline bool contiguity_check(const DualGraph& graph, const Partition& partition) {
  const int n = graph.num_units();
  std::vector<char> seen(n, 0);
  std::vector<int> stack;
  std::vector<char> district_done(partition.k(), 0);
  for (int start = 0; start < n; ++start) {
    const int d = partition.district_of(start);
    if (district_done[d]) continue;
    district_done[d] = 1;
    int reached = 0;
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      ++reached;
      for (int v : graph.neighbors(u)) {
        if (!seen[v] && partition.district_of(v) == d) {
          seen[v] = 1;
          stack.push_back(v);
        }
      }
    }
    if (reached != partition.district_size(d)) return false;
  }
  return true;
}

/// From-scratch district sums for one dataset, indexed by district.
inline std::vector<DistrictAggregate> district_aggregates(const DualGraph& graph, const Partition& partition,
                                                          const std::string& dataset) {
  const int ds = graph.dataset_index(dataset);
  std::vector<DistrictAggregate> out(partition.k(), Tally::zero(graph.schema()));
  for (int u = 0; u < graph.num_units(); ++u) out[partition.district_of(u)] += graph.row(ds, u);
  return out;
}

}  // namespace redist
