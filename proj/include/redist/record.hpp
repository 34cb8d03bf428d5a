#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "redist/graph.hpp"

namespace redist {

/// One sampled plan as persisted: district tallies for both datasets, plus
/// the full assignment when requested.
struct EnsembleRecord {
  std::uint64_t ordinal = 0;
  std::uint64_t step = 0;
  std::uint32_t subchain = 0;
  std::array<std::vector<DistrictAggregate>, kNumDatasets> districts;
  std::vector<int> assignment;  // empty unless retained

  int k() const noexcept { return static_cast<int>(districts[kPublished].size()); }
  const std::vector<DistrictAggregate>& published() const noexcept { return districts[kPublished]; }
  const std::vector<DistrictAggregate>& reference() const noexcept { return districts[kReference]; }

  bool operator==(const EnsembleRecord&) const = default;
};

using RecordSink = std::function<void(const EnsembleRecord&)>;

inline EnsembleRecord make_record(const Partition& p, std::uint64_t ordinal, std::uint64_t step,
                                  std::uint32_t subchain, bool keep_assignment) {
  EnsembleRecord r;
  r.ordinal = ordinal;
  r.step = step;
  r.subchain = subchain;
  for (int ds = 0; ds < kNumDatasets; ++ds) r.districts[ds] = p.aggregates(ds);
  if (keep_assignment) r.assignment.assign(p.assignment().begin(), p.assignment().end());
  return r;
}

}  // namespace redist
