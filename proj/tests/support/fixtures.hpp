#pragma once

// Synthetic geographies shared by the unit and acceptance suites.

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "redist/graph.hpp"
#include "redist/rng.hpp"

namespace redist::testing {

inline const std::array<std::string, kNumDatasets> kLabels{"DEMO", "SWAP"};

/// Attribute rows for (row, col) in both datasets.
using CellFn = std::function<std::pair<AttributeRow, AttributeRow>(int row, int col)>;

inline std::vector<std::pair<int, int>> grid_edges(int rows, int cols) {
  std::vector<std::pair<int, int>> edges;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int u = r * cols + c;
      if (c + 1 < cols) edges.emplace_back(u, u + 1);
      if (r + 1 < rows) edges.emplace_back(u, u + cols);
    }
  return edges;
}

inline std::vector<GeoUnit> grid_units(int rows, int cols, const CellFn& cell) {
  std::vector<GeoUnit> units;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      auto [pub, ref] = cell(r, c);
      units.push_back({"r" + std::to_string(r) + "c" + std::to_string(c), {{kLabels[0], pub}, {kLabels[1], ref}}});
    }
  return units;
}

inline DualGraph make_grid(int rows, int cols, const CellFn& cell) {
  return build_graph(grid_units(rows, cols, cell), grid_edges(rows, cols), kLabels);
}

inline AttributeRow row(Count pop, Count vap, Count group_vap = 0, Count group_pop = 0) {
  AttributeRow r;
  r.pop = pop;
  r.vap = vap;
  r.group_vap["black"] = group_vap;
  r.group_pops["black"] = group_pop;
  r.group_pops["other"] = pop - group_pop;
  return r;
}

/// Every unit pop 1 in both datasets.
inline DualGraph unit_grid(int rows, int cols) {
  return make_grid(rows, cols, [](int, int) { return std::pair{row(1, 1), row(1, 1)}; });
}

/// Published populations drawn around `mean_pop`; reference = published plus
/// Gaussian noise of `noise_sd` persons, rounded. Group counts are random.
inline DualGraph noisy_grid(int rows, int cols, Count mean_pop, double noise_sd, std::uint64_t seed) {
  Rng rng(seed);
  return make_grid(rows, cols, [&](int, int) {
    const Count pop = mean_pop + static_cast<Count>(rng.below(static_cast<std::uint64_t>(mean_pop / 5 + 1))) - mean_pop / 10;
    const Count noise = static_cast<Count>(std::llround(rng.normal(0.0, noise_sd)));
    const Count ref_pop = std::max<Count>(1, pop + noise);
    const Count vap = pop * 3 / 4;
    const Count bvap = static_cast<Count>(rng.below(static_cast<std::uint64_t>(vap + 1)));
    const Count ref_vap = ref_pop * 3 / 4;
    const Count ref_bvap = std::min(ref_vap, std::max<Count>(0, bvap + static_cast<Count>(std::llround(rng.normal(0.0, noise_sd / 2)))));
    const Count bpop = std::min(pop, bvap * 4 / 3);
    const Count ref_bpop = std::min(ref_pop, ref_bvap * 4 / 3);
    return std::pair{row(pop, vap, bvap, bpop), row(ref_pop, ref_vap, ref_bvap, ref_bpop)};
  });
}

/// 6x6 grid, every unit pop 10 and vap 10, group VAP planted so that at
/// most 2 of 3 balanced districts can hold a strict majority; 502 of the
/// 264,500 plans with 12-unit districts reach 2.
inline constexpr std::array<int, 36> kPlantedGroupVap{
    4, 3, 8, 0, 4,  3,  //
    4, 4, 6, 1, 10, 7,  //
    4, 8, 5, 5, 6,  7,  //
    4, 0, 9, 8, 4,  1,  //
    0, 5, 0, 0, 9,  6,  //
    1, 8, 2, 0, 1,  5};

inline DualGraph planted_grid() {
  return make_grid(6, 6, [](int r, int c) {
    const Count g = kPlantedGroupVap[r * 6 + c];
    return std::pair{row(10, 10, g, g), row(10, 10, g, g)};
  });
}

}  // namespace redist::testing
