#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "resdim/graph.hpp"
#include "resdim/hierarchy.hpp"

namespace resdim {

// Union of the boundary 4-cycles of all level-n cells, with shared corners identified.
// Every cell side is a unit-conductance edge; sides shared by two cells add up.
struct CornerGraph {
  int level = 0;
  std::int64_t unit = 1;  // lattice coordinates are multiples of 1/unit
  LevelGraph graph;
  std::vector<std::array<std::int64_t, 2>> lattice;
  std::vector<std::array<std::int32_t, 4>> cell_corners;  // per level-n cell

  std::int32_t find(std::int64_t lx, std::int64_t ly) const;
  std::int32_t find(const PlanePoint& p) const;  // -1 if p is not a vertex
  PlanePoint point(std::size_t v) const;

  // Vertices lying in the closed square with the given lattice center and half side.
  std::vector<std::int32_t> in_square(std::int64_t cx, std::int64_t cy, std::int64_t half) const;

 private:
  friend CornerGraph corner_graph_of(const PartitionHierarchy& h, int level);
  std::int64_t key(std::int64_t lx, std::int64_t ly) const { return (lx + unit) * (2 * unit + 1) + (ly + unit); }
  std::unordered_map<std::int64_t, std::int32_t> index_;
};

CornerGraph corner_graph_of(const PartitionHierarchy& h, int level);

}  // namespace resdim
