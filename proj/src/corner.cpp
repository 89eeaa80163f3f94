#include "resdim/corner.hpp"

#include <stdexcept>

namespace resdim {

std::int32_t CornerGraph::find(std::int64_t lx, std::int64_t ly) const {
  auto it = index_.find(key(lx, ly));
  return it == index_.end() ? -1 : it->second;
}

std::int32_t CornerGraph::find(const PlanePoint& p) const {
  Rational lx = p.x * Rational(unit), ly = p.y * Rational(unit);
  if (lx.den() != 1 || ly.den() != 1) return -1;
  return find(lx.num(), ly.num());
}

PlanePoint CornerGraph::point(std::size_t v) const {
  return {Rational(lattice.at(v)[0], unit), Rational(lattice.at(v)[1], unit)};
}

std::vector<std::int32_t> CornerGraph::in_square(std::int64_t cx, std::int64_t cy, std::int64_t half) const {
  std::vector<std::int32_t> out;
  for (std::size_t v = 0; v < lattice.size(); ++v) {
    if (std::llabs(lattice[v][0] - cx) <= half && std::llabs(lattice[v][1] - cy) <= half)
      out.push_back(static_cast<std::int32_t>(v));
  }
  return out;
}

CornerGraph corner_graph_of(const PartitionHierarchy& h, int level) {
  CornerGraph g;
  g.level = level;
  // Corners of level-n cells are multiples of the level-n half side; coarsen the lattice
  // to 1/(2*3^n) so coordinates stay small.
  std::int64_t hs = h.half_side(level);
  g.unit = h.unit() / hs;
  std::vector<Edge> edges;
  edges.reserve(4 * h.size(level));
  g.cell_corners.resize(h.size(level));
  auto vertex = [&](std::int64_t lx, std::int64_t ly) {
    auto k = g.key(lx, ly);
    auto it = g.index_.find(k);
    if (it != g.index_.end()) return it->second;
    auto id = static_cast<std::int32_t>(g.lattice.size());
    g.index_.emplace(k, id);
    g.lattice.push_back({lx, ly});
    return id;
  };
  for (std::size_t i = 0; i < h.size(level); ++i) {
    const Cell& c = h.cell(level, i);
    std::int64_t x = c.cx / hs, y = c.cy / hs;
    std::array<std::int32_t, 4> q = {vertex(x + 1, y + 1), vertex(x - 1, y + 1), vertex(x - 1, y - 1),
                                     vertex(x + 1, y - 1)};
    g.cell_corners[i] = q;
    for (int s = 0; s < 4; ++s) edges.push_back({q[static_cast<std::size_t>(s)], q[static_cast<std::size_t>((s + 1) % 4)], 1.0});
  }
  g.graph = LevelGraph(g.lattice.size(), edges);
  g.graph.coords.reserve(g.lattice.size());
  for (const auto& p : g.lattice)
    g.graph.coords.push_back({static_cast<double>(p[0]) / static_cast<double>(g.unit),
                              static_cast<double>(p[1]) / static_cast<double>(g.unit)});
  return g;
}

}  // namespace resdim
