#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "resdim/rational.hpp"

namespace resdim {

enum class RuleTag { SC, Vicsek };

struct SubdivisionRule {
  RuleTag tag;
  std::vector<int> alphabet;

  static const SubdivisionRule& get(RuleTag tag);
  std::string name() const;
};

RuleTag parse_rule(const std::string& name);

// Fixed point p_i of the i-th similitude, doubled so each coordinate is -1, 0 or 1.
std::array<int, 2> fixed_point2(int letter);

// 1 iff k^2 (k-1) < n <= k^3 for some positive integer k. Throws for n < 1.
int schedule_F(int n);

// Level -> subdivision rule. Levels are 1-based.
class Schedule {
 public:
  static Schedule pure(RuleTag tag);
  static Schedule mixed();
  static Schedule table(std::vector<int> F);

  RuleTag rule(int level) const;
  int F(int level) const { return rule(level) == RuleTag::SC ? 1 : 0; }
  bool defined(int level) const;
  int branching(int level) const { return static_cast<int>(SubdivisionRule::get(rule(level)).alphabet.size()); }
  // Schedule whose level n is this schedule's level n + m.
  Schedule shifted(int m) const;
  // True when every level uses the same rule, so level-k structure does not depend on where it starts.
  bool uniform() const { return kind_ == Kind::Pure; }
  std::string name() const;

 private:
  enum class Kind { Pure, Mixed, Table };
  Kind kind_ = Kind::Pure;
  RuleTag pure_ = RuleTag::SC;
  std::vector<int> table_;
  int offset_ = 0;
};

struct Cell {
  std::int32_t parent = -1;
  std::int32_t first_child = -1;
  std::uint8_t letter = 0;
  std::int64_t cx = 0, cy = 0;  // lattice units of 1/(2*3^depth)
};

struct PlanePoint {
  Rational x, y;
};

struct CellRef {
  int level = 0;
  std::size_t index = 0;
  friend bool operator==(const CellRef&, const CellRef&) = default;
};

struct HierarchyOptions {
  std::int64_t cell_cap = 4'000'000;  // cells at the deepest level
};

class PartitionHierarchy {
 public:
  PartitionHierarchy(Schedule schedule, int depth, HierarchyOptions opts = {});

  const Schedule& schedule() const { return schedule_; }
  int depth() const { return depth_; }
  std::int64_t unit() const { return unit_; }  // lattice denominator 2*3^depth
  std::int64_t half_side(int level) const;     // in lattice units
  std::size_t size(int level) const;
  const Cell& cell(int level, std::size_t i) const;
  int branching(int level) const;  // children per level-(level-1) cell

  std::string address(int level, std::size_t i) const;
  std::optional<std::size_t> find(const std::string& address) const;
  std::size_t ancestor(int level, std::size_t i, int target_level) const;

  std::array<std::int64_t, 2> marker_lattice(int level, std::size_t i) const;
  PlanePoint center(int level, std::size_t i) const;
  PlanePoint marker(int level, std::size_t i) const;
  PlanePoint to_plane(std::int64_t lx, std::int64_t ly) const;

  // Grid position (column, row) of a cell inside the 3^n x 3^n grid of level n.
  std::array<std::int64_t, 2> grid_pos(int level, std::size_t i) const;
  std::optional<std::size_t> at_grid(int level, std::int64_t gx, std::int64_t gy) const;

  // Closed cells of level n containing p (up to four when p lies on cell boundaries).
  std::vector<std::size_t> cells_containing(const PlanePoint& p, int level) const;

  std::vector<std::size_t> descendants(int level, std::size_t i, int target_level) const;

 private:
  void check_level(int level) const;

  Schedule schedule_;
  int depth_;
  std::int64_t unit_;
  std::vector<std::vector<Cell>> levels_;
  std::vector<std::array<std::int64_t, 2>> marker_offset_;
  std::vector<std::vector<std::int32_t>> dense_grid_;
  std::vector<std::unordered_map<std::int64_t, std::int32_t>> sparse_grid_;
};

struct AdjacencyGraph {
  int level = 0;
  std::vector<std::vector<std::int32_t>> adj;

  std::size_t num_vertices() const { return adj.size(); }
  std::size_t num_edges() const;
  int max_degree() const;
  // Breadth-first distances from a source set, cut off beyond max_dist (-1 = unreached).
  std::vector<int> distances(const std::vector<std::size_t>& sources, int max_dist) const;
};

AdjacencyGraph adjacency(const PartitionHierarchy& h, int n);

struct DeltaResult {
  int value = 0;
  bool clipped = false;
};

DeltaResult delta_level(const PartitionHierarchy& h, const PlanePoint& x, const PlanePoint& y, int m);

struct FrameworkReport {
  int depth = 0;
  double zeta = 1.0 / 3.0;
  double xi = 1.0 / 6.0;
  int m_star = 1;
  double diam_ratio_min = 0, diam_ratio_max = 0;
  int l_star = 0;
  std::size_t band_pairs = 0;
  double band_lo = 0, band_hi = 0;  // rho(x,y) * zeta^{-Delta}
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

FrameworkReport validate_framework(const PartitionHierarchy& h, int depth, std::size_t band_samples = 1000,
                                   std::uint64_t seed = 1);

struct NStarEstimate {
  std::vector<double> sup_counts;  // sup_w #descendants k levels down, index k-1
  std::vector<double> roots;       // sup_counts^{1/k}
  double nstar = 0;
  bool submultiplicative = true;
  int horizon = 0;
};

NStarEstimate nstar_estimate(const Schedule& s, int kmax, int horizon);

nlohmann::json hierarchy_json(const PartitionHierarchy& h, int max_level);
std::string edges_csv(const PartitionHierarchy& h, int max_level);

}  // namespace resdim
