#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "resdim/corner.hpp"
#include "resdim/hierarchy.hpp"
#include "resdim/rational.hpp"

namespace resdim {

// Weight of the child with the given letter of cell `parent` at level `level - 1`, which has
// `siblings` children.
using WeightRule = std::function<Rational(int level, std::size_t parent, int letter, int siblings)>;

// Every child of a level-(n-1) cell gets 1/#children.
WeightRule uniform_rule();

struct HierMeasure {
  int depth = 0;  // deepest level carrying masses
  int step = 1;   // 1, or k for a measure built on the k-step coarsened tree
  std::vector<std::vector<Rational>> mass;  // mass[n][i] = mu(K_w) for w the i-th level-n cell
  std::vector<std::vector<double>> mass_d;

  double total() const { return mass_d.at(0).at(0); }
  const Rational& of(int level, std::size_t i) const { return mass.at(static_cast<std::size_t>(level)).at(i); }
};

// Throws std::invalid_argument if some weight is not positive or the children of a node do
// not sum to 1.
HierMeasure hier_measure(const PartitionHierarchy& h, const WeightRule& rule);

struct BallMass {
  double lo = 0;  // cells inside the closed ball
  double hi = 0;  // cells meeting the closed ball
  double mid() const { return 0.5 * (lo + hi); }
};

// Euclidean ball mass by inner/outer covers with cells of level `resolution` (<= m.depth).
BallMass ball_mass(const PartitionHierarchy& h, const HierMeasure& m, double x, double y, double r, int resolution);

struct DoublingReport {
  double ratio = 0;        // max V(x,2r)/V(x,r) on midpoints
  double ratio_upper = 0;  // max V_hi(x,2r)/V_lo(x,r)
  std::array<double, 2> witness_x{};
  double witness_r = 0;
  double gamma1 = 0;  // least tested gamma with V(x,r/gamma) <= V(x,r)/2 everywhere; 0 if none
  std::size_t samples = 0;
  bool finite = false;
};

// Centers are corners of random level-`m.depth` cells; radii 3^-j for j = 0..levels with
// covers resolved at m.depth. Requires levels + 2 <= m.depth.
DoublingReport doubling_check(const PartitionHierarchy& h, const HierMeasure& m, std::size_t samples, int levels,
                              std::uint64_t seed = 1);

struct PsiMeasure {
  HierMeasure measure;
  Rational base;  // (N_* + eps)^k
  int k = 1;
  std::vector<std::vector<std::size_t>> interior;  // per coarse level n (tree level n*k): chosen descendant per cell
  std::size_t comparability_pairs = 0;
  std::size_t comparability_violations = 0;  // adjacent (w,u) with (base - 1) psi(w) < psi(u)
};

// Weight (1 - (#desc - 1)/base) on one descendant interior to its ancestor and 1/base on the
// others, base = (nstar + eps)^k, on levels 0, k, 2k, ... up to the depth of h.
// Throws std::invalid_argument if eps <= 0, if base < #desc for some cell, or if a cell has no
// interior k-th generation descendant.
PsiMeasure psi_measure(const PartitionHierarchy& h, const Rational& nstar, const Rational& eps, int k);

struct GrowthReport {
  std::vector<double> sup_ratio;  // max V(x,r)/V(x,3^-j r), index j-1
  double exponent = 0;            // least-squares slope of log sup_ratio against j
  double constant = 0;            // max sup_ratio[j-1] / base_per_level^j
};

// Ball-volume growth over radii 3^-n, n = 0..m.depth-2, at sampled centers. jmax <= m.depth-2.
GrowthReport volume_growth(const PartitionHierarchy& h, const HierMeasure& m, int jmax, double base_per_level,
                           std::size_t samples, std::uint64_t seed = 1);

// max over w in T_n, v among its level-(n+k) descendants of mu(K_w)/mu(K_v), over n in [n_lo, n_hi].
double cell_ratio_sup(const HierMeasure& m, const PartitionHierarchy& h, int k, int n_lo, int n_hi);

struct VolumeWindow {
  int n_lo = 0, n_hi = 0;  // levels of the window
  int kmin = 1;            // smallest ratio length used in the sup
};

struct OldsVolume {
  std::vector<double> f;  // log sup volume ratio for k = 1..K (constant zeta tables only)
  std::vector<double> g;  // sup over windows of log volume ratio / log resistance ratio, per k
  double rate = 0;        // inf_k f(k)/k
  double exponent = 0;    // inf_k g(k), equal to rate / log(1/zeta) for a constant table
  double upper = 0;       // 2 / (1 + 1/exponent)
  double pointwise_lo = 0, pointwise_hi = 0;  // range of 2/(1+1/e) over per-point exponents e on the whole window
  bool degenerate = false;  // only one ratio length available

  nlohmann::json to_json() const;
};

// zeta_r[j-1] is the resistance scale of level j relative to level j-1. Cell masses stand in
// for ball volumes. Throws std::invalid_argument if n_hi <= n_lo or the window passes m.depth.
OldsVolume olds_volume(const PartitionHierarchy& h, const HierMeasure& m, const std::vector<double>& zeta_r,
                       const VolumeWindow& w);

struct FeketeLimit {
  double limit = 0;  // inf f(t)/t over the grid
  bool subadditive = true;
  std::size_t violations = 0;
};

// ts increasing and positive. Subadditivity is checked on grid triples t_i + t_j = t_l.
FeketeLimit fekete_limit(const std::vector<double>& ts, const std::vector<double>& fs);

// Cell mass split equally among the cell's four corner vertices.
std::vector<double> vertex_masses(const CornerGraph& cg, const HierMeasure& m);

struct HRow {
  double r = 0;
  double v_lo = 0, v_hi = 0;  // cells with all / some corners in the ball
  double v = 0;               // vertex masses in the ball
  double ol_r = 0;            // max resistance from x inside the ball
  double h_lo = 0, h_hi = 0, h = 0;
};

struct HProfile {
  std::int32_t x = 0;
  std::vector<HRow> rows;
  double gamma2 = 0;  // least tested gamma with h(x,r/gamma) <= h(x,r)/2; 0 if none
  double h_doubling = 0;  // max h(x,2r)/h(x,r) over rows with h > 0

  std::string csv() const;  // x_id,r,V_lo,V_hi,olR,h_lo,h_hi
};

// Resistance-metric profile on the corner graph with resistances divided by `renorm`.
// Radii are geometric with ratio 2 from the least positive resistance to the largest.
// Throws CapExceeded above `cap` vertices.
HProfile h_profile(const CornerGraph& cg, const HierMeasure& m, std::int32_t x, double renorm,
                   std::size_t cap = 3000);

}  // namespace resdim
