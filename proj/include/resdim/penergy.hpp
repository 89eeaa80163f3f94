#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include <json.hpp>

#include "resdim/graph.hpp"
#include "resdim/hierarchy.hpp"

namespace resdim {

// Separation of the level-(b+k) descendants of w from the descendants of cells at chain
// distance > m_star from w, on the level-(b+k) adjacency graph. Only the neighbourhood that
// can carry a nonzero gradient is materialized.
struct SeparationProblem {
  int base_level = 0;
  int k = 0;
  std::size_t cell = 0;  // w, index at base_level
  std::string address;
  std::string type_key;  // canonical neighbourhood type, shared by equivalent problems
  LevelGraph graph;
  std::vector<std::int32_t> inner, outer;
  bool outer_empty = false;
};

SeparationProblem separation_problem(const PartitionHierarchy& h, int base_level, std::size_t w, int k,
                                     int m_star = 1);

struct PEnergyOptions {
  double gap_tol = 1e-7;  // relative duality gap required for certification
  int max_newton = 400;   // Newton steps summed over the smoothing continuation
  double eps_start = 1e-2;
  double eps_min = 1e-12;
};

struct PEnergyValue {
  double p = 2;
  double value = 0;  // sum over undirected edges of c |f(u) - f(v)|^p at the returned f
  double lower = 0;  // dual lower bound
  double gap = 0;    // (value - lower) / value
  std::vector<double> potential;
  int iterations = 0;
  bool certified = false;
  bool degenerate = false;  // empty outer set, value 0 by convention
  std::string method;
};

// Minimizes sum_e c_e |f(u)-f(v)|^p over f with f = 1 on `inner`, f = 0 on `outer`.
// p >= 1. `warm` optionally seeds the potential (full vertex vector).
PEnergyValue p_energy(const LevelGraph& g, const std::vector<std::int32_t>& inner,
                      const std::vector<std::int32_t>& outer, double p, const PEnergyOptions& opt = {},
                      const std::vector<double>* warm = nullptr);
PEnergyValue p_energy(const SeparationProblem& sp, double p, const PEnergyOptions& opt = {},
                      const std::vector<double>* warm = nullptr);

// Energy of a given f (no constraints applied).
double p_energy_of(const LevelGraph& g, const std::vector<double>& f, double p);

struct ProblemSet {
  int k = 0;
  int horizon = 0;
  bool exhaustive = false;
  std::size_t cells_covered = 0;  // cells whose problem is represented
  std::vector<std::size_t> new_types;  // per base level, types not seen at lower levels
  std::vector<SeparationProblem> problems;
};

// Representatives for every base level 0..horizon. Cells with the same neighbourhood type
// share one problem unless `exhaustive`; for non-uniform schedules the base level is part
// of the type.
ProblemSet separation_family(const Schedule& s, int k, int horizon, bool exhaustive = false, int m_star = 1);

struct SupEnergy {
  double p = 2;
  int k = 0;
  double value = 0;
  std::size_t argmax = 0;
  std::string argmax_cell;  // "level:address"
  std::vector<double> values;
  bool certified = true;
};

// `warm` holds one potential per problem and is updated in place when non-null.
SupEnergy sup_energy(const ProblemSet& set, double p, const PEnergyOptions& opt = {},
                     std::vector<std::vector<double>>* warm = nullptr);

struct RateRow {
  double p = 0;
  std::vector<SupEnergy> sups;  // k = 1..kmax
  double rate = 0;              // least-squares slope of log sup over the tail
  double rate_hi = 0, rate_lo = 0;  // max / min successive slope on the tail
  bool certified = true;
};

// Caches the separation families for k = 1..kmax and the warm starts across p.
class EnergyLadder {
 public:
  EnergyLadder(const Schedule& s, int kmax, int horizon, PEnergyOptions opt = {});

  const RateRow& row(double p);
  int kmax() const { return kmax_; }
  const Schedule& schedule() const { return schedule_; }
  const std::vector<ProblemSet>& families() const { return families_; }
  std::string csv() const;  // p,k,sup_energy,argmax_cell for every computed row

 private:
  Schedule schedule_;
  int kmax_;
  PEnergyOptions opt_;
  std::vector<ProblemSet> families_;
  std::vector<std::vector<std::vector<double>>> warm_;
  std::deque<RateRow> rows_;  // stable references
};

struct CriticalP {
  double lo = 0, hi = 0;  // rate(lo) >= -tol_rate, rate(hi) < -tol_rate
  bool flagged = false;   // no sign change in range, interval widened to the range end
  std::vector<RateRow> table;
  nlohmann::json to_json() const;
};

CriticalP critical_p(EnergyLadder& ladder, double p_lo, double p_hi, double tol, double rate_tol = 1e-9);

struct SpectralDimEstimate {
  double p = 2;
  double rate = 0, rate_hi = 0, rate_lo = 0;
  double nstar = 0;
  double upper = 0, lower = 0, fitted = 0;
  bool degenerate = false;  // rate >= log N_*
  nlohmann::json to_json() const;
};

SpectralDimEstimate p_spectral_dims(EnergyLadder& ladder, double p, double nstar);

struct CellBand {
  std::vector<double> ratio_lo, ratio_hi;  // per base level 1..levels
  double lo = 0, hi = 0;
};

// R_n(K_w, A_w) (Pt)_b / (Pt)_n over sampled cells w of level b = 1..levels on the level-n
// corner graph, with A_w the cells at chain distance > 1 from w.
CellBand cell_resistance_band(const Schedule& s, int levels, int fine_level, std::size_t cells_per_level = 8,
                              std::uint64_t seed = 1);

}  // namespace resdim
