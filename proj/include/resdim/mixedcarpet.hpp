#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "resdim/corner.hpp"
#include "resdim/hierarchy.hpp"

namespace resdim {

// Corner graph G_{n,m}: the level n-m corner graph of the schedule shifted by m.
// Throws CapExceeded when the cell count would pass `cell_cap`.
CornerGraph corner_graph(const Schedule& s, int n, int m, std::int64_t cell_cap = 4'000'000);

// #{m < j <= n : F(j) = 1}
int count_k1(const Schedule& s, int n, int m);
// #{m < j < n : F(j) = 1, F(j+1) = 0}
int count_k2(const Schedule& s, int n, int m);

struct ScaleRow {
  int n = 0, m = 0;
  double tb = 0;  // top-to-bottom set resistance
  double pt = 0;  // corner (1/2,1/2) to corner (-1/2,-1/2)
  int k1 = 0, k2 = 0;
  std::size_t vertices = 0, edges = 0;
};

ScaleRow resistance_scales(const Schedule& s, int n, int m);
ScaleRow resistance_scales(const CornerGraph& g, const Schedule& s, int n, int m);
std::string scales_csv(const std::vector<ScaleRow>& rows);  // n,m,TB,Pt,k1,k2

struct ChainConstant {
  std::string id;
  std::string relation;
  double value = 0;               // least constant over every tested (n,m,...)
  std::vector<double> by_level;   // same, restricted to n <= index
  std::size_t samples = 0;
  bool finite = false;
  bool stable = false;
};

struct ChainOptions {
  std::size_t pair_points = 12;  // points of V_m per level, corners always included
  std::size_t cells = 6;         // sampled w in T_m for the set inequality
  std::uint64_t seed = 1;
  double stability_factor = 1.5;  // allowed growth of a constant from n_max-1 to n_max
};

struct ChainReport {
  int n_max = 0;
  std::vector<ScaleRow> scales;
  std::vector<double> pt;  // (Pt)_n, n = 0..n_max
  std::vector<ChainConstant> constants;
  std::size_t tb_violations = 0;  // pairs with (Pt) < (TB)
  // Band of (R_n/(Pt)_n) / (R_m/(Pt)_m) over sampled pairs of V_m.
  double band_lo = 0, band_hi = 0;
  double band_bound = 0;  // (max constant)^5

  const ChainConstant& constant(const std::string& id) const;
  bool ok() const;
  nlohmann::json to_json() const;
};

ChainReport chain_check(const Schedule& s, int n_max, const ChainOptions& opt = {});

struct EvresFit {
  std::vector<double> sc_pt, vicsek_pt;  // pure (Pt)_n, n = 0..n_pure
  double rho = 0;                        // last pure SC ratio
  double rho_change = 0;                 // relative change of the last two SC ratios
  double vicsek_deviation = 0;           // max |ratio - 3|
  std::vector<ScaleRow> rows;            // schedule rows, 0 <= m < n <= n_mixed
  double offset = 0, log_c = 0;          // least-squares fit of the k2 term
  double log_ca = 0, log_cb = 0;         // bracket from rows with k2 >= 1
  std::vector<double> residuals;
  double max_residual = 0;
  bool model_ok = false;  // max |residual| <= log_cb - log_ca
  int doubling_m = -1;    // least M with (Pt)_{n+M} >= 2 (Pt)_n for all tested n
  double max_step = 0;    // max (Pt)_{n+1}/(Pt)_n on the schedule

  nlohmann::json to_json() const;
};

// Throws std::invalid_argument if n_pure < 3.
EvresFit evres_fit(const Schedule& s, int n_mixed, int n_pure);

// Least n for which some w in T_n has x in phi_w(Q) and y in phi_w(A),
// A = {max(|Re z|, |Im z|) >= 3/2}. Clipped at the hierarchy depth.
DeltaResult delta_pair(const PartitionHierarchy& h, const PlanePoint& x, const PlanePoint& y);

struct QsBin {
  double t_lo = 0, t_hi = 0;
  std::size_t count = 0;
  double max_ratio = 0;
  double envelope = 0;  // running max over bins up to this one
};

struct QsOptions {
  int point_level = 3;
  std::size_t points = 40;
  std::uint64_t seed = 1;
};

struct QSDiagnostic {
  int n = 0;
  double pt = 0;
  std::vector<std::array<double, 2>> scatter;  // (t, ratio)
  std::vector<QsBin> bins;                     // bin edges at powers of 2
  bool finite = false;

  // Envelope value for t, or NaN outside the sampled range.
  double envelope_at(double t) const;
  std::string csv() const;  // t,ratio
};

QSDiagnostic qs_diagnostic(const Schedule& s, int n, const QsOptions& opt = {});
// max over shared bins of |theta_b - theta_a| / theta_a
double envelope_drift(const QSDiagnostic& a, const QSDiagnostic& b);

struct GapInputs {
  static constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
  double vicsek_window_ds = kMissing;  // heat or volume exponent on the Vicsek window
  double sc_window_ds = kMissing;      // upper spectral dimension estimate on the SC window
  double arc_lo = kMissing, arc_hi = kMissing;  // critical-p bracket for SC
  double nstar = kMissing;
  double d2_upper = kMissing;  // p = 2 spectral dimension
  double ds_upper = kMissing;  // heat estimate on the same structure
  double tol = 0.1;
};

struct DimCheck {
  std::string id;
  std::string description;
  bool pass = false;
  bool gating = true;
};

struct DimReport {
  GapInputs inputs;
  double vicsek_value = 0;  // 2 log 5 / log 15
  double threshold = 1.5;
  double sc_lower = 0;  // 1 + log 2 / log 3
  std::string mixed_asymptotic = "window-resolved only";
  std::vector<DimCheck> checks;

  bool ok() const;
  nlohmann::json to_json() const;
};

// Throws std::invalid_argument if any input is missing.
DimReport gap_report(const GapInputs& in);

}  // namespace resdim
