#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "resdim/graph.hpp"
#include "resdim/hierarchy.hpp"
#include "resdim/measure.hpp"

namespace resdim {

struct FiniteDirichletForm {
  LevelGraph graph;  // conductances already multiplied by the renormalizer
  std::vector<double> mass;
  double renormalizer = 1;

  double total_mass() const;
};

// Throws std::invalid_argument on a nonpositive renormalizer, a size mismatch or a vertex
// without positive mass.
FiniteDirichletForm build_form(const LevelGraph& g, std::vector<double> mass, double renormalizer);
// Level-`level` corner graph with masses from `m`.
FiniteDirichletForm build_form(const PartitionHierarchy& h, int level, const HierMeasure& m, double renormalizer);

// Eigenpairs of the generator M^-1 L. Columns of phi are orthonormal in the mass-weighted
// inner product; lambda is ascending.
struct HeatSpectrum {
  std::vector<double> lambda;
  Eigen::MatrixXd phi;
  std::vector<double> mass;
  std::string solver;  // "dsyevd", or "eigen" when the LAPACK result failed verification

  std::size_t size() const { return lambda.size(); }
  double lambda_max() const { return lambda.back(); }
  double p(double t, std::int32_t x, std::int32_t y) const;
  // p(t,x,x) for every vertex.
  Eigen::VectorXd diagonal(double t) const;
};

// Dense symmetric eigendecomposition, verified by random probes with a fallback solver.
// Throws CapExceeded above `cap` vertices.
std::shared_ptr<const HeatSpectrum> heat_spectrum(const FiniteDirichletForm& f, std::size_t cap = 6000);

struct HeatCurve {
  std::int32_t x = 0;
  std::vector<double> t, p;  // p(t,x,x)
  std::shared_ptr<const HeatSpectrum> spectrum;
};

// Throws std::invalid_argument for nonpositive times.
HeatCurve heat_kernel(std::shared_ptr<const HeatSpectrum> s, std::int32_t x, const std::vector<double>& times);

// Least grid time t = 2^i / lambda_max with max_x p(t,x,x) within `tol` of 1/mu(X).
double mixing_time(const HeatSpectrum& s, double tol = 0.01);

struct HeatWindow {
  double t_lo = 0, t_hi = 0;  // 0 selects [3/lambda_max, 0.5 t_mix]
  bool clip = true;           // clip to the resolved range, otherwise flag points outside it
};

struct HeatDsEstimate {
  double t_lo = 0, t_hi = 0;
  std::vector<double> grid;  // geometric, ratio 2
  std::vector<double> f;     // f(j) = max_{x,s} log(p(s/2^j,x,x)/p(s,x,x)), j = 1..
  double ds = 0;             // 2 inf_j f(j) / (j log 2)
  double ds_fit = 0;         // 2 slope(f) / log 2
  double halving = 0;        // max p(t/2,x,x)/p(t,x,x) on the window
  bool degenerate = false;   // window reaches outside the resolved range
  nlohmann::json to_json() const;
};

// Time window matched to the spatial levels [n_lo, level] of a self-similar structure with
// `branching` equal-mass children: t(n) = branching^-n (Pt)_{level-n} / (Pt)_level, the mass of a
// level-n cell times its renormalized resistance. pt[j] = (Pt)_j for j = 0..level.
HeatWindow matched_window(const std::vector<double>& pt, double branching, int level, int n_lo);

// Sup over `xs` (all vertices when empty). Throws std::invalid_argument if fewer than three
// grid points remain.
HeatDsEstimate ol_ds_heat(const HeatSpectrum& s, const std::vector<std::int32_t>& xs = {}, const HeatWindow& w = {});

struct SlopeRow {
  double t = 0;
  double slope = 0;  // -2 dlog p / dlog t between t and 2t
  bool resolved = true;
};

// Local slopes on the dyadic grid t = 2^i / lambda_max up to the mixing time.
std::vector<SlopeRow> ds_pointwise(const HeatSpectrum& s, std::int32_t x);

struct HeatInvariants {
  std::size_t checks = 0;
  bool monotone = true;
  double floor_gap = 0;  // min p(t,x,x) - 1/mu(X)
  double ck_error = 0;   // max relative Chapman-Kolmogorov error
  double symmetry_error = 0;
  bool ok() const { return monotone && floor_gap >= -1e-10 && ck_error <= 1e-8 && symmetry_error <= 1e-12; }
};

HeatInvariants heat_invariants(const HeatSpectrum& s, std::size_t samples = 12, std::uint64_t seed = 1);

std::string heat_csv(int level, const std::vector<HeatCurve>& curves);  // level,x_id,t,p

}  // namespace resdim
