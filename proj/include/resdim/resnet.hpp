#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "resdim/graph.hpp"
#include "resdim/hierarchy.hpp"

namespace resdim {

enum class ResistanceFlag { Finite, Infinite, Zero };

std::string flag_name(ResistanceFlag f);

struct ResistanceValue {
  double value = 0;
  ResistanceFlag flag = ResistanceFlag::Finite;
  // Optimal potential (1 on A, 0 on B); NaN on vertices outside the components of A and B.
  std::vector<double> potential;
};

// Set-to-set resistance by vertex identification and a grounded Laplacian solve.
ResistanceValue eff_resistance(const LevelGraph& g, const std::vector<std::int32_t>& A,
                               const std::vector<std::int32_t>& B, bool want_potential = false);

// Factorization of a connected graph's Laplacian with one vertex grounded. Sparse Cholesky
// up to kCholeskyLimit vertices, preconditioned conjugate gradients above.
class GroundedSolver {
 public:
  static constexpr std::size_t kCholeskyLimit = 200'000;

  GroundedSolver(const LevelGraph& g, std::int32_t ground);
  ~GroundedSolver();
  GroundedSolver(GroundedSolver&&) noexcept;
  GroundedSolver& operator=(GroundedSolver&&) noexcept;

  // Potential with the ground at 0 for a net-zero current vector b.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  double resistance(std::int32_t x, std::int32_t y) const;
  // Pairwise two-point resistances among S, |S| solves.
  Eigen::MatrixXd resistance_matrix(const std::vector<std::int32_t>& S) const;
  std::size_t size() const { return n_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::size_t n_ = 0;
  std::int32_t ground_ = 0;
};

// Schur complement of the Laplacian onto S.
struct TracedForm {
  std::vector<std::int32_t> vertices;  // S, in the given order
  Eigen::MatrixXd schur;               // Laplacian of the trace
  LevelGraph graph(double drop_below = 0) const;
};

TracedForm trace(const LevelGraph& g, const std::vector<std::int32_t>& S);

// mu(x,y) = conductance between x and y, mu(x,x) = -sum of the row's off-diagonals.
// Throws NumericalFailure if an off-diagonal is below -1e-10 of the diagonal scale;
// smaller negative round-off is clamped to zero.
Eigen::MatrixXd resistance_weights(const TracedForm& t);

struct UnitFlow {
  std::vector<double> flow;  // per edge of g.edges(), positive from edge.u to edge.v
  std::vector<std::int32_t> source, sink;
  double energy = 0;
  ResistanceFlag flag = ResistanceFlag::Finite;
};

// Minimal-energy unit flow computed in the cycle space (mesh currents), which is
// independent of the potential-based solve in eff_resistance.
UnitFlow min_energy_flow(const LevelGraph& g, const std::vector<std::int32_t>& A,
                         const std::vector<std::int32_t>& B);

// Pseudo-inverse based resistance matrix for small connected graphs.
Eigen::MatrixXd dense_resistance_matrix(const LevelGraph& g);

struct LocalizedResistance {
  double alpha = 0;
  double global = 0;
  double local = 0;
  double ratio = 0;  // local / global, infinite if x,y disconnected inside the ball
  std::size_t ball_size = 0;
  ResistanceFlag flag = ResistanceFlag::Finite;
};

LocalizedResistance localized_resistance(const LevelGraph& g, std::int32_t x, std::int32_t y, double alpha);

struct AlphaSweep {
  double alpha = 0;  // smallest passing alpha (0 if none passed)
  std::vector<LocalizedResistance> tried;
};

// Tries alpha = 2, 4, 8, ... up to max_alpha until the ratio is at most 2.
AlphaSweep sweep_alpha(const LevelGraph& g, std::int32_t x, std::int32_t y, double max_alpha = 1024);

// For each n in [n_lo, n_hi]: trace the depth-`fine_level` corner graph onto the corners of
// level-n cells and sum the weights over ordered pairs with one point in each set.
std::vector<double> cross_weight_decay(const PartitionHierarchy& h, const std::vector<CellRef>& A1,
                                       const std::vector<CellRef>& A2, int n_lo, int n_hi, int fine_level);

}  // namespace resdim
