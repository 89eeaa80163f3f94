#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Sparse>

namespace resdim {

// Symmetric positive definite sparse solve. Direct LDLT up to `direct_limit` unknowns,
// incomplete-Cholesky preconditioned CG above. Every solve is checked against a relative
// residual of 1e-10 and throws NumericalFailure otherwise.
class SpdSolver {
 public:
  explicit SpdSolver(const Eigen::SparseMatrix<double>& A, std::string what = "SPD block",
                     std::size_t direct_limit = 200'000);
  ~SpdSolver();
  SpdSolver(SpdSolver&&) noexcept;
  SpdSolver& operator=(SpdSolver&&) noexcept;

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;
  Eigen::Index rows() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Rows/columns `keep` of a square sparse matrix, in that order.
Eigen::SparseMatrix<double> submatrix(const Eigen::SparseMatrix<double>& A, const std::vector<int>& rows,
                                      const std::vector<int>& cols);

}  // namespace resdim
