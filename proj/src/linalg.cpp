#include "resdim/linalg.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "resdim/common.hpp"

namespace resdim {

namespace {
constexpr double kResidualTol = 1e-10;
}

struct SpdSolver::Impl {
  Eigen::SparseMatrix<double> A;
  std::string what;
  bool direct = true;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                           Eigen::IncompleteCholesky<double>>
      cg;

  void check(const Eigen::MatrixXd& B, const Eigen::MatrixXd& X) const {
    for (Eigen::Index j = 0; j < B.cols(); ++j) {
      double bn = B.col(j).norm();
      if (bn == 0) continue;
      double r = (A * X.col(j) - B.col(j)).norm() / bn;
      if (!(r <= kResidualTol))
        throw NumericalFailure(what + ": relative residual " + fmt(r) + " above 1e-10");
    }
  }
};

SpdSolver::SpdSolver(const Eigen::SparseMatrix<double>& A, std::string what, std::size_t direct_limit)
    : impl_(std::make_unique<Impl>()) {
  impl_->A = A;
  impl_->what = std::move(what);
  impl_->direct = static_cast<std::size_t>(A.rows()) <= direct_limit;
  if (A.rows() == 0) return;
  if (impl_->direct) {
    impl_->ldlt.compute(impl_->A);
    if (impl_->ldlt.info() != Eigen::Success)
      throw NumericalFailure(impl_->what + " (" + std::to_string(A.rows()) + " unknowns): factorization failed");
    auto d = impl_->ldlt.vectorD();
    if (d.minCoeff() <= 0)
      throw NumericalFailure(impl_->what + " (" + std::to_string(A.rows()) + " unknowns): non-positive pivot");
  } else {
    impl_->cg.setTolerance(kResidualTol * 0.1);
    impl_->cg.setMaxIterations(20000);
    impl_->cg.compute(impl_->A);
    if (impl_->cg.info() != Eigen::Success)
      throw NumericalFailure(impl_->what + ": preconditioner setup failed");
  }
}

SpdSolver::~SpdSolver() = default;
SpdSolver::SpdSolver(SpdSolver&&) noexcept = default;
SpdSolver& SpdSolver::operator=(SpdSolver&&) noexcept = default;

Eigen::Index SpdSolver::rows() const { return impl_->A.rows(); }

Eigen::VectorXd SpdSolver::solve(const Eigen::VectorXd& b) const {
  if (b.size() == 0) return b;
  Eigen::VectorXd x = impl_->direct ? Eigen::VectorXd(impl_->ldlt.solve(b)) : Eigen::VectorXd(impl_->cg.solve(b));
  impl_->check(b, x);
  return x;
}

Eigen::MatrixXd SpdSolver::solve(const Eigen::MatrixXd& B) const {
  if (B.size() == 0) return B;
  Eigen::MatrixXd X(B.rows(), B.cols());
  if (impl_->direct) {
    X = impl_->ldlt.solve(B);
  } else {
    for (Eigen::Index j = 0; j < B.cols(); ++j) X.col(j) = impl_->cg.solve(B.col(j));
  }
  impl_->check(B, X);
  return X;
}

Eigen::SparseMatrix<double> submatrix(const Eigen::SparseMatrix<double>& A, const std::vector<int>& rows,
                                      const std::vector<int>& cols) {
  std::vector<int> rpos(static_cast<std::size_t>(A.rows()), -1), cpos(static_cast<std::size_t>(A.cols()), -1);
  for (std::size_t i = 0; i < rows.size(); ++i) rpos[static_cast<std::size_t>(rows[i])] = static_cast<int>(i);
  for (std::size_t i = 0; i < cols.size(); ++i) cpos[static_cast<std::size_t>(cols[i])] = static_cast<int>(i);
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) {
      int r = rpos[static_cast<std::size_t>(it.row())], c = cpos[static_cast<std::size_t>(it.col())];
      if (r >= 0 && c >= 0) t.emplace_back(r, c, it.value());
    }
  Eigen::SparseMatrix<double> S(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  S.setFromTriplets(t.begin(), t.end());
  return S;
}

}  // namespace resdim
