#ifndef SANDPILE_LINALG_HPP
#define SANDPILE_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "sandpile/errors.hpp"

namespace sandpile {

using Vector = Eigen::VectorXd;

/// Symmetric positive definite sparse matrix (full storage, column major).
struct SparseSPD {
  Eigen::SparseMatrix<double> matrix;

  int dim() const { return static_cast<int>(matrix.rows()); }
};

// Largest |A - A^T| entry relative to the largest |A| entry.
inline double symmetry_defect(const SparseSPD& a) {
  const Eigen::SparseMatrix<double> diff = a.matrix - Eigen::SparseMatrix<double>(a.matrix.transpose());
  double dmax = 0.0, amax = 0.0;
  for (int k = 0; k < diff.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(diff, k); it; ++it)
      dmax = std::max(dmax, std::abs(it.value()));
  for (int k = 0; k < a.matrix.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(a.matrix, k); it; ++it)
      amax = std::max(amax, std::abs(it.value()));
  return amax > 0.0 ? dmax / amax : dmax;
}

enum class SolveMethod { direct_cholesky, conjugate_gradient };

struct SolveOptions {
  SolveMethod method = SolveMethod::direct_cholesky;
  double cg_rel_tol = 1e-10;
  int cg_max_iter = 20000;

  bool operator==(const SolveOptions&) const = default;

  void validate() const {
    if (!(cg_rel_tol > 0.0 && cg_rel_tol < 1.0)) throw InvalidArgument("cg_rel_tol must lie in (0,1)");
    if (cg_max_iter < 1) throw InvalidArgument("cg_max_iter must be at least 1");
  }
};

/// Sparse Cholesky factorization. The fill-reducing ordering and symbolic
/// structure are computed once; `refactor` reuses them for a matrix with the
/// same sparsity pattern and recomputes them when the pattern changes.
class CholeskyFactor {
public:
  CholeskyFactor() = default;
  explicit CholeskyFactor(const SparseSPD& a) { refactor(a); }

  void refactor(const SparseSPD& a) {
    if (!same_pattern(a.matrix)) {
      llt_.analyzePattern(a.matrix);
      outer_.assign(a.matrix.outerIndexPtr(), a.matrix.outerIndexPtr() + a.matrix.outerSize() + 1);
      inner_.assign(a.matrix.innerIndexPtr(), a.matrix.innerIndexPtr() + a.matrix.nonZeros());
    }
    llt_.factorize(a.matrix);
    if (llt_.info() != Eigen::Success)
      throw NumericalError("Cholesky factorization failed: matrix is not positive definite");
    dim_ = a.dim();
  }

  bool ready() const { return dim_ > 0; }
  int dim() const { return dim_; }

  Vector solve(const Vector& b) const {
    if (b.size() != dim_) throw InvalidArgument("Cholesky solve: dimension mismatch");
    Vector x = llt_.solve(b);
    if (llt_.info() != Eigen::Success) throw NumericalError("Cholesky back-substitution failed");
    return x;
  }

private:
  bool same_pattern(const Eigen::SparseMatrix<double>& m) const {
    if (!m.isCompressed()) throw InvalidArgument("CholeskyFactor: matrix must be compressed");
    return m.rows() == dim_ && static_cast<std::size_t>(m.nonZeros()) == inner_.size() &&
           std::equal(outer_.begin(), outer_.end(), m.outerIndexPtr()) &&
           std::equal(inner_.begin(), inner_.end(), m.innerIndexPtr());
  }

  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
  std::vector<int> outer_, inner_;
  int dim_ = 0;
};

struct CgResult {
  Vector x;
  int iterations = 0;
  double rel_residual = 0.0;
};

/// Jacobi-preconditioned conjugate gradients. Stops when ||b - Ax|| <= tol ||b||.
inline CgResult conjugate_gradient(const SparseSPD& a, const Vector& b, double rel_tol, int max_iter,
                                   const std::optional<Vector>& x0 = std::nullopt) {
  const int n = a.dim();
  if (b.size() != n) throw InvalidArgument("CG: dimension mismatch");
  CgResult res;
  res.x = x0 ? *x0 : Vector::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.x.setZero();
    return res;
  }
  Vector diag = a.matrix.diagonal();
  for (int i = 0; i < n; ++i) {
    if (!(diag[i] > 0.0)) throw NumericalError("CG: non-positive diagonal entry " + std::to_string(i));
    diag[i] = 1.0 / diag[i];
  }
  Vector r = b - a.matrix * res.x;
  Vector z = diag.cwiseProduct(r);
  Vector p = z;
  double rz = r.dot(z);
  double rnorm = r.norm();
  Vector ap(n);
  for (int k = 0; k < max_iter; ++k) {
    if (rnorm <= rel_tol * bnorm) {
      res.iterations = k;
      res.rel_residual = rnorm / bnorm;
      return res;
    }
    ap.noalias() = a.matrix * p;
    const double curvature = p.dot(ap);
    if (!(curvature > 0.0)) throw NumericalError("CG: non-positive curvature, matrix is not SPD");
    const double alpha = rz / curvature;
    res.x += alpha * p;
    r -= alpha * ap;
    rnorm = r.norm();
    z = diag.cwiseProduct(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  if (rnorm <= rel_tol * bnorm) {
    res.iterations = max_iter;
    res.rel_residual = rnorm / bnorm;
    return res;
  }
  throw ConvergenceError("CG did not converge in " + std::to_string(max_iter) +
                             " iterations (relative residual " + std::to_string(rnorm / bnorm) + ")",
                         rnorm / bnorm);
}

inline Vector solve_spd(const SparseSPD& a, const Vector& b, const SolveOptions& opts = {}) {
  opts.validate();
  if (b.size() != a.dim()) throw InvalidArgument("solve_spd: dimension mismatch");
  Vector x;
  if (opts.method == SolveMethod::direct_cholesky) {
    x = CholeskyFactor(a).solve(b);
  } else {
    x = conjugate_gradient(a, b, opts.cg_rel_tol, opts.cg_max_iter).x;
  }
#ifndef NDEBUG
  const double tol = opts.method == SolveMethod::direct_cholesky ? 1e-8 : 1.01 * opts.cg_rel_tol;
  if ((a.matrix * x - b).norm() > tol * std::max(b.norm(), 1e-300))
    throw NumericalError("solve_spd: residual check failed");
#endif
  return x;
}

}  // namespace sandpile

#endif  // SANDPILE_LINALG_HPP
