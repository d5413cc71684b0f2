// core_ops.hpp: dense complex linear algebra shared by every module:
// validated operator types, commutators, Hermitian spectral decomposition,
// exponentials of Hermitian generators, and column-stacking superoperators.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace stochlind {

using cplx = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr cplx I_unit{0.0, 1.0};

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

// A value failed a domain-type invariant (Hermiticity, trace, positivity...).
struct InvariantError : Error {
  using Error::Error;
};

// Numerical failure during a computation; carries the step index when known.
struct NumericalError : Error {
  explicit NumericalError(const std::string& what,
                          std::optional<std::size_t> step_index = std::nullopt)
      : Error(step_index ? what + " (step " + std::to_string(*step_index) + ")" : what),
        step(step_index) {}
  std::optional<std::size_t> step;
};

// ---------------------------------------------------------------------------
// Tolerances. Defaults are the pinned values; callers may override.

struct Tolerances {
  double hermitian_rel = 1e-12;    // ||M - M^dag||_max <= tol * ||M||_max
  double trace = 1e-10;            // |Tr rho - 1|
  double positivity = -1e-8;       // smallest eigenvalue floor
  double degeneracy_rel = 1e-9;    // eigenvalue merging threshold
  double louisell_term = 1e-14;    // series truncation threshold
  int louisell_max_terms = 64;
};

inline double max_abs(const ComplexMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double max_abs(const RealMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline void require_square(const ComplexMatrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw DimensionError(std::string(what) + ": matrix must be square and non-empty");
  }
  if (!m.allFinite()) {
    throw InvariantError(std::string(what) + ": non-finite entries");
  }
}

inline void require_same_dim(const ComplexMatrix& a, const ComplexMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
  }
}

inline double hermiticity_defect(const ComplexMatrix& m) {
  return max_abs(ComplexMatrix(m - m.adjoint()));
}

inline bool is_hermitian(const ComplexMatrix& m, double rel_tol = Tolerances{}.hermitian_rel) {
  const double scale = max_abs(m);
  return hermiticity_defect(m) <= rel_tol * std::max(scale, 1e-300);
}

// ---------------------------------------------------------------------------
// HermitianOperator

class HermitianOperator {
 public:
  explicit HermitianOperator(ComplexMatrix m, double rel_tol = Tolerances{}.hermitian_rel)
      : m_(std::move(m)) {
    require_square(m_, "HermitianOperator");
    if (!is_hermitian(m_, rel_tol)) {
      throw InvariantError("HermitianOperator: matrix is not self-adjoint (defect " +
                           std::to_string(hermiticity_defect(m_)) + ")");
    }
  }

  static HermitianOperator zero(Index dim) { return HermitianOperator(ComplexMatrix::Zero(dim, dim)); }
  static HermitianOperator identity(Index dim) {
    return HermitianOperator(ComplexMatrix::Identity(dim, dim));
  }

  const ComplexMatrix& matrix() const noexcept { return m_; }
  Index dim() const noexcept { return m_.rows(); }

  HermitianOperator scaled(double s) const { return HermitianOperator(ComplexMatrix(s * m_)); }

  // Tr[rho A] for Hermitian rho; imaginary part is roundoff.
  double expectation(const ComplexMatrix& rho) const {
    return (rho.cwiseProduct(m_.transpose())).sum().real();
  }

 private:
  ComplexMatrix m_;
};

// ---------------------------------------------------------------------------
// DensityMatrix

inline double smallest_eigenvalue(const ComplexMatrix& m) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("eigenvalue check failed to converge");
  return es.eigenvalues().minCoeff();
}

class DensityMatrix {
 public:
  explicit DensityMatrix(ComplexMatrix m, const Tolerances& tol = {}) : m_(std::move(m)) {
    require_square(m_, "DensityMatrix");
    if (!is_hermitian(m_, tol.hermitian_rel)) {
      throw InvariantError("DensityMatrix: not Hermitian (defect " +
                           std::to_string(hermiticity_defect(m_)) + ")");
    }
    const double tr = m_.trace().real();
    if (std::abs(tr - 1.0) > tol.trace) {
      throw InvariantError("DensityMatrix: trace " + std::to_string(tr) + " != 1");
    }
    const double lmin = smallest_eigenvalue(m_);
    if (lmin < tol.positivity) {
      throw InvariantError("DensityMatrix: smallest eigenvalue " + std::to_string(lmin) +
                           " below positivity floor");
    }
  }

  static DensityMatrix pure(const ComplexVector& psi, const Tolerances& tol = {}) {
    const double n = psi.norm();
    if (n == 0.0) throw InvariantError("DensityMatrix::pure: zero vector");
    const ComplexVector u = psi / n;
    return DensityMatrix(ComplexMatrix(u * u.adjoint()), tol);
  }

  const ComplexMatrix& matrix() const noexcept { return m_; }
  Index dim() const noexcept { return m_.rows(); }
  double purity() const { return (m_ * m_).trace().real(); }
  double expectation(const HermitianOperator& a) const { return a.expectation(m_); }

 private:
  ComplexMatrix m_;
};

// ---------------------------------------------------------------------------
// Pauli matrices (basis order |0>, |1>).

namespace pauli {
inline ComplexMatrix x() { ComplexMatrix m(2, 2); m << 0, 1, 1, 0; return m; }
inline ComplexMatrix y() { ComplexMatrix m(2, 2); m << 0, -I_unit, I_unit, 0; return m; }
inline ComplexMatrix z() { ComplexMatrix m(2, 2); m << 1, 0, 0, -1; return m; }
}  // namespace pauli

// ---------------------------------------------------------------------------
// Commutators

// C_G[X] = GX - XG
inline ComplexMatrix commutator(const ComplexMatrix& g, const ComplexMatrix& x) {
  require_same_dim(g, x, "commutator");
  return g * x - x * g;
}

// [V,[V,rho]] = V^2 rho - 2 V rho V + rho V^2
inline ComplexMatrix double_commutator_apply(const HermitianOperator& v, const ComplexMatrix& rho) {
  require_same_dim(v.matrix(), rho, "double_commutator_apply");
  const ComplexMatrix& m = v.matrix();
  const ComplexMatrix vr = m * rho;
  const ComplexMatrix rv = rho * m;
  return m * vr - 2.0 * (vr * m) + rv * m;
}

// ---------------------------------------------------------------------------
// Spectral decomposition

// Eigenvalues of a Hermitian operator with degenerate levels merged.
// `basis` holds orthonormal eigenvectors as columns; column c belongs to
// level `column_level[c]`, and projectors[l] = sum over its columns of |v><v|.
struct SpectralDecomposition {
  std::vector<double> eigenvalues;
  std::vector<ComplexMatrix> projectors;
  ComplexMatrix basis;
  std::vector<std::size_t> column_level;

  std::size_t levels() const noexcept { return eigenvalues.size(); }
  Index dim() const noexcept { return basis.rows(); }

  ComplexMatrix reconstruct() const {
    ComplexMatrix out = ComplexMatrix::Zero(dim(), dim());
    for (std::size_t l = 0; l < levels(); ++l) out += eigenvalues[l] * projectors[l];
    return out;
  }

  // Energies per basis column.
  Eigen::VectorXd column_energies() const {
    Eigen::VectorXd e(basis.cols());
    for (Index c = 0; c < basis.cols(); ++c) e(c) = eigenvalues[column_level[c]];
    return e;
  }
};

// Build projectors and levels from an orthonormal basis and per-column values.
// Consecutive columns whose values differ by less than `gap` are merged.
inline SpectralDecomposition group_spectrum(const ComplexMatrix& basis,
                                            const Eigen::VectorXd& values, double gap) {
  const Index n = basis.cols();
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values(a) < values(b); });

  SpectralDecomposition sd;
  sd.basis.resize(basis.rows(), n);
  sd.column_level.resize(static_cast<std::size_t>(n));
  std::vector<std::vector<Index>> members;
  for (Index k = 0; k < n; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    sd.basis.col(k) = basis.col(src);
    const double v = values(src);
    if (k == 0 || v - values(order[static_cast<std::size_t>(k - 1)]) >= gap) {
      members.push_back({});
      sd.eigenvalues.push_back(0.0);
    }
    members.back().push_back(k);
    sd.column_level[static_cast<std::size_t>(k)] = members.size() - 1;
  }
  for (std::size_t l = 0; l < members.size(); ++l) {
    ComplexMatrix p = ComplexMatrix::Zero(basis.rows(), basis.rows());
    double sum = 0.0;
    for (Index k : members[l]) {
      p += sd.basis.col(k) * sd.basis.col(k).adjoint();
      sum += values(order[static_cast<std::size_t>(k)]);
    }
    sd.eigenvalues[l] = sum / static_cast<double>(members[l].size());
    sd.projectors.push_back(std::move(p));
  }
  return sd;
}

inline SpectralDecomposition eigendecompose(const HermitianOperator& h, const Tolerances& tol = {}) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h.matrix());
  if (es.info() != Eigen::Success) {
    throw NumericalError("eigendecompose: eigen-solver did not converge (dim " +
                         std::to_string(h.dim()) + ", ||H||_max " +
                         std::to_string(max_abs(h.matrix())) + ")");
  }
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1.0);
  return group_spectrum(es.eigenvectors(), ev, tol.degeneracy_rel * scale);
}

// exp(-i s H) through the eigendecomposition; exactly unitary up to roundoff.
inline ComplexMatrix expm_hermitian_generator(const HermitianOperator& h, double s) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h.matrix());
  if (es.info() != Eigen::Success) {
    throw NumericalError("expm_hermitian_generator: eigen-solver did not converge");
  }
  const ComplexMatrix& w = es.eigenvectors();
  ComplexVector phases(w.cols());
  for (Index k = 0; k < w.cols(); ++k) phases(k) = std::polar(1.0, -s * es.eigenvalues()(k));
  return w * phases.asDiagonal() * w.adjoint();
}

// Sum_k xi^k/k! C_A^k[B], truncated once a term drops below the threshold.
inline ComplexMatrix louisell_conjugate(const ComplexMatrix& a, const ComplexMatrix& b, cplx xi,
                                        const Tolerances& tol = {}) {
  require_same_dim(a, b, "louisell_conjugate");
  ComplexMatrix term = b;
  ComplexMatrix sum = b;
  const double floor = tol.louisell_term * std::max(1.0, max_abs(b));
  if (xi == cplx{0.0, 0.0}) return sum;
  for (int k = 1; k <= tol.louisell_max_terms; ++k) {
    term = (xi / static_cast<double>(k)) * commutator(a, term);
    sum += term;
    if (max_abs(term) < floor) return sum;
  }
  throw NumericalError("louisell_conjugate: nested-commutator series did not converge within " +
                       std::to_string(tol.louisell_max_terms) + " terms");
}

// ---------------------------------------------------------------------------
// Column-stacking vectorization: vec(A X B) = (B^T kron A) vec(X).

inline ComplexVector vec(const ComplexMatrix& m) {
  return Eigen::Map<const ComplexVector>(m.data(), m.size());
}

inline ComplexMatrix unvec(const ComplexVector& v, Index dim) {
  if (v.size() != dim * dim) throw DimensionError("unvec: size is not dim^2");
  return Eigen::Map<const ComplexMatrix>(v.data(), dim, dim);
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Superoperator of X -> A X.
inline ComplexMatrix left_multiplication(const ComplexMatrix& a) {
  return kron(ComplexMatrix::Identity(a.rows(), a.rows()), a);
}

// Superoperator of X -> X B.
inline ComplexMatrix right_multiplication(const ComplexMatrix& b) {
  return kron(b.transpose(), ComplexMatrix::Identity(b.rows(), b.rows()));
}

// Superoperator of C_G.
inline ComplexMatrix commutator_superoperator(const ComplexMatrix& g) {
  return left_multiplication(g) - right_multiplication(g);
}

}  // namespace stochlind
