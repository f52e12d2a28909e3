#pragma once

#include "kdvb/grid.hpp"

#include <Eigen/SparseCore>

#include <memory>

namespace kdvb {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Difference operators on the pinned-periodic grid.
///
/// The mixed conditions u(0)=u(L)=0, u_x(0)=u_x(L) are realized by a
/// periodic grid of N nodes whose node 0 (== node N) is pinned to zero.
/// Every operator is the principal submatrix of its periodic counterpart
/// with row/column 0 removed, so skewness and symmetry carry over exactly.
class DiscreteOperators {
public:
  explicit DiscreteOperators(const SpatialGrid &grid);

  const SpatialGrid &grid() const noexcept { return grid_; }
  int size() const noexcept { return grid_.interior(); }

  /// Central first difference, skew-symmetric.
  const SparseMatrix &d1() const noexcept { return d1_; }
  /// Second difference, symmetric negative definite.
  const SparseMatrix &d2() const noexcept { return d2_; }
  /// Central third difference, skew-symmetric.
  const SparseMatrix &d3() const noexcept { return d3_; }
  /// Forward difference onto the N periodic edges; D2 = -D1p^T D1p.
  const SparseMatrix &d1_forward() const noexcept { return d1p_; }
  const SparseMatrix &identity() const noexcept { return eye_; }

  /// Trapezoid weights of the interior nodes (all equal to h).
  const Vector &quadrature() const noexcept { return quad_; }

  /// Solves (I - D2) u = f. Used by the discrete H^-1 norm.
  Vector solve_shifted_laplacian(const Vector &f) const;

private:
  SpatialGrid grid_;
  SparseMatrix d1_, d2_, d3_, d1p_, eye_;
  Vector quad_;
  struct Elliptic;
  std::shared_ptr<const Elliptic> elliptic_;
};

DiscreteOperators assemble_operators(const SpatialGrid &grid);

/// h * <(-D3 + nu0 D2) u, u>; equals -nu0 * h * |D1p u|^2.
double dissipativity_pairing(const DiscreteOperators &ops, double nu0,
                             const Vector &u);

/// Linearization of the convective term: B(w)u discretizes (w u)_x as
/// (2 D1(w u) + w D1 u + (D1 w) u) / 3, so that N(u) = B(u)u / 2.
SparseMatrix convection_matrix(const DiscreteOperators &ops, const Vector &w);

/// Energy-conserving split of u u_x: (D1(u^2) + u D1 u) / 3,
/// with <N(u), u> = 0 exactly.
Vector convection_term(const DiscreteOperators &ops, const Vector &u);

/// Level-wise convection_term of a whole field.
Field convection_term(const DiscreteOperators &ops, const Field &u);

} // namespace kdvb
