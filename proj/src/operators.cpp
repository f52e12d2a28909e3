#include "kdvb/operators.hpp"

#include "kdvb/errors.hpp"

#include <Eigen/SparseCholesky>

#include <vector>

namespace kdvb {

namespace {

using Triplet = Eigen::Triplet<double>;

// Periodic stencil on N nodes, restricted to nodes 1..N-1 (node 0 pinned).
SparseMatrix pinned_periodic(int cells, std::initializer_list<std::pair<int, double>> stencil) {
  const int n = cells - 1;
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(n) * stencil.size());
  for (int j = 1; j < cells; ++j) {
    for (auto [offset, c] : stencil) {
      const int k = ((j + offset) % cells + cells) % cells;
      if (k == 0 || c == 0.0)
        continue;
      trips.emplace_back(j - 1, k - 1, c);
    }
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

} // namespace

struct DiscreteOperators::Elliptic {
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
};

DiscreteOperators::DiscreteOperators(const SpatialGrid &grid) : grid_(grid) {
  if (grid.cells < 8 || !(grid.h > 0.0))
    throw InvalidArgument("invalid spatial grid");
  const int N = grid.cells;
  const int n = N - 1;
  const double h = grid.h;
  const double h2 = h * h;
  const double h3 = h2 * h;

  d1_ = pinned_periodic(N, {{1, 0.5 / h}, {-1, -0.5 / h}});
  d2_ = pinned_periodic(N, {{1, 1.0 / h2}, {0, -2.0 / h2}, {-1, 1.0 / h2}});
  d3_ = pinned_periodic(N, {{2, 0.5 / h3},
                            {1, -1.0 / h3},
                            {-1, 1.0 / h3},
                            {-2, -0.5 / h3}});

  // Edge j joins node j and j+1 (mod N); node 0 is pinned.
  std::vector<Triplet> trips;
  for (int j = 0; j < N; ++j) {
    const int a = j, b = (j + 1) % N;
    if (b != 0)
      trips.emplace_back(j, b - 1, 1.0 / h);
    if (a != 0)
      trips.emplace_back(j, a - 1, -1.0 / h);
  }
  d1p_.resize(N, n);
  d1p_.setFromTriplets(trips.begin(), trips.end());

  eye_.resize(n, n);
  eye_.setIdentity();
  quad_ = Vector::Constant(n, h);

  auto ell = std::make_shared<Elliptic>();
  ell->ldlt.compute(SparseMatrix(eye_ - d2_));
  if (ell->ldlt.info() != Eigen::Success)
    throw FactorizationFailure("factorization of I - D2 failed");
  elliptic_ = std::move(ell);
}

Vector DiscreteOperators::solve_shifted_laplacian(const Vector &f) const {
  if (f.size() != size())
    throw InvalidArgument("length mismatch in elliptic solve");
  Vector u = elliptic_->ldlt.solve(f);
  if (elliptic_->ldlt.info() != Eigen::Success)
    throw SolverError("internal error: elliptic solve failed");
  return u;
}

DiscreteOperators assemble_operators(const SpatialGrid &grid) {
  return DiscreteOperators(grid);
}

double dissipativity_pairing(const DiscreteOperators &ops, double nu0,
                             const Vector &u) {
  if (u.size() != ops.size())
    throw InvalidArgument("length mismatch in dissipativity pairing");
  const Vector au = -(ops.d3() * u) + nu0 * (ops.d2() * u);
  return ops.grid().h * au.dot(u);
}

SparseMatrix convection_matrix(const DiscreteOperators &ops, const Vector &w) {
  if (w.size() != ops.size())
    throw InvalidArgument("length mismatch in convection matrix");
  const Vector dw = ops.d1() * w;
  SparseMatrix W(ops.size(), ops.size());
  W.reserve(Eigen::VectorXi::Constant(ops.size(), 1));
  SparseMatrix DW(ops.size(), ops.size());
  DW.reserve(Eigen::VectorXi::Constant(ops.size(), 1));
  for (int i = 0; i < ops.size(); ++i) {
    W.insert(i, i) = w[i];
    DW.insert(i, i) = dw[i];
  }
  SparseMatrix b = 2.0 * (ops.d1() * W) + W * ops.d1() + DW;
  b *= 1.0 / 3.0;
  return b;
}

Vector convection_term(const DiscreteOperators &ops, const Vector &u) {
  if (u.size() != ops.size())
    throw InvalidArgument("length mismatch in convection term");
  const Vector sq = u.array().square();
  return (ops.d1() * sq + u.cwiseProduct(ops.d1() * u)) / 3.0;
}

Field convection_term(const DiscreteOperators &ops, const Field &u) {
  Field out(u.levels(), u.interior());
  for (int n = 0; n < u.levels(); ++n)
    out.level(n) = convection_term(ops, Vector(u.level(n).transpose())).transpose();
  return out;
}

} // namespace kdvb
