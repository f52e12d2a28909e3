#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>

namespace kdvb {

using Vector = Eigen::VectorXd;

/// Row-major so that each time level is a contiguous interior slice.
using FieldData =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Uniform nodes x_i = i*h, i = 0..N. Nodes 0 and N are the glue point
/// (pinned to zero); unknowns live on the N-1 interior nodes.
struct SpatialGrid {
  double length = 1.0;
  int cells = 8;
  double h = 0.125;

  int interior() const noexcept { return cells - 1; }
  double node(int i) const noexcept { return i * h; }
};

struct TimeGrid {
  double horizon = 1.0;
  int steps = 8;
  double dt = 0.125;

  int levels() const noexcept { return steps + 1; }
  double time(int n) const noexcept {
    return n == steps ? horizon : n * dt;
  }
  double midpoint(int n) const noexcept { return (n + 0.5) * dt; }
  /// Trapezoid weight of level n.
  double weight(int n) const noexcept {
    return (n == 0 || n == steps) ? 0.5 * dt : dt;
  }
};

SpatialGrid make_grid(double length, int cells);
TimeGrid make_time_grid(double horizon, int steps);

/// Space-time grid function: (M+1) time levels by (N-1) interior nodes.
class Field {
public:
  Field() = default;
  Field(int levels, int interior);
  Field(const SpatialGrid &g, const TimeGrid &tg);
  explicit Field(FieldData values);

  static Field zeros(const SpatialGrid &g, const TimeGrid &tg) {
    return Field(g, tg);
  }

  int levels() const noexcept { return static_cast<int>(values_.rows()); }
  int interior() const noexcept { return static_cast<int>(values_.cols()); }

  auto level(int n) { return values_.row(n); }
  auto level(int n) const { return values_.row(n); }

  double &operator()(int n, int i) { return values_(n, i); }
  double operator()(int n, int i) const { return values_(n, i); }

  FieldData &values() noexcept { return values_; }
  const FieldData &values() const noexcept { return values_; }

  /// Nodal values 0..N of level n with the pinned zeros at both ends.
  Vector with_boundary(int n) const;

  bool all_finite() const { return values_.allFinite(); }
  bool matches(const SpatialGrid &g, const TimeGrid &tg) const noexcept {
    return levels() == tg.levels() && interior() == g.interior();
  }

  Field &operator+=(const Field &o);
  Field &operator-=(const Field &o);
  Field &operator*=(double a);

private:
  FieldData values_;
};

Field operator+(Field a, const Field &b);
Field operator-(Field a, const Field &b);
Field operator*(double a, Field f);

/// Sample f(x, t) on interior nodes and all levels.
template <class F>
Field sample_field(const SpatialGrid &g, const TimeGrid &tg, F &&f) {
  Field out(g, tg);
  for (int n = 0; n < tg.levels(); ++n)
    for (int i = 0; i < g.interior(); ++i)
      out(n, i) = f(g.node(i + 1), tg.time(n));
  return out;
}

template <class F> Vector sample_space(const SpatialGrid &g, F &&f) {
  Vector out(g.interior());
  for (int i = 0; i < g.interior(); ++i)
    out[i] = f(g.node(i + 1));
  return out;
}

/// Composite trapezoid over (0, L) with zero endpoint values.
double quadrature_space(std::span<const double> slice, const SpatialGrid &g);
double quadrature_space(const Vector &slice, const SpatialGrid &g);

/// Discrete L2(0,L) norm of an interior slice.
double l2_space(const Vector &u, const SpatialGrid &g);

struct NormReport {
  double sup_t_L2 = 0.0;
  double L2_Q = 0.0;
  std::optional<double> L2_H1;
  std::optional<double> L2_H2;
  std::optional<double> L2_Hneg1;
};

class DiscreteOperators;

/// Norms of Y^s_T for integer s. `upto_order` 0 leaves L2_H1/L2_H2 empty,
/// 1 fills L2_H1, 2 fills both. L2_Hneg1 is always filled.
NormReport discrete_norms(const Field &f, const DiscreteOperators &ops,
                          const TimeGrid &tg, int upto_order = 2);

/// sup_t L2 + L2(H1): the Y^0 norm used for fixed-point distances.
double y0_norm(const Field &f, const DiscreteOperators &ops,
               const TimeGrid &tg);

/// Trapezoid-in-time L2(Q) norm.
double l2_spacetime(const Field &f, const SpatialGrid &g, const TimeGrid &tg);

} // namespace kdvb
