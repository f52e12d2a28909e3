#include "kdvb/grid.hpp"

#include "kdvb/errors.hpp"
#include "kdvb/operators.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kdvb {

SpatialGrid make_grid(double length, int cells) {
  if (!(length > 0.0) || !std::isfinite(length))
    throw InvalidArgument("grid length must be positive, got " +
                          std::to_string(length));
  if (cells < 8)
    throw InvalidArgument("grid needs at least 8 cells, got " +
                          std::to_string(cells));
  return SpatialGrid{length, cells, length / cells};
}

TimeGrid make_time_grid(double horizon, int steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw InvalidArgument("time horizon must be positive, got " +
                          std::to_string(horizon));
  if (steps < 8)
    throw InvalidArgument("time grid needs at least 8 steps, got " +
                          std::to_string(steps));
  return TimeGrid{horizon, steps, horizon / steps};
}

Field::Field(int levels, int interior) : values_(FieldData::Zero(levels, interior)) {}

Field::Field(const SpatialGrid &g, const TimeGrid &tg)
    : Field(tg.levels(), g.interior()) {}

Field::Field(FieldData values) : values_(std::move(values)) {
  if (!values_.allFinite())
    throw InvalidArgument("field contains non-finite values");
}

Vector Field::with_boundary(int n) const {
  Vector out = Vector::Zero(interior() + 2);
  out.segment(1, interior()) = values_.row(n).transpose();
  return out;
}

Field &Field::operator+=(const Field &o) {
  if (o.levels() != levels() || o.interior() != interior())
    throw InvalidArgument("field shape mismatch in +=");
  values_ += o.values_;
  return *this;
}

Field &Field::operator-=(const Field &o) {
  if (o.levels() != levels() || o.interior() != interior())
    throw InvalidArgument("field shape mismatch in -=");
  values_ -= o.values_;
  return *this;
}

Field &Field::operator*=(double a) {
  values_ *= a;
  return *this;
}

Field operator+(Field a, const Field &b) { return a += b; }
Field operator-(Field a, const Field &b) { return a -= b; }
Field operator*(double a, Field f) { return f *= a; }

double quadrature_space(std::span<const double> slice, const SpatialGrid &g) {
  if (static_cast<int>(slice.size()) != g.interior())
    throw InvalidArgument("slice length " + std::to_string(slice.size()) +
                          " does not match N-1 = " +
                          std::to_string(g.interior()));
  double sum = 0.0;
  for (double v : slice)
    sum += v;
  return g.h * sum;
}

double quadrature_space(const Vector &slice, const SpatialGrid &g) {
  return quadrature_space(std::span<const double>(slice.data(), slice.size()),
                          g);
}

double l2_space(const Vector &u, const SpatialGrid &g) {
  return std::sqrt(quadrature_space(Vector(u.array().square()), g));
}

double l2_spacetime(const Field &f, const SpatialGrid &g, const TimeGrid &tg) {
  if (!f.matches(g, tg))
    throw InvalidArgument("field shape does not match grids");
  double sum = 0.0;
  for (int n = 0; n < tg.levels(); ++n)
    sum += tg.weight(n) * g.h * f.level(n).squaredNorm();
  return std::sqrt(sum);
}

NormReport discrete_norms(const Field &f, const DiscreteOperators &ops,
                          const TimeGrid &tg, int upto_order) {
  const SpatialGrid &g = ops.grid();
  if (!f.matches(g, tg))
    throw InvalidArgument("field shape does not match grids");
  if (upto_order < 0 || upto_order > 2)
    throw InvalidArgument("upto_order must be 0, 1 or 2");

  NormReport r;
  double l2q = 0.0, h1 = 0.0, h2 = 0.0, hneg = 0.0;
  for (int n = 0; n < tg.levels(); ++n) {
    const Vector u = f.level(n).transpose();
    const double l2 = g.h * u.squaredNorm();
    r.sup_t_L2 = std::max(r.sup_t_L2, std::sqrt(l2));
    l2q += tg.weight(n) * l2;
    if (upto_order >= 1)
      h1 += tg.weight(n) * (l2 + g.h * (ops.d1_forward() * u).squaredNorm());
    if (upto_order >= 2)
      h2 += tg.weight(n) * (l2 + g.h * (ops.d1_forward() * u).squaredNorm() +
                            g.h * (ops.d2() * u).squaredNorm());
    const Vector w = ops.solve_shifted_laplacian(u);
    hneg += tg.weight(n) * g.h * u.dot(w);
  }
  r.L2_Q = std::sqrt(l2q);
  if (upto_order >= 1)
    r.L2_H1 = std::sqrt(h1);
  if (upto_order >= 2)
    r.L2_H2 = std::sqrt(h2);
  r.L2_Hneg1 = std::sqrt(std::max(hneg, 0.0));
  return r;
}

double y0_norm(const Field &f, const DiscreteOperators &ops,
               const TimeGrid &tg) {
  const SpatialGrid &g = ops.grid();
  double sup = 0.0, h1 = 0.0;
  for (int n = 0; n < tg.levels(); ++n) {
    const Vector u = f.level(n).transpose();
    const double l2 = g.h * u.squaredNorm();
    sup = std::max(sup, l2);
    h1 += tg.weight(n) * (l2 + g.h * (ops.d1_forward() * u).squaredNorm());
  }
  return std::sqrt(sup) + std::sqrt(h1);
}

} // namespace kdvb
