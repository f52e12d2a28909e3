#include "kdvb/errors.hpp"
#include "kdvb/random_data.hpp"
#include "kdvb/solvers.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

using namespace kdvb;

namespace {
constexpr double pi = std::numbers::pi;

double spacetime_dot(const Field &a, const Field &b, const SpatialGrid &g,
                     const TimeGrid &tg) {
  double s = 0.0;
  for (int n = 0; n < tg.levels(); ++n)
    s += tg.weight(n) * g.h * a.level(n).dot(b.level(n));
  return s;
}
} // namespace

TEST_CASE("zero data gives the zero field") {
  const SpatialGrid g = make_grid(1.0, 16);
  const TimeGrid tg = make_time_grid(1.0, 16);
  const DiscreteOperators ops(g);
  const Field y = solve_linear_constant(ops, 0.1, Field(g, tg), Vector::Zero(15), tg);
  CHECK(y.values().cwiseAbs().maxCoeff() == 0.0);
  const auto adj = solve_adjoint(ops, CoefficientSet::zero_transport(0.1, g, tg),
                                 Field(g, tg), Vector::Zero(15), tg);
  CHECK(adj.phi.values().cwiseAbs().maxCoeff() == 0.0);
  const NonlinearResult nl = solve_nonlinear(ops, Viscosity::constant(0.1), Field(g, tg),
                                             Vector::Zero(15), tg);
  CHECK(nl.iterations == 1);
  CHECK(nl.y.values().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one step matches a dense theta-scheme step") {
  const SpatialGrid g = make_grid(1.0, 16);
  const TimeGrid tg = make_time_grid(0.1, 8);
  const DiscreteOperators ops(g);
  const Vector y0 = sample_space(g, [](double x) { return std::sin(2 * pi * x); });
  for (double theta : {0.5, 0.75, 1.0}) {
    const Field y = solve_linear_constant(ops, 0.2, Field(g, tg), y0, tg, {theta});
    const Eigen::MatrixXd A = Eigen::MatrixXd(ops.d3()) - 0.2 * Eigen::MatrixXd(ops.d2());
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(15, 15);
    const Vector ref = (I + tg.dt * theta * A).lu().solve((I - tg.dt * (1 - theta) * A) * y0);
    CHECK((Vector(y.level(1).transpose()) - ref).cwiseAbs().maxCoeff() <= 1e-13);
  }
}

TEST_CASE("Crank-Nicolson energy identity holds per step") {
  const SpatialGrid g = make_grid(1.0, 32);
  const TimeGrid tg = make_time_grid(1.0, 32);
  const DiscreteOperators ops(g);
  SmoothRandom rng(5);
  const Vector y0 = rng.initial(g, 1.0);
  const Field y = solve_linear_constant(ops, 0.1, Field(g, tg), y0, tg);
  for (double r : energy_identity_residuals(ops, 0.1, y, tg))
    CHECK(r <= 1e-12);
  for (int n = 0; n < tg.steps; ++n)
    CHECK(y.level(n + 1).norm() <= y.level(n).norm() * (1 + 1e-14));
}

TEST_CASE("forward and adjoint marches satisfy the duality pairing") {
  const SpatialGrid g = make_grid(1.0, 24);
  const TimeGrid tg = make_time_grid(1.0, 20);
  const DiscreteOperators ops(g);
  SmoothRandom rng(9);
  CoefficientSet c = CoefficientSet::zero_transport(0.1, g, tg);
  c.ybar = rng.source(g, tg, 0.4);
  c.nu.nu_tilde = Vector::LinSpaced(tg.levels(), 0.0, 0.05);
  for (double theta : {0.5, 1.0}) {
    const Field f = rng.source(g, tg, 1.0), src = rng.source(g, tg, 1.0);
    const Vector y0 = rng.initial(g, 1.0), phiT = rng.initial(g, 1.0);
    const Field y = solve_linearized(ops, c, f, y0, tg, {theta});
    const auto adj = solve_adjoint(ops, c, src, phiT, tg, {theta});
    const double lhs = spacetime_dot(y, src, g, tg) + g.h * y.level(tg.steps).dot(phiT.transpose());
    const double rhs = spacetime_dot(f, adj.phi, g, tg) + g.h * y0.dot(adj.initial);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * (std::abs(lhs) + std::abs(rhs)));
  }
}

TEST_CASE("viscosity sampling interpolates between levels") {
  Viscosity nu{0.1, Vector::LinSpaced(3, 0.0, 0.2)};
  CHECK(nu.at_level(2) == doctest::Approx(0.3));
  CHECK(nu.at_step(0, 0.5) == doctest::Approx(0.15));
  CHECK(nu.at_step(1, 1.0) == doctest::Approx(0.3));
  const TimeGrid tg = make_time_grid(1.0, 8);
  CHECK_THROWS_AS(nu.validate(tg), InvalidArgument);
  Viscosity bad{0.1, Vector::Constant(9, -1.0)};
  CHECK_THROWS_AS(bad.validate(tg), InvalidArgument);
}

TEST_CASE("constant coefficients share one factorization") {
  const SpatialGrid g = make_grid(1.0, 16);
  const TimeGrid tg = make_time_grid(1.0, 16);
  const DiscreteOperators ops(g);
  LinearizedStepper st(ops, CoefficientSet::zero_transport(0.1, g, tg), tg);
  st.forward(Field(g, tg), Vector::Ones(15));
  CHECK(st.factorization_count() == 1);
  CHECK_THROWS_AS(LinearizedStepper(ops, CoefficientSet::zero_transport(0.1, g, tg), tg, {0.3}),
                  InvalidArgument);
}

TEST_CASE("Picard and semi-implicit solvers agree for small data") {
  const SpatialGrid g = make_grid(1.0, 64);
  const TimeGrid tg = make_time_grid(1.0, 64);
  const DiscreteOperators ops(g);
  SmoothRandom rng(3);
  const Vector y0 = rng.initial(g, 1e-3);
  NonlinearOptions a, b;
  b.mode = NonlinearMode::semi_implicit;
  const Field ya = solve_nonlinear(ops, Viscosity::constant(0.1), Field(g, tg), y0, tg, a).y;
  const Field yb = solve_nonlinear(ops, Viscosity::constant(0.1), Field(g, tg), y0, tg, b).y;
  CHECK(l2_spacetime(ya - yb, g, tg) <= 1e-6);
}

TEST_CASE("large data leaves the contraction ball") {
  const SpatialGrid g = make_grid(1.0, 16);
  const TimeGrid tg = make_time_grid(1.0, 16);
  const DiscreteOperators ops(g);
  const Vector y0 = 1e3 * sample_space(g, [](double x) { return std::sin(2 * pi * x); });
  NonlinearOptions o;
  o.maxit = 20;
  try {
    solve_nonlinear(ops, Viscosity::constant(0.1), Field(g, tg), y0, tg, o);
    FAIL("expected no convergence");
  } catch (const NoConvergence &e) {
    CHECK_FALSE(e.history().empty());
  } catch (const SolverError &) {
    // non-finite iterates are also a divergence report
  }
}

TEST_CASE("uncontrolled trajectory has nonincreasing energy") {
  const SpatialGrid g = make_grid(1.0, 32);
  const TimeGrid tg = make_time_grid(1.0, 64);
  const DiscreteOperators ops(g);
  const Vector yb0 = 0.01 * sample_space(g, [](double x) { return std::sin(2 * pi * x); });
  const NonlinearResult r = uncontrolled_trajectory(ops, Viscosity::constant(0.1), yb0, tg);
  for (int n = 0; n < tg.steps; ++n)
    CHECK(r.y.level(n + 1).norm() <= r.y.level(n).norm() * (1 + 1e-12));
  const NonlinearResult z = uncontrolled_trajectory(ops, Viscosity::constant(0.1), Vector::Zero(31), tg);
  CHECK(z.y.values().cwiseAbs().maxCoeff() == 0.0);
  const NonlinearResult again = uncontrolled_trajectory(ops, Viscosity::constant(0.1), yb0, tg);
  CHECK((again.y.values() - r.y.values()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mode names round-trip") {
  CHECK(nonlinear_mode_from_string(to_string(NonlinearMode::semi_implicit)) ==
        NonlinearMode::semi_implicit);
  CHECK_THROWS_AS(nonlinear_mode_from_string("newton"), InvalidArgument);
}
