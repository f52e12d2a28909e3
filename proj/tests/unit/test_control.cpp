#include "kdvb/control.hpp"
#include "kdvb/errors.hpp"
#include "kdvb/random_data.hpp"

#include "hum_oracle.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

using namespace kdvb;

namespace {
constexpr double pi = std::numbers::pi;

struct Small {
  SpatialGrid g = make_grid(1.0, 16);
  TimeGrid tg = make_time_grid(1.0, 32);
  DiscreteOperators ops{g};
  CarlemanSpatialProfile prof = build_spatial_profile(1.0, {0.3, 0.7}, 0.5);
  ControlOptions opts() const {
    ControlOptions o;
    o.s = s_from_target_exponent(prof, tg, 60.0);
    return o;
  }
  Vector y0() const {
    Vector v = sample_space(g, [](double x) { return std::sin(2 * pi * x); });
    return v / l2_space(v, g);
  }
};

} // namespace

TEST_CASE("variational matrix is exactly symmetric with the stated structure") {
  Small s;
  const VariationalSystem sys(s.ops, CoefficientSet::zero_transport(0.1, s.g, s.tg), s.tg,
                              s.prof, s.opts());
  const Eigen::MatrixXd A = sys.matrix();
  CHECK((A - A.transpose()).cwiseAbs().maxCoeff() == 0.0);
  const int n = s.g.interior(), M = s.tg.steps;
  CHECK(sys.unknowns() == (M + 1) * n);
  CHECK(sys.constraint().cols() == M * n);
  const Eigen::MatrixXd L = sys.constraint(), B = sys.observation();
  const Eigen::MatrixXd ref =
      L * sys.state_weight_inverse().asDiagonal() * L.transpose() +
      B * sys.control_weight().asDiagonal() * B.transpose();
  CHECK((A - ref).cwiseAbs().maxCoeff() <= 1e-12 * ref.cwiseAbs().maxCoeff());
  // omega nodes are strictly inside (0.3, 0.7)
  for (int i : sys.omega_nodes()) {
    CHECK(s.g.node(i + 1) > 0.3);
    CHECK(s.g.node(i + 1) < 0.7);
  }
}

TEST_CASE("equilibrated variational matrix is positive definite") {
  Small s;
  const VariationalSystem sys(s.ops, CoefficientSet::zero_transport(0.1, s.g, s.tg), s.tg,
                              s.prof, s.opts());
  const Eigen::MatrixXd A = sys.matrix();
  const Vector d = A.diagonal().cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd S = d.asDiagonal() * A * d.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  MESSAGE("smallest eigenvalue of the equilibrated matrix: " << es.eigenvalues().minCoeff());
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("null control: support, identity, zero terminal state") {
  Small s;
  const VariationalSystem sys(s.ops, CoefficientSet::zero_transport(0.1, s.g, s.tg), s.tg,
                              s.prof, s.opts());
  const ControlResult r = solve_null_control(sys, s.y0());
  CHECK(r.stats.relative_residual <= 1e-10);
  for (int n = 0; n <= s.tg.steps; ++n)
    for (int i = 0; i < s.g.interior(); ++i)
      if (!(s.g.node(i + 1) > 0.3 && s.g.node(i + 1) < 0.7))
        CHECK(r.control(n, i) == 0.0);
  CHECK(std::abs(r.bilinear_value - r.weighted_energy) <= 1e-8 * r.bilinear_value);
  CHECK(r.algebraic_terminal_norm == 0.0);
  CHECK(r.terminal_norm <= 1e-6);
  CHECK(r.e_norms.all_finite());
  // the algebraic state solves the controlled equation
  const double gap = (r.state.values().topRows(s.tg.steps) -
                      r.resimulated.values().topRows(s.tg.steps))
                         .cwiseAbs()
                         .maxCoeff();
  CHECK(gap <= 1e-8 * r.state.values().cwiseAbs().maxCoeff());
}

TEST_CASE("CG fallback agrees with the factorization") {
  Small s;
  ControlOptions o = s.opts();
  const VariationalSystem a(s.ops, CoefficientSet::zero_transport(0.1, s.g, s.tg), s.tg, s.prof, o);
  o.force_cg = true;
  o.solve_tol = 1e-8;
  const VariationalSystem b(s.ops, CoefficientSet::zero_transport(0.1, s.g, s.tg), s.tg, s.prof, o);
  const ControlResult ra = solve_null_control(a, s.y0());
  const ControlResult rb = solve_null_control(b, s.y0());
  CHECK(rb.stats.method == "pcg");
  CHECK(std::abs(ra.control_norm - rb.control_norm) <= 1e-5 * ra.control_norm);
}

TEST_CASE("zero data gives the zero control") {
  Small s;
  const VariationalSystem sys(s.ops, CoefficientSet::zero_transport(0.1, s.g, s.tg), s.tg,
                              s.prof, s.opts());
  const ControlResult r = solve_null_control(sys, Vector::Zero(s.g.interior()));
  CHECK(r.control_norm == 0.0);
  CHECK(r.stats.method == "trivial");
}

TEST_CASE("sources must vanish at the final time") {
  Small s;
  const VariationalSystem sys(s.ops, CoefficientSet::zero_transport(0.1, s.g, s.tg), s.tg,
                              s.prof, s.opts());
  Field h(s.g, s.tg);
  h(s.tg.steps, 3) = 1.0;
  CHECK_THROWS_AS(solve_null_control(sys, s.y0(), h), InvalidArgument);
  ControlOptions bad = s.opts();
  bad.omega = {0.26, 0.31}; // no node of the 16-cell grid inside
  CHECK_THROWS_AS(VariationalSystem(s.ops, CoefficientSet::zero_transport(0.1, s.g, s.tg), s.tg,
                                    s.prof, bad),
                  InvalidArgument);
}

TEST_CASE("penalized HUM oracle drives the state toward zero") {
  Small s;
  const LinearizedStepper st(s.ops, CoefficientSet::zero_transport(0.1, s.g, s.tg), s.tg,
                             SteppingOptions{0.5});
  double previous = 0.0;
  for (double eps : {1e-2, 1e-4, 1e-6, 1e-8}) {
    const auto r = testing::penalized_hum(st, {0.3, 0.7}, s.y0(), eps);
    CHECK(r.relative_residual <= 1e-10);
    CHECK(r.terminal_norm < r.free_terminal_norm);
    if (previous > 0.0)
      CHECK(r.terminal_norm < previous);
    previous = r.terminal_norm;
  }
  CHECK(previous < 0.1 * testing::penalized_hum(st, {0.3, 0.7}, s.y0(), 1e-8).free_terminal_norm);
}

TEST_CASE("refinement comparison flags growth") {
  ENormReport a, b;
  a.n1 = 1;
  a.n2 = 2;
  a.n3_sup = 3;
  a.n3_l2h1 = 4;
  a.n4 = 5;
  b = a;
  b.n4 = 7;
  const RefinementCheck c = compare_refinement(a, b);
  CHECK(c.stable());
  CHECK_FALSE(c.any_growth_above(2.0));
  b.n1 = 3;
  const RefinementCheck d = compare_refinement(a, b);
  CHECK_FALSE(d.stable());
  CHECK(d.any_growth_above(2.0));
}

TEST_CASE("tracking: y0 on the target returns zero control at once") {
  Small s;
  const Viscosity nu = Viscosity::constant(0.1);
  NonlinearOptions nl;
  nl.stepping = s.opts().stepping;
  const Vector yb0 = 0.05 * sample_space(s.g, [](double x) { return std::sin(2 * pi * x); });
  const NonlinearResult tgt = uncontrolled_trajectory(s.ops, nu, yb0, s.tg, nl);
  TrackingOptions to;
  to.nonlinear = nl;
  const auto r = control_to_trajectory(s.ops, nu, tgt.y, yb0, s.tg, s.prof, s.opts(), to);
  CHECK(r.iterations == 1);
  CHECK(r.control_norm == 0.0);

  SmoothRandom rng(4);
  const Vector y0 = yb0 + rng.initial(s.g, 1e-2);
  const auto q = control_to_trajectory(s.ops, nu, tgt.y, y0, s.tg, s.prof, s.opts(), to);
  CHECK(q.iterations <= 10);
  CHECK(q.terminal_gap <= 1e-3 * q.initial_deviation);
  CHECK(q.within_delta);
}
