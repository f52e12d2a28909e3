// One PASS/FAIL line per acceptance criterion. Exit status is nonzero if
// any criterion fails.

#include "kdvb/control.hpp"
#include "kdvb/random_data.hpp"
#include "kdvb/verify.hpp"

#include "hum_oracle.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace kdvb;

namespace {

constexpr double pi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char *f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string sci(double x) { return fmt("%.3e", x); }

const CarlemanSpatialProfile &profile() {
  static const CarlemanSpatialProfile p = build_spatial_profile(1.0, {0.3, 0.7}, 0.5);
  return p;
}

Vector unit_sine(const SpatialGrid &g) {
  Vector v = sample_space(g, [](double x) { return std::sin(2 * pi * x); });
  return v / l2_space(v, g);
}

double level_norm(const Field &f, int n, const SpatialGrid &g) {
  return l2_space(Vector(f.level(n).transpose()), g);
}

// ---------------------------------------------------------------- 1
Outcome exact_structure() {
  const SpatialGrid g = make_grid(1.0, 64);
  const TimeGrid tg = make_time_grid(1.0, 128);
  const DiscreteOperators ops(g);
  const testing::Dense d3(ops.d3());
  const double skew = (d3 + d3.transpose()).cwiseAbs().maxCoeff();

  const testing::Dense dp = testing::ref_d1_forward(g.cells, g.h);
  const double nu0 = 0.1;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    SmoothRandom rng(1000 + k);
    const Vector y0 = rng.initial(g, 1.0);
    const Field y = solve_linear_constant(ops, nu0, Field(g, tg), y0, tg, {0.5});
    for (int n = 0; n < tg.steps; ++n) {
      const Vector a = y.level(n).transpose(), b = y.level(n + 1).transpose();
      const double e0 = g.h * a.squaredNorm(), e1 = g.h * b.squaredNorm();
      const double diss = 0.5 * tg.dt * nu0 * g.h * (dp * (a + b)).squaredNorm();
      worst = std::max(worst, std::abs(e1 - e0 + diss) / e0);
    }
  }
  return {skew == 0.0 && worst <= 1e-12,
          "|D3+D3^T|max=" + sci(skew) + " max step energy residual=" + sci(worst)};
}

// ---------------------------------------------------------------- 2
double pairing(const Field &a, const Field &b, const SpatialGrid &g, const TimeGrid &tg) {
  double s = 0.0;
  for (int n = 0; n < tg.levels(); ++n)
    s += tg.weight(n) * g.h * a.level(n).dot(b.level(n));
  return s;
}

std::vector<double> duality_residuals(const DiscreteOperators &ops, const TimeGrid &tg,
                                      int samples, double adjoint_perturbation) {
  const SpatialGrid &g = ops.grid();
  std::vector<double> out;
  SmoothRandom rng(2024);
  for (int k = 0; k < samples; ++k) {
    CoefficientSet c = CoefficientSet::zero_transport(0.1, g, tg);
    c.ybar = rng.source(g, tg, rng.uniform(0.1, 1.0));
    const double a = rng.uniform(0.0, 0.05), w = rng.uniform(1.0, 10.0);
    c.nu.nu_tilde.resize(tg.levels());
    for (int n = 0; n < tg.levels(); ++n)
      c.nu.nu_tilde[n] = a * (1 + std::sin(w * tg.time(n)));
    const Field f = rng.source(g, tg, 1.0), src = rng.source(g, tg, 1.0);
    const Vector y0 = rng.initial(g, 1.0), phiT = rng.initial(g, 1.0);

    const Field y = solve_linearized(ops, c, f, y0, tg);
    CoefficientSet ca = c;
    ca.nu.nu0 *= 1.0 + adjoint_perturbation;
    const auto adj = solve_adjoint(ops, ca, src, phiT, tg);
    const double t1 = pairing(y, src, g, tg);
    const double t2 = g.h * y.level(tg.steps).dot(phiT.transpose());
    const double t3 = pairing(f, adj.phi, g, tg);
    const double t4 = g.h * y0.dot(adj.initial);
    out.push_back(std::abs(t1 + t2 - t3 - t4) /
                  (std::abs(t1) + std::abs(t2) + std::abs(t3) + std::abs(t4)));
  }
  return out;
}

Outcome duality() {
  const SpatialGrid g = make_grid(1.0, 64);
  const TimeGrid tg = make_time_grid(1.0, 128);
  const DiscreteOperators ops(g);
  const auto good = duality_residuals(ops, tg, 100, 0.0);
  const auto bad = duality_residuals(ops, tg, 20, 0.1);
  const double gmax = *std::max_element(good.begin(), good.end());
  const double bmin = *std::min_element(bad.begin(), bad.end());
  return {gmax <= 1e-10 && bmin > 1e-6,
          "max residual=" + sci(gmax) + " (100 cases); perturbed adjoint min residual=" +
              sci(bmin) + " (20 cases)"};
}

// ---------------------------------------------------------------- 3
// y* = cos(t) sin(kx) + e^{-t}/2 (cos(kx) - 1), transport (0.2 (1 + t^2)) (cos(kx) - 1)
struct Manufactured {
  double k = 2 * pi, nu0 = 0.1;
  double a(double t) const { return std::cos(t); }
  double da(double t) const { return -std::sin(t); }
  double b(double t) const { return 0.5 * std::exp(-t); }
  double db(double t) const { return -0.5 * std::exp(-t); }
  double y(double x, double t) const {
    return a(t) * std::sin(k * x) + b(t) * (std::cos(k * x) - 1);
  }
  double yt(double x, double t) const {
    return da(t) * std::sin(k * x) + db(t) * (std::cos(k * x) - 1);
  }
  double yx(double x, double t) const {
    return k * (a(t) * std::cos(k * x) - b(t) * std::sin(k * x));
  }
  double yxx(double x, double t) const {
    return -k * k * (a(t) * std::sin(k * x) + b(t) * std::cos(k * x));
  }
  double yxxx(double x, double t) const {
    return -k * k * k * (a(t) * std::cos(k * x) - b(t) * std::sin(k * x));
  }
  double w(double x, double t) const { return 0.2 * (1 + t * t) * (std::cos(k * x) - 1); }
  double wx(double x, double t) const { return -0.2 * (1 + t * t) * k * std::sin(k * x); }
  double base(double x, double t) const {
    return yt(x, t) + yxxx(x, t) - nu0 * yxx(x, t);
  }
  double linear_forcing(double x, double t) const {
    return base(x, t) + wx(x, t) * y(x, t) + w(x, t) * yx(x, t);
  }
  double nonlinear_forcing(double x, double t) const {
    return base(x, t) + y(x, t) * yx(x, t);
  }
};

Outcome mms() {
  const Manufactured m;
  std::vector<double> hs, lin, non;
  for (int l = 0; l < 3; ++l) {
    const int N = 32 << l, M = 64 << l;
    const SpatialGrid g = make_grid(1.0, N);
    const TimeGrid tg = make_time_grid(1.0, M);
    const DiscreteOperators ops(g);
    const Field exact = sample_field(g, tg, [&](double x, double t) { return m.y(x, t); });
    const Vector y0 = exact.level(0).transpose();
    auto err = [&](const Field &y) {
      double e = 0.0;
      for (int n = 0; n < tg.levels(); ++n)
        e = std::max(e, level_norm(y - exact, n, g));
      return e;
    };
    CoefficientSet c{Viscosity::constant(m.nu0),
                     sample_field(g, tg, [&](double x, double t) { return m.w(x, t); })};
    const Field fl = sample_field(g, tg, [&](double x, double t) { return m.linear_forcing(x, t); });
    lin.push_back(err(solve_linearized(ops, c, fl, y0, tg)));
    const Field fn =
        sample_field(g, tg, [&](double x, double t) { return m.nonlinear_forcing(x, t); });
    non.push_back(err(solve_nonlinear(ops, Viscosity::constant(m.nu0), fn, y0, tg).y));
    hs.push_back(g.h);
  }
  const double ol = testing::fitted_order(hs, lin), on = testing::fitted_order(hs, non);
  return {ol >= 1.8 && on >= 1.8,
          "linear order=" + fmt("%.3f", ol) + " errors " + sci(lin[0]) + "," + sci(lin[1]) + "," +
              sci(lin[2]) + "; nonlinear order=" + fmt("%.3f", on) + " errors " + sci(non[0]) +
              "," + sci(non[1]) + "," + sci(non[2])};
}

// ---------------------------------------------------------------- 4
Outcome weights() {
  const auto &p = profile();
  const ValidationReport v = validate_spatial_profile(p);
  using P = CarlemanSpatialProfile::Piece;
  double junction = 0.0;
  for (int k = 0; k <= 4; ++k) {
    for (auto [x, a, b] : {std::tuple{0.3, P::left, P::bridge}, std::tuple{0.7, P::bridge, P::right}}) {
      const double u = p.piece_derivative(a, x, k), w = p.piece_derivative(b, x, k);
      junction = std::max(junction, std::abs(u - w) / std::max(1.0, std::abs(u)));
    }
  }
  double lo = 1e300, hi = -1e300, concave = -1e300;
  for (int i = 0; i <= 20000; ++i) {
    const double x = i / 20000.0;
    lo = std::min(lo, p(x));
    hi = std::max(hi, p(x));
    if (x < 0.3 || x > 0.7)
      concave = std::max(concave, p.derivative(x, 2));
  }
  const double s0 = std::abs(p.derivative(0.0, 1) + 1.0);
  const double s1 = std::abs(p.derivative(1.0, 1) - 1.0);
  const double ends = std::abs(p(0.0) - p(1.0));
  const bool ok = v.all() && junction <= 1e-8 && lo > 0 && 2 * hi < 3 * lo && concave < 0 &&
                  s0 <= 1e-12 && s1 <= 1e-12 && ends <= 1e-12;
  return {ok, "validation=" + std::string(v.all() ? "ok" : "fail") + " junction=" + sci(junction) +
                  " min=" + fmt("%.4f", lo) + " max=" + fmt("%.4f", hi) +
                  " |phi'(0)+1|=" + sci(s0) + " |phi'(L)-1|=" + sci(s1) +
                  " max phi'' outside omega=" + fmt("%.4f", concave)};
}

// ---------------------------------------------------------------- 5
struct WeightOracle {
  double s, clamp, pmax, pmin, T;
  double factor(double t) const {
    const double l = t <= 0.5 * T ? 0.25 * T * T : t * (T - t);
    return 1.0 / (l * l);
  }
  double cexp(double x) const { return std::exp(std::clamp(x, -clamp, clamp)); }
  double state(double t) const { return cexp(2 * s * pmax * factor(t)); } // inverse of decay2
  double obs(double t) const {
    const double f = factor(t);
    return std::pow(f, 9) * cexp(-6 * s * pmin * f + 2 * s * pmax * f);
  }
};

Outcome null_control() {
  const SpatialGrid g = make_grid(1.0, 64);
  const TimeGrid tg = make_time_grid(1.0, 128);
  const DiscreteOperators ops(g);
  ControlOptions co;
  co.s = s_from_target_exponent(profile(), tg, 150.0);
  const auto coeffs = CoefficientSet::zero_transport(0.1, g, tg);
  const VariationalSystem sys(ops, coeffs, tg, profile(), co);
  const Vector y0 = unit_sine(g);
  const ControlResult r = solve_null_control(sys, y0);

  // independent weighted energy of (y, v)
  const WeightOracle w{co.s, co.clamp, profile().max_value(), profile().min_value(), tg.horizon};
  double energy = 0.0;
  for (int n = 0; n < tg.steps; ++n)
    energy += tg.weight(n) * g.h * r.state.level(n).squaredNorm() * w.state(tg.time(n));
  double outside = 0.0;
  for (int n = 0; n <= tg.steps; ++n) {
    double vv = 0.0;
    for (int i = 0; i < g.interior(); ++i) {
      const double x = g.node(i + 1);
      if (x > 0.3 && x < 0.7)
        vv += r.control(n, i) * r.control(n, i);
      else
        outside = std::max(outside, std::abs(r.control(n, i)));
    }
    const double rho = n < tg.steps ? w.obs(tg.time(n)) : 0.0;
    if (rho > 0.0)
      energy += tg.weight(n) * g.h * vv / rho;
  }
  const double identity = std::abs(r.bilinear_value - energy) / r.bilinear_value;

  const LinearizedStepper stepper(ops, coeffs, tg, co.stepping);
  const auto hum = testing::penalized_hum(stepper, co.omega, y0, 1e-8);
  const double a = std::max(r.terminal_norm, 1e-300), b = std::max(hum.terminal_norm, 1e-300);
  const double order_gap = std::max(a / b, b / a);

  const bool ok = r.terminal_norm <= 1e-3 && identity <= 1e-8 && outside == 0.0 && order_gap <= 10.0;
  return {ok, "terminal=" + sci(r.terminal_norm) + " (uncontrolled " + sci(hum.free_terminal_norm) +
                  ") identity rel=" + sci(identity) + " max|v| outside omega=" + sci(outside) +
                  " HUM terminal=" + sci(hum.terminal_norm) + " ratio=" + sci(order_gap) +
                  " |v|=" + fmt("%.4g", r.control_norm) + " theta=" +
                  fmt("%.2f", co.stepping.theta)};
}

// ---------------------------------------------------------------- 6
Outcome control_bound() {
  const SpatialGrid g = make_grid(1.0, 64);
  const TimeGrid tg = make_time_grid(1.0, 128);
  const DiscreteOperators ops(g);
  ControlOptions co;
  co.s = s_from_target_exponent(profile(), tg, 150.0);
  const VariationalSystem sys(ops, CoefficientSet::zero_transport(0.1, g, tg), tg, profile(), co);
  SmoothRandom rng(11);
  std::vector<double> ratios;
  for (int i = 0; i < 10; ++i) {
    const Vector y0 = rng.initial(g, rng.uniform(0.5, 2.0));
    Field h = rng.source(g, tg, rng.uniform(0.0, 1.0));
    for (int n = 0; n <= tg.steps; ++n) {
      const double c = 1.0 - 2.0 * tg.time(n);
      h.level(n) *= c > 0 ? c * c : 0.0;
    }
    const ControlResult r = solve_null_control(sys, y0, h);
    ratios.push_back(r.control_norm / (l2_space(y0, g) + l2_spacetime(h, g, tg)));
  }
  const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
  const double spread = *hi / *lo;
  return {std::isfinite(spread) && spread < 5.0,
          "ratio min=" + fmt("%.4g", *lo) + " max=" + fmt("%.4g", *hi) +
              " spread=" + fmt("%.3f", spread)};
}

// ---------------------------------------------------------------- 7
Outcome tracking() {
  const SpatialGrid g = make_grid(1.0, 64);
  const TimeGrid tg = make_time_grid(1.0, 128);
  const DiscreteOperators ops(g);
  ControlOptions co;
  co.s = s_from_target_exponent(profile(), tg, 150.0);
  const Viscosity nu = Viscosity::constant(0.1);
  NonlinearOptions nl;
  nl.stepping = co.stepping;
  const Vector yb0 = 0.05 * sample_space(g, [](double x) { return std::sin(2 * pi * x); });
  const NonlinearResult target = uncontrolled_trajectory(ops, nu, yb0, tg, nl);
  SmoothRandom rng(7);
  const Vector y0 = yb0 + rng.initial(g, 1e-2);
  TrackingOptions to;
  to.nonlinear = nl;
  const auto r = control_to_trajectory(ops, nu, target.y, y0, tg, profile(), co, to);
  const auto same = control_to_trajectory(ops, nu, target.y, yb0, tg, profile(), co, to);
  const NonlinearResult free = solve_nonlinear(ops, nu, Field(g, tg), y0, tg, nl);
  const double free_gap = level_norm(free.y - target.y, tg.steps, g);
  const bool ok = r.iterations <= 10 && r.terminal_gap <= 1e-3 * r.initial_deviation &&
                  same.iterations == 1 && same.control_norm == 0.0;
  return {ok, "iterations=" + std::to_string(r.iterations) + " gap=" + sci(r.terminal_gap) +
                  " |y0-ybar0|=" + sci(r.initial_deviation) + " uncontrolled gap=" + sci(free_gap) +
                  " |v|=" + fmt("%.4g", r.control_norm) + "; y0=ybar0: iterations=" +
                  std::to_string(same.iterations) + " |v|=" + sci(same.control_norm)};
}

// ---------------------------------------------------------------- 8
// Ratio of the first sample recomputed from scratch.
double carleman_first_ratio(const DiscreteOperators &ops, const TimeGrid &tg, double s,
                            CarlemanVariant variant) {
  const SpatialGrid &g = ops.grid();
  const bool alpha = variant == CarlemanVariant::alpha;
  const auto &p = profile();
  SmoothRandom rng(1);
  const Field src = rng.source(g, tg, 1.0);
  const Vector phiT = rng.initial(g, 1.0);
  const auto adj =
      solve_adjoint(ops, CoefficientSet::zero_transport(0.1, g, tg), src, phiT, tg);
  const testing::Dense d2 = testing::ref_d2(g.cells, g.h);
  const testing::Dense dp = testing::ref_d1_forward(g.cells, g.h);
  auto cexp = [](double x) { return std::exp(std::clamp(x, -200.0, 200.0)); };
  double lhs = 0.0, rhs = 0.0;
  for (int n = 0; n < tg.steps; ++n) {
    const double t = tg.midpoint(n), T = tg.horizon;
    const double q = alpha ? t * (T - t) : (t <= 0.5 * T ? 0.25 * T * T : t * (T - t));
    const double f = 1.0 / (q * q);
    const double hat = p.max_value() * f, breve = p.min_value() * f;
    const Vector ph = 0.5 * (adj.phi.level(n) + adj.phi.level(n + 1)).transpose();
    const Vector gm = 0.5 * (src.level(n) + src.level(n + 1)).transpose();
    const double sp = alpha ? s : 1.0;
    lhs += tg.dt * cexp(-4 * s * hat) *
           (std::pow(sp * f, 5) * g.h * ph.squaredNorm() +
            std::pow(sp * f, 3) * g.h * (dp * ph).squaredNorm() +
            sp * f * g.h * (d2 * ph).squaredNorm());
    double loc = 0.0;
    for (int i = 0; i < g.interior(); ++i) {
      const double x = g.node(i + 1);
      if (x > 0.3 && x < 0.7)
        loc += ph[i] * ph[i];
    }
    rhs += tg.dt * (cexp(-2 * s * hat) * g.h * gm.squaredNorm() +
                    std::pow(sp * f, 9) * cexp(-6 * s * breve + 2 * s * hat) * g.h * loc);
  }
  if (!alpha)
    lhs += g.h * adj.initial.squaredNorm();
  return lhs / rhs;
}

Outcome carleman() {
  const TimeGrid tg = make_time_grid(1.0, 128);
  const double s = s_from_target_exponent(profile(), tg, 150.0);
  bool ok = true;
  std::ostringstream d;
  for (auto v : {CarlemanVariant::alpha, CarlemanVariant::beta}) {
    CarlemanOptions o;
    o.variant = v;
    auto run = [&](int N, double sv) {
      const SpatialGrid g = make_grid(1.0, N);
      const DiscreteOperators ops(g);
      return check_carleman(ops, CoefficientSet::zero_transport(0.1, g, tg), tg, profile(), sv, o);
    };
    const CarlemanReport c64 = run(64, s), c96 = run(96, s);
    const CarlemanReport s2 = run(64, 2 * s), s4 = run(64, 4 * s);
    const SpatialGrid g = make_grid(1.0, 64);
    const DiscreteOperators ops(g);
    const double oracle = carleman_first_ratio(ops, tg, s, v);
    const double cross = std::abs(oracle - c64.ratio.at(0)) / oracle;
    const bool finite = c64.finite() && c96.finite() && c64.excluded == 0 && c96.excluded == 0 &&
                        c64.ratio.size() == 50;
    const double drift = c96.summary.max / c64.summary.max;
    const bool stable = drift <= 2.0 && drift >= 0.5;
    const bool monotone = s2.summary.max <= c64.summary.max && s4.summary.max <= s2.summary.max;
    ok = ok && finite && stable && monotone && cross <= 1e-10;
    d << to_string(v) << ": max N64=" << sci(c64.summary.max) << " N96=" << sci(c96.summary.max)
      << " drift=" << fmt("%.3f", drift) << " s-sweep(x1,x2,x4)=" << sci(c64.summary.max) << ","
      << sci(s2.summary.max) << "," << sci(s4.summary.max)
      << " finite=" << (finite ? "yes" : "no") << " stable=" << (stable ? "yes" : "no")
      << " non-increasing=" << (monotone ? "yes" : "no") << " oracle gap=" << sci(cross) << "; ";
  }
  return {ok, d.str()};
}

// ---------------------------------------------------------------- 9
Outcome e_membership() {
  const SpatialGrid g = make_grid(1.0, 64);
  const TimeGrid coarse = make_time_grid(1.0, 128), fine = make_time_grid(1.0, 256);
  const DiscreteOperators ops(g);
  ControlOptions co;
  co.s = s_from_target_exponent(profile(), coarse, 150.0);
  const VariationalSystem a(ops, CoefficientSet::zero_transport(0.1, g, coarse), coarse, profile(), co);
  const VariationalSystem b(ops, CoefficientSet::zero_transport(0.1, g, fine), fine, profile(), co);
  const Vector y0 = unit_sine(g);
  const ControlResult ra = solve_null_control(a, y0), rb = solve_null_control(b, y0);
  const RefinementCheck controlled = compare_refinement(ra.e_norms, rb.e_norms, 1.5);

  const Field fa = a.stepper().forward(Field(g, coarse), y0);
  const Field fb = b.stepper().forward(Field(g, fine), y0);
  const RefinementCheck free =
      compare_refinement(e_norms(a, fa, Field(g, coarse)), e_norms(b, fb, Field(g, fine)), 1.5);

  std::ostringstream d;
  d << "controlled ratios";
  for (double r : controlled.ratios)
    d << " " << fmt("%.3f", r);
  d << "; uncontrolled ratios";
  for (double r : free.ratios)
    d << " " << sci(r);
  return {controlled.stable() && free.any_growth_above(2.0), d.str()};
}

} // namespace

int main() {
  const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria = {
      {"exact structure", exact_structure},
      {"duality", duality},
      {"convergence order", mms},
      {"weight validity", weights},
      {"null control", null_control},
      {"control bound", control_bound},
      {"trajectory tracking", tracking},
      {"Carleman ratios", carleman},
      {"E-membership", e_membership},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("CRITERION %zu %s: %s [%.1fs] %s\n", i + 1, o.pass ? "PASS" : "FAIL",
                criteria[i].first, secs, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
