#include "kdvb/verify.hpp"

#include "kdvb/errors.hpp"
#include "kdvb/random_data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace kdvb {

namespace {

constexpr double pi = std::numbers::pi;

double hneg1_sq(const DiscreteOperators &ops, const Vector &r) {
  return ops.grid().h * r.dot(ops.solve_shifted_laplacian(r));
}

double h1_sq(const DiscreteOperators &ops, const Vector &u) {
  const double h = ops.grid().h;
  return h * (u.squaredNorm() + (ops.d1_forward() * u).squaredNorm());
}

double h2_sq(const DiscreteOperators &ops, const Vector &u) {
  return h1_sq(ops, u) + ops.grid().h * (ops.d2() * u).squaredNorm();
}

Vector random_nu_tilde(SmoothRandom &rng, const TimeGrid &tg, double amp) {
  const double a = rng.uniform(0.0, amp);
  const double w = rng.uniform(1.0, 10.0);
  Vector nt(tg.levels());
  for (int n = 0; n < tg.levels(); ++n)
    nt[n] = a * (1.0 + std::sin(w * tg.time(n)));
  return nt;
}

Vector midpoint(const Field &f, int k) {
  return 0.5 * (f.level(k) + f.level(k + 1)).transpose();
}

bool usable(double lhs, double rhs) {
  return std::isfinite(lhs) && std::isfinite(rhs) && rhs > 0.0;
}

} // namespace

SampleSummary summarize(std::vector<double> values) {
  SampleSummary s;
  s.count = static_cast<int>(values.size());
  if (values.empty())
    return s;
  std::sort(values.begin(), values.end());
  s.max = values.back();
  const std::size_t m = values.size() / 2;
  s.median = values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
  return s;
}

std::string to_string(CarlemanVariant v) {
  return v == CarlemanVariant::alpha ? "alpha" : "beta";
}

CarlemanVariant carleman_variant_from_string(const std::string &s) {
  if (s == "alpha")
    return CarlemanVariant::alpha;
  if (s == "beta")
    return CarlemanVariant::beta;
  throw InvalidArgument("unknown Carleman variant '" + s +
                        "' (expected alpha or beta)");
}

bool CarlemanReport::finite() const {
  if (ratio.empty())
    return false;
  return std::all_of(ratio.begin(), ratio.end(),
                     [](double r) { return std::isfinite(r) && r >= 0.0; });
}

CarlemanReport check_carleman(const DiscreteOperators &ops,
                              const CoefficientSet &coeffs, const TimeGrid &tg,
                              const CarlemanSpatialProfile &profile, double s,
                              const CarlemanOptions &opts) {
  if (!(s > 0.0))
    throw InvalidArgument("Carleman check needs s > 0");
  if (opts.samples < 10)
    throw InvalidArgument("Carleman check needs at least 10 samples");
  const SpatialGrid &g = ops.grid();
  const bool alpha = opts.variant == CarlemanVariant::alpha;
  const WeightSet w =
      alpha ? eval_alpha_weights(profile, tg, s, opts.clamp,
                                 TimeSampling::midpoints)
            : eval_beta_weights(profile, tg, s, opts.clamp,
                                TimeSampling::midpoints);
  std::vector<int> omega;
  for (int i = 0; i < g.interior(); ++i)
    if (profile.omega().contains(g.node(i + 1)))
      omega.push_back(i);

  const LinearizedStepper stepper(ops, coeffs, tg, opts.stepping);
  SmoothRandom rng(opts.seed);

  CarlemanReport rep;
  rep.variant = opts.variant;
  rep.s = s;
  rep.clamp = opts.clamp;
  rep.cells = g.cells;
  rep.steps = tg.steps;
  rep.seed = opts.seed;
  rep.clamped_entries = w.clamped_entries;

  const double p5 = alpha ? std::pow(s, 5) : 1.0;
  const double p3 = alpha ? std::pow(s, 3) : 1.0;
  const double p1 = alpha ? s : 1.0;
  const double p9 = alpha ? std::pow(s, 9) : 1.0;

  for (int k = 0; k < opts.samples; ++k) {
    const Field src = rng.source(g, tg, 1.0);
    const Vector phiT = rng.initial(g, 1.0);
    const auto adj = stepper.backward(src, phiT);

    double lhs = 0.0, rhs = 0.0;
    for (int n = 0; n < tg.steps; ++n) {
      const Vector p = midpoint(adj.phi, n);
      const Vector q = midpoint(src, n);
      const double f = w.factor[n];
      const double l2 = g.h * p.squaredNorm();
      const double grad = g.h * (ops.d1_forward() * p).squaredNorm();
      const double curv = g.h * (ops.d2() * p).squaredNorm();
      lhs += tg.dt * w.decay4[n] *
             (p5 * std::pow(f, 5) * l2 + p3 * std::pow(f, 3) * grad +
              p1 * f * curv);
      double loc = 0.0;
      for (int i : omega)
        loc += p[i] * p[i];
      rhs += tg.dt * (w.decay2[n] * g.h * q.squaredNorm() +
                      p9 * w.observation[n] * g.h * loc);
    }
    if (!alpha)
      lhs += g.h * adj.initial.squaredNorm();

    if (!usable(lhs, rhs)) {
      ++rep.excluded;
      continue;
    }
    rep.lhs.push_back(lhs);
    rep.rhs.push_back(rhs);
    rep.ratio.push_back(lhs / rhs);
  }
  rep.summary = summarize(rep.ratio);
  return rep;
}

DualityReport check_duality(const DiscreteOperators &ops, double nu0,
                            const TimeGrid &tg, const DualityOptions &opts) {
  const SpatialGrid &g = ops.grid();
  SmoothRandom rng(opts.seed);
  DualityReport rep;
  rep.perturbed_adjoint = opts.adjoint_nu_perturbation != 0.0;

  for (int k = 0; k < opts.samples; ++k) {
    CoefficientSet c = CoefficientSet::zero_transport(nu0, g, tg);
    if (opts.random_coefficients) {
      c.ybar = rng.source(g, tg, 0.5);
      c.nu.nu_tilde = random_nu_tilde(rng, tg, 0.05);
    }
    const Field f = rng.source(g, tg, 1.0);
    const Vector y0 = rng.initial(g, 1.0);
    const Field src = rng.source(g, tg, 1.0);
    const Vector phiT = rng.initial(g, 1.0);

    const Field y = solve_linearized(ops, c, f, y0, tg, opts.stepping);
    CoefficientSet ca = c;
    ca.nu.nu0 *= 1.0 + opts.adjoint_nu_perturbation;
    const auto adj = solve_adjoint(ops, ca, src, phiT, tg, opts.stepping);

    double t1 = 0.0, t3 = 0.0;
    for (int n = 0; n < tg.levels(); ++n) {
      t1 += tg.weight(n) * g.h * y.level(n).dot(src.level(n));
      t3 += tg.weight(n) * g.h * f.level(n).dot(adj.phi.level(n));
    }
    const double t2 = g.h * y.level(tg.steps).dot(phiT.transpose());
    const double t4 = g.h * y0.dot(adj.initial);
    const double scale =
        std::abs(t1) + std::abs(t2) + std::abs(t3) + std::abs(t4);
    if (!(scale > 0.0) || !std::isfinite(scale)) {
      ++rep.excluded;
      continue;
    }
    rep.residuals.push_back(std::abs(t1 + t2 - t3 - t4) / scale);
  }
  rep.summary = summarize(rep.residuals);
  return rep;
}

EnergyReport check_energy_kato(const DiscreteOperators &ops, double nu0,
                               const TimeGrid &tg, const EnergyOptions &opts) {
  const SpatialGrid &g = ops.grid();
  SmoothRandom rng(opts.seed);
  EnergyReport rep;
  for (int k = 0; k < opts.samples; ++k) {
    const Vector y0 = rng.initial(g, 1.0);
    const Field f = rng.source(g, tg, rng.uniform(0.0, 2.0));
    const Field y = solve_linear_constant(ops, nu0, f, y0, tg);
    const double lhs = y0_norm(y, ops, tg);
    double l1 = 0.0;
    for (int n = 0; n < tg.levels(); ++n)
      l1 += tg.weight(n) * l2_space(Vector(f.level(n).transpose()), g);
    const double rhs = l2_space(y0, g) + l1;
    if (!usable(lhs, rhs)) {
      ++rep.excluded;
      continue;
    }
    rep.ratios.push_back(lhs / rhs);

    const Field free = solve_linear_constant(ops, nu0, Field(g, tg), y0, tg);
    for (double r : energy_identity_residuals(ops, nu0, free, tg))
      rep.max_identity_residual = std::max(rep.max_identity_residual, r);
  }
  rep.summary = summarize(rep.ratios);
  return rep;
}

double ys_norm(const Field &u, const DiscreteOperators &ops, const TimeGrid &tg,
               int s) {
  if (s != 0 && s != 1)
    throw InvalidArgument("Y^s norm implemented for s = 0 and s = 1");
  if (!u.matches(ops.grid(), tg))
    throw InvalidArgument("field shape does not match grids");
  double sup = 0.0, l2 = 0.0;
  for (int n = 0; n < tg.levels(); ++n) {
    const Vector v = u.level(n).transpose();
    const double lo = s == 0 ? ops.grid().h * v.squaredNorm() : h1_sq(ops, v);
    const double hi = s == 0 ? h1_sq(ops, v) : h2_sq(ops, v);
    sup = std::max(sup, lo);
    l2 += tg.weight(n) * hi;
  }
  return std::sqrt(sup) + std::sqrt(l2);
}

double product_derivative_norm(const Field &u, const Field &v,
                               const DiscreteOperators &ops,
                               const TimeGrid &tg, int s) {
  if (s != 0 && s != 1)
    throw InvalidArgument("product bound implemented for s = 0 and s = 1");
  double acc = 0.0;
  for (int n = 0; n < tg.levels(); ++n) {
    const Vector uv =
        u.level(n).transpose().cwiseProduct(Vector(v.level(n).transpose()));
    const Vector d = ops.d1() * uv;
    acc += tg.weight(n) *
           (s == 0 ? hneg1_sq(ops, d) : ops.grid().h * d.squaredNorm());
  }
  return std::sqrt(std::max(acc, 0.0));
}

double viscous_term_norm(const Vector &nu_tilde, const Field &v,
                         const DiscreteOperators &ops, const TimeGrid &tg,
                         int s) {
  if (s != 0 && s != 1)
    throw InvalidArgument("viscous bound implemented for s = 0 and s = 1");
  if (nu_tilde.size() != tg.levels())
    throw InvalidArgument("nu_tilde needs one sample per time level");
  double acc = 0.0;
  for (int n = 0; n < tg.levels(); ++n) {
    const Vector d = nu_tilde[n] * (ops.d2() * v.level(n).transpose());
    acc += tg.weight(n) *
           (s == 0 ? hneg1_sq(ops, d) : ops.grid().h * d.squaredNorm());
  }
  return std::sqrt(std::max(acc, 0.0));
}

BilinearReport check_bilinear_bounds(const DiscreteOperators &ops,
                                     const TimeGrid &tg,
                                     const BilinearOptions &opts) {
  const SpatialGrid &g = ops.grid();
  SmoothRandom rng(opts.seed);
  BilinearReport rep;
  for (int k = 0; k < opts.samples; ++k) {
    const Field u = rng.source(g, tg, 1.0);
    const Field v = rng.source(g, tg, 1.0);
    const Vector nt = random_nu_tilde(rng, tg, 1.0);
    const double nmax = nt.cwiseAbs().maxCoeff();
    const double u0 = ys_norm(u, ops, tg, 0), v0 = ys_norm(v, ops, tg, 0);
    const double u1 = ys_norm(u, ops, tg, 1), v1 = ys_norm(v, ops, tg, 1);
    if (!(u0 * v0 > 0.0) || !(nmax > 0.0)) {
      ++rep.excluded;
      continue;
    }
    rep.product_s0.push_back(product_derivative_norm(u, v, ops, tg, 0) /
                             (u0 * v0));
    rep.product_s1.push_back(product_derivative_norm(u, v, ops, tg, 1) /
                             (u1 * v1));
    rep.viscous_s0.push_back(viscous_term_norm(nt, v, ops, tg, 0) /
                             (nmax * v0));
    rep.viscous_s1.push_back(viscous_term_norm(nt, v, ops, tg, 1) /
                             (nmax * v1));
  }
  rep.product0 = summarize(rep.product_s0);
  rep.product1 = summarize(rep.product_s1);
  rep.viscous0 = summarize(rep.viscous_s0);
  rep.viscous1 = summarize(rep.viscous_s1);
  return rep;
}

std::string to_string(MmsCase c) {
  switch (c) {
  case MmsCase::linear:
    return "linear";
  case MmsCase::nonlinear:
    return "nonlinear";
  case MmsCase::zero:
    return "zero";
  }
  return "linear";
}

bool ConvergenceReport::passed(double min_order) const {
  if (std::all_of(errors.begin(), errors.end(),
                  [](double e) { return e == 0.0; }))
    return true;
  return monotone && std::isfinite(order) && order >= min_order;
}

ConvergenceReport mms_convergence(MmsCase which, const MmsOptions &opts) {
  if (opts.levels < 3)
    throw InvalidArgument("convergence study needs at least 3 levels");
  const double L = opts.length, k = 2.0 * pi / L, nu0 = opts.nu0;
  const double amp = which == MmsCase::zero ? 0.0 : 1.0;

  auto exact = [&](double x, double t) {
    return amp * std::exp(-t) * std::sin(k * x);
  };
  auto transport = [&](double x, double t) {
    return which == MmsCase::linear ? 0.3 * (1.0 + t) * std::sin(k * x) : 0.0;
  };
  auto forcing = [&](double x, double t) {
    const double e = amp * std::exp(-t);
    double f = -e * std::sin(k * x) - e * k * k * k * std::cos(k * x) +
               nu0 * k * k * e * std::sin(k * x);
    if (which == MmsCase::linear)
      f += 0.3 * (1.0 + t) * e * k * std::sin(2.0 * k * x);
    if (which == MmsCase::nonlinear)
      f += 0.5 * k * e * e * std::sin(2.0 * k * x);
    return f;
  };

  ConvergenceReport rep;
  rep.which = which;
  std::vector<double> logh;
  for (int l = 0; l < opts.levels; ++l) {
    const int N = opts.base_cells << l, M = opts.base_steps << l;
    const SpatialGrid g = make_grid(L, N);
    const TimeGrid tg = make_time_grid(opts.horizon, M);
    const DiscreteOperators ops(g);
    const Field F = sample_field(g, tg, forcing);
    const Vector y0 = sample_space(g, [&](double x) { return exact(x, 0.0); });

    Field y;
    if (which == MmsCase::nonlinear) {
      y = solve_nonlinear(ops, Viscosity::constant(nu0), F, y0, tg,
                          opts.nonlinear)
              .y;
    } else {
      CoefficientSet c{Viscosity::constant(nu0), sample_field(g, tg, transport)};
      y = solve_linearized(ops, c, F, y0, tg, opts.nonlinear.stepping);
    }
    const Field ref = sample_field(g, tg, exact);
    double err = 0.0;
    for (int n = 0; n < tg.levels(); ++n)
      err = std::max(err, l2_space(Vector((y.level(n) - ref.level(n)).transpose()), g));
    rep.cells.push_back(N);
    rep.steps.push_back(M);
    rep.errors.push_back(err);
    logh.push_back(std::log(g.h));
  }

  for (std::size_t i = 1; i < rep.errors.size(); ++i) {
    if (!(rep.errors[i] < rep.errors[i - 1]))
      rep.monotone = false;
    rep.pairwise_orders.push_back(
        std::log(rep.errors[i - 1] / rep.errors[i]) /
        std::log(static_cast<double>(rep.cells[i]) / rep.cells[i - 1]));
  }
  if (std::all_of(rep.errors.begin(), rep.errors.end(),
                  [](double e) { return e == 0.0; })) {
    rep.monotone = true;
    rep.order = 0.0;
    rep.pairwise_orders.assign(rep.pairwise_orders.size(), 0.0);
    return rep;
  }
  // least-squares slope of log(err) against log(h)
  const int m = static_cast<int>(logh.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (int i = 0; i < m; ++i) {
    const double ly = std::log(rep.errors[i]);
    sx += logh[i];
    sy += ly;
    sxx += logh[i] * logh[i];
    sxy += logh[i] * ly;
  }
  rep.order = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return rep;
}

} // namespace kdvb
