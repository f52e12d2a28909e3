#include "kdvb/control.hpp"

#include "kdvb/errors.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace kdvb {

namespace {

using Triplet = Eigen::Triplet<double>;

std::vector<int> omega_indices(const SpatialGrid &g, const Interval &omega) {
  std::vector<int> idx;
  for (int i = 0; i < g.interior(); ++i)
    if (omega.contains(g.node(i + 1)))
      idx.push_back(i);
  return idx;
}

void append_block(std::vector<Triplet> &trips, const SparseMatrix &m,
                  int row0, int col0, double scale) {
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it)
      trips.emplace_back(row0 + static_cast<int>(it.row()),
                         col0 + static_cast<int>(it.col()), scale * it.value());
}

} // namespace

bool ENormReport::all_finite() const noexcept {
  for (double v : values())
    if (!std::isfinite(v))
      return false;
  return true;
}

struct VariationalSystem::Factor {
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt;
  SparseMatrix scaled;
  double shift = 0.0;
  bool ok = false;
};

VariationalSystem::VariationalSystem(const DiscreteOperators &ops,
                                     CoefficientSet coeffs, const TimeGrid &tg,
                                     const CarlemanSpatialProfile &profile,
                                     ControlOptions opts)
    : ops_(&ops), coeffs_(std::move(coeffs)), tg_(tg), opts_(opts),
      stepper_(ops, coeffs_, tg, opts.stepping) {
  const SpatialGrid &g = ops.grid();
  if (std::abs(profile.length() - g.length) > 1e-12 * g.length)
    throw InvalidArgument("weight profile length does not match the grid");
  if (!(opts_.s > 0.0))
    throw InvalidArgument("Carleman parameter s must be positive");
  omega_nodes_ = omega_indices(g, opts_.omega);
  if (omega_nodes_.empty())
    throw InvalidArgument("control region contains no grid nodes");

  level_w_ = eval_beta_weights(profile, tg, opts_.s, opts_.clamp,
                               TimeSampling::levels);
  mid_w_ = eval_beta_weights(profile, tg, opts_.s, opts_.clamp,
                             TimeSampling::midpoints);

  const int n = g.interior();
  const int M = tg.steps;
  const int nw = static_cast<int>(omega_nodes_.size());
  const double h = g.h, dt = tg.dt, th = opts_.stepping.theta;

  // Rows: initial condition, then one block per step. Columns: levels
  // 0..M-1 of the state (level M is pinned to zero).
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(M) * n * 24);
  for (int i = 0; i < n; ++i)
    trips.emplace_back(i, i, h);
  for (int k = 0; k < M; ++k) {
    const int row0 = (k + 1) * n;
    append_block(trips, stepper_.explicit_matrix(k), row0, k * n, -h);
    if (k + 1 < M)
      append_block(trips, stepper_.implicit_matrix(k), row0, (k + 1) * n, h);
  }
  lop_.resize((M + 1) * n, M * n);
  lop_.setFromTriplets(trips.begin(), trips.end());

  trips.clear();
  for (int k = 0; k < M; ++k) {
    const int row0 = (k + 1) * n;
    for (int j = 0; j < nw; ++j) {
      trips.emplace_back(row0 + omega_nodes_[j], k * nw + j, dt * h * (1.0 - th));
      trips.emplace_back(row0 + omega_nodes_[j], (k + 1) * nw + j, dt * h * th);
    }
  }
  bop_.resize((M + 1) * n, (M + 1) * nw);
  bop_.setFromTriplets(trips.begin(), trips.end());

  qinv_.resize(M * n);
  for (int k = 0; k < M; ++k)
    qinv_.segment(k * n, n).setConstant(level_w_.decay2[k] / (tg.weight(k) * h));
  rdiag_.resize((M + 1) * nw);
  for (int k = 0; k <= M; ++k)
    rdiag_.segment(k * nw, nw)
        .setConstant(level_w_.observation[k] / (tg.weight(k) * h));

  a_ = SparseMatrix(lop_ * qinv_.asDiagonal() * lop_.transpose()) +
       SparseMatrix(bop_ * rdiag_.asDiagonal() * bop_.transpose());
  a_ = 0.5 * (a_ + SparseMatrix(a_.transpose()));
  a_.prune(0.0);
  a_.makeCompressed();

  const Vector diag = a_.diagonal();
  if (!(diag.array() > 0.0).all() || !diag.allFinite())
    throw FactorizationFailure(
        "variational matrix has a nonpositive diagonal; lower the target "
        "exponent or the weight clamp");
  scale_ = diag.cwiseSqrt().cwiseInverse();

  auto f = std::make_shared<Factor>();
  f->scaled = scale_.asDiagonal() * a_ * scale_.asDiagonal();
  if (!opts_.force_cg) {
    // shifted factor, refined against the unshifted matrix
    SparseMatrix eye(f->scaled.rows(), f->scaled.cols());
    eye.setIdentity();
    for (double shift : {0.0, 1e-14, 1e-12, 1e-10}) {
      f->llt.compute(shift == 0.0 ? f->scaled
                                  : SparseMatrix(f->scaled + shift * eye));
      if (f->llt.info() == Eigen::Success) {
        f->ok = true;
        f->shift = shift;
        break;
      }
    }
  }
  factor_ = std::move(f);
}

VariationalSystem assemble_variational_system(
    const DiscreteOperators &ops, const CoefficientSet &coeffs,
    const TimeGrid &tg, const CarlemanSpatialProfile &profile,
    const ControlOptions &opts) {
  return VariationalSystem(ops, coeffs, tg, profile, opts);
}

void VariationalSystem::check_source(const Field &h) const {
  if (!h.matches(ops_->grid(), tg_))
    throw InvalidArgument("source field shape does not match the grids");
  if (!h.all_finite())
    throw InvalidArgument("source field is not finite");
  if ((h.level(tg_.steps).array() != 0.0).any())
    throw InvalidArgument("weighted source e^{2 s bhat} tau^{-5/2} h is not "
                          "finite: h must vanish at t = T");
}

Vector VariationalSystem::rhs(const Vector &y0, const Field &h) const {
  const SpatialGrid &g = ops_->grid();
  const int n = g.interior();
  const int M = tg_.steps;
  if (y0.size() != n)
    throw InvalidArgument("initial datum has wrong length");
  check_source(h);
  const double th = opts_.stepping.theta;
  Vector G(unknowns());
  G.segment(0, n) = g.h * y0;
  for (int k = 0; k < M; ++k)
    G.segment((k + 1) * n, n) =
        (tg_.dt * g.h) *
        ((1.0 - th) * h.level(k) + th * h.level(k + 1)).transpose();
  return G;
}

namespace {
std::string scientific(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}
} // namespace

Vector VariationalSystem::solve(const Vector &G, SolveStats *stats) const {
  SolveStats local;
  SolveStats &st = stats ? *stats : local;
  const double gnorm = G.norm();
  if (gnorm == 0.0) {
    st = {"trivial", 0, 0.0};
    return Vector::Zero(G.size());
  }
  Vector p = Vector::Zero(G.size());
  double rel = 1.0;
  if (factor_->ok) {
    st.method = "cholesky";
    st.iterations = 0;
    st.shift = factor_->shift;
    Vector r = G;
    for (int it = 0; it <= opts_.refinement_steps; ++it) {
      const Vector dz = factor_->llt.solve(Vector(scale_.cwiseProduct(r)));
      p += scale_.cwiseProduct(dz);
      r = G - a_ * p;
      const double next = r.norm() / gnorm;
      st.iterations = it + 1;
      if (next >= rel && it > 0) {
        rel = std::min(rel, next);
        break;
      }
      rel = next;
      if (rel <= 0.01 * opts_.solve_tol)
        break;
    }
  }
  if (!factor_->ok || !(rel <= opts_.solve_tol)) {
    // Jacobi-preconditioned CG on the equilibrated system.
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper,
                             Eigen::IdentityPreconditioner>
        cg;
    cg.setMaxIterations(opts_.cg_maxit);
    cg.setTolerance(0.1 * opts_.solve_tol);
    cg.compute(factor_->scaled);
    // restarted on the true residual
    Vector cand = p;
    double crel = factor_->ok ? rel : 1.0;
    int total = 0;
    for (int restart = 0; restart <= opts_.refinement_steps; ++restart) {
      const Vector z = cg.solve(Vector(scale_.cwiseProduct(G - a_ * cand)));
      total += static_cast<int>(cg.iterations());
      const Vector next = cand + scale_.cwiseProduct(z);
      const double nrel = (G - a_ * next).norm() / gnorm;
      if (!(nrel < crel))
        break;
      cand = next;
      crel = nrel;
      if (crel <= opts_.solve_tol)
        break;
    }
    if (!factor_->ok || crel < rel) {
      p = cand;
      rel = crel;
      st.method = "pcg";
      st.iterations = total;
    }
  }
  st.relative_residual = rel;
  if (!p.allFinite() || !(rel <= opts_.solve_tol))
    throw FactorizationFailure(
        "variational solve stagnated at relative residual " + scientific(rel) +
        "; the weights are too ill-conditioned, lower s_target_exponent or "
        "the clamp");
  return p;
}

double VariationalSystem::bilinear(const Vector &p, const Vector &q) const {
  return p.dot(a_ * q);
}

Field VariationalSystem::state_from_multiplier(const Vector &p) const {
  const int n = ops_->grid().interior();
  const Vector y = qinv_.cwiseProduct(lop_.transpose() * p);
  Field out(ops_->grid(), tg_);
  for (int k = 0; k < tg_.steps; ++k)
    out.level(k) = y.segment(k * n, n).transpose();
  return out;
}

Field VariationalSystem::control_from_multiplier(const Vector &p) const {
  const int nw = static_cast<int>(omega_nodes_.size());
  const Vector v = -rdiag_.cwiseProduct(bop_.transpose() * p);
  Field out(ops_->grid(), tg_);
  for (int k = 0; k <= tg_.steps; ++k)
    for (int j = 0; j < nw; ++j)
      out(k, omega_nodes_[j]) = v[k * nw + j];
  return out;
}

Field VariationalSystem::multiplier_on_levels(const Vector &p) const {
  const int n = ops_->grid().interior();
  const int M = tg_.steps;
  const double th = opts_.stepping.theta;
  Field out(ops_->grid(), tg_);
  for (int k = 0; k <= M; ++k) {
    Vector v = Vector::Zero(n);
    if (k < M)
      v += (1.0 - th) * p.segment((k + 1) * n, n);
    if (k > 0)
      v += th * p.segment(k * n, n);
    out.level(k) = (tg_.dt / tg_.weight(k)) * v.transpose();
  }
  return out;
}

double VariationalSystem::weighted_energy(const Field &y, const Field &v) const {
  const double h = ops_->grid().h;
  double sum = 0.0;
  for (int k = 0; k < tg_.steps; ++k)
    sum += tg_.weight(k) * h * y.level(k).squaredNorm() / level_w_.decay2[k];
  for (int k = 0; k <= tg_.steps; ++k) {
    const double rho = level_w_.observation[k];
    if (rho == 0.0)
      continue;
    double vv = 0.0;
    for (int i : omega_nodes_)
      vv += v(k, i) * v(k, i);
    sum += tg_.weight(k) * h * vv / rho;
  }
  return sum;
}

ENormReport e_norms(const VariationalSystem &sys, const Field &y,
                    const Field &v) {
  const DiscreteOperators &ops = sys.ops();
  const TimeGrid &tg = sys.time_grid();
  const SpatialGrid &g = ops.grid();
  const WeightSet &w = sys.midpoint_weights();
  const LinearizedStepper &st = sys.stepper();
  if (!y.matches(g, tg) || !v.matches(g, tg))
    throw InvalidArgument("E-norm inputs do not match the grids");
  const double th = st.theta(), dt = tg.dt;

  double n1 = 0.0, n2 = 0.0, sup3 = 0.0, h13 = 0.0, n4 = 0.0;
  for (int k = 0; k < tg.steps; ++k) {
    const Vector ym = 0.5 * (y.level(k) + y.level(k + 1)).transpose();
    const Vector vm = 0.5 * (v.level(k) + v.level(k + 1)).transpose();
    const double l2y = g.h * ym.squaredNorm();
    n1 += dt * w.growth[k] * w.growth[k] * l2y;
    n2 += dt * w.control[k] * w.control[k] * g.h * vm.squaredNorm();
    const double sw = w.state[k] * w.state[k];
    sup3 = std::max(sup3, sw * l2y);
    h13 += dt * sw * (l2y + g.h * (ops.d1_forward() * ym).squaredNorm());

    const Vector yk = y.level(k).transpose(), yk1 = y.level(k + 1).transpose();
    const Vector r =
        (st.implicit_matrix(k) * yk1 - st.explicit_matrix(k) * yk) / dt -
        ((1.0 - th) * v.level(k) + th * v.level(k + 1)).transpose();
    const Vector riesz = ops.solve_shifted_laplacian(r);
    n4 += dt * w.source[k] * w.source[k] * g.h * r.dot(riesz);
  }
  ENormReport rep;
  rep.n1 = std::sqrt(n1);
  rep.n2 = std::sqrt(n2);
  rep.n3_sup = std::sqrt(sup3);
  rep.n3_l2h1 = std::sqrt(h13);
  rep.n4 = std::sqrt(std::max(n4, 0.0));
  return rep;
}

ControlResult solve_null_control(const VariationalSystem &sys,
                                 const Vector &y0, const Field &h) {
  const SpatialGrid &g = sys.ops().grid();
  const TimeGrid &tg = sys.time_grid();
  const Vector G = sys.rhs(y0, h);

  ControlResult res;
  res.multiplier_raw = sys.solve(G, &res.stats);
  const Vector &p = res.multiplier_raw;
  res.state = sys.state_from_multiplier(p);
  res.control = sys.control_from_multiplier(p);
  res.multiplier = sys.multiplier_on_levels(p);
  res.resimulated = sys.stepper().forward(h + res.control, y0);

  res.terminal_norm =
      l2_space(Vector(res.resimulated.level(tg.steps).transpose()), g);
  res.algebraic_terminal_norm =
      l2_space(Vector(res.state.level(tg.steps).transpose()), g);
  res.control_norm = l2_spacetime(res.control, g, tg);
  res.bilinear_value = sys.bilinear(p, p);
  res.weighted_energy = sys.weighted_energy(res.state, res.control);
  res.e_norms = e_norms(sys, res.state, res.control);
  return res;
}

ControlResult solve_null_control(const VariationalSystem &sys,
                                 const Vector &y0) {
  return solve_null_control(sys, y0, Field(sys.ops().grid(), sys.time_grid()));
}

ENormReport verify_E_membership(const VariationalSystem &sys,
                                const ControlResult &res) {
  return e_norms(sys, res.state, res.control);
}

bool RefinementCheck::stable() const {
  return std::all_of(ratios.begin(), ratios.end(),
                     [this](double r) { return std::isfinite(r) && r <= limit; });
}

bool RefinementCheck::any_growth_above(double factor) const {
  return std::any_of(ratios.begin(), ratios.end(),
                     [factor](double r) { return !std::isfinite(r) || r > factor; });
}

RefinementCheck compare_refinement(const ENormReport &coarse,
                                   const ENormReport &fine, double limit) {
  RefinementCheck c;
  c.limit = limit;
  const auto a = coarse.values(), b = fine.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0 && b[i] == 0.0)
      c.ratios.push_back(1.0);
    else
      c.ratios.push_back(a[i] == 0.0 ? std::numeric_limits<double>::infinity()
                                     : b[i] / a[i]);
  }
  return c;
}

namespace {

TrajectoryControlResult track_with(const VariationalSystem &sys,
                                   const Viscosity &nu, const Field &ybar,
                                   const Vector &y0,
                                   const TrackingOptions &topts) {
  const DiscreteOperators &ops = sys.ops();
  const SpatialGrid &g = ops.grid();
  const TimeGrid &tg = sys.time_grid();

  TrajectoryControlResult out;
  const Vector z0 = y0 - ybar.level(0).transpose();
  out.initial_deviation = l2_space(z0, g);
  out.within_delta = out.initial_deviation <= topts.delta;

  Field z(g, tg);
  Field v(g, tg);
  double first = 0.0;
  bool converged = false;
  for (int k = 1; k <= topts.maxit; ++k) {
    const Field h = -1.0 * convection_term(ops, z);
    const ControlResult r = solve_null_control(sys, z0, h);
    const double dist = l2_spacetime(r.state - z, g, tg);
    out.history.push_back(dist);
    out.iterations = k;
    z = r.state;
    v = r.control;
    if (k == 1)
      first = l2_spacetime(z, g, tg);
    if (!std::isfinite(dist))
      break;
    if (dist <= topts.tol * first || dist == 0.0) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw NoConvergence("trajectory fixed point did not converge in " +
                            std::to_string(topts.maxit) +
                            " iterations (|y0 - ybar0| = " +
                            std::to_string(out.initial_deviation) +
                            " may lie outside the local ball)",
                        out.history);

  out.deviation = z;
  out.control = v;
  out.state = ybar + z;
  out.control_norm = l2_spacetime(v, g, tg);
  NonlinearOptions nl = topts.nonlinear;
  nl.stepping = sys.options().stepping;
  const NonlinearResult sim = solve_nonlinear(ops, nu, v, y0, tg, nl);
  out.resimulated = sim.y;
  out.terminal_gap = l2_space(
      Vector((sim.y.level(tg.steps) - ybar.level(tg.steps)).transpose()), g);
  return out;
}

} // namespace

TrajectoryControlResult control_to_trajectory(
    const DiscreteOperators &ops, const Viscosity &nu, const Field &ybar,
    const Vector &y0, const TimeGrid &tg, const CarlemanSpatialProfile &profile,
    const ControlOptions &copts, const TrackingOptions &topts) {
  if (y0.size() != ops.grid().interior())
    throw InvalidArgument("initial datum has wrong length");
  if (topts.maxit < 1 || !(topts.tol > 0.0))
    throw InvalidArgument("tracking needs maxit >= 1 and tol > 0");
  const VariationalSystem sys(ops, CoefficientSet{nu, ybar}, tg, profile, copts);
  return track_with(sys, nu, ybar, y0, topts);
}

DeltaSweep sweep_delta(const DiscreteOperators &ops, const Viscosity &nu,
                       const Field &ybar, const Vector &shape,
                       const TimeGrid &tg,
                       const CarlemanSpatialProfile &profile,
                       const ControlOptions &copts,
                       const TrackingOptions &topts, double lo, double hi,
                       int bisections) {
  if (!(lo > 0.0 && hi > lo))
    throw InvalidArgument("delta sweep needs 0 < lo < hi");
  const double sn = l2_space(shape, ops.grid());
  if (!(sn > 0.0))
    throw InvalidArgument("delta sweep shape must be nonzero");
  const VariationalSystem sys(ops, CoefficientSet{nu, ybar}, tg, profile, copts);
  const Vector base = ybar.level(0).transpose();

  auto converges = [&](double a) {
    try {
      track_with(sys, nu, ybar, Vector(base + (a / sn) * shape), topts);
      return true;
    } catch (const SolverError &) {
      return false;
    }
  };

  DeltaSweep out;
  // Grow until failure, then bisect in log scale.
  double good = 0.0, bad = 0.0;
  for (double a = lo; a <= hi; a *= 2.0) {
    const bool ok = converges(a);
    out.trials.emplace_back(a, ok);
    if (ok) {
      good = a;
    } else {
      bad = a;
      break;
    }
  }
  if (bad > 0.0 && good > 0.0) {
    for (int i = 0; i < bisections; ++i) {
      const double mid = std::sqrt(good * bad);
      const bool ok = converges(mid);
      out.trials.emplace_back(mid, ok);
      (ok ? good : bad) = mid;
    }
  }
  out.largest_converged = good;
  out.smallest_failed = bad;
  return out;
}

} // namespace kdvb
