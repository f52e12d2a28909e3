#include "kdvb/solvers.hpp"

#include "kdvb/errors.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>

namespace kdvb {

double Viscosity::at_level(int n) const {
  return nu0 + (nu_tilde.size() == 0 ? 0.0 : nu_tilde[n]);
}

double Viscosity::at_step(int n, double theta) const {
  if (nu_tilde.size() == 0)
    return nu0;
  return nu0 + (1.0 - theta) * nu_tilde[n] + theta * nu_tilde[n + 1];
}

void Viscosity::validate(const TimeGrid &tg) const {
  if (!(nu0 > 0.0) || !std::isfinite(nu0))
    throw InvalidArgument("nu0 must be positive");
  if (nu_tilde.size() == 0)
    return;
  if (nu_tilde.size() != tg.levels())
    throw InvalidArgument("nu_tilde needs one sample per time level");
  if (!nu_tilde.allFinite() || nu_tilde.minCoeff() < 0.0)
    throw InvalidArgument("nu_tilde must be finite and nonnegative");
}

void CoefficientSet::validate(const SpatialGrid &g, const TimeGrid &tg) const {
  nu.validate(tg);
  if (!ybar.matches(g, tg))
    throw InvalidArgument("ybar shape does not match the grids");
  if (!ybar.all_finite())
    throw InvalidArgument("ybar contains non-finite values");
}

// One factorization per distinct implicit matrix; consecutive steps with
// identical coefficients share it.
struct LinearizedStepper::Cache {
  using LU = Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>;
  std::vector<std::shared_ptr<LU>> lu;
  std::vector<SparseMatrix> explicit_m;
  int distinct = 0;
};

namespace {

bool same_level(const Field &f, int a, int b) {
  return (f.level(a).array() == f.level(b).array()).all();
}

bool zero_level(const Field &f, int n) {
  return (f.level(n).array() == 0.0).all();
}

} // namespace

LinearizedStepper::LinearizedStepper(const DiscreteOperators &ops,
                                     CoefficientSet coeffs, const TimeGrid &tg,
                                     SteppingOptions opts)
    : ops_(&ops), coeffs_(std::move(coeffs)), tg_(tg), opts_(opts),
      cache_(std::make_shared<Cache>()) {
  if (coeffs_.ybar.levels() == 0)
    coeffs_.ybar = Field(ops.grid(), tg);
  coeffs_.validate(ops.grid(), tg);
  if (!(opts_.theta >= 0.5 && opts_.theta <= 1.0))
    throw InvalidArgument("theta must lie in [1/2, 1]");

  const int M = tg.steps;
  cache_->lu.resize(M);
  cache_->explicit_m.resize(M);
  for (int n = 0; n < M; ++n) {
    cache_->explicit_m[n] = explicit_matrix(n);
    const bool reuse =
        n > 0 && coeffs_.nu.at_step(n, opts_.theta) ==
                     coeffs_.nu.at_step(n - 1, opts_.theta) &&
        (same_level(coeffs_.ybar, n + 1, n) ||
         (zero_level(coeffs_.ybar, n + 1) && zero_level(coeffs_.ybar, n)));
    if (reuse) {
      cache_->lu[n] = cache_->lu[n - 1];
      continue;
    }
    auto lu = std::make_shared<Cache::LU>();
    SparseMatrix p = implicit_matrix(n);
    p.makeCompressed();
    lu->compute(p);
    if (lu->info() != Eigen::Success)
      throw FactorizationFailure("step matrix factorization failed at step " +
                                 std::to_string(n));
    cache_->lu[n] = std::move(lu);
    ++cache_->distinct;
  }
}

int LinearizedStepper::factorization_count() const noexcept {
  return cache_->distinct;
}

SparseMatrix LinearizedStepper::implicit_matrix(int n) const {
  const double dt = tg_.dt, th = opts_.theta;
  const double nu = coeffs_.nu.at_step(n, th);
  SparseMatrix k = ops_->d3() - nu * ops_->d2();
  if (!zero_level(coeffs_.ybar, n + 1))
    k += convection_matrix(*ops_, coeffs_.ybar.level(n + 1).transpose());
  return SparseMatrix(ops_->identity() + (dt * th) * k);
}

SparseMatrix LinearizedStepper::explicit_matrix(int n) const {
  const double dt = tg_.dt, th = opts_.theta;
  const double nu = coeffs_.nu.at_step(n, th);
  SparseMatrix k = ops_->d3() - nu * ops_->d2();
  if (!zero_level(coeffs_.ybar, n))
    k += convection_matrix(*ops_, coeffs_.ybar.level(n).transpose());
  return SparseMatrix(ops_->identity() - (dt * (1.0 - th)) * k);
}

Field LinearizedStepper::forward(const Field &f, const Vector &y0) const {
  const SpatialGrid &g = ops_->grid();
  if (!f.matches(g, tg_))
    throw InvalidArgument("source field shape does not match the grids");
  if (y0.size() != g.interior())
    throw InvalidArgument("initial datum has wrong length");
  const double dt = tg_.dt, th = opts_.theta;

  Field y(g, tg_);
  y.level(0) = y0.transpose();
  Vector cur = y0;
  for (int n = 0; n < tg_.steps; ++n) {
    Vector rhs = cache_->explicit_m[n] * cur;
    rhs += dt * ((1.0 - th) * f.level(n) + th * f.level(n + 1)).transpose();
    cur = cache_->lu[n]->solve(rhs);
    y.level(n + 1) = cur.transpose();
  }
  if (!y.all_finite())
    throw SolverError("forward march produced non-finite values");
  return y;
}

LinearizedStepper::Adjoint LinearizedStepper::backward(const Field &g,
                                                       const Vector &phiT) const {
  const SpatialGrid &sg = ops_->grid();
  if (!g.matches(sg, tg_))
    throw InvalidArgument("adjoint source shape does not match the grids");
  if (phiT.size() != sg.interior())
    throw InvalidArgument("terminal datum has wrong length");
  const int M = tg_.steps;
  const double dt = tg_.dt, th = opts_.theta;

  Adjoint out;
  out.multipliers = Field(M, sg.interior());
  // P_{M-1}^T mu^{M-1} = phiT + w_M g^M
  Vector rhs = phiT + tg_.weight(M) * g.level(M).transpose();
  Vector mu = cache_->lu[M - 1]->transpose().solve(rhs);
  out.multipliers.level(M - 1) = mu.transpose();
  // P_{n-1}^T mu^{n-1} = R_n^T mu^n + w_n g^n
  for (int n = M - 1; n >= 1; --n) {
    rhs = cache_->explicit_m[n].transpose() * mu;
    rhs += tg_.weight(n) * g.level(n).transpose();
    mu = cache_->lu[n - 1]->transpose().solve(rhs);
    out.multipliers.level(n - 1) = mu.transpose();
  }
  out.initial = cache_->explicit_m[0].transpose() * mu;
  out.initial += tg_.weight(0) * g.level(0).transpose();

  // Level values: w_n phi^n = dt ((1-theta) mu^n + theta mu^{n-1}).
  out.phi = Field(sg, tg_);
  const Field &m = out.multipliers;
  for (int n = 0; n <= M; ++n) {
    Vector v = Vector::Zero(sg.interior());
    if (n < M)
      v += (1.0 - th) * m.level(n).transpose();
    if (n > 0)
      v += th * m.level(n - 1).transpose();
    out.phi.level(n) = (dt / tg_.weight(n)) * v.transpose();
  }
  if (!out.phi.all_finite() || !out.initial.allFinite())
    throw SolverError("adjoint march produced non-finite values");
  return out;
}

Field solve_linear_constant(const DiscreteOperators &ops, double nu0,
                            const Field &f, const Vector &y0,
                            const TimeGrid &tg, SteppingOptions opts) {
  return solve_linearized(
      ops, CoefficientSet::zero_transport(nu0, ops.grid(), tg), f, y0, tg, opts);
}

Field solve_linearized(const DiscreteOperators &ops,
                       const CoefficientSet &coeffs, const Field &f,
                       const Vector &y0, const TimeGrid &tg,
                       SteppingOptions opts) {
  return LinearizedStepper(ops, coeffs, tg, opts).forward(f, y0);
}

LinearizedStepper::Adjoint solve_adjoint(const DiscreteOperators &ops,
                                         const CoefficientSet &coeffs,
                                         const Field &g, const Vector &phiT,
                                         const TimeGrid &tg,
                                         SteppingOptions opts) {
  return LinearizedStepper(ops, coeffs, tg, opts).backward(g, phiT);
}

std::vector<double> energy_identity_residuals(const DiscreteOperators &ops,
                                              double nu0, const Field &y,
                                              const TimeGrid &tg) {
  const double h = ops.grid().h;
  std::vector<double> out;
  out.reserve(tg.steps);
  for (int n = 0; n < tg.steps; ++n) {
    const Vector a = y.level(n).transpose();
    const Vector b = y.level(n + 1).transpose();
    const double ea = h * a.squaredNorm();
    const double eb = h * b.squaredNorm();
    const double diss =
        tg.dt * nu0 * 0.5 * h * (ops.d1_forward() * (a + b)).squaredNorm();
    const double scale = ea > 0.0 ? ea : 1.0;
    out.push_back(std::abs(eb - ea + diss) / scale);
  }
  return out;
}

namespace {

NonlinearResult picard(const DiscreteOperators &ops, const Viscosity &nu,
                       const Field &F, const Vector &y0, const TimeGrid &tg,
                       const NonlinearOptions &opts) {
  const SpatialGrid &g = ops.grid();
  const LinearizedStepper stepper(ops, CoefficientSet{nu, Field(g, tg)}, tg,
                                  opts.stepping);
  NonlinearResult res;
  res.y = stepper.forward(F, y0);
  double prev = std::numeric_limits<double>::infinity();
  double relax = 1.0;
  for (int k = 1; k <= opts.maxit; ++k) {
    Field next = stepper.forward(F - convection_term(ops, res.y), y0);
    const Field diff = next - res.y;
    const double dist = y0_norm(diff, ops, tg);
    res.history.push_back(dist);
    res.iterations = k;
    if (!std::isfinite(dist))
      break;
    // Damped update once the residual stops decreasing.
    if (dist > prev)
      relax = 0.5;
    res.y = relax == 1.0 ? std::move(next) : res.y + relax * diff;
    prev = dist;
    const double scale = std::max(y0_norm(res.y, ops, tg), 1e-300);
    if (dist <= opts.tol * scale || dist == 0.0)
      return res;
  }
  throw NoConvergence("Picard iteration did not converge in " +
                          std::to_string(opts.maxit) +
                          " iterations (data outside the contraction ball?)",
                      res.history);
}

// Crank-Nicolson with the nonlinearity at the new level replaced by a
// linear extrapolation, so each step is one linear solve.
NonlinearResult semi_implicit(const DiscreteOperators &ops, const Viscosity &nu,
                              const Field &F, const Vector &y0,
                              const TimeGrid &tg, const NonlinearOptions &opts) {
  const SpatialGrid &g = ops.grid();
  const LinearizedStepper stepper(ops, CoefficientSet{nu, Field(g, tg)}, tg,
                                  opts.stepping);
  // Reuse forward() one step at a time through a single-step source.
  const double th = opts.stepping.theta;
  const double dt = tg.dt;
  NonlinearResult res;
  res.y = Field(g, tg);
  res.y.level(0) = y0.transpose();
  Vector prev = y0, cur = y0;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  int factored_for = -1;
  double last_nu = -1.0;
  for (int n = 0; n < tg.steps; ++n) {
    const double nun = nu.at_step(n, th);
    if (factored_for < 0 || nun != last_nu) {
      SparseMatrix p = stepper.implicit_matrix(n);
      p.makeCompressed();
      lu.compute(p);
      if (lu.info() != Eigen::Success)
        throw FactorizationFailure("semi-implicit step factorization failed");
      factored_for = n;
      last_nu = nun;
    }
    const Vector extrap = n == 0 ? cur : Vector(2.0 * cur - prev);
    const Vector nl = (1.0 - th) * convection_term(ops, cur) +
                      th * convection_term(ops, extrap);
    Vector rhs = stepper.explicit_matrix(n) * cur;
    rhs += dt * (((1.0 - th) * F.level(n) + th * F.level(n + 1)).transpose() - nl);
    prev = cur;
    cur = lu.solve(rhs);
    if (!cur.allFinite())
      throw NoConvergence("semi-implicit march blew up at step " +
                              std::to_string(n),
                          {std::numeric_limits<double>::infinity()});
    res.y.level(n + 1) = cur.transpose();
  }
  res.iterations = 1;
  res.history.push_back(0.0);
  return res;
}

} // namespace

NonlinearResult solve_nonlinear(const DiscreteOperators &ops,
                                const Viscosity &nu, const Field &F,
                                const Vector &y0, const TimeGrid &tg,
                                const NonlinearOptions &opts) {
  const SpatialGrid &g = ops.grid();
  nu.validate(tg);
  if (!F.matches(g, tg))
    throw InvalidArgument("forcing shape does not match the grids");
  if (y0.size() != g.interior())
    throw InvalidArgument("initial datum has wrong length");
  if (opts.maxit < 1 || !(opts.tol > 0.0))
    throw InvalidArgument("nonlinear solver needs maxit >= 1 and tol > 0");
  return opts.mode == NonlinearMode::picard
             ? picard(ops, nu, F, y0, tg, opts)
             : semi_implicit(ops, nu, F, y0, tg, opts);
}

NonlinearResult uncontrolled_trajectory(const DiscreteOperators &ops,
                                        const Viscosity &nu,
                                        const Vector &ybar0,
                                        const TimeGrid &tg,
                                        const NonlinearOptions &opts) {
  return solve_nonlinear(ops, nu, Field(ops.grid(), tg), ybar0, tg, opts);
}

std::string to_string(NonlinearMode mode) {
  return mode == NonlinearMode::picard ? "picard" : "semi_implicit";
}

NonlinearMode nonlinear_mode_from_string(const std::string &s) {
  if (s == "picard")
    return NonlinearMode::picard;
  if (s == "semi_implicit")
    return NonlinearMode::semi_implicit;
  throw InvalidArgument("unknown nonlinear mode '" + s + "'");
}

} // namespace kdvb
