#pragma once

#include "kdvb/grid.hpp"
#include "kdvb/operators.hpp"
#include "kdvb/solvers.hpp"
#include "kdvb/weights.hpp"

#include <memory>
#include <string>
#include <vector>

namespace kdvb {

struct ControlOptions {
  Interval omega{0.3, 0.7};
  double s = 0.0;       // Carleman parameter
  double clamp = 200.0; // cap on every weight exponent
  SteppingOptions stepping{1.0}; // backward Euler
  double solve_tol = 1e-10; // relative residual of the SPD solve
  int refinement_steps = 8;
  int cg_maxit = 20000;
  bool force_cg = false; // skip Cholesky (testing the fallback)
};

/// Weighted norms defining the space E, evaluated with midpoint-in-time
/// quadrature so that the singular time t = T is never sampled.
struct ENormReport {
  double n1 = 0.0;       // |e^{s bhat} y|_{L2(Q)}
  double n2 = 0.0;       // |tau^{-9/2} e^{3 s bbreve - s bhat} v|_{L2(omega x (0,T))}
  double n3_sup = 0.0;   // sup_t |e^{s bhat} tau^{-3/2} y|_{L2}
  double n3_l2h1 = 0.0;  // |e^{s bhat} tau^{-3/2} y|_{L2(H1)}
  double n4 = 0.0;       // |e^{2 s bhat} tau^{-5/2} (L y - v)|_{L2(H^-1)}

  bool all_finite() const noexcept;
  std::vector<double> values() const { return {n1, n2, n3_sup, n3_l2h1, n4}; }
  static std::vector<std::string> names() {
    return {"n1", "n2", "n3_sup", "n3_l2h1", "n4"};
  }
};

struct SolveStats {
  std::string method;        // "cholesky" or "pcg"
  int iterations = 0;        // refinement steps or CG iterations
  double relative_residual = 0.0;
  double shift = 0.0;        // diagonal shift of the equilibrated factor
};

struct ControlResult {
  Field control;     // v, zero outside omega
  Field state;       // algebraic state y = e^{-2 s bhat} L* phi
  Field resimulated; // forward solve driven by h + v
  Field multiplier;  // phi on time levels
  Vector multiplier_raw;

  double terminal_norm = 0.0;           // |y(T)| of the re-simulated state
  double algebraic_terminal_norm = 0.0; // |y(T)| of the algebraic state
  double control_norm = 0.0;            // |v|_{L2(omega x (0,T))}
  double bilinear_value = 0.0;          // a(phi, phi)
  double weighted_energy = 0.0;         // weighted |y|^2 + weighted |v|^2
  ENormReport e_norms;
  SolveStats stats;
};

/// Discrete weighted variational problem for null control.
///
/// With S the quadrature row scaling and Lop the forward space-time
/// operator restricted to levels 0..M-1 (the terminal level is fixed at 0),
/// the multiplier solves
///   A phi = G,   A = Lop Qinv Lop^T + Bop R Bop^T,
/// where Qinv carries e^{-2 s bhat} and R the observation weight
/// tau^9 e^{-6 s bbreve + 2 s bhat} on the nodes of omega.
class VariationalSystem {
public:
  VariationalSystem(const DiscreteOperators &ops, CoefficientSet coeffs,
                    const TimeGrid &tg, const CarlemanSpatialProfile &profile,
                    ControlOptions opts);

  const SparseMatrix &matrix() const noexcept { return a_; }
  const SparseMatrix &constraint() const noexcept { return lop_; }
  const SparseMatrix &observation() const noexcept { return bop_; }
  const Vector &state_weight_inverse() const noexcept { return qinv_; }
  const Vector &control_weight() const noexcept { return rdiag_; }
  const std::vector<int> &omega_nodes() const noexcept { return omega_nodes_; }
  const WeightSet &level_weights() const noexcept { return level_w_; }
  const WeightSet &midpoint_weights() const noexcept { return mid_w_; }
  const LinearizedStepper &stepper() const noexcept { return stepper_; }
  const DiscreteOperators &ops() const noexcept { return *ops_; }
  const TimeGrid &time_grid() const noexcept { return tg_; }
  const ControlOptions &options() const noexcept { return opts_; }
  int unknowns() const noexcept { return static_cast<int>(a_.rows()); }

  /// Load vector <G, w> = sum h w + y0 w(0) in the discrete pairing.
  Vector rhs(const Vector &y0, const Field &h) const;

  /// Solves A phi = G (Cholesky with equilibration, PCG fallback).
  Vector solve(const Vector &G, SolveStats *stats = nullptr) const;

  /// a(p, q) = p^T A q.
  double bilinear(const Vector &p, const Vector &q) const;

  Field state_from_multiplier(const Vector &p) const;
  Field control_from_multiplier(const Vector &p) const;
  Field multiplier_on_levels(const Vector &p) const;

  /// Weighted energy of (y, v) as in the identity a(phi,phi) = ...
  double weighted_energy(const Field &y, const Field &v) const;

  /// Throws InvalidArgument unless e^{2 s bhat} tau^{-5/2} h is finite,
  /// i.e. h vanishes at t = T.
  void check_source(const Field &h) const;

private:
  const DiscreteOperators *ops_;
  CoefficientSet coeffs_;
  TimeGrid tg_;
  ControlOptions opts_;
  std::vector<int> omega_nodes_;
  WeightSet level_w_, mid_w_;
  LinearizedStepper stepper_;
  SparseMatrix lop_, bop_, a_;
  Vector qinv_, rdiag_;
  Vector scale_; // diag(A)^{-1/2}
  struct Factor;
  std::shared_ptr<const Factor> factor_;
};

VariationalSystem assemble_variational_system(
    const DiscreteOperators &ops, const CoefficientSet &coeffs,
    const TimeGrid &tg, const CarlemanSpatialProfile &profile,
    const ControlOptions &opts);

/// Weighted E-space norms of a state/control pair. The last clause uses
/// the step residual of the discrete equation minus the control.
ENormReport e_norms(const VariationalSystem &sys, const Field &y,
                    const Field &v);

ControlResult solve_null_control(const VariationalSystem &sys,
                                 const Vector &y0, const Field &h);

ControlResult solve_null_control(const VariationalSystem &sys,
                                 const Vector &y0);

/// Two-grid finiteness heuristic: ratio fine/coarse per E-norm.
struct RefinementCheck {
  std::vector<double> ratios;
  double limit = 1.5;
  bool stable() const;
  bool any_growth_above(double factor) const;
};

ENormReport verify_E_membership(const VariationalSystem &sys,
                                const ControlResult &res);
RefinementCheck compare_refinement(const ENormReport &coarse,
                                   const ENormReport &fine,
                                   double limit = 1.5);

struct TrackingOptions {
  double tol = 1e-10;
  int maxit = 10;
  double delta = 0.1; // expected radius of the local result
  NonlinearOptions nonlinear{};
};

struct TrajectoryControlResult {
  Field control;
  Field state;        // ybar + z (algebraic)
  Field resimulated;  // nonlinear forward solve driven by v
  Field deviation;    // z
  std::vector<double> history; // |z^{k+1} - z^k|_{L2(Q)}
  int iterations = 0;
  double initial_deviation = 0.0; // |y0 - ybar(0)|
  double terminal_gap = 0.0;      // |y(T) - ybar(T)| of the re-simulation
  double control_norm = 0.0;
  bool within_delta = true;
};

/// Steers y0 onto ybar by iterating null controls of the linearized
/// deviation system with source -z z_x frozen from the previous iterate.
TrajectoryControlResult control_to_trajectory(
    const DiscreteOperators &ops, const Viscosity &nu, const Field &ybar,
    const Vector &y0, const TimeGrid &tg, const CarlemanSpatialProfile &profile,
    const ControlOptions &copts, const TrackingOptions &topts);

/// Bisection on the amplitude of the deviation y0 - ybar(0) = a * shape
/// (shape normalized to unit L2 norm) for the largest a at which tracking
/// converges.
struct DeltaSweep {
  double largest_converged = 0.0;
  double smallest_failed = 0.0;
  std::vector<std::pair<double, bool>> trials;
};

DeltaSweep sweep_delta(const DiscreteOperators &ops, const Viscosity &nu,
                       const Field &ybar, const Vector &shape,
                       const TimeGrid &tg,
                       const CarlemanSpatialProfile &profile,
                       const ControlOptions &copts,
                       const TrackingOptions &topts, double lo, double hi,
                       int bisections);

} // namespace kdvb
