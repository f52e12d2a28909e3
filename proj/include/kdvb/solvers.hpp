#pragma once

#include "kdvb/grid.hpp"
#include "kdvb/operators.hpp"

#include <memory>
#include <string>
#include <vector>

namespace kdvb {

/// nu(t) = nu0 + nu_tilde(t), nu_tilde sampled on time levels, nu0 > 0.
struct Viscosity {
  double nu0 = 0.1;
  Vector nu_tilde; // one entry per time level; empty means zero

  static Viscosity constant(double nu0) { return Viscosity{nu0, {}}; }

  double at_level(int n) const;
  /// Linear interpolation at t_n + theta * dt.
  double at_step(int n, double theta) const;
  void validate(const TimeGrid &tg) const;
};

/// Coefficients of the linearized operator around a frozen trajectory.
struct CoefficientSet {
  Viscosity nu;
  Field ybar; // transport coefficient; zero field if not set

  static CoefficientSet zero_transport(double nu0, const SpatialGrid &g,
                                       const TimeGrid &tg) {
    return {Viscosity::constant(nu0), Field(g, tg)};
  }
  void validate(const SpatialGrid &g, const TimeGrid &tg) const;
};

struct SteppingOptions {
  double theta = 0.5; // 0.5 Crank-Nicolson, 1 backward Euler
};

/// One-step theta scheme for
///   y_t + D3 y - nu(t) D2 y + B(ybar) y = f,
/// written per step n as P_n y^{n+1} = R_n y^n + dt F^n with
///   P_n = I + dt theta (D3 - nu_n D2 + B(ybar^{n+1})),
///   R_n = I - dt (1-theta) (D3 - nu_n D2 + B(ybar^n)),
///   F^n = (1-theta) f^n + theta f^{n+1},  nu_n = nu(t_n + theta dt).
///
/// The adjoint march uses the exact transposes, so discrete duality holds
/// to rounding.
class LinearizedStepper {
public:
  LinearizedStepper(const DiscreteOperators &ops, CoefficientSet coeffs,
                    const TimeGrid &tg, SteppingOptions opts = {});

  const DiscreteOperators &ops() const noexcept { return *ops_; }
  const TimeGrid &time_grid() const noexcept { return tg_; }
  const CoefficientSet &coefficients() const noexcept { return coeffs_; }
  double theta() const noexcept { return opts_.theta; }

  /// P_n and R_n of step n.
  SparseMatrix implicit_matrix(int n) const;
  SparseMatrix explicit_matrix(int n) const;

  /// Forward march with a level source f.
  Field forward(const Field &f, const Vector &y0) const;

  struct Adjoint {
    Field phi;      // level values paired with sources in the duality identity
    Vector initial; // phi(0), paired with y0
    Field multipliers; // raw step multipliers mu^0..mu^{M-1}
  };
  Adjoint backward(const Field &g, const Vector &phiT) const;

  /// Number of distinct factorizations held (1 when coefficients are
  /// time-invariant).
  int factorization_count() const noexcept;

private:
  struct Cache;
  const DiscreteOperators *ops_;
  CoefficientSet coeffs_;
  TimeGrid tg_;
  SteppingOptions opts_;
  std::shared_ptr<Cache> cache_;
};

/// Solves y_t + y_xxx - nu0 y_xx = f with zero-forcing boundary conventions.
Field solve_linear_constant(const DiscreteOperators &ops, double nu0,
                            const Field &f, const Vector &y0,
                            const TimeGrid &tg, SteppingOptions opts = {});

Field solve_linearized(const DiscreteOperators &ops,
                       const CoefficientSet &coeffs, const Field &f,
                       const Vector &y0, const TimeGrid &tg,
                       SteppingOptions opts = {});

/// Backward solve of -phi_t - phi_xxx - nu phi_xx - ybar phi_x = g,
/// phi(T) = phiT, as the transpose of the forward linearized march.
LinearizedStepper::Adjoint solve_adjoint(const DiscreteOperators &ops,
                                         const CoefficientSet &coeffs,
                                         const Field &g, const Vector &phiT,
                                         const TimeGrid &tg,
                                         SteppingOptions opts = {});

/// h * sum over steps of the energy identity residual of the
/// Crank-Nicolson march for y_t + D3 y - nu0 D2 y = 0:
///   |y^{n+1}|^2 - |y^n|^2 + dt nu0 / 2 |D1p (y^{n+1} + y^n)|^2,
/// returned per step, relative to |y^n|^2.
std::vector<double> energy_identity_residuals(const DiscreteOperators &ops,
                                              double nu0, const Field &y,
                                              const TimeGrid &tg);

enum class NonlinearMode { picard, semi_implicit };

struct NonlinearOptions {
  NonlinearMode mode = NonlinearMode::picard;
  double tol = 1e-12;
  int maxit = 50;
  SteppingOptions stepping{};
};

struct NonlinearResult {
  Field y;
  int iterations = 0;
  std::vector<double> history; // Y^0 distance between iterates
};

/// y_t + y_xxx - nu(t) y_xx + y y_x = F with the skew-split convection.
/// Throws NoConvergence if the Picard map does not contract.
NonlinearResult solve_nonlinear(const DiscreteOperators &ops,
                                const Viscosity &nu, const Field &F,
                                const Vector &y0, const TimeGrid &tg,
                                const NonlinearOptions &opts = {});

/// Uncontrolled trajectory ybar (zero forcing).
NonlinearResult uncontrolled_trajectory(const DiscreteOperators &ops,
                                        const Viscosity &nu,
                                        const Vector &ybar0,
                                        const TimeGrid &tg,
                                        const NonlinearOptions &opts = {});

std::string to_string(NonlinearMode mode);
NonlinearMode nonlinear_mode_from_string(const std::string &s);

} // namespace kdvb
