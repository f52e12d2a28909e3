#pragma once

#include "kdvb/grid.hpp"
#include "kdvb/operators.hpp"
#include "kdvb/solvers.hpp"
#include "kdvb/weights.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace kdvb {

/// Max and median of a sample, ignoring nothing (callers drop 0/0 first).
struct SampleSummary {
  double max = 0.0;
  double median = 0.0;
  int count = 0;
};
SampleSummary summarize(std::vector<double> values);

/// alpha: weights singular at both ends, s powers included.
/// beta: weights regular at t = 0, |phi(0)|^2 added to the left side.
enum class CarlemanVariant { alpha, beta };

std::string to_string(CarlemanVariant v);
CarlemanVariant carleman_variant_from_string(const std::string &s);

struct CarlemanReport {
  CarlemanVariant variant = CarlemanVariant::beta;
  double s = 0.0;
  double clamp = 200.0;
  int cells = 0, steps = 0;
  std::uint64_t seed = 0;
  std::vector<double> lhs, rhs, ratio;
  int excluded = 0;
  int clamped_entries = 0;
  SampleSummary summary;

  bool finite() const;
};

struct CarlemanOptions {
  CarlemanVariant variant = CarlemanVariant::beta;
  int samples = 50;
  std::uint64_t seed = 1;
  double clamp = 200.0;
  SteppingOptions stepping{};
};

/// Ratio lhs/rhs of the weighted observability inequality for random
/// adjoint data (g, phi_T). Weights are taken at cell-centered times.
CarlemanReport check_carleman(const DiscreteOperators &ops,
                              const CoefficientSet &coeffs, const TimeGrid &tg,
                              const CarlemanSpatialProfile &profile, double s,
                              const CarlemanOptions &opts);

struct DualityReport {
  std::vector<double> residuals; // relative to the sum of term magnitudes
  int excluded = 0;
  SampleSummary summary;
  bool perturbed_adjoint = false;
};

struct DualityOptions {
  int samples = 100;
  std::uint64_t seed = 2;
  bool random_coefficients = true; // random ybar and nu_tilde
  double adjoint_nu_perturbation = 0.0; // nonzero only for the negative control
  SteppingOptions stepping{};
};

/// Residual of
///   sum y g + <y(T), phi_T> = sum f phi + <y0, phi(0)>
/// between the forward and adjoint marches.
DualityReport check_duality(const DiscreteOperators &ops, double nu0,
                            const TimeGrid &tg, const DualityOptions &opts);

struct EnergyReport {
  std::vector<double> ratios; // (sup L2 + L2 H1) / (|y0| + |f|_{L1 L2})
  int excluded = 0;
  SampleSummary summary;
  double max_identity_residual = 0.0; // f = 0, Crank-Nicolson
};

struct EnergyOptions {
  int samples = 100;
  std::uint64_t seed = 3;
};

EnergyReport check_energy_kato(const DiscreteOperators &ops, double nu0,
                               const TimeGrid &tg, const EnergyOptions &opts);

struct BilinearReport {
  // |(uv)_x|_{L2 H^{s-1}} / (|u|_{Y^s} |v|_{Y^s})
  std::vector<double> product_s0, product_s1;
  // |nu_tilde v_xx|_{L2 H^{s-1}} / (|nu_tilde|_inf |v|_{Y^s})
  std::vector<double> viscous_s0, viscous_s1;
  int excluded = 0;
  SampleSummary product0, product1, viscous0, viscous1;
};

struct BilinearOptions {
  int samples = 100;
  std::uint64_t seed = 4;
};

/// Discrete Y^s_T norms: Y^0 = sup L2 + L2(H1), Y^1 = sup H1 + L2(H2).
double ys_norm(const Field &u, const DiscreteOperators &ops, const TimeGrid &tg,
               int s);

/// |(uv)_x|_{L2(H^{s-1})} for s = 0 (discrete H^-1) or s = 1 (L2).
double product_derivative_norm(const Field &u, const Field &v,
                               const DiscreteOperators &ops,
                               const TimeGrid &tg, int s);

/// |nu_tilde v_xx|_{L2(H^{s-1})} for s = 0 or 1.
double viscous_term_norm(const Vector &nu_tilde, const Field &v,
                         const DiscreteOperators &ops, const TimeGrid &tg,
                         int s);

BilinearReport check_bilinear_bounds(const DiscreteOperators &ops,
                                     const TimeGrid &tg,
                                     const BilinearOptions &opts);

enum class MmsCase { linear, nonlinear, zero };

std::string to_string(MmsCase c);

struct ConvergenceReport {
  MmsCase which = MmsCase::linear;
  std::vector<int> cells, steps;
  std::vector<double> errors; // sup_t L2 error
  std::vector<double> pairwise_orders;
  double order = 0.0; // least-squares slope of log error vs log h
  bool monotone = true;
  bool passed(double min_order) const;
};

struct MmsOptions {
  double length = 1.0, horizon = 1.0, nu0 = 0.1;
  int base_cells = 32, base_steps = 64;
  int levels = 3;
  NonlinearOptions nonlinear{};
};

/// Manufactured solution y* = e^{-t} sin(2 pi x / L) on nested grids
/// (cells and steps doubled per level). The linear case carries the
/// transport coefficient ybar = 0.3 (1 + t) sin(2 pi x / L).
ConvergenceReport mms_convergence(MmsCase which, const MmsOptions &opts);

} // namespace kdvb
