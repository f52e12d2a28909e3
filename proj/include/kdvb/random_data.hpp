#pragma once

#include "kdvb/grid.hpp"

#include <cstdint>
#include <random>

namespace kdvb {

/// Seeded band-limited data compatible with the boundary conventions.
///
/// Spatial modes are sin(2 pi k x / L) and cos(2 pi k x / L) - 1 for
/// k = 1..modes, both vanishing at 0 and L with equal end slopes. Time
/// dependence uses cos(j pi t / T), j = 0..2. Coefficients decay like 1/k^2
/// so sampled data is smooth on any grid; the same seed gives the same
/// continuous function regardless of resolution.
class SmoothRandom {
public:
  explicit SmoothRandom(std::uint64_t seed, int modes = 8)
      : rng_(seed), modes_(modes) {}

  struct SpaceFunction {
    double length = 1.0;
    Eigen::VectorXd sin_c, cos_c;
    double operator()(double x) const;
  };
  struct SpaceTimeFunction {
    double length = 1.0, horizon = 1.0;
    Eigen::MatrixXd sin_c, cos_c; // modes x 3
    double operator()(double x, double t) const;
  };

  SpaceFunction space_function(double length);
  SpaceTimeFunction space_time_function(double length, double horizon);

  /// Sampled spatial datum scaled to the given discrete L2 norm.
  Vector initial(const SpatialGrid &g, double l2norm);
  /// Sampled space-time field scaled to the given L2(Q) norm.
  Field source(const SpatialGrid &g, const TimeGrid &tg, double l2norm);

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }

private:
  std::mt19937_64 rng_;
  int modes_;
};

} // namespace kdvb
