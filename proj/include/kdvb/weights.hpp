#pragma once

#include "kdvb/grid.hpp"

#include <array>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace kdvb {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const noexcept { return x > lo && x < hi; }
};

/// Positive C^4 spatial profile for the Carleman weights.
///
/// On [0, l1] it is eps x^3 - 3 l1 x^2 - x + C1, on [l2, L] it is
/// -eps x^3 + (1 + 3 eps L^2) x + C2 with C1 = 2 eps L^3 + L + C2.
/// Over the control region a degree-9 Hermite polynomial joins the two
/// cubics with matching value and derivatives up to order four.
class CarlemanSpatialProfile {
public:
  double length() const noexcept { return length_; }
  const Interval &omega() const noexcept { return omega_; }
  double eps() const noexcept { return eps_; }
  double c1() const noexcept { return c1_; }
  double c2() const noexcept { return c2_; }

  /// Monomial coefficients (ascending) of the outer cubics.
  const std::array<double, 4> &left_cubic() const noexcept { return left_; }
  const std::array<double, 4> &right_cubic() const noexcept { return right_; }
  /// Bridge coefficients in u = (x - l1) / (l2 - l1), ascending.
  const std::array<double, 10> &bridge() const noexcept { return bridge_; }

  enum class Piece { left, bridge, right };

  /// k-th derivative (k = 0..4) at x in [0, L].
  double derivative(double x, int k) const;
  /// k-th derivative of one piece, evaluated anywhere (for junction checks).
  double piece_derivative(Piece piece, double x, int k) const;
  double operator()(double x) const { return derivative(x, 0); }

  /// Max and min over a dense sample of [0, L].
  double max_value() const noexcept { return max_; }
  double min_value() const noexcept { return min_; }

  /// Values at the interior grid nodes.
  Vector sample(const SpatialGrid &g) const;

  friend struct ProfileBuilder;

private:
  double length_ = 1.0;
  Interval omega_;
  double eps_ = 0.5;
  double c1_ = 0.0, c2_ = 0.0;
  std::array<double, 4> left_{}, right_{};
  std::array<double, 10> bridge_{};
  double max_ = 0.0, min_ = 0.0;
};

struct ProfileOptions {
  /// Overrides the automatic choice of C2 (validation may then fail).
  std::optional<double> c2;
  int dense_samples = 20001;
};

/// Builds the profile and checks it; throws ConstructionFailed when the
/// result does not pass validation (never with the automatic C2).
CarlemanSpatialProfile build_spatial_profile(double length, Interval omega,
                                             double eps,
                                             const ProfileOptions &opts = {});

/// Same construction without the final validation gate.
CarlemanSpatialProfile make_spatial_profile(double length, Interval omega,
                                            double eps,
                                            const ProfileOptions &opts = {});

struct ValidationReport {
  bool positive = false;
  bool endpoint_values_equal = false;
  bool left_slope_negative = false;
  bool right_slope_positive = false;
  bool slope_magnitudes_equal = false;
  bool concave_outside_omega = false;
  bool c4_continuous = false;
  bool ratio_condition = false; // 2 max < 3 min

  double min_value = 0.0, max_value = 0.0;
  double endpoint_gap = 0.0;
  double slope_left = 0.0, slope_right = 0.0;
  double max_second_derivative_outside = 0.0;
  double max_junction_mismatch = 0.0;

  bool all() const noexcept {
    return positive && endpoint_values_equal && left_slope_negative &&
           right_slope_positive && slope_magnitudes_equal &&
           concave_outside_omega && c4_continuous && ratio_condition;
  }
  std::vector<std::string> failures() const;
};

ValidationReport validate_spatial_profile(const CarlemanSpatialProfile &p,
                                          int samples = 2001);

/// l(t) = T^2/4 on [0, T/2] and t (T - t) on [T/2, T]. The C^1 Hermite
/// bridge on (T/4, T/2) with equal values and zero slopes is the constant.
double ell_function(double t, double T);
double ell_derivative(double t, double T);

enum class WeightFamily { alpha, beta };

enum class TimeSampling { levels, midpoints };

/// exp(x) with the argument clamped to [-clamp, clamp].
double clamped_exp(double x, double clamp, int *clamp_counter = nullptr);

/// Time-dependent Carleman weights sampled at a fixed s.
///
/// All composite weights are stored with their exponent clamped to
/// [-clamp, clamp]. At a singular time (t = T for beta, t in {0, T} for
/// alpha) the time factor is +inf and every composite holds its limit:
/// 0 for decaying weights, +inf for growing ones.
struct WeightSet {
  WeightFamily family = WeightFamily::beta;
  double s = 0.0;
  double clamp = 200.0;
  double phi_max = 0.0, phi_min = 0.0;

  std::vector<double> t;
  std::vector<double> factor; // xi(t) or tau(t)
  std::vector<double> hat;    // max_x phi * factor
  std::vector<double> breve;  // min_x phi * factor
  std::vector<bool> finite;

  // Composites (same index as t):
  std::vector<double> decay2;      // e^{-2 s hat}
  std::vector<double> decay4;      // e^{-4 s hat}
  std::vector<double> observation; // factor^9 e^{-6 s breve + 2 s hat}
  std::vector<double> source;      // factor^{-5/2} e^{2 s hat}
  std::vector<double> state;       // factor^{-3/2} e^{s hat}
  std::vector<double> growth;      // e^{s hat}
  std::vector<double> control;     // factor^{-9/2} e^{3 s breve - s hat}

  int clamped_entries = 0;

  std::size_t size() const noexcept { return t.size(); }
  /// Separable weight alpha/beta(x, t) = phi(x) * factor(t) at node i.
  Vector weight_at(std::size_t k, const Vector &phi_nodes) const;
};

WeightSet eval_alpha_weights(const CarlemanSpatialProfile &p,
                             const TimeGrid &tg, double s, double clamp = 200.0,
                             TimeSampling where = TimeSampling::levels);

WeightSet eval_beta_weights(const CarlemanSpatialProfile &p, const TimeGrid &tg,
                            double s, double clamp = 200.0,
                            TimeSampling where = TimeSampling::levels);

/// s such that s * hat(t_{M-1}) equals `target` for the beta family.
double s_from_target_exponent(const CarlemanSpatialProfile &p,
                              const TimeGrid &tg, double target);

std::string to_string(WeightFamily f);

} // namespace kdvb
