#include "kdvb/weights.hpp"

#include "kdvb/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace kdvb {

namespace {

constexpr double kJunctionTol = 1e-8;

// k-th derivative of sum_j c_j x^j.
template <std::size_t D>
double poly_derivative(const std::array<double, D> &c, double x, int k) {
  double acc = 0.0;
  for (int j = static_cast<int>(D) - 1; j >= k; --j) {
    double falling = 1.0;
    for (int i = 0; i < k; ++i)
      falling *= (j - i);
    acc = acc * x + falling * c[j];
  }
  return acc;
}

double falling_factorial(int j, int k) {
  double f = 1.0;
  for (int i = 0; i < k; ++i)
    f *= (j - i);
  return f;
}

} // namespace

struct ProfileBuilder {
  static CarlemanSpatialProfile make(double L, Interval omega, double eps,
                                     double c2) {
    CarlemanSpatialProfile p;
    p.length_ = L;
    p.omega_ = omega;
    p.eps_ = eps;
    p.c2_ = c2;
    p.c1_ = 2.0 * eps * L * L * L + L + c2;
    p.left_ = {p.c1_, -1.0, -3.0 * omega.lo, eps};
    p.right_ = {c2, 1.0 + 3.0 * eps * L * L, 0.0, -eps};

    // Degree-9 two-point Hermite interpolant in u = (x - l1)/d.
    const double d = omega.hi - omega.lo;
    double dpow = 1.0;
    std::array<double, 5> at0{}, at1{};
    for (int k = 0; k <= 4; ++k) {
      at0[k] = poly_derivative(p.left_, omega.lo, k) * dpow;
      at1[k] = poly_derivative(p.right_, omega.hi, k) * dpow;
      dpow *= d;
    }
    std::array<double, 10> c{};
    double fact = 1.0;
    for (int k = 0; k <= 4; ++k) {
      if (k > 0)
        fact *= k;
      c[k] = at0[k] / fact;
    }
    Eigen::Matrix<double, 5, 5> a;
    Eigen::Matrix<double, 5, 1> b;
    for (int k = 0; k <= 4; ++k) {
      double known = 0.0;
      for (int j = k; j <= 4; ++j)
        known += falling_factorial(j, k) * c[j];
      b[k] = at1[k] - known;
      for (int j = 5; j <= 9; ++j)
        a(k, j - 5) = falling_factorial(j, k);
    }
    const Eigen::Matrix<double, 5, 1> hi = a.fullPivLu().solve(b);
    for (int j = 5; j <= 9; ++j)
      c[j] = hi[j - 5];
    p.bridge_ = c;
    return p;
  }

  static void fill_extrema(CarlemanSpatialProfile &p, int samples) {
    double mx = -std::numeric_limits<double>::infinity();
    double mn = std::numeric_limits<double>::infinity();
    for (int i = 0; i < samples; ++i) {
      const double x = p.length_ * i / (samples - 1);
      const double v = p(x);
      mx = std::max(mx, v);
      mn = std::min(mn, v);
    }
    p.max_ = mx;
    p.min_ = mn;
  }
};

double CarlemanSpatialProfile::piece_derivative(Piece piece, double x,
                                                int k) const {
  if (k < 0 || k > 4)
    throw InvalidArgument("profile derivatives are available up to order 4");
  switch (piece) {
  case Piece::left:
    return poly_derivative(left_, x, k);
  case Piece::right:
    return poly_derivative(right_, x, k);
  case Piece::bridge: {
    const double d = omega_.hi - omega_.lo;
    return poly_derivative(bridge_, (x - omega_.lo) / d, k) / std::pow(d, k);
  }
  }
  return 0.0;
}

double CarlemanSpatialProfile::derivative(double x, int k) const {
  if (x <= omega_.lo)
    return piece_derivative(Piece::left, x, k);
  if (x >= omega_.hi)
    return piece_derivative(Piece::right, x, k);
  return piece_derivative(Piece::bridge, x, k);
}

Vector CarlemanSpatialProfile::sample(const SpatialGrid &g) const {
  return sample_space(g, [this](double x) { return (*this)(x); });
}

CarlemanSpatialProfile make_spatial_profile(double length, Interval omega,
                                            double eps,
                                            const ProfileOptions &opts) {
  if (!(length > 0.0))
    throw InvalidArgument("profile length must be positive");
  if (!(omega.lo > 0.0 && omega.lo < omega.hi && omega.hi < length))
    throw InvalidArgument("control region must satisfy 0 < l1 < l2 < L");
  if (!(eps > 0.0 && eps < 1.0))
    throw InvalidArgument("eps must lie in (0, 1)");
  if (opts.dense_samples < 100)
    throw InvalidArgument("dense_samples must be at least 100");

  double c2 = 0.0;
  if (opts.c2) {
    c2 = *opts.c2;
  } else {
    // phi = phi0 + C2, so 2 max < 3 min  <=>  C2 > 2 M0 - 3 m0.
    CarlemanSpatialProfile base = ProfileBuilder::make(length, omega, eps, 0.0);
    ProfileBuilder::fill_extrema(base, opts.dense_samples);
    c2 = std::max(1.0, 2.0 * base.max_value() - 3.0 * base.min_value()) * 1.1 +
         1.0;
  }
  CarlemanSpatialProfile p = ProfileBuilder::make(length, omega, eps, c2);
  ProfileBuilder::fill_extrema(p, opts.dense_samples);
  return p;
}

CarlemanSpatialProfile build_spatial_profile(double length, Interval omega,
                                             double eps,
                                             const ProfileOptions &opts) {
  CarlemanSpatialProfile p = make_spatial_profile(length, omega, eps, opts);
  const ValidationReport rep = validate_spatial_profile(p);
  if (!rep.all()) {
    std::ostringstream os;
    os << "spatial profile failed validation:";
    for (const auto &f : rep.failures())
      os << ' ' << f;
    throw ConstructionFailed(os.str());
  }
  return p;
}

std::vector<std::string> ValidationReport::failures() const {
  std::vector<std::string> out;
  if (!positive)
    out.emplace_back("positivity");
  if (!endpoint_values_equal)
    out.emplace_back("phi(0)=phi(L)");
  if (!left_slope_negative)
    out.emplace_back("phi'(0)<0");
  if (!right_slope_positive)
    out.emplace_back("phi'(L)>0");
  if (!slope_magnitudes_equal)
    out.emplace_back("|phi'(0)|=|phi'(L)|");
  if (!concave_outside_omega)
    out.emplace_back("phi''<0 outside omega");
  if (!c4_continuous)
    out.emplace_back("C4 junctions");
  if (!ratio_condition)
    out.emplace_back("2max<3min");
  return out;
}

ValidationReport validate_spatial_profile(const CarlemanSpatialProfile &p,
                                          int samples) {
  if (samples < 100)
    throw InvalidArgument("validation needs at least 100 samples");
  using Piece = CarlemanSpatialProfile::Piece;
  const double L = p.length();
  const double l1 = p.omega().lo, l2 = p.omega().hi;
  ValidationReport r;

  double mx = -std::numeric_limits<double>::infinity();
  double mn = std::numeric_limits<double>::infinity();
  double max_dd_outside = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < samples; ++i) {
    const double x = L * i / (samples - 1);
    const double v = p(x);
    mx = std::max(mx, v);
    mn = std::min(mn, v);
    if (x <= l1 || x >= l2)
      max_dd_outside = std::max(max_dd_outside, p.derivative(x, 2));
  }
  // The cubic second derivatives are monotone: 6(eps x - l1) peaks at l1,
  // -6 eps x peaks at l2.
  max_dd_outside = std::max({max_dd_outside, 6.0 * (p.eps() * l1 - l1),
                             -6.0 * p.eps() * l2});

  r.min_value = mn;
  r.max_value = mx;
  r.positive = mn > 0.0;
  r.ratio_condition = 2.0 * mx < 3.0 * mn;

  const double v0 = p(0.0), vL = p(L);
  r.endpoint_gap = std::abs(v0 - vL);
  r.endpoint_values_equal =
      r.endpoint_gap <= 1e-12 * std::max({1.0, std::abs(v0), std::abs(vL)});
  r.slope_left = p.derivative(0.0, 1);
  r.slope_right = p.derivative(L, 1);
  r.left_slope_negative = r.slope_left < 0.0;
  r.right_slope_positive = r.slope_right > 0.0;
  r.slope_magnitudes_equal =
      std::abs(std::abs(r.slope_left) - std::abs(r.slope_right)) <=
      1e-12 * std::max(1.0, std::abs(r.slope_left));
  r.max_second_derivative_outside = max_dd_outside;
  r.concave_outside_omega = max_dd_outside < 0.0;

  double mismatch = 0.0;
  for (int k = 0; k <= 4; ++k) {
    const double a = p.piece_derivative(Piece::left, l1, k);
    const double b = p.piece_derivative(Piece::bridge, l1, k);
    const double c = p.piece_derivative(Piece::right, l2, k);
    const double d = p.piece_derivative(Piece::bridge, l2, k);
    mismatch = std::max(mismatch, std::abs(a - b) / std::max(1.0, std::abs(a)));
    mismatch = std::max(mismatch, std::abs(c - d) / std::max(1.0, std::abs(c)));
  }
  r.max_junction_mismatch = mismatch;
  r.c4_continuous = mismatch <= kJunctionTol;
  return r;
}

double ell_function(double t, double T) {
  if (!(T > 0.0))
    throw InvalidArgument("horizon must be positive");
  if (t < 0.0 || t > T)
    throw InvalidArgument("ell_function: t outside [0, T]");
  if (t <= 0.5 * T)
    return 0.25 * T * T;
  return t * (T - t);
}

double ell_derivative(double t, double T) {
  if (!(T > 0.0))
    throw InvalidArgument("horizon must be positive");
  if (t < 0.0 || t > T)
    throw InvalidArgument("ell_derivative: t outside [0, T]");
  if (t <= 0.5 * T)
    return 0.0;
  return T - 2.0 * t;
}

double clamped_exp(double x, double clamp, int *clamp_counter) {
  if (x > clamp || x < -clamp) {
    if (clamp_counter)
      ++*clamp_counter;
    return std::exp(x > 0 ? clamp : -clamp);
  }
  return std::exp(x);
}

Vector WeightSet::weight_at(std::size_t k, const Vector &phi_nodes) const {
  return phi_nodes * factor[k];
}

namespace {

std::vector<double> sample_times(const TimeGrid &tg, TimeSampling where) {
  std::vector<double> t;
  if (where == TimeSampling::levels) {
    for (int n = 0; n < tg.levels(); ++n)
      t.push_back(tg.time(n));
  } else {
    for (int n = 0; n < tg.steps; ++n)
      t.push_back(tg.midpoint(n));
  }
  return t;
}

WeightSet eval_weights(WeightFamily family, const CarlemanSpatialProfile &p,
                       const TimeGrid &tg, double s, double clamp,
                       TimeSampling where) {
  if (!(s > 0.0))
    throw InvalidArgument("Carleman parameter s must be positive");
  if (!(clamp > 0.0))
    throw InvalidArgument("clamp must be positive");
  const double inf = std::numeric_limits<double>::infinity();
  const double T = tg.horizon;

  WeightSet w;
  w.family = family;
  w.s = s;
  w.clamp = clamp;
  w.phi_max = p.max_value();
  w.phi_min = p.min_value();
  w.t = sample_times(tg, where);
  const std::size_t n = w.t.size();
  for (auto *v : {&w.factor, &w.hat, &w.breve, &w.decay2, &w.decay4,
                  &w.observation, &w.source, &w.state, &w.growth, &w.control})
    v->resize(n);
  w.finite.resize(n);

  for (std::size_t k = 0; k < n; ++k) {
    const double t = w.t[k];
    double f;
    if (family == WeightFamily::alpha) {
      const double q = t * (T - t);
      f = q > 0.0 ? 1.0 / (q * q) : inf;
    } else {
      const double l = ell_function(std::min(t, T), T);
      f = l > 0.0 ? 1.0 / (l * l) : inf;
    }
    w.factor[k] = f;
    w.hat[k] = w.phi_max * f;
    w.breve[k] = w.phi_min * f;
    w.finite[k] = std::isfinite(f);
    if (!w.finite[k]) {
      w.decay2[k] = w.decay4[k] = w.observation[k] = 0.0;
      w.source[k] = w.state[k] = w.growth[k] = w.control[k] = inf;
      ++w.clamped_entries;
      continue;
    }
    const double sh = s * w.hat[k], sb = s * w.breve[k];
    int *cnt = &w.clamped_entries;
    w.decay2[k] = clamped_exp(-2.0 * sh, clamp, cnt);
    w.decay4[k] = clamped_exp(-4.0 * sh, clamp, cnt);
    w.observation[k] = std::pow(f, 9.0) * clamped_exp(-6.0 * sb + 2.0 * sh, clamp, cnt);
    w.source[k] = std::pow(f, -2.5) * clamped_exp(2.0 * sh, clamp, cnt);
    w.state[k] = std::pow(f, -1.5) * clamped_exp(sh, clamp, cnt);
    w.growth[k] = clamped_exp(sh, clamp, cnt);
    w.control[k] = std::pow(f, -4.5) * clamped_exp(3.0 * sb - sh, clamp, cnt);
  }
  return w;
}

} // namespace

WeightSet eval_alpha_weights(const CarlemanSpatialProfile &p,
                             const TimeGrid &tg, double s, double clamp,
                             TimeSampling where) {
  return eval_weights(WeightFamily::alpha, p, tg, s, clamp, where);
}

WeightSet eval_beta_weights(const CarlemanSpatialProfile &p, const TimeGrid &tg,
                            double s, double clamp, TimeSampling where) {
  return eval_weights(WeightFamily::beta, p, tg, s, clamp, where);
}

double s_from_target_exponent(const CarlemanSpatialProfile &p,
                              const TimeGrid &tg, double target) {
  if (!(target > 0.0))
    throw InvalidArgument("target exponent must be positive");
  const double t = tg.time(tg.steps - 1);
  const double l = ell_function(t, tg.horizon);
  return target / (p.max_value() / (l * l));
}

std::string to_string(WeightFamily f) {
  return f == WeightFamily::alpha ? "alpha" : "beta";
}

} // namespace kdvb
