#include "kdvb/random_data.hpp"

#include <cmath>
#include <numbers>

namespace kdvb {

double SmoothRandom::SpaceFunction::operator()(double x) const {
  double v = 0.0;
  const double w = 2.0 * std::numbers::pi * x / length;
  for (int k = 0; k < sin_c.size(); ++k)
    v += sin_c[k] * std::sin((k + 1) * w) + cos_c[k] * (std::cos((k + 1) * w) - 1.0);
  return v;
}

double SmoothRandom::SpaceTimeFunction::operator()(double x, double t) const {
  double v = 0.0;
  const double w = 2.0 * std::numbers::pi * x / length;
  const double a = std::numbers::pi * t / horizon;
  for (int k = 0; k < sin_c.rows(); ++k) {
    const double sk = std::sin((k + 1) * w);
    const double ck = std::cos((k + 1) * w) - 1.0;
    for (int j = 0; j < 3; ++j) {
      const double tj = std::cos(j * a);
      v += (sin_c(k, j) * sk + cos_c(k, j) * ck) * tj;
    }
  }
  return v;
}

SmoothRandom::SpaceFunction SmoothRandom::space_function(double length) {
  SpaceFunction f;
  f.length = length;
  f.sin_c.resize(modes_);
  f.cos_c.resize(modes_);
  for (int k = 0; k < modes_; ++k) {
    const double decay = 1.0 / ((k + 1.0) * (k + 1.0));
    f.sin_c[k] = uniform(-1.0, 1.0) * decay;
    f.cos_c[k] = uniform(-1.0, 1.0) * decay;
  }
  return f;
}

SmoothRandom::SpaceTimeFunction
SmoothRandom::space_time_function(double length, double horizon) {
  SpaceTimeFunction f;
  f.length = length;
  f.horizon = horizon;
  f.sin_c.resize(modes_, 3);
  f.cos_c.resize(modes_, 3);
  for (int k = 0; k < modes_; ++k) {
    const double decay = 1.0 / ((k + 1.0) * (k + 1.0));
    for (int j = 0; j < 3; ++j) {
      f.sin_c(k, j) = uniform(-1.0, 1.0) * decay / (j + 1.0);
      f.cos_c(k, j) = uniform(-1.0, 1.0) * decay / (j + 1.0);
    }
  }
  return f;
}

Vector SmoothRandom::initial(const SpatialGrid &g, double l2norm) {
  const SpaceFunction f = space_function(g.length);
  Vector u = sample_space(g, f);
  const double n = l2_space(u, g);
  if (n > 0.0)
    u *= l2norm / n;
  return u;
}

Field SmoothRandom::source(const SpatialGrid &g, const TimeGrid &tg,
                           double l2norm) {
  const SpaceTimeFunction f = space_time_function(g.length, tg.horizon);
  Field out = sample_field(g, tg, f);
  const double n = l2_spacetime(out, g, tg);
  if (n > 0.0)
    out *= l2norm / n;
  return out;
}

} // namespace kdvb
