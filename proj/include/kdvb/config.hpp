#pragma once

#include "kdvb/errors.hpp"
#include "kdvb/grid.hpp"
#include "kdvb/solvers.hpp"
#include "kdvb/weights.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace kdvb {

inline constexpr const char *schema_version = "kdvb-1";

/// Raised for anything wrong with a run configuration (exit code 2).
class ConfigError : public InvalidArgument {
public:
  using InvalidArgument::InvalidArgument;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every accepted key with its default, in documentation order.
const std::vector<ConfigKey> &config_keys();

/// Initial data as a sum of terms separated by '+':
///   zero | sin:A:k | cos:A:k | random:NORM | file:PATH
/// sin:A:k is A sin(2 pi k x / L); cos:A:k is A (cos(2 pi k x / L) - 1);
/// random:NORM draws band-limited data of the given L2 norm from `seed`;
/// file:PATH reads N-1 interior values (whitespace separated).
Vector evaluate_initial_spec(const std::string &spec, const SpatialGrid &g,
                             std::uint64_t seed);

/// nu_tilde on the time levels:
///   0 | const:A | sin:A:W (A (1 + sin W t)) | file:PATH
/// where PATH holds "t value" rows, interpolated linearly.
Vector evaluate_nu_tilde_spec(const std::string &spec, const TimeGrid &tg);

/// Source field for null control: zero | random:NORM. Random sources are
/// multiplied by (1 - 2t/T)^2 on [0, T/2] and vanish afterwards.
Field evaluate_source_spec(const std::string &spec, const SpatialGrid &g,
                           const TimeGrid &tg, std::uint64_t seed);

struct RunConfig {
  double L = 1.0, T = 1.0;
  int N = 64, M = 128;
  double nu0 = 0.1;
  std::string nu_tilde = "0";
  std::string equation = "nonlinear";
  std::string y0 = "sin:1:1";
  std::string ybar0 = "sin:0.05:1";
  std::string source = "zero";
  double theta = 0.5;
  double control_theta = 1.0;
  NonlinearMode mode = NonlinearMode::picard;
  double tol = 1e-12;
  int maxit = 50;
  Interval omega{0.3, 0.7};
  double eps = 0.5;
  double s_target_exponent = 150.0;
  double clamp = 200.0;
  double fp_tol = 1e-10;
  int fp_maxit = 10;
  double delta = 0.1;
  double delta_sweep_lo = 0.0, delta_sweep_hi = 0.0;
  int delta_sweep_bisections = 6;
  int verify_samples = 100;
  int carleman_samples = 50;
  std::string carleman_variant = "both";
  int mms_base_N = 32, mms_base_M = 64, mms_levels = 3;
  std::uint64_t seed = 1;
  std::string output_dir = "kdvb-out";
  std::string field_format = "csv";

  /// Raw key = value strings as resolved (defaults filled in).
  std::map<std::string, std::string> raw;

  static RunConfig defaults();
  /// Parses "key = value" lines; '#' starts a comment. Unknown or repeated
  /// keys and malformed values raise ConfigError.
  static RunConfig parse(std::istream &is, const std::string &origin = "config");
  static RunConfig load(const std::string &path);
  static RunConfig from_map(const std::map<std::string, std::string> &kv);

  /// Resolved configuration in the same format, every key present.
  std::string resolved() const;

  SpatialGrid grid() const { return make_grid(L, N); }
  TimeGrid time_grid() const { return make_time_grid(T, M); }
  Viscosity viscosity() const;
};

} // namespace kdvb
