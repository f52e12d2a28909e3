#include "kdvb/config.hpp"

#include "kdvb/random_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace kdvb {

namespace {

constexpr double pi = std::numbers::pi;

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep))
    out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep)
    out.push_back({});
  return out;
}

double to_double(const std::string &key, const std::string &v) {
  double x = 0.0;
  const char *b = v.data(), *e = v.data() + v.size();
  auto [p, ec] = std::from_chars(b, e, x);
  if (ec != std::errc() || p != e || !std::isfinite(x))
    throw ConfigError("key '" + key + "': '" + v + "' is not a finite number");
  return x;
}

long long to_int(const std::string &key, const std::string &v) {
  long long x = 0;
  const char *b = v.data(), *e = v.data() + v.size();
  auto [p, ec] = std::from_chars(b, e, x);
  if (ec != std::errc() || p != e)
    throw ConfigError("key '" + key + "': '" + v + "' is not an integer");
  return x;
}

void require(bool ok, const std::string &key, const std::string &what) {
  if (!ok)
    throw ConfigError("key '" + key + "': " + what);
}

std::vector<double> read_numbers(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot read data file '" + path + "'");
  std::vector<double> out;
  std::string tok;
  while (in >> tok)
    out.push_back(to_double(path, tok));
  return out;
}

} // namespace

const std::vector<ConfigKey> &config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"L", "1", "domain length (> 0)"},
      {"T", "1", "time horizon (> 0)"},
      {"N", "64", "spatial cells (>= 8); N-1 interior unknowns"},
      {"M", "128", "time steps (>= 8)"},
      {"nu0", "0.1", "constant viscosity part (> 0)"},
      {"nu_tilde", "0",
       "time-dependent viscosity: 0 | const:A | sin:A:W (A(1+sin Wt)) | "
       "file:PATH (rows 't value', linear interpolation)"},
      {"equation", "nonlinear", "simulate: nonlinear | linear"},
      {"y0", "sin:1:1",
       "initial datum, '+'-separated terms: zero | sin:A:k | cos:A:k | "
       "random:NORM | file:PATH"},
      {"ybar0", "sin:0.05:1", "initial datum of the target trajectory (same syntax as y0)"},
      {"source", "zero",
       "null-control source h: zero | random:NORM (supported on t <= T/2)"},
      {"theta", "0.5", "time scheme of forward simulations (0.5 <= theta <= 1)"},
      {"control_theta", "1",
       "time scheme of the weighted control system (0.5 <= theta <= 1)"},
      {"mode", "picard", "nonlinear solver: picard | semi_implicit"},
      {"tol", "1e-12", "nonlinear solver tolerance (> 0)"},
      {"maxit", "50", "nonlinear solver iteration cap (>= 1)"},
      {"omega", "(0.3,0.7)", "control region (l1,l2) with 0 < l1 < l2 < L"},
      {"eps", "0.5", "spatial profile parameter (0 < eps < 1)"},
      {"s_target_exponent", "150",
       "Carleman s chosen so that s*max(beta) at the last interior level equals this (> 0)"},
      {"clamp", "200", "cap on every weight exponent (> 0)"},
      {"fp_tol", "1e-10", "tracking fixed-point tolerance, relative (> 0)"},
      {"fp_maxit", "10", "tracking fixed-point iteration cap (>= 1)"},
      {"delta", "0.1", "tracking radius: |y0 - ybar0| above this is flagged"},
      {"delta_sweep_lo", "0", "track: lower amplitude of the delta sweep"},
      {"delta_sweep_hi", "0", "track: upper amplitude of the delta sweep (sweep off if <= lo)"},
      {"delta_sweep_bisections", "6", "track: bisection steps of the delta sweep"},
      {"verify_samples", "100", "verify: samples for duality, energy, bilinear (>= 10)"},
      {"carleman_samples", "50", "verify: samples for the Carleman suite (>= 10)"},
      {"carleman_variant", "both", "verify: alpha | beta | both"},
      {"mms_base_N", "32", "verify: coarsest cells of the convergence study"},
      {"mms_base_M", "64", "verify: coarsest steps of the convergence study"},
      {"mms_levels", "3", "verify: refinement levels (>= 3)"},
      {"seed", "1", "seed of all random data (unsigned integer)"},
      {"output_dir", "kdvb-out",
       "output directory (KDVB_OUTPUT_DIR overrides it)"},
      {"field_format", "csv", "fields as csv | binary | both"},
  };
  return keys;
}

Vector evaluate_initial_spec(const std::string &spec, const SpatialGrid &g,
                             std::uint64_t seed) {
  Vector out = Vector::Zero(g.interior());
  std::uint64_t draw = 0;
  for (const std::string &term : split(spec, '+')) {
    const auto parts = split(term, ':');
    const std::string &kind = parts.empty() ? term : parts[0];
    if (kind == "zero" && parts.size() == 1)
      continue;
    if ((kind == "sin" || kind == "cos") && parts.size() == 3) {
      const double a = to_double("y0", parts[1]);
      const double k = to_double("y0", parts[2]);
      require(k == std::round(k) && k >= 1, "y0", "mode number must be a positive integer");
      out += sample_space(g, [&](double x) {
        const double w = 2.0 * pi * k * x / g.length;
        return kind == "sin" ? a * std::sin(w) : a * (std::cos(w) - 1.0);
      });
      continue;
    }
    if (kind == "random" && parts.size() == 2) {
      const double norm = to_double("y0", parts[1]);
      require(norm >= 0.0, "y0", "random norm must be >= 0");
      SmoothRandom rng(seed + 7919 * draw++);
      out += rng.initial(g, norm);
      continue;
    }
    if (kind == "file" && parts.size() >= 2) {
      const std::string path = term.substr(5);
      const auto v = read_numbers(path);
      if (static_cast<int>(v.size()) != g.interior())
        throw ConfigError("data file '" + path + "' has " +
                          std::to_string(v.size()) + " values, expected " +
                          std::to_string(g.interior()));
      out += Eigen::Map<const Vector>(v.data(), g.interior());
      continue;
    }
    throw ConfigError("cannot parse initial-data term '" + term + "'");
  }
  return out;
}

Vector evaluate_nu_tilde_spec(const std::string &spec, const TimeGrid &tg) {
  Vector out = Vector::Zero(tg.levels());
  const std::string s = trim(spec);
  const auto parts = split(s, ':');
  if (s == "0" || s.empty())
    return out;
  if (parts[0] == "const" && parts.size() == 2) {
    out.setConstant(to_double("nu_tilde", parts[1]));
  } else if (parts[0] == "sin" && parts.size() == 3) {
    const double a = to_double("nu_tilde", parts[1]);
    const double w = to_double("nu_tilde", parts[2]);
    for (int n = 0; n < tg.levels(); ++n)
      out[n] = a * (1.0 + std::sin(w * tg.time(n)));
  } else if (parts[0] == "file" && parts.size() >= 2) {
    const auto v = read_numbers(s.substr(5));
    require(v.size() >= 4 && v.size() % 2 == 0, "nu_tilde",
            "table needs at least two 't value' rows");
    std::vector<std::pair<double, double>> rows;
    for (std::size_t i = 0; i < v.size(); i += 2)
      rows.emplace_back(v[i], v[i + 1]);
    for (std::size_t i = 1; i < rows.size(); ++i)
      require(rows[i].first > rows[i - 1].first, "nu_tilde",
              "table times must increase");
    require(rows.front().first <= 0.0 && rows.back().first >= tg.horizon,
            "nu_tilde", "table must cover [0, T]");
    for (int n = 0; n < tg.levels(); ++n) {
      const double t = tg.time(n);
      auto it = std::upper_bound(
          rows.begin(), rows.end(), t,
          [](double a, const std::pair<double, double> &r) { return a < r.first; });
      if (it == rows.end()) {
        out[n] = rows.back().second;
        continue;
      }
      const auto &hi = *it, &lo = *(it - 1);
      const double w = (t - lo.first) / (hi.first - lo.first);
      out[n] = (1.0 - w) * lo.second + w * hi.second;
    }
  } else {
    throw ConfigError("cannot parse nu_tilde '" + spec + "'");
  }
  return out;
}

Field evaluate_source_spec(const std::string &spec, const SpatialGrid &g,
                           const TimeGrid &tg, std::uint64_t seed) {
  Field out(g, tg);
  const std::string s = trim(spec);
  if (s == "zero")
    return out;
  const auto parts = split(s, ':');
  if (parts.size() == 2 && parts[0] == "random") {
    const double norm = to_double("source", parts[1]);
    require(norm >= 0.0, "source", "random norm must be >= 0");
    SmoothRandom rng(seed + 104729);
    out = rng.source(g, tg, 1.0);
    for (int n = 0; n <= tg.steps; ++n) {
      const double r = 1.0 - 2.0 * tg.time(n) / tg.horizon;
      out.level(n) *= r > 0.0 ? r * r : 0.0;
    }
    const double l2 = l2_spacetime(out, g, tg);
    if (l2 > 0.0)
      out *= norm / l2;
    return out;
  }
  throw ConfigError("cannot parse source '" + spec + "'");
}

RunConfig RunConfig::defaults() { return from_map({}); }

RunConfig RunConfig::parse(std::istream &is, const std::string &origin) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (kv.count(key))
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": key '" + key + "' given twice");
    kv[key] = value;
  }
  return from_map(kv);
}

RunConfig RunConfig::load(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot read config file '" + path + "'");
  return parse(in, path);
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string> &kv) {
  for (const auto &[k, v] : kv) {
    const auto &keys = config_keys();
    if (std::none_of(keys.begin(), keys.end(),
                     [&](const ConfigKey &c) { return c.name == k; }))
      throw ConfigError("unknown config key '" + k + "'");
    if (v.empty())
      throw ConfigError("key '" + k + "' has an empty value");
  }
  RunConfig c;
  for (const ConfigKey &key : config_keys()) {
    auto it = kv.find(key.name);
    c.raw[key.name] = it == kv.end() ? key.default_value : it->second;
  }
  auto get = [&](const char *k) -> const std::string & { return c.raw.at(k); };
  auto num = [&](const char *k) { return to_double(k, get(k)); };
  auto integer = [&](const char *k) { return to_int(k, get(k)); };

  c.L = num("L");
  c.T = num("T");
  require(c.L > 0.0, "L", "must be > 0");
  require(c.T > 0.0, "T", "must be > 0");
  const long long N = integer("N"), M = integer("M");
  require(N >= 8 && N <= 100000, "N", "must be in [8, 100000]");
  require(M >= 8 && M <= 1000000, "M", "must be in [8, 1000000]");
  c.N = static_cast<int>(N);
  c.M = static_cast<int>(M);
  c.nu0 = num("nu0");
  require(c.nu0 > 0.0, "nu0", "must be > 0");
  c.nu_tilde = get("nu_tilde");
  c.equation = get("equation");
  require(c.equation == "nonlinear" || c.equation == "linear", "equation",
          "must be nonlinear or linear");
  c.y0 = get("y0");
  c.ybar0 = get("ybar0");
  c.source = get("source");
  c.theta = num("theta");
  c.control_theta = num("control_theta");
  require(c.theta >= 0.5 && c.theta <= 1.0, "theta", "must be in [0.5, 1]");
  require(c.control_theta >= 0.5 && c.control_theta <= 1.0, "control_theta",
          "must be in [0.5, 1]");
  try {
    c.mode = nonlinear_mode_from_string(get("mode"));
  } catch (const InvalidArgument &e) {
    throw ConfigError(std::string("key 'mode': ") + e.what());
  }
  c.tol = num("tol");
  require(c.tol > 0.0, "tol", "must be > 0");
  const long long maxit = integer("maxit");
  require(maxit >= 1 && maxit <= 100000, "maxit", "must be in [1, 100000]");
  c.maxit = static_cast<int>(maxit);

  {
    std::string om = get("omega");
    if (om.size() >= 2 && om.front() == '(' && om.back() == ')')
      om = om.substr(1, om.size() - 2);
    const auto parts = split(om, ',');
    require(parts.size() == 2, "omega", "expected (l1,l2)");
    c.omega = {to_double("omega", parts[0]), to_double("omega", parts[1])};
    require(c.omega.lo > 0.0 && c.omega.lo < c.omega.hi && c.omega.hi < c.L,
            "omega", "need 0 < l1 < l2 < L");
  }
  c.eps = num("eps");
  require(c.eps > 0.0 && c.eps < 1.0, "eps", "must be in (0, 1)");
  c.s_target_exponent = num("s_target_exponent");
  require(c.s_target_exponent > 0.0, "s_target_exponent", "must be > 0");
  c.clamp = num("clamp");
  require(c.clamp > 0.0, "clamp", "must be > 0");
  c.fp_tol = num("fp_tol");
  require(c.fp_tol > 0.0, "fp_tol", "must be > 0");
  const long long fpm = integer("fp_maxit");
  require(fpm >= 1 && fpm <= 10000, "fp_maxit", "must be in [1, 10000]");
  c.fp_maxit = static_cast<int>(fpm);
  c.delta = num("delta");
  require(c.delta > 0.0, "delta", "must be > 0");
  c.delta_sweep_lo = num("delta_sweep_lo");
  c.delta_sweep_hi = num("delta_sweep_hi");
  require(c.delta_sweep_lo >= 0.0, "delta_sweep_lo", "must be >= 0");
  const long long bis = integer("delta_sweep_bisections");
  require(bis >= 1 && bis <= 60, "delta_sweep_bisections", "must be in [1, 60]");
  c.delta_sweep_bisections = static_cast<int>(bis);
  const long long vs = integer("verify_samples"), cs = integer("carleman_samples");
  require(vs >= 10 && vs <= 100000, "verify_samples", "must be in [10, 100000]");
  require(cs >= 10 && cs <= 100000, "carleman_samples", "must be in [10, 100000]");
  c.verify_samples = static_cast<int>(vs);
  c.carleman_samples = static_cast<int>(cs);
  c.carleman_variant = get("carleman_variant");
  require(c.carleman_variant == "alpha" || c.carleman_variant == "beta" ||
              c.carleman_variant == "both",
          "carleman_variant", "must be alpha, beta or both");
  const long long mn = integer("mms_base_N"), mm = integer("mms_base_M"),
                  ml = integer("mms_levels");
  require(mn >= 8, "mms_base_N", "must be >= 8");
  require(mm >= 8, "mms_base_M", "must be >= 8");
  require(ml >= 3 && ml <= 6, "mms_levels", "must be in [3, 6]");
  c.mms_base_N = static_cast<int>(mn);
  c.mms_base_M = static_cast<int>(mm);
  c.mms_levels = static_cast<int>(ml);
  const long long seed = integer("seed");
  require(seed >= 0, "seed", "must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  c.output_dir = get("output_dir");
  c.field_format = get("field_format");
  require(c.field_format == "csv" || c.field_format == "binary" ||
              c.field_format == "both",
          "field_format", "must be csv, binary or both");

  // data specs are checked against the grids here so runs fail early
  const SpatialGrid g = c.grid();
  const TimeGrid tg = c.time_grid();
  evaluate_initial_spec(c.y0, g, c.seed);
  evaluate_initial_spec(c.ybar0, g, c.seed + 1);
  evaluate_source_spec(c.source, g, tg, c.seed);
  try {
    c.viscosity().validate(tg);
  } catch (const ConfigError &) {
    throw;
  } catch (const InvalidArgument &e) {
    throw ConfigError(std::string("key 'nu_tilde': ") + e.what());
  }
  return c;
}

std::string RunConfig::resolved() const {
  std::ostringstream os;
  os << "# resolved configuration (" << schema_version << ")\n";
  for (const ConfigKey &k : config_keys())
    os << k.name << " = " << raw.at(k.name) << "\n";
  return os.str();
}

Viscosity RunConfig::viscosity() const {
  Viscosity v{nu0, evaluate_nu_tilde_spec(nu_tilde, time_grid())};
  if (v.nu_tilde.cwiseAbs().maxCoeff() == 0.0)
    v.nu_tilde.resize(0);
  return v;
}

} // namespace kdvb
