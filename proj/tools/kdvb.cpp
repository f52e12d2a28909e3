#include "kdvb/config.hpp"
#include "kdvb/control.hpp"
#include "kdvb/errors.hpp"
#include "kdvb/field_io.hpp"
#include "kdvb/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace kdvb;

namespace {

enum ExitCode { ok = 0, invalid_config = 2, solver_failure = 3, verification_failure = 4 };

struct VerificationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json num(double x) {
  if (std::isfinite(x))
    return x;
  return std::isnan(x) ? json("nan") : json(x > 0 ? "inf" : "-inf");
}

json num_array(const std::vector<double> &v) {
  json a = json::array();
  for (double x : v)
    a.push_back(num(x));
  return a;
}

json summary_json(const SampleSummary &s) {
  return {{"max", num(s.max)}, {"median", num(s.median)}, {"count", s.count}};
}

json norms_json(const NormReport &r) {
  auto opt = [](const std::optional<double> &x) { return x ? num(*x) : json(nullptr); };
  return {{"sup_t_L2", num(r.sup_t_L2)}, {"L2_Q", num(r.L2_Q)},
          {"L2_H1", opt(r.L2_H1)},      {"L2_H2", opt(r.L2_H2)},
          {"L2_Hneg1", opt(r.L2_Hneg1)}};
}

json enorms_json(const ENormReport &e) {
  json j;
  const auto names = ENormReport::names();
  const auto vals = e.values();
  for (std::size_t i = 0; i < names.size(); ++i)
    j[names[i]] = num(vals[i]);
  return j;
}

class Run {
public:
  Run(std::string sub, const RunConfig &cfg) : sub_(std::move(sub)), cfg_(cfg) {
    dir_ = cfg.output_dir;
    if (const char *env = std::getenv("KDVB_OUTPUT_DIR"); env && *env)
      dir_ = env;
    fs::create_directories(dir_);
    std::ofstream(dir_ / "config.resolved.txt") << cfg.resolved();
  }

  const RunConfig &cfg() const { return cfg_; }
  const fs::path &dir() const { return dir_; }

  json header() const {
    return {{"schema_version", schema_version}, {"subcommand", sub_},
            {"seed", cfg_.seed}};
  }

  void write_json(const std::string &name, const json &j) const {
    std::ofstream(dir_ / name) << j.dump(2) << "\n";
  }

  void write_field(const std::string &stem, const Field &f) const {
    const SpatialGrid g = cfg_.grid();
    const TimeGrid tg = cfg_.time_grid();
    if (cfg_.field_format != "binary")
      write_field_csv((dir_ / (stem + ".csv")).string(), f, g, tg);
    if (cfg_.field_format != "csv")
      write_field_binary((dir_ / (stem + ".bin")).string(), f);
  }

private:
  std::string sub_;
  RunConfig cfg_;
  fs::path dir_;
};

NonlinearOptions nonlinear_options(const RunConfig &c, double theta) {
  NonlinearOptions o;
  o.mode = c.mode;
  o.tol = c.tol;
  o.maxit = c.maxit;
  o.stepping.theta = theta;
  return o;
}

int cmd_simulate(const Run &run) {
  const RunConfig &c = run.cfg();
  const SpatialGrid g = c.grid();
  const TimeGrid tg = c.time_grid();
  const DiscreteOperators ops(g);
  const Vector y0 = evaluate_initial_spec(c.y0, g, c.seed);
  const Viscosity nu = c.viscosity();

  json rep = run.header();
  Field y;
  if (c.equation == "linear") {
    CoefficientSet co{nu, Field(g, tg)};
    y = solve_linearized(ops, co, Field(g, tg), y0, tg, SteppingOptions{c.theta});
    rep["iterations"] = 1;
  } else {
    const NonlinearResult r =
        solve_nonlinear(ops, nu, Field(g, tg), y0, tg, nonlinear_options(c, c.theta));
    y = r.y;
    rep["iterations"] = r.iterations;
    rep["history"] = num_array(r.history);
  }
  rep["equation"] = c.equation;
  rep["norms"] = norms_json(discrete_norms(y, ops, tg));
  rep["initial_norm"] = num(l2_space(y0, g));
  rep["terminal_norm"] = num(l2_space(Vector(y.level(tg.steps).transpose()), g));
  run.write_field("field", y);
  run.write_json("report.json", rep);
  return ok;
}

int cmd_trajectory(const Run &run) {
  const RunConfig &c = run.cfg();
  const SpatialGrid g = c.grid();
  const TimeGrid tg = c.time_grid();
  const DiscreteOperators ops(g);
  const Vector yb0 = evaluate_initial_spec(c.ybar0, g, c.seed + 1);
  const NonlinearResult r = uncontrolled_trajectory(
      ops, c.viscosity(), yb0, tg, nonlinear_options(c, c.theta));
  json rep = run.header();
  rep["iterations"] = r.iterations;
  rep["history"] = num_array(r.history);
  rep["norms"] = norms_json(discrete_norms(r.y, ops, tg));
  std::vector<double> levels;
  for (int n = 0; n <= tg.steps; ++n)
    levels.push_back(l2_space(Vector(r.y.level(n).transpose()), g));
  rep["level_norms"] = num_array(levels);
  run.write_field("trajectory", r.y);
  run.write_json("report.json", rep);
  return ok;
}

ControlOptions control_options(const RunConfig &c,
                               const CarlemanSpatialProfile &prof) {
  ControlOptions o;
  o.omega = c.omega;
  o.clamp = c.clamp;
  o.stepping.theta = c.control_theta;
  o.s = s_from_target_exponent(prof, c.time_grid(), c.s_target_exponent);
  return o;
}

json stats_json(const SolveStats &s) {
  return {{"method", s.method}, {"iterations", s.iterations},
          {"relative_residual", num(s.relative_residual)}, {"shift", num(s.shift)}};
}

int cmd_null_control(const Run &run) {
  const RunConfig &c = run.cfg();
  const SpatialGrid g = c.grid();
  const TimeGrid tg = c.time_grid();
  const DiscreteOperators ops(g);
  const auto prof = build_spatial_profile(c.L, c.omega, c.eps);
  const ControlOptions co = control_options(c, prof);
  CoefficientSet coeffs{c.viscosity(), Field(g, tg)};
  const VariationalSystem sys(ops, coeffs, tg, prof, co);
  const Vector y0 = evaluate_initial_spec(c.y0, g, c.seed);
  const Field h = evaluate_source_spec(c.source, g, tg, c.seed);
  const ControlResult r = solve_null_control(sys, y0, h);
  const Field free = sys.stepper().forward(h, y0);

  double outside = 0.0;
  for (int n = 0; n <= tg.steps; ++n)
    for (int i = 0; i < g.interior(); ++i)
      if (!c.omega.contains(g.node(i + 1)))
        outside = std::max(outside, std::abs(r.control(n, i)));

  json rep = run.header();
  rep["s"] = num(co.s);
  rep["control_theta"] = c.control_theta;
  rep["terminal_norm"] = num(r.terminal_norm);
  rep["algebraic_terminal_norm"] = num(r.algebraic_terminal_norm);
  rep["uncontrolled_terminal_norm"] =
      num(l2_space(Vector(free.level(tg.steps).transpose()), g));
  rep["control_norm"] = num(r.control_norm);
  rep["initial_norm"] = num(l2_space(y0, g));
  rep["source_norm"] = num(l2_spacetime(h, g, tg));
  rep["control_outside_omega_max"] = num(outside);
  rep["identity"] = {
      {"bilinear", num(r.bilinear_value)},
      {"weighted_energy", num(r.weighted_energy)},
      {"relative_gap", num(std::abs(r.bilinear_value - r.weighted_energy) /
                           std::max(std::abs(r.bilinear_value), 1e-300))}};
  rep["e_norms"] = enorms_json(r.e_norms);
  rep["solve"] = stats_json(r.stats);
  rep["clamped_entries"] = sys.level_weights().clamped_entries;
  run.write_field("control", r.control);
  run.write_field("state", r.state);
  run.write_field("resimulated", r.resimulated);
  run.write_json("report.json", rep);
  return ok;
}

int cmd_track(const Run &run) {
  const RunConfig &c = run.cfg();
  const SpatialGrid g = c.grid();
  const TimeGrid tg = c.time_grid();
  const DiscreteOperators ops(g);
  const auto prof = build_spatial_profile(c.L, c.omega, c.eps);
  const ControlOptions co = control_options(c, prof);
  const Viscosity nu = c.viscosity();
  const NonlinearOptions nl = nonlinear_options(c, c.control_theta);
  const Vector yb0 = evaluate_initial_spec(c.ybar0, g, c.seed + 1);
  const Vector y0 = evaluate_initial_spec(c.y0, g, c.seed);
  const NonlinearResult target = uncontrolled_trajectory(ops, nu, yb0, tg, nl);

  TrackingOptions to;
  to.tol = c.fp_tol;
  to.maxit = c.fp_maxit;
  to.delta = c.delta;
  to.nonlinear = nl;

  json rep = run.header();
  rep["s"] = num(co.s);
  const TrajectoryControlResult r =
      control_to_trajectory(ops, nu, target.y, y0, tg, prof, co, to);
  rep["iterations"] = r.iterations;
  rep["history"] = num_array(r.history);
  rep["initial_deviation"] = num(r.initial_deviation);
  rep["terminal_gap"] = num(r.terminal_gap);
  rep["control_norm"] = num(r.control_norm);
  rep["within_delta"] = r.within_delta;

  if (c.delta_sweep_hi > c.delta_sweep_lo) {
    Vector shape = y0 - yb0;
    if (l2_space(shape, g) == 0.0)
      shape = evaluate_initial_spec("random:1", g, c.seed + 2);
    shape /= l2_space(shape, g);
    const DeltaSweep sw = sweep_delta(ops, nu, target.y, shape, tg, prof, co, to,
                                      c.delta_sweep_lo, c.delta_sweep_hi,
                                      c.delta_sweep_bisections);
    json trials = json::array();
    for (const auto &[a, conv] : sw.trials)
      trials.push_back({{"amplitude", num(a)}, {"converged", conv}});
    rep["delta_sweep"] = {{"largest_converged", num(sw.largest_converged)},
                          {"smallest_failed", num(sw.smallest_failed)},
                          {"trials", trials}};
  }
  run.write_field("control", r.control);
  run.write_field("state", r.resimulated);
  run.write_field("target", target.y);
  run.write_json("report.json", rep);
  return ok;
}

json carleman_suite(const RunConfig &c, bool &passed) {
  const TimeGrid tg = c.time_grid();
  const auto prof = build_spatial_profile(c.L, c.omega, c.eps);
  const double s = s_from_target_exponent(prof, tg, c.s_target_exponent);
  const int fine_cells = c.N * 3 / 2;
  std::vector<CarlemanVariant> variants;
  if (c.carleman_variant != "beta")
    variants.push_back(CarlemanVariant::alpha);
  if (c.carleman_variant != "alpha")
    variants.push_back(CarlemanVariant::beta);

  json out = json::array();
  passed = true;
  for (CarlemanVariant v : variants) {
    CarlemanOptions o;
    o.variant = v;
    o.samples = c.carleman_samples;
    o.seed = c.seed;
    o.clamp = c.clamp;
    o.stepping.theta = c.theta;
    auto run_at = [&](int cells, double sv) {
      const SpatialGrid g = make_grid(c.L, cells);
      const DiscreteOperators ops(g);
      CoefficientSet co{c.viscosity(), Field(g, tg)};
      return check_carleman(ops, co, tg, prof, sv, o);
    };
    const CarlemanReport coarse = run_at(c.N, s);
    const CarlemanReport fine = run_at(fine_cells, s);
    std::vector<double> sweep{coarse.summary.max};
    for (double f : {2.0, 4.0})
      sweep.push_back(run_at(c.N, f * s).summary.max);
    const double ratio = fine.summary.max / coarse.summary.max;
    const bool finite = coarse.finite() && fine.finite() && coarse.excluded == 0 &&
                        fine.excluded == 0;
    const bool stable = std::isfinite(ratio) && ratio <= 2.0 && ratio >= 0.5;
    const bool monotone = sweep[1] <= sweep[0] && sweep[2] <= sweep[1];
    passed = passed && finite && stable && monotone;
    out.push_back({{"variant", to_string(v)},
                   {"s", num(s)},
                   {"cells", {c.N, fine_cells}},
                   {"steps", tg.steps},
                   {"coarse", summary_json(coarse.summary)},
                   {"fine", summary_json(fine.summary)},
                   {"excluded", coarse.excluded + fine.excluded},
                   {"clamped_entries", coarse.clamped_entries},
                   {"refinement_ratio", num(ratio)},
                   {"s_multipliers", {1, 2, 4}},
                   {"s_sweep_max", num_array(sweep)},
                   {"finite", finite},
                   {"stable", stable},
                   {"non_increasing_in_s", monotone}});
  }
  return out;
}

json duality_suite(const RunConfig &c, bool &passed) {
  const SpatialGrid g = c.grid();
  const TimeGrid tg = c.time_grid();
  const DiscreteOperators ops(g);
  DualityOptions o;
  o.samples = c.verify_samples;
  o.seed = c.seed;
  o.stepping.theta = c.theta;
  const DualityReport r = check_duality(ops, c.nu0, tg, o);
  o.adjoint_nu_perturbation = 0.1;
  o.samples = 10;
  const DualityReport bad = check_duality(ops, c.nu0, tg, o);
  const bool holds = r.excluded == 0 && r.summary.max <= 1e-10;
  std::vector<double> sorted = bad.residuals;
  std::sort(sorted.begin(), sorted.end());
  const bool detects = !sorted.empty() && sorted.front() > 1e-6;
  passed = holds && detects;
  return {{"summary", summary_json(r.summary)},
          {"excluded", r.excluded},
          {"threshold", 1e-10},
          {"holds", holds},
          {"negative_control",
           {{"adjoint_nu_perturbation", 0.1},
            {"summary", summary_json(bad.summary)},
            {"min", sorted.empty() ? json(nullptr) : num(sorted.front())},
            {"detected", detects}}}};
}

json energy_suite(const RunConfig &c, bool &passed) {
  const SpatialGrid g = c.grid();
  const TimeGrid tg = c.time_grid();
  const DiscreteOperators ops(g);
  EnergyOptions o;
  o.samples = c.verify_samples;
  o.seed = c.seed;
  const EnergyReport r = check_energy_kato(ops, c.nu0, tg, o);
  passed = r.excluded == 0 && std::isfinite(r.summary.max) &&
           r.max_identity_residual <= 1e-12;
  return {{"ratio", summary_json(r.summary)},
          {"excluded", r.excluded},
          {"max_identity_residual", num(r.max_identity_residual)},
          {"identity_threshold", 1e-12}};
}

json bilinear_suite(const RunConfig &c, bool &passed) {
  const SpatialGrid g = c.grid();
  const TimeGrid tg = c.time_grid();
  const DiscreteOperators ops(g);
  BilinearOptions o;
  o.samples = c.verify_samples;
  o.seed = c.seed;
  const BilinearReport r = check_bilinear_bounds(ops, tg, o);
  passed = r.excluded == 0;
  for (const auto *s : {&r.product0, &r.product1, &r.viscous0, &r.viscous1})
    passed = passed && std::isfinite(s->max);
  return {{"product_s0", summary_json(r.product0)},
          {"product_s1", summary_json(r.product1)},
          {"viscous_s0", summary_json(r.viscous0)},
          {"viscous_s1", summary_json(r.viscous1)},
          {"excluded", r.excluded}};
}

json mms_suite(const RunConfig &c, bool &passed) {
  MmsOptions o;
  o.length = c.L;
  o.horizon = c.T;
  o.nu0 = c.nu0;
  o.base_cells = c.mms_base_N;
  o.base_steps = c.mms_base_M;
  o.levels = c.mms_levels;
  o.nonlinear = nonlinear_options(c, 0.5);
  json out = json::array();
  passed = true;
  for (MmsCase m : {MmsCase::linear, MmsCase::nonlinear}) {
    const ConvergenceReport r = mms_convergence(m, o);
    const bool p = r.passed(1.8);
    passed = passed && p;
    out.push_back({{"case", to_string(m)},
                   {"cells", r.cells},
                   {"steps", r.steps},
                   {"errors", num_array(r.errors)},
                   {"pairwise_orders", num_array(r.pairwise_orders)},
                   {"order", num(r.order)},
                   {"monotone", r.monotone},
                   {"min_order", 1.8},
                   {"passed", p}});
  }
  return out;
}

int cmd_verify(const Run &run, const std::string &suite) {
  using Suite = json (*)(const RunConfig &, bool &);
  const std::vector<std::pair<std::string, Suite>> suites = {
      {"carleman", carleman_suite}, {"duality", duality_suite},
      {"energy", energy_suite},     {"bilinear", bilinear_suite},
      {"mms", mms_suite}};
  std::vector<std::string> failed;
  for (const auto &[name, fn] : suites) {
    if (suite != "all" && suite != name)
      continue;
    bool passed = false;
    json rep = run.header();
    rep["suite"] = name;
    rep["result"] = fn(run.cfg(), passed);
    rep["passed"] = passed;
    run.write_json("verify_" + name + ".json", rep);
    std::cout << name << ": " << (passed ? "PASS" : "FAIL") << "\n";
    if (!passed)
      failed.push_back(name);
  }
  if (!failed.empty()) {
    std::string list;
    for (const auto &f : failed)
      list += (list.empty() ? "" : ", ") + f;
    throw VerificationFailed("verification failed: " + list);
  }
  return ok;
}

int cmd_weights_export(const Run &run) {
  const RunConfig &c = run.cfg();
  const TimeGrid tg = c.time_grid();
  const SpatialGrid g = c.grid();
  const auto prof = build_spatial_profile(c.L, c.omega, c.eps);
  const double s = s_from_target_exponent(prof, tg, c.s_target_exponent);

  auto write = [&](const std::string &file, const WeightSet &w, const char *factor,
                   const char *hat, const char *breve) {
    std::ofstream os(run.dir() / file);
    os.precision(17);
    os << "t," << factor << "," << hat << "," << breve
       << ",decay2,decay4,observation,source,state,growth,control\n";
    for (std::size_t k = 0; k < w.size(); ++k)
      os << w.t[k] << "," << w.factor[k] << "," << w.hat[k] << "," << w.breve[k]
         << "," << w.decay2[k] << "," << w.decay4[k] << "," << w.observation[k]
         << "," << w.source[k] << "," << w.state[k] << "," << w.growth[k] << ","
         << w.control[k] << "\n";
  };
  const WeightSet beta = eval_beta_weights(prof, tg, s, c.clamp);
  const WeightSet alpha = eval_alpha_weights(prof, tg, s, c.clamp);
  write("weights.csv", beta, "tau", "beta_hat", "beta_breve");
  write("alpha_weights.csv", alpha, "xi", "alpha_hat", "alpha_breve");

  {
    std::ofstream os(run.dir() / "profile.csv");
    os.precision(17);
    os << "x,phi,phi_x,phi_xx\n";
    for (int i = 0; i <= g.cells; ++i) {
      const double x = g.node(i);
      os << x << "," << prof.derivative(x, 0) << "," << prof.derivative(x, 1)
         << "," << prof.derivative(x, 2) << "\n";
    }
  }
  const ValidationReport v = validate_spatial_profile(prof);
  json rep = run.header();
  rep["s"] = num(s);
  rep["clamp"] = c.clamp;
  rep["clamped_entries"] = {{"beta", beta.clamped_entries}, {"alpha", alpha.clamped_entries}};
  rep["profile"] = {{"c1", num(prof.c1())},
                    {"c2", num(prof.c2())},
                    {"min", num(v.min_value)},
                    {"max", num(v.max_value)},
                    {"slope_left", num(v.slope_left)},
                    {"slope_right", num(v.slope_right)},
                    {"max_junction_mismatch", num(v.max_junction_mismatch)},
                    {"valid", v.all()},
                    {"failures", v.failures()}};
  run.write_json("report.json", rep);
  return ok;
}

std::string keys_help() {
  std::ostringstream os;
  os << "Config file: one 'key = value' per line, '#' starts a comment.\n"
        "Unknown keys are rejected. Keys (default in brackets):\n";
  for (const ConfigKey &k : config_keys())
    os << "  " << k.name << " [" << k.default_value << "]\n      " << k.help << "\n";
  os << "\nExit codes: 0 success, 2 invalid config, 3 solver failure, "
        "4 verification failure.\n";
  return os.str();
}

void emit_error(const std::string &kind, const std::string &message, int code,
                const fs::path &dir, const json &extra = {}) {
  json j = {{"schema_version", schema_version},
            {"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
  if (!extra.is_null())
    j["error"]["details"] = extra;
  std::cerr << j.dump() << "\n";
  if (!dir.empty()) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!ec)
      std::ofstream(dir / "error.json") << j.dump(2) << "\n";
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Simulation, weighted null control and verification for the "
               "Korteweg-de Vries-Burgers equation"};
  app.footer(keys_help());
  app.require_subcommand(1);

  std::string config_path;
  std::string suite = "all";
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "forward solve from y0"},
      {"trajectory", "uncontrolled trajectory from ybar0"},
      {"null-control", "weighted null control of the linear equation"},
      {"track", "steer y0 onto the trajectory from ybar0"},
      {"verify", "run verification suites"},
      {"weights-export", "write the Carleman weights and spatial profile"}};
  for (const auto &[name, desc] : commands) {
    CLI::App *sub = app.add_subcommand(name, desc);
    sub->add_option("-c,--config", config_path, "config file (key = value)");
    sub->footer(keys_help());
    if (name == "verify")
      sub->add_option("--suite", suite, "suite to run")
          ->check(CLI::IsMember({"carleman", "duality", "energy", "bilinear", "mms", "all"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    emit_error("usage", e.what(), invalid_config, {});
    return invalid_config;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  fs::path dir;
  if (const char *env = std::getenv("KDVB_OUTPUT_DIR"); env && *env)
    dir = env;
  try {
    RunConfig cfg = config_path.empty() ? RunConfig::defaults()
                                        : RunConfig::load(config_path);
    dir = cfg.output_dir;
    if (const char *env = std::getenv("KDVB_OUTPUT_DIR"); env && *env)
      dir = env;
    Run run(sub, cfg);
    if (sub == "simulate")
      return cmd_simulate(run);
    if (sub == "trajectory")
      return cmd_trajectory(run);
    if (sub == "null-control")
      return cmd_null_control(run);
    if (sub == "track")
      return cmd_track(run);
    if (sub == "verify")
      return cmd_verify(run, suite);
    return cmd_weights_export(run);
  } catch (const InvalidArgument &e) {
    emit_error("invalid_config", e.what(), invalid_config, dir);
    return invalid_config;
  } catch (const NoConvergence &e) {
    emit_error("no_convergence", e.what(), solver_failure, dir,
               {{"history", num_array(e.history())}});
    return solver_failure;
  } catch (const SolverError &e) {
    emit_error("solver_failure", e.what(), solver_failure, dir);
    return solver_failure;
  } catch (const ConstructionFailed &e) {
    emit_error("construction_failed", e.what(), solver_failure, dir);
    return solver_failure;
  } catch (const VerificationFailed &e) {
    emit_error("verification_failure", e.what(), verification_failure, dir);
    return verification_failure;
  } catch (const std::exception &e) {
    emit_error("internal", e.what(), solver_failure, dir);
    return solver_failure;
  }
}
