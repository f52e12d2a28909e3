#include "kdvb/config.hpp"
#include "kdvb/control.hpp"
#include "kdvb/errors.hpp"
#include "kdvb/verify.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>
#include <utility>

namespace py = pybind11;
using namespace kdvb;

namespace {

using Omega = std::pair<double, double>;

SpatialGrid grid_for(const Vector &y0, double L) {
  return make_grid(L, static_cast<int>(y0.size()) + 1);
}

Field field_or_zero(const std::optional<FieldData> &f, const SpatialGrid &g,
                    const TimeGrid &tg) {
  if (!f)
    return Field(g, tg);
  Field out(*f);
  if (!out.matches(g, tg))
    throw InvalidArgument("source must have shape (M + 1, N - 1)");
  return out;
}

py::dict e_norm_dict(const ENormReport &e) {
  py::dict d;
  const auto names = ENormReport::names();
  const auto vals = e.values();
  for (std::size_t i = 0; i < names.size(); ++i)
    d[py::str(names[i])] = vals[i];
  return d;
}

Vector nodes(const SpatialGrid &g) {
  return sample_space(g, [](double x) { return x; });
}

Vector times(const TimeGrid &tg) {
  Vector t(tg.levels());
  for (int n = 0; n < tg.levels(); ++n)
    t[n] = tg.time(n);
  return t;
}

py::dict operators(int N, double L) {
  const DiscreteOperators ops(make_grid(L, N));
  py::dict d;
  d["d1"] = Eigen::MatrixXd(ops.d1());
  d["d2"] = Eigen::MatrixXd(ops.d2());
  d["d3"] = Eigen::MatrixXd(ops.d3());
  d["d1_forward"] = Eigen::MatrixXd(ops.d1_forward());
  return d;
}

py::dict simulate(const Vector &y0, double L, double T, int M, double nu0,
                  double theta, const std::string &equation,
                  const std::string &mode, double tol, int maxit,
                  const std::optional<FieldData> &source) {
  const SpatialGrid g = grid_for(y0, L);
  const TimeGrid tg = make_time_grid(T, M);
  const DiscreteOperators ops(g);
  const Field f = field_or_zero(source, g, tg);
  py::dict d;
  if (equation == "linear") {
    d["y"] = solve_linear_constant(ops, nu0, f, y0, tg, {theta}).values();
    d["iterations"] = 0;
  } else if (equation == "nonlinear") {
    NonlinearOptions o;
    o.mode = nonlinear_mode_from_string(mode);
    o.tol = tol;
    o.maxit = maxit;
    o.stepping.theta = theta;
    const NonlinearResult r = solve_nonlinear(ops, Viscosity::constant(nu0), f, y0, tg, o);
    d["y"] = r.y.values();
    d["iterations"] = r.iterations;
    d["history"] = r.history;
  } else {
    throw InvalidArgument("equation must be 'linear' or 'nonlinear'");
  }
  d["x"] = nodes(g);
  d["t"] = times(tg);
  return d;
}

py::dict profile(double L, Omega omega, double eps, const Vector &x) {
  const CarlemanSpatialProfile p = build_spatial_profile(L, {omega.first, omega.second}, eps);
  const ValidationReport v = validate_spatial_profile(p);
  Vector phi(x.size()), dphi(x.size()), ddphi(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    phi[i] = p(x[i]);
    dphi[i] = p.derivative(x[i], 1);
    ddphi[i] = p.derivative(x[i], 2);
  }
  py::dict d;
  d["phi"] = phi;
  d["phi_x"] = dphi;
  d["phi_xx"] = ddphi;
  d["min"] = p.min_value();
  d["max"] = p.max_value();
  d["valid"] = v.all();
  d["failures"] = v.failures();
  d["max_junction_mismatch"] = v.max_junction_mismatch;
  return d;
}

double target_s(double L, Omega omega, double eps, double T, int M, double target) {
  const auto p = build_spatial_profile(L, {omega.first, omega.second}, eps);
  return s_from_target_exponent(p, make_time_grid(T, M), target);
}

py::dict null_control(const Vector &y0, double L, double T, int M, double nu0,
                      Omega omega, double eps, double target, double theta,
                      double clamp, const std::optional<FieldData> &source) {
  const SpatialGrid g = grid_for(y0, L);
  const TimeGrid tg = make_time_grid(T, M);
  const DiscreteOperators ops(g);
  const auto p = build_spatial_profile(L, {omega.first, omega.second}, eps);
  ControlOptions co;
  co.omega = {omega.first, omega.second};
  co.s = s_from_target_exponent(p, tg, target);
  co.clamp = clamp;
  co.stepping.theta = theta;
  const VariationalSystem sys(ops, CoefficientSet::zero_transport(nu0, g, tg), tg, p, co);
  const ControlResult r = solve_null_control(sys, y0, field_or_zero(source, g, tg));
  py::dict d;
  d["control"] = r.control.values();
  d["state"] = r.state.values();
  d["resimulated"] = r.resimulated.values();
  d["s"] = co.s;
  d["terminal_norm"] = r.terminal_norm;
  d["control_norm"] = r.control_norm;
  d["bilinear_value"] = r.bilinear_value;
  d["weighted_energy"] = r.weighted_energy;
  d["e_norms"] = e_norm_dict(r.e_norms);
  d["method"] = r.stats.method;
  d["relative_residual"] = r.stats.relative_residual;
  d["x"] = nodes(g);
  d["t"] = times(tg);
  return d;
}

py::dict track(const Vector &y0, const Vector &ybar0, double L, double T, int M,
               double nu0, Omega omega, double eps, double target, double theta,
               int maxit) {
  if (ybar0.size() != y0.size())
    throw InvalidArgument("y0 and ybar0 must have the same length");
  const SpatialGrid g = grid_for(y0, L);
  const TimeGrid tg = make_time_grid(T, M);
  const DiscreteOperators ops(g);
  const auto p = build_spatial_profile(L, {omega.first, omega.second}, eps);
  ControlOptions co;
  co.omega = {omega.first, omega.second};
  co.s = s_from_target_exponent(p, tg, target);
  co.stepping.theta = theta;
  const Viscosity nu = Viscosity::constant(nu0);
  TrackingOptions to;
  to.maxit = maxit;
  to.nonlinear.stepping = co.stepping;
  const NonlinearResult ybar = uncontrolled_trajectory(ops, nu, ybar0, tg, to.nonlinear);
  const auto r = control_to_trajectory(ops, nu, ybar.y, y0, tg, p, co, to);
  py::dict d;
  d["control"] = r.control.values();
  d["state"] = r.resimulated.values();
  d["target"] = ybar.y.values();
  d["iterations"] = r.iterations;
  d["history"] = r.history;
  d["initial_deviation"] = r.initial_deviation;
  d["terminal_gap"] = r.terminal_gap;
  d["control_norm"] = r.control_norm;
  return d;
}

py::dict carleman(int N, int M, const std::string &variant, double target,
                  int samples, std::uint64_t seed, double L, double T, double nu0) {
  const SpatialGrid g = make_grid(L, N);
  const TimeGrid tg = make_time_grid(T, M);
  const DiscreteOperators ops(g);
  const auto p = build_spatial_profile(L, {0.3 * L, 0.7 * L}, 0.5);
  CarlemanOptions o;
  o.variant = carleman_variant_from_string(variant);
  o.samples = samples;
  o.seed = seed;
  const double s = s_from_target_exponent(p, tg, target);
  const CarlemanReport r =
      check_carleman(ops, CoefficientSet::zero_transport(nu0, g, tg), tg, p, s, o);
  py::dict d;
  d["s"] = s;
  d["ratio"] = r.ratio;
  d["lhs"] = r.lhs;
  d["rhs"] = r.rhs;
  d["excluded"] = r.excluded;
  d["max"] = r.summary.max;
  d["median"] = r.summary.median;
  return d;
}

std::vector<double> duality(int N, int M, int samples, std::uint64_t seed,
                            double perturbation, double theta) {
  const SpatialGrid g = make_grid(1.0, N);
  const DiscreteOperators ops(g);
  DualityOptions o;
  o.samples = samples;
  o.seed = seed;
  o.adjoint_nu_perturbation = perturbation;
  o.stepping.theta = theta;
  return check_duality(ops, 0.1, make_time_grid(1.0, M), o).residuals;
}

std::string resolve_config(const std::string &text) {
  std::istringstream is(text);
  return RunConfig::parse(is, "<string>").resolved();
}

} // namespace

PYBIND11_MODULE(_kdvb, m) {
  m.doc() = "KdV-Burgers solvers, weighted null control and checks";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<NoConvergence>(m, "NoConvergence", PyExc_RuntimeError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);

  m.attr("schema_version") = schema_version;

  m.def("operators", &operators, py::arg("N"), py::arg("L") = 1.0,
        "Dense D1, D2, D3 and forward D1 on the pinned-periodic grid.");
  m.def("simulate", &simulate, py::arg("y0"), py::arg("L") = 1.0, py::arg("T") = 1.0,
        py::arg("M") = 128, py::arg("nu0") = 0.1, py::arg("theta") = 0.5,
        py::arg("equation") = "nonlinear", py::arg("mode") = "picard",
        py::arg("tol") = 1e-12, py::arg("maxit") = 50, py::arg("source") = py::none(),
        "Forward solve. y0 holds the N-1 interior values; y has shape (M+1, N-1).");
  m.def("profile", &profile, py::arg("L") = 1.0, py::arg("omega") = Omega{0.3, 0.7},
        py::arg("eps") = 0.5, py::arg("x") = Vector::LinSpaced(101, 0.0, 1.0),
        "Spatial Carleman profile, its derivatives at x and its validation.");
  m.def("s_from_target_exponent", &target_s, py::arg("L") = 1.0,
        py::arg("omega") = Omega{0.3, 0.7}, py::arg("eps") = 0.5, py::arg("T") = 1.0,
        py::arg("M") = 128, py::arg("target") = 150.0);
  m.def("null_control", &null_control, py::arg("y0"), py::arg("L") = 1.0,
        py::arg("T") = 1.0, py::arg("M") = 128, py::arg("nu0") = 0.1,
        py::arg("omega") = Omega{0.3, 0.7}, py::arg("eps") = 0.5,
        py::arg("target") = 150.0, py::arg("theta") = 1.0, py::arg("clamp") = 200.0,
        py::arg("source") = py::none(), "Weighted null control of the linear equation.");
  m.def("track", &track, py::arg("y0"), py::arg("ybar0"), py::arg("L") = 1.0,
        py::arg("T") = 1.0, py::arg("M") = 128, py::arg("nu0") = 0.1,
        py::arg("omega") = Omega{0.3, 0.7}, py::arg("eps") = 0.5,
        py::arg("target") = 150.0, py::arg("theta") = 1.0, py::arg("maxit") = 10,
        "Steer y0 onto the uncontrolled trajectory from ybar0.");
  m.def("carleman", &carleman, py::arg("N") = 64, py::arg("M") = 128,
        py::arg("variant") = "beta", py::arg("target") = 150.0, py::arg("samples") = 50,
        py::arg("seed") = 1, py::arg("L") = 1.0, py::arg("T") = 1.0, py::arg("nu0") = 0.1);
  m.def("duality_residuals", &duality, py::arg("N") = 64, py::arg("M") = 128,
        py::arg("samples") = 100, py::arg("seed") = 2, py::arg("perturbation") = 0.0,
        py::arg("theta") = 0.5);
  m.def("resolve_config", &resolve_config, py::arg("text"),
        "Validate key = value text and return the fully resolved configuration.");
}
