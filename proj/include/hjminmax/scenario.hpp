// Scenario files and the solve/front/study/check commands behind the CLI.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hjminmax/errors.hpp"
#include "hjminmax/iterated.hpp"

namespace hjminmax {

using Json = nlohmann::ordered_json;

struct Grids {
  int n_x = 101;
  int fiber_M = 257;
  int check_fiber_M = 0;  // 0 reuses fiber_M
  double fd_dx = 1e-3;
  double cfl = 0.9;
  double flow_step = 1e-3;
  int n_seeds = 64;
  double min_core = 0.1;
};

struct Scenario {
  std::string name;
  std::string h_expr;
  HamiltonianModel model;
  PiecewiseFunction v;
  double T = 1.0;
  double a = -1.0;
  double b = 1.0;
  Grids grids;
  std::vector<int> schedules;
  double target = 0.0;
  MomentumWindow window;  // on [a, b] over [0, T]
  double pad = 0.0;       // T * max |dH/dp| on the window

  PaddedGrid grid() const { return padded_grid(a, b, static_cast<std::size_t>(grids.n_x), pad); }
  double h() const { return (b - a) / (grids.n_x - 1); }

  StepConfig step_config(int resolution = 0) const {
    StepConfig c;
    c.flow.step = grids.flow_step;
    c.fiber.resolution = resolution > 0 ? resolution : grids.fiber_M;
    c.fiber.min_core = grids.min_core;
    c.selector.n_seeds = grids.n_seeds;
    return c;
  }

  FDConfig fd_config() const { return {.dx = grids.fd_dx, .cfl = grids.cfl, .alpha = 0.0}; }
};

namespace detail {

// Reads json[key] with a typed error naming the field path.
template <class T>
T field(const Json& j, const std::string& path, const std::string& key) {
  const std::string full = path.empty() ? key : path + "." + key;
  if (!j.is_object() || !j.contains(key)) throw ConfigError(full + ": missing");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(full + ": wrong type");
  }
}

template <class T>
T field_or(const Json& j, const std::string& path, const std::string& key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return field<T>(j, path, key);
}

inline Expression parse_field(const std::string& src, const std::string& path) {
  try {
    return Expression::parse(src);
  } catch (const ParseError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path + ": " + what);
}

// Second difference of H in p is nonnegative on the window, sampled in t and x as well.
inline bool sampled_convex_in_p(const HamiltonianModel& m, double R, double T, double a, double b) {
  const int np = 201;
  const double e = std::max(1e-3, 2.0 * R / (np - 1));
  const int nt = m.p_only() ? 1 : 5, nx = m.p_only() ? 1 : 9;
  for (int it = 0; it < nt; ++it)
    for (int ix = 0; ix < nx; ++ix) {
      const double t = nt == 1 ? 0.0 : T * it / (nt - 1);
      const double x = nx == 1 ? 0.5 * (a + b) : a + (b - a) * ix / (nx - 1);
      for (int k = 0; k < np; ++k) {
        const double p = -R + 2 * R * k / (np - 1);
        const double h0 = m.value(t, x, p);
        const double d2 = m.value(t, x, p + e) - 2 * h0 + m.value(t, x, p - e);
        if (d2 < -1e-9 * (1.0 + std::fabs(h0))) return false;
      }
    }
  return true;
}

}  // namespace detail

inline Scenario parse_scenario(const Json& j) {
  using detail::field;
  using detail::field_or;
  using detail::require;
  Scenario sc;
  require(j.is_object(), "scenario", "top level must be an object");
  sc.name = field<std::string>(j, "", "name");
  require(!sc.name.empty() && sc.name.find_first_of("/\\ ") == std::string::npos, "name",
          "must be a non-empty file-name-safe string");

  const Json& hj = j.contains("hamiltonian") ? j.at("hamiltonian") : Json();
  sc.h_expr = field<std::string>(hj, "hamiltonian", "expr");
  const double cH = field<double>(hj, "hamiltonian", "c_H_bound");
  require(cH > 0.0 && std::isfinite(cH), "hamiltonian.c_H_bound", "must be positive");
  std::optional<double> support;
  if (hj.contains("support_radius") && !hj.at("support_radius").is_null()) {
    support = field<double>(hj, "hamiltonian", "support_radius");
    require(*support > 0.0, "hamiltonian.support_radius", "must be positive");
  }
  HamiltonianFlags flags;
  if (hj.contains("flags")) {
    const Json& fj = hj.at("flags");
    flags.p_only = field_or<bool>(fj, "hamiltonian.flags", "p_only", false);
    flags.convex_in_p = field_or<bool>(fj, "hamiltonian.flags", "convex_in_p", false);
  }
  Expression hexpr = detail::parse_field(sc.h_expr, "hamiltonian.expr");
  if (flags.p_only && (hexpr.mentions(Var::t) || hexpr.mentions(Var::x)))
    throw ConfigError("hamiltonian.flags.p_only: expression depends on t or x");
  sc.model = HamiltonianModel(std::move(hexpr), cH, support, flags);

  const Json& dj = j.contains("initial_datum") ? j.at("initial_datum") : Json();
  const auto breaks = field<std::vector<double>>(dj, "initial_datum", "breakpoints");
  if (!dj.contains("pieces") || !dj.at("pieces").is_array()) throw ConfigError("initial_datum.pieces: missing");
  std::vector<Piece> pieces;
  for (std::size_t k = 0; k < dj.at("pieces").size(); ++k) {
    const Json& pj = dj.at("pieces")[k];
    const std::string path = "initial_datum.pieces[" + std::to_string(k) + "]";
    if (pj.is_string()) {
      pieces.emplace_back(detail::parse_field(pj.get<std::string>(), path));
    } else if (pj.is_object()) {
      pieces.emplace_back(LinearPiece{field<double>(pj, path, "at"), field<double>(pj, path, "value"),
                                      field<double>(pj, path, "slope")});
    } else {
      throw ConfigError(path + ": must be an expression string or {at, value, slope}");
    }
  }
  const double lip = field_or<double>(dj, "initial_datum", "lipschitz_bound", -1.0);
  sc.v = PiecewiseFunction(breaks, std::move(pieces), -1.0);
  if (lip >= 0.0) {
    require(sc.v.lipschitz_bound() <= lip * (1.0 + 1e-9) + 1e-12, "initial_datum.lipschitz_bound",
            "declared " + std::to_string(lip) + " is below the measured " + std::to_string(sc.v.lipschitz_bound()));
    sc.v = PiecewiseFunction(breaks, sc.v.pieces(), lip);
  }

  sc.T = field<double>(j, "", "horizon");
  require(sc.T > 0.0 && std::isfinite(sc.T), "horizon", "must be positive");
  const auto dom = field<std::vector<double>>(j, "", "x_domain");
  require(dom.size() == 2 && dom[0] < dom[1], "x_domain", "must be [a, b] with a < b");
  sc.a = dom[0];
  sc.b = dom[1];

  if (j.contains("grids")) {
    const Json& gj = j.at("grids");
    Grids& g = sc.grids;
    g.n_x = field_or<int>(gj, "grids", "n_x", g.n_x);
    g.fiber_M = field_or<int>(gj, "grids", "fiber_M", g.fiber_M);
    g.check_fiber_M = field_or<int>(gj, "grids", "check_fiber_M", g.check_fiber_M);
    g.fd_dx = field_or<double>(gj, "grids", "fd_dx", g.fd_dx);
    g.cfl = field_or<double>(gj, "grids", "cfl", g.cfl);
    g.flow_step = field_or<double>(gj, "grids", "flow_step", g.flow_step);
    g.n_seeds = field_or<int>(gj, "grids", "n_seeds", g.n_seeds);
    g.min_core = field_or<double>(gj, "grids", "min_core", g.min_core);
  }
  const Grids& g = sc.grids;
  require(g.n_x >= 2, "grids.n_x", "must be at least 2");
  require(g.fiber_M >= 9, "grids.fiber_M", "must be at least 9");
  require(g.check_fiber_M == 0 || g.check_fiber_M >= 9, "grids.check_fiber_M", "must be 0 or at least 9");
  require(g.fd_dx > 0.0, "grids.fd_dx", "must be positive");
  require(g.cfl > 0.0 && g.cfl <= 1.0, "grids.cfl", "must lie in (0, 1]");
  require(g.flow_step > 0.0, "grids.flow_step", "must be positive");
  require(g.n_seeds >= 1, "grids.n_seeds", "must be positive");
  require(g.min_core > 0.0, "grids.min_core", "must be positive");

  sc.schedules = field_or<std::vector<int>>(j, "", "schedules", {});
  for (std::size_t k = 0; k < sc.schedules.size(); ++k)
    require(sc.schedules[k] >= 1, "schedules[" + std::to_string(k) + "]", "must be at least 1");
  if (j.contains("targets")) sc.target = field_or<double>(j.at("targets"), "targets", "convergence_sup_error", 0.0);
  require(sc.target >= 0.0, "targets.convergence_sup_error", "must be nonnegative");

  sc.window = momentum_window(sc.model, sc.v.lipschitz_bound(), sc.T, sc.a, sc.b);
  sc.pad = sc.T * sc.window.max_dpH;
  if (flags.convex_in_p && !detail::sampled_convex_in_p(sc.model, sc.window.radius + 1.0, sc.T, sc.a, sc.b))
    throw ConfigError("hamiltonian.flags.convex_in_p: second difference in p is negative on the momentum window");
  const double R = sc.window.radius + 1.0;
  check_cH_bound(sc.model, {.t_lo = 0.0, .t_hi = sc.T, .x_lo = sc.a - sc.pad, .x_hi = sc.b + sc.pad, .p_lo = -R, .p_hi = R},
                 9);
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_scenario(j);
}

// ---- output ----------------------------------------------------------------

inline std::string fmt12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// Writes through a temporary file in the same directory and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError(tmp.string() + ": cannot write");
    out << content;
    if (!out.flush()) throw ConfigError(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string field_csv(const SolutionField& f) {
  std::string s = "t,x,u,scheme\n";
  for (std::size_t k = 0; k < f.times.size(); ++k)
    for (std::size_t j = 0; j < f.x_grid.size(); ++j)
      s += fmt12(f.times[k]) + "," + fmt12(f.x_grid[j]) + "," + fmt12(f.u[k][j]) + "," + f.scheme + "\n";
  return s;
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline Json to_json(const SelectorStats& s) {
  return Json{{"calls", s.calls},
              {"warnings", s.warnings},
              {"refinements", s.refinements},
              {"max_tolerance", s.max_tolerance},
              {"max_match_gap", s.max_gap},
              {"min_margin", std::isfinite(s.min_margin) ? Json(s.min_margin) : Json(nullptr)}};
}

inline Json to_json(const LipschitzReport& r) {
  return Json{{"lip_space", r.lip_space},         {"bound_space", r.bound_space},
              {"worst_space_ratio", r.worst_space_ratio}, {"lip_time", r.lip_time},
              {"bound_time", r.bound_time},       {"window_radius", r.window_radius},
              {"pass_space", r.pass_space},       {"pass_time", r.pass_time}};
}

inline Json scenario_json(const Scenario& sc) {
  const Grids& g = sc.grids;
  Json flags{{"p_only", sc.model.p_only()}, {"convex_in_p", sc.model.convex_in_p()}};
  Json h{{"expr", sc.h_expr}, {"c_H_bound", sc.model.c_H_bound()}, {"delta_H", sc.model.delta_H()}, {"flags", flags}};
  h["support_radius"] = sc.model.support_radius() ? Json(*sc.model.support_radius()) : Json(nullptr);
  return Json{{"name", sc.name},
              {"hamiltonian", h},
              {"datum_lipschitz", sc.v.lipschitz_bound()},
              {"horizon", sc.T},
              {"x_domain", {sc.a, sc.b}},
              {"grids",
               {{"n_x", g.n_x},
                {"h", sc.h()},
                {"fiber_M", g.fiber_M},
                {"check_fiber_M", g.check_fiber_M > 0 ? g.check_fiber_M : g.fiber_M},
                {"fd_dx", g.fd_dx},
                {"cfl", g.cfl},
                {"flow_step", g.flow_step},
                {"n_seeds", g.n_seeds},
                {"min_core", g.min_core}}},
              {"momentum_window",
               {{"radius", sc.window.radius},
                {"max_dxH", sc.window.max_dxH},
                {"max_dpH", sc.window.max_dpH},
                {"max_H", sc.window.max_H}}},
              {"padding", sc.pad}};
}

// ---- commands ---------------------------------------------------------------

struct CommandResult {
  int exit_code = 0;
  std::vector<std::filesystem::path> files;
};

// Uniform output times k T / n.
inline std::vector<double> uniform_times(double T, int n) { return SubdivisionSchedule::uniform(T, n).times; }

// Reference field on the window at every time of a uniform schedule with n steps.
inline SolutionField fd_reference(const Scenario& sc, int n) {
  const PaddedGrid g = sc.grid();
  return fd_viscosity(sc.model, sc.v, sc.T, g.window(g.x), sc.fd_config(), uniform_times(sc.T, n));
}

inline int lax_oleinik_substeps(const Scenario& sc) {
  if (sc.model.p_only()) return 1;
  return std::max(1, static_cast<int>(std::ceil(sc.T / (0.85 * sc.model.delta_H()))));
}

inline CommandResult cmd_solve(const Scenario& sc, const std::string& scheme, const std::filesystem::path& out) {
  CommandResult res;
  const PaddedGrid g = sc.grid();
  Json man{{"command", "solve"}, {"scheme", scheme}, {"scenario", scenario_json(sc)}};
  SolutionField f;
  std::string tag;
  if (scheme == "minmax" || scheme.rfind("iterated:", 0) == 0) {
    int n = 1;
    tag = "minmax";
    if (scheme != "minmax") {
      const std::string num = scheme.substr(9);
      try {
        std::size_t used = 0;
        n = std::stoi(num, &used);
        if (used != num.size()) throw std::invalid_argument(num);
      } catch (const std::exception&) {
        throw ConfigError("--scheme: expected iterated:<n>, got '" + scheme + "'");
      }
      if (n < 1) throw ConfigError("--scheme: iterated needs n >= 1");
      tag = "iterated_" + std::to_string(n);
    }
    const auto sched = SubdivisionSchedule::uniform(sc.T, n);
    SelectorStats st;
    f = trim(iterate(sc.model, sc.v, sched, g.x, sc.step_config(), &st), g);
    man["schedule"] = {{"n", n}, {"mesh", sched.mesh()}};
    man["selector"] = to_json(st);
  } else if (scheme == "min") {
    tag = "min";
    const int n_sub = lax_oleinik_substeps(sc);
    f = trim(lax_oleinik_min(sc.model, sc.v, 0.0, sc.T, g.x, n_sub, {.step = sc.grids.flow_step}), g);
    const SolutionField fd =
        fd_viscosity(sc.model, sc.v, sc.T, f.x_grid, sc.fd_config(), std::vector<double>(f.times.begin(), f.times.end()));
    const ComparisonReport c = compare(f, fd);
    const double tol = 5.0 * sc.grids.fd_dx + (sc.v.lipschitz_bound() + sc.window.max_dpH) * sc.h() / 2.0;
    man["min_oracle"] = {{"n_sub", n_sub}};
    man["fd_agreement"] = {{"sup_error", c.sup_error}, {"tolerance", tol}, {"agrees", c.sup_error <= tol}};
    if (!(c.sup_error <= tol)) res.exit_code = 3;
  } else if (scheme == "fd") {
    tag = "fd";
    const int n = sc.schedules.empty() ? 8 : *std::max_element(sc.schedules.begin(), sc.schedules.end());
    f = fd_reference(sc, n);
    man["fd"] = {{"alpha", sc.window.max_dpH}, {"output_steps", n}};
  } else {
    throw ConfigError("--scheme: expected minmax, iterated:<n>, min or fd, got '" + scheme + "'");
  }
  const LipschitzReport lip = lipschitz_report(f, sc.model, sc.v, sc.h() * sc.window.max_dpH);
  man["field"] = {{"scheme", f.scheme}, {"times", f.times.size()}, {"nodes", f.x_grid.size()}};
  man["lipschitz"] = to_json(lip);
  const auto csv = out / (sc.name + "_" + tag + ".csv");
  const auto mpath = out / (sc.name + "_" + tag + "_manifest.json");
  write_atomic(csv, field_csv(f));
  write_atomic(mpath, dump(man));
  res.files = {csv, mpath};
  return res;
}

inline CommandResult cmd_front(const Scenario& sc, double t, const std::filesystem::path& out) {
  if (!(t >= 0.0 && t <= sc.T)) throw ConfigError("--t: must lie in [0, horizon]");
  if (!sc.model.p_only() && t > 0.9 * sc.model.delta_H()) throw ConfigError("--t: exceeds 0.9 delta_H for this Hamiltonian");
  const OneStepFamily fam(sc.model, sc.v, 0.0, t, {.step = sc.grids.flow_step});
  const auto front = wavefront(fam, sc.a, sc.b, sc.grids.n_x);
  std::string fcsv = "x,u,branch_id,from_kink\n";
  for (const auto& s : front)
    fcsv += fmt12(s.x) + "," + fmt12(s.u) + "," + std::to_string(s.branch_id) + "," + (s.from_kink ? "1" : "0") + "\n";
  const auto xs = linspace(sc.a, sc.b, static_cast<std::size_t>(sc.grids.n_x));
  std::string scsv = "x,u,match_gap,tolerance\n";
  if (t == 0.0) {
    for (double x : xs) scsv += fmt12(x) + "," + fmt12(sc.v(x)) + ",0,0\n";
  } else {
    const StepResult r = step_operator(sc.model, sc.v, 0.0, t, xs, sc.step_config());
    for (std::size_t k = 0; k < xs.size(); ++k)
      scsv += fmt12(xs[k]) + "," + fmt12(r.values[k]) + "," + fmt12(r.diagnostics[k].match_gap) + "," +
              fmt12(r.diagnostics[k].tolerance) + "\n";
  }
  const std::string stem = sc.name + "_front_t" + fmt12(t);
  const auto fpath = out / (stem + ".csv");
  const auto spath = out / (sc.name + "_section_t" + fmt12(t) + ".csv");
  write_atomic(fpath, fcsv);
  write_atomic(spath, scsv);
  return {0, {fpath, spath}};
}

// Least common multiple of the schedule sizes, so the reference holds every schedule time.
inline int schedule_lcm(const std::vector<int>& ns) {
  long l = 1;
  for (int n : ns) {
    l = std::lcm(l, static_cast<long>(n));
    if (l > 4096) throw ConfigError("schedules: least common multiple exceeds 4096 reference slices");
  }
  return static_cast<int>(l);
}

struct StudyOutcome {
  ConvergenceTable table;
  std::vector<SolutionField> fields;
  std::vector<LipschitzReport> lipschitz;
  SelectorStats stats;
  Json report;
};

inline StudyOutcome run_study(const Scenario& sc) {
  if (sc.schedules.size() < 3) throw ConfigError("schedules: study needs at least 3 schedules");
  for (std::size_t k = 1; k < sc.schedules.size(); ++k)
    if (sc.schedules[k] <= sc.schedules[k - 1]) throw ConfigError("schedules: must be strictly increasing");
  StudyOutcome o;
  const PaddedGrid g = sc.grid();
  const SolutionField oracle = fd_reference(sc, schedule_lcm(sc.schedules));
  o.table = convergence_study(sc.model, sc.v, sc.T, sc.schedules, g, oracle, sc.target, sc.step_config(), &o.fields,
                              &o.stats);
  const double modulus = sc.h() * sc.window.max_dpH;
  Json rows = Json::array();
  bool equi = true;
  for (std::size_t k = 0; k < o.fields.size(); ++k) {
    o.lipschitz.push_back(lipschitz_report(o.fields[k], sc.model, sc.v, modulus));
    equi = equi && o.lipschitz.back().pass();
    const ConvergenceRow& r = o.table.rows[k];
    rows.push_back({{"n", r.n},
                    {"mesh", r.mesh},
                    {"sup_error", r.sup_error},
                    {"mean_abs_error", r.l1_error},
                    {"rate", r.rate},
                    {"lipschitz", to_json(o.lipschitz.back())}});
  }
  o.report = Json{{"command", "study"},
                  {"scenario", scenario_json(sc)},
                  {"reference", {{"scheme", "fd_viscosity"}, {"alpha", sc.window.max_dpH}, {"slices", oracle.times.size()}}},
                  {"rows", rows},
                  {"target", sc.target},
                  {"slack", 0.2},
                  {"non_increasing", o.table.non_increasing},
                  {"finest_within_target", o.table.finest_within_target},
                  {"equi_lipschitz", equi},
                  {"selector", to_json(o.stats)},
                  {"pass", o.table.pass()}};
  return o;
}

inline CommandResult cmd_study(const Scenario& sc, const std::filesystem::path& out) {
  const StudyOutcome o = run_study(sc);
  const auto path = out / (sc.name + "_study.json");
  write_atomic(path, dump(o.report));
  return {o.table.pass() ? 0 : 3, {path}};
}

// v + bump with bump given in source form; linear pieces are rewritten as expressions.
inline PiecewiseFunction perturbed(const PiecewiseFunction& v, const std::string& bump) {
  std::vector<Piece> ps;
  for (const auto& pc : v.pieces()) {
    std::string src;
    if (const auto* l = std::get_if<LinearPiece>(&pc))
      src = "(" + fmt12(l->value) + ")+(" + fmt12(l->slope) + ")*(x-(" + fmt12(l->x_ref) + "))";
    else
      src = std::get<Expression>(pc).print();
    ps.push_back(Expression::parse("(" + src + ")+(" + bump + ")"));
  }
  return PiecewiseFunction(v.breakpoints(), std::move(ps));
}

struct StabilityProbe {
  double x = 0.0;
  double epsilon = 0.0;
  double center = 0.0;
  StabilityGap gap;
};

// Random smooth perturbations eps * exp(-8 (x - c)^2) with a fixed seed.
inline std::vector<StabilityProbe> stability_probes(const Scenario& sc, int count, unsigned seed = 20240611) {
  const double t = sc.model.p_only() ? sc.T : std::min(sc.T, 0.85 * sc.model.delta_H());
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> ux(sc.a, sc.b), ue(-0.05, 0.05);
  const OneStepFamily fa(sc.model, sc.v, 0.0, t, {.step = sc.grids.flow_step});
  const StepConfig cfg = sc.step_config();
  const FiberBox box = fiber_box(fa, sc.a, sc.b, cfg.fiber);
  std::vector<StabilityProbe> out;
  for (int k = 0; k < count; ++k) {
    StabilityProbe p;
    p.x = ux(rng);
    p.epsilon = ue(rng);
    p.center = ux(rng);
    const PiecewiseFunction w =
        perturbed(sc.v, "(" + fmt12(p.epsilon) + ")*exp(-8*(x-(" + fmt12(p.center) + "))^2)");
    const OneStepFamily fb(sc.model, w, 0.0, t, {.step = sc.grids.flow_step});
    p.gap = stability_gap(fa, fb, p.x, box, cfg.selector);
    out.push_back(p);
  }
  return out;
}

struct CheckOutcome {
  Json report;
  bool pass = true;
};

inline CheckOutcome run_check(const Scenario& sc) {
  CheckOutcome o;
  const PaddedGrid g = sc.grid();
  const double modulus = sc.h() * sc.window.max_dpH;
  const int M = sc.grids.check_fiber_M > 0 ? sc.grids.check_fiber_M : sc.grids.fiber_M;

  // One-step field and the coarsest iterated field.
  SelectorStats st1;
  const double t1 = sc.model.p_only() ? sc.T : std::min(sc.T, 0.85 * sc.model.delta_H());
  SolutionField one = trim(iterate(sc.model, sc.v, SubdivisionSchedule::uniform(t1, 1), g.x, sc.step_config(), &st1), g);
  const int n_it = sc.schedules.empty() ? 2 : std::max(2, sc.schedules.front());
  SelectorStats st2;
  SolutionField it = trim(iterate(sc.model, sc.v, SubdivisionSchedule::uniform(sc.T, n_it), g.x, sc.step_config(), &st2), g);
  const LipschitzReport l1 = lipschitz_report(one, sc.model, sc.v, modulus);
  const LipschitzReport l2 = lipschitz_report(it, sc.model, sc.v, modulus);
  SelectorStats all = st1;
  all.absorb(st2);

  // Stability probes.
  const auto probes = stability_probes(sc, 50);
  Json pj = Json::array();
  bool stable = true;
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& p : probes) {
    stable = stable && p.gap.holds();
    worst = std::max(worst, p.gap.value_gap - p.gap.sup_norm - 2 * p.gap.grid_modulus);
    pj.push_back({{"x", p.x},
                  {"epsilon", p.epsilon},
                  {"center", p.center},
                  {"value_gap", p.gap.value_gap},
                  {"sup_norm", p.gap.sup_norm},
                  {"grid_modulus", p.gap.grid_modulus},
                  {"holds", p.gap.holds()}});
  }

  // Semigroup defect over [T/2, T] on the window.
  const double td = t1;
  const DefectReport d =
      semigroup_defect(sc.model, sc.v, 0.5 * td, td, g.x, sc.step_config(M), g.first, g.first + g.count);
  const double tol = d.stats.max_tolerance;
  std::string flag;
  bool semigroup_ok = true;
  if (d.defect <= 2.0 * tol) {
    flag = "SEMIGROUP_WITHIN_TOLERANCE";
  } else if (!sc.model.convex_in_p()) {
    flag = d.defect >= 10.0 * tol ? "EXPECTED_NONSEMIGROUP" : "NONSEMIGROUP_BELOW_MARGIN";
  } else {
    flag = "SEMIGROUP_VIOLATION";
    semigroup_ok = false;
  }
  const bool matched = all.warnings == 0 && d.stats.warnings == 0;
  o.pass = l1.pass() && l2.pass() && stable && matched && semigroup_ok;
  o.report = Json{{"command", "check"},
                  {"scenario", scenario_json(sc)},
                  {"lipschitz", {{"minmax_1step", to_json(l1)}, {"iterated_" + std::to_string(n_it), to_json(l2)}}},
                  {"stability", {{"probes", probes.size()}, {"all_hold", stable}, {"worst_excess", worst}, {"entries", pj}}},
                  {"critical_values", {{"selector", to_json(all)}, {"all_matched", matched}}},
                  {"semigroup",
                   {{"s", 0.5 * td},
                    {"t", td},
                    {"fiber_M", M},
                    {"defect", d.defect},
                    {"worst_x", d.worst_x},
                    {"tolerance", tol},
                    {"ratio", tol > 0.0 ? Json(d.defect / tol) : Json(nullptr)},
                    {"flag", flag}}},
                  {"pass", o.pass}};
  return o;
}

inline CommandResult cmd_check(const Scenario& sc, const std::filesystem::path& out) {
  const CheckOutcome o = run_check(sc);
  const auto path = out / (sc.name + "_check.json");
  write_atomic(path, dump(o.report));
  return {o.pass ? 0 : 3, {path}};
}

}  // namespace hjminmax
