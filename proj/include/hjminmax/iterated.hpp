// Iterated minmax over a time subdivision, semigroup defect, Lipschitz estimates
// and convergence studies against a reference field.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "hjminmax/errors.hpp"
#include "hjminmax/field.hpp"
#include "hjminmax/minmax.hpp"
#include "hjminmax/oracles.hpp"
#include "hjminmax/piecewise.hpp"

namespace hjminmax {

struct SubdivisionSchedule {
  std::vector<double> times;

  static SubdivisionSchedule uniform(double T, int n) {
    if (n < 1) throw ConfigError("schedule needs n >= 1");
    SubdivisionSchedule s;
    s.times = linspace(0.0, T, static_cast<std::size_t>(n) + 1);
    return s;
  }

  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }

  double mesh() const {
    double m = 0.0;
    for (std::size_t k = 1; k < times.size(); ++k) m = std::max(m, times[k] - times[k - 1]);
    return m;
  }
};

// Worker count from HJ_THREADS, defaulting to the hardware concurrency.
inline unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HJ_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(v));
  }
  return n;
}

// Runs f(k) for k in [0, n) on up to worker_count() threads; rethrows the lowest failing index.
template <class F>
void parallel_for(std::size_t n, F&& f) {
  const unsigned nw = std::min<std::size_t>(worker_count(), std::max<std::size_t>(1, n));
  std::vector<std::exception_ptr> errs(n);
  auto run = [&](unsigned w) {
    for (std::size_t k = w; k < n; k += nw) {
      try {
        f(k);
      } catch (...) {
        errs[k] = std::current_exception();
      }
    }
  };
  if (nw <= 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < nw; ++w) pool.emplace_back(run, w);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

struct StepConfig {
  FlowConfig flow;
  FiberOptions fiber;
  MinmaxOptions selector{.want_path = false};
};

struct SelectorStats {
  std::size_t calls = 0;
  std::size_t warnings = 0;
  std::size_t refinements = 0;
  double max_tolerance = 0.0;
  double max_gap = 0.0;
  double min_margin = std::numeric_limits<double>::infinity();  // tolerance - gap

  void absorb(const MinmaxResult& r) {
    ++calls;
    warnings += r.warning;
    refinements += r.refined;
    max_tolerance = std::max(max_tolerance, r.tolerance);
    max_gap = std::max(max_gap, r.match_gap);
    min_margin = std::min(min_margin, r.tolerance - r.match_gap);
  }
  void absorb(const SelectorStats& o) {
    calls += o.calls;
    warnings += o.warnings;
    refinements += o.refinements;
    max_tolerance = std::max(max_tolerance, o.max_tolerance);
    max_gap = std::max(max_gap, o.max_gap);
    min_margin = std::min(min_margin, o.min_margin);
  }
};

struct StepResult {
  std::vector<double> values;
  std::vector<MinmaxResult> diagnostics;
  SelectorStats stats;
};

// R^{s,t} v sampled on x_grid.
inline StepResult step_operator(const HamiltonianModel& m, const PiecewiseFunction& v, double s, double t,
                                const std::vector<double>& x_grid, const StepConfig& cfg = {}) {
  if (!m.p_only() && t - s > 0.9 * m.delta_H())
    throw ConfigError("step " + std::to_string(t - s) + " exceeds 0.9 delta_H = " + std::to_string(0.9 * m.delta_H()));
  StepResult res;
  res.values.resize(x_grid.size());
  res.diagnostics.resize(x_grid.size());
  if (x_grid.empty()) return res;
  const OneStepFamily fam(m, v, s, t, cfg.flow);
  const FiberBox box = fiber_box(fam, x_grid.front(), x_grid.back(), cfg.fiber);
  parallel_for(x_grid.size(), [&](std::size_t k) {
    res.diagnostics[k] = minmax(fam, x_grid[k], box, cfg.selector);
    res.values[k] = res.diagnostics[k].selected;
  });
  for (const auto& d : res.diagnostics) res.stats.absorb(d);
  return res;
}

// Folds step_operator over the schedule, resampling between steps.
inline SolutionField iterate(const HamiltonianModel& m, const PiecewiseFunction& v, const SubdivisionSchedule& sched,
                             const std::vector<double>& x_grid, const StepConfig& cfg = {},
                             SelectorStats* stats = nullptr) {
  if (sched.times.size() < 2) throw ConfigError("schedule needs at least one step");
  SolutionField f;
  f.scheme = sched.steps() == 1 ? "minmax_1step" : "iterated(" + std::to_string(sched.steps()) + ")";
  f.x_grid = x_grid;
  f.times.push_back(sched.times.front());
  std::vector<double> u0(x_grid.size());
  for (std::size_t k = 0; k < x_grid.size(); ++k) u0[k] = v(x_grid[k]);
  f.u.push_back(u0);
  PiecewiseFunction current;
  for (std::size_t k = 0; k + 1 < sched.times.size(); ++k) {
    const PiecewiseFunction& datum = k == 0 ? v : current;
    StepResult r = step_operator(m, datum, sched.times[k], sched.times[k + 1], x_grid, cfg);
    if (stats) stats->absorb(r.stats);
    f.times.push_back(sched.times[k + 1]);
    f.u.push_back(r.values);
    if (k + 2 < sched.times.size()) current = resample(x_grid, r.values);
  }
  return f;
}

struct DefectReport {
  double defect = 0.0;
  double worst_x = 0.0;
  SelectorStats stats;
};

// sup over x_grid[lo, hi) of |R_0^t v - R_s^t (R_0^s v)|. The intermediate datum is resampled on
// the whole x_grid; both time-t evaluations only visit the window.
inline DefectReport semigroup_defect(const HamiltonianModel& m, const PiecewiseFunction& v, double s, double t,
                                     const std::vector<double>& x_grid, const StepConfig& cfg = {},
                                     std::size_t lo = 0, std::size_t hi = static_cast<std::size_t>(-1),
                                     std::vector<double>* direct_out = nullptr) {
  if (!(s > 0.0 && t > s)) throw ConfigError("semigroup_defect needs 0 < s < t");
  hi = std::min(hi, x_grid.size());
  if (lo >= hi) throw ConfigError("semigroup_defect: empty window");
  const std::vector<double> win(x_grid.begin() + static_cast<std::ptrdiff_t>(lo),
                                x_grid.begin() + static_cast<std::ptrdiff_t>(hi));
  DefectReport rep;
  const StepResult direct = step_operator(m, v, 0.0, t, win, cfg);
  const StepResult first = step_operator(m, v, 0.0, s, x_grid, cfg);
  const PiecewiseFunction mid = resample(x_grid, first.values);
  const StepResult second = step_operator(m, mid, s, t, win, cfg);
  rep.stats.absorb(direct.stats);
  rep.stats.absorb(first.stats);
  rep.stats.absorb(second.stats);
  for (std::size_t k = 0; k < win.size(); ++k) {
    const double d = std::fabs(direct.values[k] - second.values[k]);
    if (d > rep.defect) {
      rep.defect = d;
      rep.worst_x = win[k];
    }
  }
  if (direct_out) *direct_out = direct.values;
  return rep;
}

struct LipschitzReport {
  double lip_space = 0.0;
  double lip_time = 0.0;
  double bound_space = 0.0;  // at the final time
  double bound_time = 0.0;
  double worst_space_ratio = 0.0;  // max over slices of measured / (bound + slack)
  double window_radius = 0.0;
  bool pass_space = true;
  bool pass_time = true;
  bool pass() const { return pass_space && pass_time; }
};

// Measured moduli against ||dv|| + ||dH/dx|| t and max |H| on the momentum window.
inline LipschitzReport lipschitz_report(SolutionField& field, const HamiltonianModel& m, const PiecewiseFunction& v,
                                        double grid_modulus = 0.0) {
  LipschitzReport rep;
  const double T = field.times.empty() ? 0.0 : field.times.back();
  const auto& xg = field.x_grid;
  const MomentumWindow win = momentum_window(m, v.lipschitz_bound(), T, xg.front(), xg.back());
  rep.window_radius = win.radius;
  rep.bound_time = win.max_H;
  for (std::size_t k = 0; k < field.times.size(); ++k) {
    const auto& row = field.u[k];
    double ls = 0.0;
    for (std::size_t j = 0; j + 1 < row.size(); ++j) ls = std::max(ls, std::fabs(row[j + 1] - row[j]) / (xg[j + 1] - xg[j]));
    const double bound = v.lipschitz_bound() + win.max_dxH * field.times[k];
    const double limit = 1.1 * bound + grid_modulus;
    rep.lip_space = std::max(rep.lip_space, ls);
    rep.worst_space_ratio = std::max(rep.worst_space_ratio, ls / limit);
    if (ls > limit) rep.pass_space = false;
    rep.bound_space = bound;
    if (k > 0) {
      const double dt = field.times[k] - field.times[k - 1];
      for (std::size_t j = 0; j < row.size(); ++j)
        rep.lip_time = std::max(rep.lip_time, std::fabs(row[j] - field.u[k - 1][j]) / dt);
    }
  }
  rep.pass_time = rep.lip_time <= 1.1 * rep.bound_time;
  field.lip_space = rep.lip_space;
  field.lip_time = rep.lip_time;
  return rep;
}

struct ConvergenceRow {
  int n = 0;
  double mesh = 0.0;
  double sup_error = 0.0;
  double l1_error = 0.0;
  double rate = 0.0;  // observed order against the previous row, 0 for the first
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  double target = 0.0;
  bool non_increasing = true;
  bool finest_within_target = true;
  bool pass() const { return non_increasing && finest_within_target; }
};

// Error table of already computed fields against a reference; fields ordered coarse to fine.
inline ConvergenceTable convergence_table(const std::vector<SolutionField>& fields, const std::vector<int>& ns,
                                          const std::vector<double>& meshes, const SolutionField& oracle,
                                          double target, double slack = 0.2) {
  ConvergenceTable tab;
  tab.target = target;
  for (std::size_t k = 0; k < fields.size(); ++k) {
    const ComparisonReport c = compare_at(fields[k], oracle);
    ConvergenceRow row{ns[k], meshes[k], c.sup_error, c.measure > 0 ? c.l1_error / c.measure : 0.0, 0.0};
    if (k > 0) {
      const auto& prev = tab.rows.back();
      if (row.sup_error > 0.0 && prev.sup_error > 0.0 && prev.mesh != row.mesh)
        row.rate = std::log(prev.sup_error / row.sup_error) / std::log(prev.mesh / row.mesh);
      if (row.sup_error > (1.0 + slack) * prev.sup_error) tab.non_increasing = false;
    }
    tab.rows.push_back(row);
  }
  tab.finest_within_target = !tab.rows.empty() && tab.rows.back().sup_error <= target;
  return tab;
}

// Runs every uniform schedule on the padded grid and tabulates errors on the window.
inline ConvergenceTable convergence_study(const HamiltonianModel& m, const PiecewiseFunction& v, double T,
                                          const std::vector<int>& schedules, const PaddedGrid& grid,
                                          const SolutionField& oracle, double target, const StepConfig& cfg = {},
                                          std::vector<SolutionField>* fields_out = nullptr,
                                          SelectorStats* stats = nullptr) {
  std::vector<SolutionField> fields;
  std::vector<double> meshes;
  for (int n : schedules) {
    const auto sched = SubdivisionSchedule::uniform(T, n);
    fields.push_back(trim(iterate(m, v, sched, grid.x, cfg, stats), grid));
    meshes.push_back(sched.mesh());
  }
  ConvergenceTable tab = convergence_table(fields, schedules, meshes, oracle, target);
  if (fields_out) *fields_out = std::move(fields);
  return tab;
}

}  // namespace hjminmax
