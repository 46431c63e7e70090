// Reference solvers: monotone Lax-Friedrichs and the discrete Lax-Oleinik minimum.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hjminmax/errors.hpp"
#include "hjminmax/field.hpp"
#include "hjminmax/hamiltonian.hpp"
#include "hjminmax/piecewise.hpp"

namespace hjminmax {

struct FDConfig {
  double dx = 1e-3;
  double cfl = 0.9;
  double alpha = 0.0;  // 0 selects the sampled bound
};

// Momentum window |y| <= ||dv|| + T ||dH/dx|| and the sampled bounds over it.
struct MomentumWindow {
  double radius = 0.0;
  double max_dxH = 0.0;
  double max_dpH = 0.0;
  double max_H = 0.0;
};

inline MomentumWindow momentum_window(const HamiltonianModel& m, double lipschitz_v, double T, double x_lo,
                                      double x_hi, int samples = 201) {
  MomentumWindow w;
  const int nt = m.p_only() ? 1 : 9, nx = m.p_only() ? 1 : 33;
  auto tt = [&](int k) { return nt == 1 ? 0.0 : T * k / (nt - 1); };
  auto xx = [&](int k) { return nx == 1 ? 0.5 * (x_lo + x_hi) : x_lo + (x_hi - x_lo) * k / (nx - 1); };
  // First pass: |dH/dx| on a generous momentum range to size the window.
  if (!m.p_only()) {
    const double R0 = lipschitz_v + 1.0;
    for (int a = 0; a < nt; ++a)
      for (int b = 0; b < nx; ++b)
        for (int c = 0; c < samples; ++c) {
          const double p = -R0 + 2 * R0 * c / (samples - 1);
          w.max_dxH = std::max(w.max_dxH, std::fabs(m.eval(tt(a), xx(b), p).dx));
        }
  }
  w.radius = lipschitz_v + T * w.max_dxH;
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b < nx; ++b)
      for (int c = 0; c < samples; ++c) {
        const double p = -w.radius + 2 * w.radius * c / (samples - 1);
        const ValueGrad g = m.eval(tt(a), xx(b), p);
        w.max_dpH = std::max(w.max_dpH, std::fabs(g.dp));
        w.max_H = std::max(w.max_H, std::fabs(g.value));
      }
  return w;
}

namespace detail {

// Linear interpolation of a uniform-grid profile at arbitrary points.
inline std::vector<double> sample_uniform(double x_first, double dx, const std::vector<double>& vals,
                                          const std::vector<double>& at) {
  std::vector<double> out(at.size());
  for (std::size_t k = 0; k < at.size(); ++k) {
    const double r = (at[k] - x_first) / dx;
    auto j = static_cast<long>(std::floor(r + 1e-9));
    j = std::clamp<long>(j, 0, static_cast<long>(vals.size()) - 2);
    const double f = r - static_cast<double>(j);
    out[k] = std::fabs(f) < 1e-9 ? vals[j] : (std::fabs(f - 1.0) < 1e-9 ? vals[j + 1] : (1 - f) * vals[j] + f * vals[j + 1]);
  }
  return out;
}

}  // namespace detail

// Lax-Friedrichs on a padded uniform grid, sampled on x_grid at each requested time.
inline SolutionField fd_viscosity(const HamiltonianModel& m, const PiecewiseFunction& v, double T,
                                  const std::vector<double>& x_grid, FDConfig cfg,
                                  std::vector<double> output_times = {}) {
  if (!(cfg.dx > 0.0)) throw ConfigError("grids.fd_dx must be positive");
  if (!(cfg.cfl > 0.0 && cfg.cfl <= 1.0)) throw ConfigError("grids.cfl must lie in (0, 1]");
  if (x_grid.size() < 2) throw ConfigError("fd_viscosity needs at least two output nodes");
  const MomentumWindow win = momentum_window(m, v.lipschitz_bound(), T, x_grid.front(), x_grid.back());
  if (cfg.alpha <= 0.0) cfg.alpha = win.max_dpH;
  if (cfg.alpha < win.max_dpH * (1.0 - 1e-9))
    throw ConfigError("fd alpha " + std::to_string(cfg.alpha) + " is below max |dH/dp| = " + std::to_string(win.max_dpH));
  if (output_times.empty()) output_times = {0.0, T};
  std::sort(output_times.begin(), output_times.end());
  const double pad = T * cfg.alpha + 4 * cfg.dx;
  const auto n_pad = static_cast<long>(std::ceil(pad / cfg.dx));
  const auto n_in = static_cast<long>(std::ceil((x_grid.back() - x_grid.front()) / cfg.dx - 1e-9));
  const long N = n_in + 2 * n_pad + 1;
  const double x_first = x_grid.front() - static_cast<double>(n_pad) * cfg.dx;
  std::vector<double> xs(N), u(N), un(N);
  for (long j = 0; j < N; ++j) {
    xs[j] = x_first + static_cast<double>(j) * cfg.dx;
    u[j] = v(xs[j]);
  }
  SolutionField f;
  f.scheme = "fd_viscosity";
  f.x_grid = x_grid;
  // A Hamiltonian that ignores p needs no dissipation and takes one step per output time.
  const double dt_max = cfg.alpha > 0.0 ? cfg.cfl * cfg.dx / cfg.alpha : std::numeric_limits<double>::infinity();
  double t = 0.0;
  const double inv = 1.0 / cfg.dx;
  for (double tout : output_times) {
    if (tout < t - 1e-12 || tout > T + 1e-12) throw ConfigError("output time outside [0, T]");
    const double span = tout - t;
    const auto nsteps = std::isinf(dt_max) ? (span > 0.0 ? 1L : 0L) : static_cast<long>(std::ceil(span / dt_max - 1e-12));
    const double dt = nsteps > 0 ? span / static_cast<double>(nsteps) : 0.0;
    for (long n = 0; n < nsteps; ++n) {
      const double tn = t + dt * static_cast<double>(n);
      for (long j = 0; j < N; ++j) {
        const double dm = j > 0 ? (u[j] - u[j - 1]) * inv : (u[1] - u[0]) * inv;
        const double dp = j + 1 < N ? (u[j + 1] - u[j]) * inv : (u[j] - u[j - 1]) * inv;
        un[j] = u[j] - dt * (m.value(tn, xs[j], 0.5 * (dp + dm)) - 0.5 * cfg.alpha * (dp - dm));
      }
      u.swap(un);
    }
    t = tout;
    f.times.push_back(tout);
    f.u.push_back(detail::sample_uniform(x_first, cfg.dx, u, x_grid));
  }
  for (const auto& row : f.u)
    for (double val : row)
      if (!std::isfinite(val)) throw NumericError("fd_viscosity produced a non-finite value");
  return f;
}

// One Lax-Friedrichs update at node j for a given stencil; used by the monotonicity check.
inline double lf_update(const HamiltonianModel& m, double t, double x, double um, double u0, double up, double dx,
                        double dt, double alpha) {
  const double dm = (u0 - um) / dx, dp = (up - u0) / dx;
  return u0 - dt * (m.value(t, x, 0.5 * (dp + dm)) - 0.5 * alpha * (dp - dm));
}

namespace detail {

// Legendre transform of a convex momentum-only H at velocity q, restricted to |p| <= R.
inline double legendre(const HamiltonianModel& m, double q, double R) {
  double lo = -R, hi = R;
  if (m.dp(0, 0, lo) >= q) return q * lo - m.value(0, 0, lo);
  if (m.dp(0, 0, hi) <= q) return q * hi - m.value(0, 0, hi);
  for (int it = 0; it < 200 && hi - lo > 1e-15 * (1 + std::fabs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (m.dp(0, 0, mid) < q ? lo : hi) = mid;
  }
  const double p = 0.5 * (lo + hi);
  return q * p - m.value(0, 0, p);
}

// Stage cost from x at time a to X at time b along a characteristic found by shooting in y.
inline double stage_cost_flow(const HamiltonianModel& m, double a, double b, double x, double X, double R,
                              const FlowConfig& cfg) {
  double lo = -R, hi = R;
  auto end = [&](double y) { return flow(m, a, b, {x, y}, cfg).x - X; };
  double flo = end(lo), fhi = end(hi);
  if (flo > 0 || fhi < 0) return std::numeric_limits<double>::infinity();
  for (int it = 0; it < 80 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = end(mid);
    if (fm < 0) lo = mid;
    else hi = mid;
  }
  const double y = 0.5 * (lo + hi);
  return flow_with_action(m, a, b, {x, y}, cfg).action;
}

}  // namespace detail

// Discrete min over intermediate points by backward dynamic programming on x_grid.
inline SolutionField lax_oleinik_min(const HamiltonianModel& m, const PiecewiseFunction& v, double s, double t,
                                     const std::vector<double>& x_grid, int n_sub, const FlowConfig& cfg = {}) {
  if (!m.convex_in_p()) throw ConfigError("lax_oleinik_min requires a Hamiltonian flagged convex_in_p");
  if (n_sub < 1) throw ConfigError("lax_oleinik_min needs n_sub >= 1");
  const double dtau = (t - s) / n_sub;
  if (!m.p_only() && dtau >= 0.9 * m.delta_H()) throw ConfigError("lax_oleinik_min: sub-step exceeds 0.9 delta_H");
  const std::size_t n = x_grid.size();
  const double dx = n > 1 ? x_grid[1] - x_grid[0] : 1.0;
  const MomentumWindow win = momentum_window(m, v.lipschitz_bound(), t, x_grid.front(), x_grid.back());
  const double reach = dtau * win.max_dpH + 2 * dx;
  const auto w = static_cast<long>(std::floor(reach / dx + 1e-9));
  const double R = win.radius + 1.0;
  SolutionField f;
  f.scheme = "min_oracle";
  f.x_grid = x_grid;
  std::vector<double> W(n);
  for (std::size_t k = 0; k < n; ++k) W[k] = v(x_grid[k]);
  f.times.push_back(s);
  f.u.push_back(W);
  std::vector<double> psi_off;
  if (m.p_only()) {
    psi_off.resize(2 * w + 1);
    for (long d = -w; d <= w; ++d) psi_off[d + w] = dtau * detail::legendre(m, d * dx / dtau, R);
  }
  for (int k = 0; k < n_sub; ++k) {
    const double a = s + dtau * k, b = s + dtau * (k + 1);
    std::vector<double> Wn(n, std::numeric_limits<double>::infinity());
    for (long i = 0; i < static_cast<long>(n); ++i) {
      for (long j = std::max(0L, i - w); j <= std::min(static_cast<long>(n) - 1, i + w); ++j) {
        const double c = m.p_only() ? psi_off[i - j + w]
                                    : detail::stage_cost_flow(m, a, b, x_grid[j], x_grid[i], R, cfg);
        Wn[i] = std::min(Wn[i], W[j] + c);
      }
    }
    W.swap(Wn);
    f.times.push_back(b);
    f.u.push_back(W);
  }
  return f;
}

struct ComparisonReport {
  double sup_error = 0.0;
  double l1_error = 0.0;
  double measure = 0.0;
  double worst_t = 0.0;
  double worst_x = 0.0;
  std::vector<double> per_time;
};

namespace detail {

inline std::vector<double> trapezoid_weights(const std::vector<double>& g) {
  std::vector<double> w(g.size(), 1.0);
  if (g.size() < 2) return w;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double left = k > 0 ? g[k] - g[k - 1] : 0.0;
    const double right = k + 1 < g.size() ? g[k + 1] - g[k] : 0.0;
    w[k] = 0.5 * (left + right);
  }
  return w;
}

}  // namespace detail

// Compares a against b on the slices of a; b must hold every time of a on the same x grid.
inline ComparisonReport compare_at(const SolutionField& a, const SolutionField& b) {
  if (a.x_grid.size() != b.x_grid.size()) throw ConfigError("compare: spatial grids differ in size");
  for (std::size_t k = 0; k < a.x_grid.size(); ++k)
    if (std::fabs(a.x_grid[k] - b.x_grid[k]) > 1e-12 * (1.0 + std::fabs(a.x_grid[k])))
      throw ConfigError("compare: spatial grids differ");
  ComparisonReport r;
  const auto wx = detail::trapezoid_weights(a.x_grid);
  const auto wt = detail::trapezoid_weights(a.times);
  for (std::size_t k = 0; k < a.times.size(); ++k) {
    const auto& ra = a.u[k];
    const auto& rb = b.at_time(a.times[k]);
    double sup = 0.0;
    for (std::size_t j = 0; j < ra.size(); ++j) {
      const double e = std::fabs(ra[j] - rb[j]);
      r.l1_error += e * wx[j] * wt[k];
      r.measure += wx[j] * wt[k];
      if (e > sup) sup = e;
      if (e > r.sup_error) {
        r.sup_error = e;
        r.worst_t = a.times[k];
        r.worst_x = a.x_grid[j];
      }
    }
    r.per_time.push_back(sup);
  }
  return r;
}

// Same comparison with identical time grids required.
inline ComparisonReport compare(const SolutionField& a, const SolutionField& b) {
  if (a.times.size() != b.times.size()) throw ConfigError("compare: time grids differ in size");
  for (std::size_t k = 0; k < a.times.size(); ++k)
    if (std::fabs(a.times[k] - b.times[k]) > 1e-12 * (1.0 + std::fabs(a.times[k])))
      throw ConfigError("compare: time grids differ");
  return compare_at(a, b);
}

}  // namespace hjminmax
