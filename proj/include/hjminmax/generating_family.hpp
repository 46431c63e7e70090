// One-step generating family S(x; x0, y0) = v(x0) + phi_s^t(x, y0) + (x - x0) y0,
// its critical points, wavefronts and the truncation box used by the selector.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "hjminmax/errors.hpp"
#include "hjminmax/hamiltonian.hpp"
#include "hjminmax/piecewise.hpp"

namespace hjminmax {

// Non-owning view; model and datum must outlive it.
class OneStepFamily {
 public:
  OneStepFamily(const HamiltonianModel& model, const PiecewiseFunction& v, double s, double t,
                FlowConfig cfg = {})
      : model_(&model), v_(&v), s_(s), t_(t), cfg_(cfg) {}

  const HamiltonianModel& model() const { return *model_; }
  const PiecewiseFunction& datum() const { return *v_; }
  const FlowConfig& cfg() const { return cfg_; }
  double s() const { return s_; }
  double t() const { return t_; }
  double tau() const { return t_ - s_; }

  double phi(double x, double y0) const { return generating_function_phi(*model_, s_, t_, x, y0, cfg_); }

  double S(double x, double x0, double y0) const { return (*v_)(x0) + phi(x, y0) + (x - x0) * y0; }

  // Endpoint of the characteristic leaving (x0, y0) at time s.
  double X(double x0, double y0) const { return characteristic_x(*model_, s_, t_, x0, y0, cfg_); }

  // Action along that characteristic.
  double action(double x0, double y0) const {
    if (model_->p_only()) {
      const double h = model_->value(s_, 0.0, y0);
      const double hp = model_->dp(s_, 0.0, y0);
      return tau() * (y0 * hp - h);
    }
    return flow_with_action(*model_, s_, t_, {x0, y0}, cfg_).action;
  }

  // Bound on |dH/dp| over momenta |p| <= L (and positions near x for general H).
  double speed_bound(double x, double L) const {
    double vmax = 0.0;
    const int n = 257;
    const double xs[] = {x - 1.0, x - 0.5, x, x + 0.5, x + 1.0};
    const double ts[] = {s_, 0.5 * (s_ + t_), t_};
    for (int k = 0; k < n; ++k) {
      const double p = -L + 2.0 * L * k / (n - 1);
      if (model_->p_only()) {
        vmax = std::max(vmax, std::fabs(model_->dp(s_, 0.0, p)));
        continue;
      }
      for (double xx : xs)
        for (double tt : ts) vmax = std::max(vmax, std::fabs(model_->dp(tt, xx, p)));
    }
    return vmax;
  }

 private:
  const HamiltonianModel* model_;
  const PiecewiseFunction* v_;
  double s_, t_;
  FlowConfig cfg_;
};

inline double eval_S(const OneStepFamily& fam, double x, double x0, double y0) { return fam.S(x, x0, y0); }

struct CriticalPoint {
  double x0 = 0.0;
  double y0 = 0.0;
  double value = 0.0;
  int branch_id = 0;
  bool from_kink = false;
};

struct Sweep {
  double x0_lo = 0.0;
  double x0_hi = 0.0;
  int n_seeds = 64;
};

// Range of base points whose characteristics can reach x.
inline Sweep default_sweep(const OneStepFamily& fam, double x, int n_seeds = 64) {
  const double L = fam.datum().lipschitz_bound();
  const double reach = std::fabs(fam.tau()) * fam.speed_bound(x, L) * 1.05 + 1e-6;
  return {x - reach, x + reach, n_seeds};
}

namespace detail {

constexpr double kBisectTol = 1e-10;

// Roots of f on [a, b]: sign changes between seeds, plus tangential touches.
inline void bracket_roots(const std::function<double(double)>& f, double a, double b, int n_seeds,
                          std::vector<double>& out) {
  if (!(b >= a)) return;
  const int n = std::max(1, n_seeds);
  std::vector<double> xs(n + 1), fs(n + 1);
  for (int k = 0; k <= n; ++k) {
    xs[k] = k == n ? b : a + (b - a) * k / n;
    fs[k] = f(xs[k]);
  }
  auto bisect = [&](double lo, double hi, double flo) {
    while (hi - lo > kBisectTol) {
      const double mid = 0.5 * (lo + hi);
      const double fm = f(mid);
      if (fm == 0.0) return mid;
      if ((fm < 0.0) == (flo < 0.0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  };
  for (int k = 0; k <= n; ++k) {
    if (fs[k] == 0.0) {
      out.push_back(xs[k]);
      continue;
    }
    if (k < n && fs[k + 1] != 0.0 && (fs[k] < 0.0) != (fs[k + 1] < 0.0)) out.push_back(bisect(xs[k], xs[k + 1], fs[k]));
    // A local minimum of |f| without a sign change may hide a double root.
    if (k > 0 && k < n && (fs[k - 1] < 0.0) == (fs[k] < 0.0) && (fs[k + 1] < 0.0) == (fs[k] < 0.0) &&
        std::fabs(fs[k]) < std::fabs(fs[k - 1]) && std::fabs(fs[k]) < std::fabs(fs[k + 1])) {
      double lo = xs[k - 1], hi = xs[k + 1];
      const double g = 0.5 * (std::sqrt(5.0) - 1.0);
      double c = hi - g * (hi - lo), d = lo + g * (hi - lo);
      double fc = std::fabs(f(c)), fd = std::fabs(f(d));
      while (hi - lo > kBisectTol) {
        if (fc < fd) {
          hi = d;
          d = c;
          fd = fc;
          c = hi - g * (hi - lo);
          fc = std::fabs(f(c));
        } else {
          lo = c;
          c = d;
          fc = fd;
          d = lo + g * (hi - lo);
          fd = std::fabs(f(d));
        }
      }
      const double m = 0.5 * (lo + hi);
      const double fm = f(m);
      if (std::fabs(fm) <= 1e-9) {
        out.push_back(m);
      } else if ((fm < 0.0) != (fs[k] < 0.0)) {
        // The minimum crossed zero: two simple roots.
        out.push_back(bisect(xs[k - 1], m, fs[k - 1]));
        out.push_back(bisect(m, xs[k + 1], fm));
      }
    }
  }
}

}  // namespace detail

// Solutions of X_s^t(x0, y0) = x with y0 in the Clarke derivative of v at x0.
inline std::vector<CriticalPoint> critical_points(const OneStepFamily& fam, double x, const Sweep& sweep) {
  const PiecewiseFunction& v = fam.datum();
  std::vector<CriticalPoint> pts;
  if (fam.tau() == 0.0) {
    const std::size_t i = v.piece_index(x);
    const bool kink = i < v.breakpoints().size() && v.breakpoints()[i] == x;
    pts.push_back({x, v.piece_slope(i, x), v(x), static_cast<int>(2 * i), kink});
    return pts;
  }
  const auto& br = v.breakpoints();
  const std::size_t i0 = v.piece_index(sweep.x0_lo);
  const std::size_t i1 = v.piece_index(sweep.x0_hi);
  std::vector<double> roots;
  for (std::size_t i = i0; i <= i1 && i < v.piece_count(); ++i) {
    // Smooth branch on piece i.
    const Interval dom = v.piece_domain(i);
    const double a = std::max(sweep.x0_lo, dom.lo), b = std::min(sweep.x0_hi, dom.hi);
    roots.clear();
    if (b >= a) {
      if (v.piece_is_linear(i) && fam.model().p_only()) {
        const double sl = v.piece_slope(i, a);
        const double r = x - fam.tau() * fam.model().dp(fam.s(), 0.0, sl);
        if (r >= a && r <= b && (r > dom.lo)) roots.push_back(r);
      } else {
        auto g = [&](double x0) { return fam.X(x0, v.piece_slope(i, x0)) - x; };
        detail::bracket_roots(g, a, b, sweep.n_seeds, roots);
      }
    }
    int ord = 0;
    for (double r : roots) {
      if (!(r > dom.lo)) continue;
      const double y0 = v.piece_slope(i, r);
      pts.push_back({r, y0, v.piece_value(i, r) + fam.action(r, y0), static_cast<int>(4 * (2 * i) + std::min(ord, 3)),
                     false});
      ++ord;
    }
    // Kink fan at the right end of piece i.
    if (i < br.size() && br[i] >= sweep.x0_lo && br[i] <= sweep.x0_hi) {
      const double bk = br[i];
      const Interval cl = v.clarke_at_break(i);
      if (cl.width() > 0.0) {
        roots.clear();
        auto h = [&](double y0) { return fam.X(bk, y0) - x; };
        detail::bracket_roots(h, cl.lo, cl.hi, sweep.n_seeds, roots);
        const double vb = v(bk);
        int ordk = 0;
        for (double y0 : roots) {
          pts.push_back({bk, y0, vb + fam.action(bk, y0), static_cast<int>(4 * (2 * i + 1) + std::min(ordk, 3)), true});
          ++ordk;
        }
      }
    }
  }
  std::sort(pts.begin(), pts.end(), [](const CriticalPoint& p, const CriticalPoint& q) {
    return p.x0 < q.x0 || (p.x0 == q.x0 && p.y0 < q.y0);
  });
  std::vector<CriticalPoint> out;
  for (const auto& p : pts) {
    if (!out.empty() && std::fabs(out.back().x0 - p.x0) <= 1e-9 && std::fabs(out.back().y0 - p.y0) <= 1e-9) {
      out.back().from_kink = out.back().from_kink || p.from_kink;
      continue;
    }
    out.push_back(p);
  }
  return out;
}

inline std::vector<CriticalPoint> critical_points(const OneStepFamily& fam, double x) {
  return critical_points(fam, x, default_sweep(fam, x));
}

// Max residual of the characteristic condition over a list of critical points.
inline double critical_residual(const OneStepFamily& fam, double x, const std::vector<CriticalPoint>& pts) {
  double worst = 0.0;
  for (const auto& c : pts) {
    worst = std::max(worst, std::fabs(fam.X(c.x0, c.y0) - x));
    const Interval cl = fam.datum().clarke(c.x0);
    if (!cl.contains(c.y0, 1e-9)) worst = std::max(worst, std::min(std::fabs(c.y0 - cl.lo), std::fabs(c.y0 - cl.hi)));
  }
  return worst;
}

// Sorted critical values at x recomputed with [s, t] split at mid: characteristics
// and actions are composed from the two sub-flows and the roots searched afresh.
inline std::vector<double> critical_values_split(const OneStepFamily& fam, double x, double mid, const Sweep& sweep) {
  if (!(mid > fam.s() && mid < fam.t())) throw ConfigError("critical_values_split needs s < mid < t");
  const HamiltonianModel& m = fam.model();
  const PiecewiseFunction& v = fam.datum();
  auto composed = [&](double x0, double y0) {
    const FlowResult a = flow_with_action(m, fam.s(), mid, {x0, y0}, fam.cfg());
    const FlowResult b = flow_with_action(m, mid, fam.t(), a.end, fam.cfg());
    return FlowResult{b.end, a.action + b.action};
  };
  std::vector<double> values, roots;
  const auto& br = v.breakpoints();
  const std::size_t i0 = v.piece_index(sweep.x0_lo), i1 = v.piece_index(sweep.x0_hi);
  for (std::size_t i = i0; i <= i1 && i < v.piece_count(); ++i) {
    const Interval dom = v.piece_domain(i);
    const double a = std::max(sweep.x0_lo, dom.lo), b = std::min(sweep.x0_hi, dom.hi);
    roots.clear();
    detail::bracket_roots([&](double x0) { return composed(x0, v.piece_slope(i, x0)).end.x - x; }, a, b,
                          sweep.n_seeds, roots);
    for (double r : roots)
      if (r > dom.lo) values.push_back(v.piece_value(i, r) + composed(r, v.piece_slope(i, r)).action);
    if (i < br.size() && br[i] >= sweep.x0_lo && br[i] <= sweep.x0_hi) {
      const Interval cl = v.clarke_at_break(i);
      if (cl.width() > 0.0) {
        roots.clear();
        detail::bracket_roots([&](double y0) { return composed(br[i], y0).end.x - x; }, cl.lo, cl.hi, sweep.n_seeds,
                              roots);
        // Fan endpoints coincide with the smooth branches on either side.
        for (double y0 : roots)
          if (y0 > cl.lo + 1e-9 && y0 < cl.hi - 1e-9) values.push_back(v(br[i]) + composed(br[i], y0).action);
      }
    }
  }
  std::sort(values.begin(), values.end());
  return values;
}

struct WavefrontSample {
  double x = 0.0;
  double u = 0.0;
  int branch_id = 0;
  bool from_kink = false;
};

inline std::vector<WavefrontSample> wavefront(const OneStepFamily& fam, double x_lo, double x_hi, int n_x) {
  std::vector<WavefrontSample> out;
  for (int k = 0; k < n_x; ++k) {
    const double x = n_x == 1 ? x_lo : x_lo + (x_hi - x_lo) * k / (n_x - 1);
    for (const auto& c : critical_points(fam, x)) out.push_back({x, c.value, c.branch_id, c.from_kink});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const WavefrontSample& a, const WavefrontSample& b) { return a.branch_id < b.branch_id; });
  return out;
}

// Fiber coordinates are taken relative to the center (x0, y0) = (x, center_y0):
// u = x0 - x, w = y0 - center_y0, in which the quadratic form at infinity is Q = -u w.
// A uniform core of half-widths core_* holds every critical point; the grid is
// graded geometrically from the core out to radius_*.
struct FiberBox {
  double core_x0 = 0.5;
  double core_y0 = 0.5;
  double radius_x0 = 1.0;
  double radius_y0 = 1.0;
  double center_y0 = 0.0;
  double lambda = 1.0;
  int resolution = 257;
};

struct FiberOptions {
  int resolution = 257;
  double min_core = 0.1;
  int coarse_samples = 9;
  int max_doublings = 5;
};

namespace detail {

// Axis with a uniform core on [-core, core] and geometric tails to +-radius, plus inserted lines.
inline std::vector<double> graded_axis(double core, double radius, int resolution, const std::vector<double>& extra) {
  const int m = std::max(resolution, 9);
  const int tail = radius > core * 1.0001 ? m / 8 : 0;
  const int ncore = m - 2 * tail;
  std::vector<double> ax;
  ax.reserve(m + extra.size());
  const double h = 2.0 * core / (ncore - 1);
  std::vector<double> tailpts;
  if (tail > 0) {
    const double span = radius - core;
    double r = 1.0;
    if (span > tail * h) {
      double lo = 1.0, hi = 4.0;
      auto reach = [&](double q) { return h * (std::pow(q, tail + 1) - q) / (q - 1.0); };
      while (reach(hi) < span) hi *= 2.0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (reach(mid) < span ? lo : hi) = mid;
      }
      r = hi;
    }
    double acc = 0.0, step = h;
    for (int k = 0; k < tail; ++k) {
      step = r == 1.0 ? span / tail : step * r;
      acc += step;
      tailpts.push_back(core + std::min(acc, span));
    }
    tailpts.back() = radius;
  }
  for (auto it = tailpts.rbegin(); it != tailpts.rend(); ++it) ax.push_back(-*it);
  for (int k = 0; k < ncore; ++k) ax.push_back(k == ncore - 1 ? core : -core + h * k);
  for (double p : tailpts) ax.push_back(p);
  for (double e : extra)
    if (std::fabs(e) < core) ax.push_back(e);
  std::sort(ax.begin(), ax.end());
  std::vector<double> out;
  out.reserve(ax.size());
  for (double a : ax)
    if (out.empty() || a - out.back() > 1e-12 * (1.0 + std::fabs(a))) out.push_back(a);
  return out;
}

// Fills the ring of an nu x nw grid and reports whether {S <= -lambda} on it forms exactly
// one run in the (+,+) quadrant and one in the (-,-) quadrant.
inline bool ring_two_components(const std::vector<double>& u, const std::vector<double>& w,
                                const std::function<double(std::size_t, std::size_t)>& S, double lambda) {
  const std::size_t nu = u.size(), nw = w.size();
  std::vector<std::pair<std::size_t, std::size_t>> ring;
  for (std::size_t j = 0; j < nw; ++j) ring.push_back({0, j});
  for (std::size_t i = 1; i < nu; ++i) ring.push_back({i, nw - 1});
  for (std::size_t j = nw - 1; j-- > 0;) ring.push_back({nu - 1, j});
  for (std::size_t i = nu - 1; i-- > 1;) ring.push_back({i, 0});
  std::vector<char> low(ring.size());
  for (std::size_t k = 0; k < ring.size(); ++k) low[k] = S(ring[k].first, ring[k].second) <= -lambda;
  int runs = 0, pos_runs = 0, neg_runs = 0;
  const std::size_t n = ring.size();
  for (std::size_t k = 0; k < n; ++k) {
    if (!low[k] || low[(k + n - 1) % n]) continue;
    ++runs;
    bool all_pos = true, all_neg = true;
    for (std::size_t q = k; low[q % n]; ++q) {
      const auto [i, j] = ring[q % n];
      all_pos = all_pos && u[i] > 0 && w[j] > 0;
      all_neg = all_neg && u[i] < 0 && w[j] < 0;
      if (q - k > n) break;
    }
    pos_runs += all_pos;
    neg_runs += all_neg;
  }
  return runs == 2 && pos_runs == 1 && neg_runs == 1;
}

}  // namespace detail

// Relative value of the family: S(x; x + u, cy + w) - S(x; x, cy).
struct RelativeFamily {
  const OneStepFamily* fam;
  double x;
  double cy;
  double base;
  RelativeFamily(const OneStepFamily& f, double x_, double cy_) : fam(&f), x(x_), cy(cy_), base(f.S(x_, x_, cy_)) {}
  double operator()(double u, double w) const { return fam->S(x, x + u, cy + w) - base; }
};

// Lambda for one x: 2 (max boundary |S - Q| + max |critical value|) + 1, everything relative.
inline double ring_lambda(const RelativeFamily& rf, const std::vector<double>& u, const std::vector<double>& w,
                          const std::vector<CriticalPoint>& crit) {
  double bmax = 0.0, cmax = 0.0;
  auto take = [&](std::size_t i, std::size_t j) { bmax = std::max(bmax, std::fabs(rf(u[i], w[j]) + u[i] * w[j])); };
  for (std::size_t j = 0; j < w.size(); ++j) {
    take(0, j);
    take(u.size() - 1, j);
  }
  for (std::size_t i = 0; i < u.size(); ++i) {
    take(i, 0);
    take(i, w.size() - 1);
  }
  for (const auto& c : crit) cmax = std::max(cmax, std::fabs(c.value - rf.base));
  return 2.0 * (bmax + cmax) + 1.0;
}

// Certifies radii at x, doubling them when the deep ends do not separate. Returns false on failure.
inline bool certify_at(const OneStepFamily& fam, double x, FiberBox& box, const std::vector<CriticalPoint>& crit,
                       int max_doublings, double* lambda_out) {
  const RelativeFamily rf(fam, x, box.center_y0);
  for (int attempt = 0; attempt <= max_doublings; ++attempt) {
    const auto u = detail::graded_axis(box.core_x0, box.radius_x0, box.resolution, {});
    const auto w = detail::graded_axis(box.core_y0, box.radius_y0, box.resolution, {});
    const double lam = ring_lambda(rf, u, w, crit);
    if (detail::ring_two_components(u, w, [&](std::size_t i, std::size_t j) { return rf(u[i], w[j]); }, lam)) {
      if (lambda_out) *lambda_out = lam;
      return true;
    }
    box.radius_x0 *= 2.0;
    box.radius_y0 *= 2.0;
  }
  return false;
}

// Box whose core holds every critical point found on a coarse sweep of [x_lo, x_hi].
inline FiberBox fiber_box(const OneStepFamily& fam, double x_lo, double x_hi, const FiberOptions& opt = {}) {
  const int n = std::max(1, opt.coarse_samples);
  std::vector<double> xs;
  for (int k = 0; k < n; ++k) xs.push_back(n == 1 ? 0.5 * (x_lo + x_hi) : x_lo + (x_hi - x_lo) * k / (n - 1));
  std::vector<std::vector<CriticalPoint>> crit;
  double ylo = std::numeric_limits<double>::infinity(), yhi = -ylo;
  for (double x : xs) {
    crit.push_back(critical_points(fam, x));
    for (const auto& c : crit.back()) {
      ylo = std::min(ylo, c.y0);
      yhi = std::max(yhi, c.y0);
    }
  }
  FiberBox box;
  box.resolution = opt.resolution;
  box.center_y0 = ylo <= yhi ? 0.5 * (ylo + yhi) : fam.datum().slope(0.5 * (x_lo + x_hi));
  double umax = 0.0, wmax = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k)
    for (const auto& c : crit[k]) {
      umax = std::max(umax, std::fabs(c.x0 - xs[k]));
      wmax = std::max(wmax, std::fabs(c.y0 - box.center_y0));
    }
  box.core_x0 = std::max(1.25 * umax, opt.min_core);
  box.core_y0 = std::max(1.25 * wmax, opt.min_core);
  // S - Q grows at most like (L + |cy|) |u| + tau max|dH/dp| |w| on the ring, so Q dominates
  // once each radius is a few times the growth rate in the other direction.
  const double L = fam.datum().lipschitz_bound();
  const double P = fam.model().support_radius().value_or(std::fabs(box.center_y0) + 2.0 * box.core_y0);
  const double rate_w = std::fabs(fam.tau()) * fam.speed_bound(0.5 * (x_lo + x_hi), std::max(P, L));
  const double rate_u = L + std::fabs(box.center_y0);
  box.radius_x0 = std::max(2.0 * box.core_x0, 6.0 * rate_w + 1.0);
  box.radius_y0 = std::max(2.0 * box.core_y0, 6.0 * rate_u + 1.0);
  double lam_max = 1.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    double lam = 0.0;
    if (!certify_at(fam, xs[k], box, crit[k], opt.max_doublings, &lam))
      throw CertificationError("fiber_box: cannot separate the deep ends of Q at x = " + std::to_string(xs[k]));
    lam_max = std::max(lam_max, lam);
  }
  box.lambda = lam_max;
  return box;
}

}  // namespace hjminmax
