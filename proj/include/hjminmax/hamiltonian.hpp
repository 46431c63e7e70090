// Hamiltonian model, RK4 characteristic flow, action and the one-step generating function.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "hjminmax/errors.hpp"
#include "hjminmax/expr.hpp"

namespace hjminmax {

struct HamiltonianFlags {
  bool p_only = false;
  bool convex_in_p = false;
};

struct PhasePoint {
  double x = 0.0;
  double y = 0.0;
};

struct FlowConfig {
  double step = 1e-3;
  double newton_tol = 1e-12;
  int newton_max_iter = 50;
};

// H(t, x, p) with declared bounds.
//
// With a support radius P, momenta |p| > P see the first-order Taylor
// extension of H from p = +-P. Inside |p| <= P the model is exactly the
// expression. The extension keeps the fiber family quadratic at infinity
// for Hamiltonians that grow faster than quadratically in p.
class HamiltonianModel {
 public:
  HamiltonianModel() : HamiltonianModel(Expression::parse("0"), 1.0) {}

  HamiltonianModel(Expression expr, double c_H_bound, std::optional<double> support_radius = std::nullopt,
                   HamiltonianFlags flags = {})
      : expr_(std::move(expr)), c_H_(c_H_bound), support_(support_radius), flags_(flags) {
    if (!(c_H_ > 0.0) || !std::isfinite(c_H_)) throw ConfigError("c_H_bound must be positive and finite");
    if (support_ && (!(*support_ > 0.0) || !std::isfinite(*support_)))
      throw ConfigError("support_radius must be positive");
    if (flags_.p_only) check_p_only();
  }

  static HamiltonianModel from_string(const std::string& src, double c_H_bound,
                                      std::optional<double> support_radius = std::nullopt,
                                      HamiltonianFlags flags = {}) {
    return HamiltonianModel(Expression::parse(src), c_H_bound, support_radius, flags);
  }

  const Expression& expr() const noexcept { return expr_; }
  double c_H_bound() const noexcept { return c_H_; }
  std::optional<double> support_radius() const noexcept { return support_; }
  const HamiltonianFlags& flags() const noexcept { return flags_; }
  bool p_only() const noexcept { return flags_.p_only; }
  bool convex_in_p() const noexcept { return flags_.convex_in_p; }
  double delta_H() const { return std::log(2.0) / c_H_; }

  double value(double t, double x, double p) const {
    if (!support_ || std::fabs(p) <= *support_) return expr_.eval(t, x, p);
    const double pc = std::copysign(*support_, p);
    const ValueGrad g = expr_.eval_with_grad(t, x, pc);
    return g.value + g.dp * (p - pc);
  }

  ValueGrad eval(double t, double x, double p) const {
    if (!support_ || std::fabs(p) <= *support_) return expr_.eval_with_grad(t, x, p);
    const double pc = std::copysign(*support_, p);
    const double d = p - pc;
    const ValueGrad g = expr_.eval_with_grad(t, x, pc);
    ValueGrad r{g.value + g.dp * d, 0.0, 0.0, g.dp};
    if (!flags_.p_only) {
      // Mixed partials of the extension by central differences of dp.
      const double ex = 1e-6 * (1.0 + std::fabs(x));
      const double et = 1e-6 * (1.0 + std::fabs(t));
      const double dpx = (expr_.eval_with_grad(t, x + ex, pc).dp - expr_.eval_with_grad(t, x - ex, pc).dp) / (2 * ex);
      const double dpt = (expr_.eval_with_grad(t + et, x, pc).dp - expr_.eval_with_grad(t - et, x, pc).dp) / (2 * et);
      r.dx = g.dx + d * dpx;
      r.dt = g.dt + d * dpt;
    }
    return r;
  }

  double dp(double t, double x, double p) const {
    if (flags_.p_only && (!support_ || std::fabs(p) <= *support_)) return expr_.eval_with_grad(t, x, p).dp;
    return eval(t, x, p).dp;
  }

 private:
  Expression expr_;
  double c_H_;
  std::optional<double> support_;
  HamiltonianFlags flags_;

  void check_p_only() const {
    for (double t : {0.0, 0.37, 1.3})
      for (double x : {-1.7, -0.2, 0.0, 0.9, 2.4})
        for (double p : {-1.5, -0.3, 0.0, 0.8, 1.9}) {
          const ValueGrad g = expr_.eval_with_grad(t, x, p);
          if (g.dt != 0.0 || g.dx != 0.0)
            throw ConfigError("hamiltonian.flags.p_only set but H depends on t or x");
        }
  }
};

struct FlowResult {
  PhasePoint end;
  double action = 0.0;
};

namespace detail {

struct FlowState {
  double x, y, a;
};

inline FlowState flow_rhs(const HamiltonianModel& m, double t, const FlowState& z) {
  const ValueGrad g = m.eval(t, z.x, z.y);
  return {g.dp, -g.dx, z.y * g.dp - g.value};
}

}  // namespace detail

// Classical RK4 from s to t; t < s integrates backwards with a negative step.
inline FlowResult flow_with_action(const HamiltonianModel& m, double s, double t, PhasePoint z,
                                   const FlowConfig& cfg) {
  if (!(cfg.step > 0.0)) throw ConfigError("flow step must be positive");
  detail::FlowState st{z.x, z.y, 0.0};
  const double span = t - s;
  if (span == 0.0) return {z, 0.0};
  const double h_full = std::copysign(cfg.step, span);
  const long n_full = static_cast<long>(std::floor(std::fabs(span) / cfg.step));
  double tau = s;
  auto advance = [&](double h) {
    using detail::flow_rhs;
    const auto k1 = flow_rhs(m, tau, st);
    const auto k2 = flow_rhs(m, tau + h / 2, {st.x + h / 2 * k1.x, st.y + h / 2 * k1.y, 0.0});
    const auto k3 = flow_rhs(m, tau + h / 2, {st.x + h / 2 * k2.x, st.y + h / 2 * k2.y, 0.0});
    const auto k4 = flow_rhs(m, tau + h, {st.x + h * k3.x, st.y + h * k3.y, 0.0});
    st.x += h / 6 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x);
    st.y += h / 6 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y);
    st.a += h / 6 * (k1.a + 2 * k2.a + 2 * k3.a + k4.a);
    tau += h;
    if (!std::isfinite(st.x) || !std::isfinite(st.y) || !std::isfinite(st.a))
      throw NumericError("non-finite state during flow integration");
  };
  for (long i = 0; i < n_full; ++i) advance(h_full);
  const double rest = t - (s + static_cast<double>(n_full) * h_full);
  if (std::fabs(rest) > 1e-15 * (1.0 + std::fabs(t))) advance(rest);
  return {{st.x, st.y}, st.a};
}

inline PhasePoint flow(const HamiltonianModel& m, double s, double t, PhasePoint z, const FlowConfig& cfg) {
  return flow_with_action(m, s, t, z, cfg).end;
}

// Position of the characteristic started at (x0, y0) at time s, evaluated at t.
inline double characteristic_x(const HamiltonianModel& m, double s, double t, double x0, double y0,
                               const FlowConfig& cfg) {
  if (m.p_only()) return x0 + (t - s) * m.dp(s, 0.0, y0);
  return flow(m, s, t, {x0, y0}, cfg).x;
}

// Solves X_s^t(x0, y) = X for x0.
inline double alpha_inverse(const HamiltonianModel& m, double s, double t, double X, double y,
                            const FlowConfig& cfg) {
  if (m.p_only()) return X - (t - s) * m.dp(s, 0.0, y);
  if (std::fabs(t - s) >= m.delta_H())
    throw NumericError("alpha_inverse: |t-s| = " + std::to_string(std::fabs(t - s)) + " is not below delta_H");
  auto resid = [&](double x0) { return flow(m, s, t, {x0, y}, cfg).x - X; };
  double x0 = X;
  double r = resid(x0);
  for (int it = 0; it < cfg.newton_max_iter; ++it) {
    if (std::fabs(r) <= cfg.newton_tol) return x0;
    const double e = 1e-6 * (1.0 + std::fabs(x0));
    const double J = (resid(x0 + e) - resid(x0 - e)) / (2 * e);
    if (!(std::fabs(J) > 0.0)) break;
    const double step = -r / J;
    double lam = 1.0;
    double cand = x0 + step;
    double rc = resid(cand);
    for (int k = 0; k < 30 && std::fabs(rc) > std::fabs(r); ++k) {
      lam *= 0.5;
      cand = x0 + lam * step;
      rc = resid(cand);
    }
    x0 = cand;
    r = rc;
  }
  if (std::fabs(r) <= cfg.newton_tol) return x0;
  throw NumericError("alpha_inverse: Newton did not converge (residual " + std::to_string(std::fabs(r)) + ")");
}

// phi_s^t(X, y) by augmented RK4 quadrature along the characteristic through alpha_inverse.
inline double phi_quadrature(const HamiltonianModel& m, double s, double t, double X, double y,
                             const FlowConfig& cfg) {
  const double x0 = alpha_inverse(m, s, t, X, y, cfg);
  const FlowResult r = flow_with_action(m, s, t, {x0, y}, cfg);
  return r.action - y * (r.end.x - x0);
}

// phi_s^t(X, y); momentum-only Hamiltonians use the closed form -(t-s) H(y).
inline double generating_function_phi(const HamiltonianModel& m, double s, double t, double X, double y,
                                      const FlowConfig& cfg) {
  if (m.p_only()) return -(t - s) * m.value(s, 0.0, y);
  return phi_quadrature(m, s, t, X, y, cfg);
}

struct PhiDerivativeReport {
  double max_ds_error = 0.0;
  double max_dt_error = 0.0;
  std::size_t samples = 0;
  bool pass(double tol) const { return max_ds_error <= tol && max_dt_error <= tol; }
};

// Compares central differences of phi in s and t with H(s, x, y) and -H(t, X, Y).
inline PhiDerivativeReport verify_phi_derivatives(const HamiltonianModel& m, double s, double t,
                                                  const std::vector<PhasePoint>& sample_points,
                                                  const FlowConfig& cfg, double fd_step = 1e-4) {
  PhiDerivativeReport rep;
  for (const auto& q : sample_points) {
    const double X = q.x, y = q.y;
    const double ds = (generating_function_phi(m, s + fd_step, t, X, y, cfg) -
                       generating_function_phi(m, s - fd_step, t, X, y, cfg)) / (2 * fd_step);
    const double dt = (generating_function_phi(m, s, t + fd_step, X, y, cfg) -
                       generating_function_phi(m, s, t - fd_step, X, y, cfg)) / (2 * fd_step);
    const double x0 = alpha_inverse(m, s, t, X, y, cfg);
    const PhasePoint end = flow(m, s, t, {x0, y}, cfg);
    rep.max_ds_error = std::max(rep.max_ds_error, std::fabs(ds - m.value(s, x0, y)));
    rep.max_dt_error = std::max(rep.max_dt_error, std::fabs(dt + m.value(t, X, end.y)));
    ++rep.samples;
  }
  return rep;
}

struct SampleBox {
  double t_lo = 0.0, t_hi = 0.0;
  double x_lo = 0.0, x_hi = 0.0;
  double p_lo = 0.0, p_hi = 0.0;
};

// Largest operator norm of the finite-difference (x, p) Hessian over a sample lattice.
inline double measure_cH(const HamiltonianModel& m, const SampleBox& box, int samples) {
  if (samples < 2) throw ConfigError("check_cH_bound needs at least 2 samples per axis");
  auto lin = [samples](double a, double b, int i) { return a + (b - a) * i / (samples - 1); };
  double worst = 0.0;
  for (int it = 0; it < samples; ++it)
    for (int ix = 0; ix < samples; ++ix)
      for (int ip = 0; ip < samples; ++ip) {
        const double t = lin(box.t_lo, box.t_hi, it);
        const double x = lin(box.x_lo, box.x_hi, ix);
        const double p = lin(box.p_lo, box.p_hi, ip);
        const double e = 1e-5;
        const ValueGrad xp = m.eval(t, x + e, p), xm = m.eval(t, x - e, p);
        const ValueGrad pp = m.eval(t, x, p + e), pm = m.eval(t, x, p - e);
        const double hxx = (xp.dx - xm.dx) / (2 * e);
        const double hpp = (pp.dp - pm.dp) / (2 * e);
        const double hxp = 0.5 * ((pp.dx - pm.dx) + (xp.dp - xm.dp)) / (2 * e);
        const double mean = 0.5 * (hxx + hpp);
        const double rad = std::sqrt(0.25 * (hxx - hpp) * (hxx - hpp) + hxp * hxp);
        worst = std::max(worst, std::fabs(mean) + rad);
      }
  return worst;
}

// Returns the measured bound; throws if it exceeds the declared c_H by more than 5%.
inline double check_cH_bound(const HamiltonianModel& m, const SampleBox& box, int samples) {
  const double measured = measure_cH(m, box, samples);
  if (measured > 1.05 * m.c_H_bound())
    throw ConfigError("hamiltonian.c_H_bound: declared " + std::to_string(m.c_H_bound()) +
                      " but sampled second derivatives reach " + std::to_string(measured));
  return measured;
}

}  // namespace hjminmax
