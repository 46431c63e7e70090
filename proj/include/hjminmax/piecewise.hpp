// Lipschitz initial data built from C^2 pieces joined at kinks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hjminmax/errors.hpp"
#include "hjminmax/expr.hpp"

namespace hjminmax {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double v, double tol = 0.0) const { return v >= lo - tol && v <= hi + tol; }
};

// value + slope * (x - x_ref)
struct LinearPiece {
  double x_ref = 0.0;
  double value = 0.0;
  double slope = 0.0;
};

using Piece = std::variant<LinearPiece, Expression>;

// Piece i covers (b[i-1], b[i]]; the outer pieces extend to infinity.
class PiecewiseFunction {
 public:
  PiecewiseFunction() : pieces_{LinearPiece{}} {}

  PiecewiseFunction(std::vector<double> breakpoints, std::vector<Piece> pieces, double lipschitz_bound = -1.0)
      : breaks_(std::move(breakpoints)), pieces_(std::move(pieces)), lip_(lipschitz_bound) {
    if (pieces_.size() != breaks_.size() + 1)
      throw ConfigError("initial_datum: need exactly one more piece than breakpoints");
    for (std::size_t i = 1; i < breaks_.size(); ++i)
      if (!(breaks_[i] > breaks_[i - 1])) throw ConfigError("initial_datum.breakpoints must be strictly ascending");
    for (const auto& pc : pieces_)
      if (const auto* e = std::get_if<Expression>(&pc); e && (e->mentions(Var::t) || e->mentions(Var::p)))
        throw ConfigError("initial_datum.pieces may only use x");
    for (std::size_t i = 0; i < breaks_.size(); ++i) {
      const double b = breaks_[i];
      const double l = piece_value(i, b), r = piece_value(i + 1, b);
      if (std::fabs(l - r) > 1e-12 * std::max(1.0, std::max(std::fabs(l), std::fabs(r))))
        throw ConfigError("initial_datum: discontinuity at breakpoint " + std::to_string(b));
    }
    if (lip_ < 0.0) lip_ = measured_lipschitz();
  }

  static PiecewiseFunction linear(double slope, double intercept = 0.0) {
    return PiecewiseFunction({}, {LinearPiece{0.0, intercept, slope}});
  }

  static PiecewiseFunction from_expression(const std::string& src) {
    return PiecewiseFunction({}, {Expression::parse(src)});
  }

  const std::vector<double>& breakpoints() const noexcept { return breaks_; }
  const std::vector<Piece>& pieces() const noexcept { return pieces_; }
  std::size_t piece_count() const noexcept { return pieces_.size(); }
  double lipschitz_bound() const noexcept { return lip_; }

  std::size_t piece_index(double x) const {
    return static_cast<std::size_t>(std::lower_bound(breaks_.begin(), breaks_.end(), x) - breaks_.begin());
  }

  // Domain of piece i as (lo, hi]; unbounded ends are +-infinity.
  Interval piece_domain(std::size_t i) const {
    const double inf = std::numeric_limits<double>::infinity();
    return {i == 0 ? -inf : breaks_[i - 1], i == breaks_.size() ? inf : breaks_[i]};
  }

  double piece_value(std::size_t i, double x) const {
    const Piece& pc = pieces_[i];
    if (const auto* l = std::get_if<LinearPiece>(&pc)) return l->value + l->slope * (x - l->x_ref);
    return std::get<Expression>(pc).eval(0.0, x, 0.0);
  }

  double piece_slope(std::size_t i, double x) const {
    const Piece& pc = pieces_[i];
    if (const auto* l = std::get_if<LinearPiece>(&pc)) return l->slope;
    return std::get<Expression>(pc).eval_with_grad(0.0, x, 0.0).dx;
  }

  bool piece_is_linear(std::size_t i) const { return std::holds_alternative<LinearPiece>(pieces_[i]); }

  // At a breakpoint the right piece is used, so resampled nodes are reproduced exactly.
  double operator()(double x) const {
    std::size_t i = piece_index(x);
    if (i < breaks_.size() && breaks_[i] == x) ++i;
    return piece_value(i, x);
  }
  double value(double x) const { return (*this)(x); }

  // Slope of the piece containing x; at a breakpoint this is the left derivative.
  double slope(double x) const { return piece_slope(piece_index(x), x); }

  // Clarke generalized derivative: the slope off the kinks, the interval of one-sided slopes on them.
  Interval clarke(double x) const {
    const std::size_t i = piece_index(x);
    if (i < breaks_.size() && breaks_[i] == x) {
      const double l = piece_slope(i, x), r = piece_slope(i + 1, x);
      return {std::min(l, r), std::max(l, r)};
    }
    const double s = piece_slope(i, x);
    return {s, s};
  }

  Interval clarke_at_break(std::size_t k) const {
    const double b = breaks_[k];
    const double l = piece_slope(k, b), r = piece_slope(k + 1, b);
    return {std::min(l, r), std::max(l, r)};
  }

  // Range of one-sided slopes over [lo, hi], sampled on the nonlinear pieces.
  Interval slope_range(double lo, double hi, int samples_per_piece = 64) const {
    Interval r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    auto take = [&r](double s) {
      r.lo = std::min(r.lo, s);
      r.hi = std::max(r.hi, s);
    };
    const std::size_t i0 = piece_index(lo), i1 = piece_index(hi);
    for (std::size_t i = i0; i <= i1 && i < pieces_.size(); ++i) {
      const Interval d = piece_domain(i);
      const double a = std::max(lo, d.lo), b = std::min(hi, d.hi);
      if (piece_is_linear(i)) {
        take(piece_slope(i, a));
        continue;
      }
      for (int k = 0; k <= samples_per_piece; ++k) take(piece_slope(i, a + (b - a) * k / samples_per_piece));
    }
    return r;
  }

  PiecewiseFunction plus_constant(double c) const {
    std::vector<Piece> ps;
    ps.reserve(pieces_.size());
    for (const auto& pc : pieces_) {
      if (const auto* l = std::get_if<LinearPiece>(&pc)) {
        ps.push_back(LinearPiece{l->x_ref, l->value + c, l->slope});
      } else {
        // Expression pieces get the constant appended in source form.
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.17g", c);
        ps.push_back(Expression::parse("(" + std::get<Expression>(pc).print() + ")+(" + buf + ")"));
      }
    }
    return PiecewiseFunction(breaks_, std::move(ps), lip_);
  }

 private:
  std::vector<double> breaks_;
  std::vector<Piece> pieces_;
  double lip_ = -1.0;

  // Largest slope magnitude; nonlinear unbounded pieces are sampled on a window around the kinks.
  double measured_lipschitz() const {
    double lo = breaks_.empty() ? -1.0 : breaks_.front() - 1.0;
    double hi = breaks_.empty() ? 1.0 : breaks_.back() + 1.0;
    const Interval r = slope_range(lo, hi, 256);
    return std::max(std::fabs(r.lo), std::fabs(r.hi));
  }
};

// Piecewise-linear interpolant through (x_i, u_i), extended linearly past both ends.
inline PiecewiseFunction resample(const std::vector<double>& xs, const std::vector<double>& us) {
  if (xs.size() != us.size() || xs.size() < 2) throw ConfigError("resample needs matching grids of size >= 2");
  const std::size_t n = xs.size();
  std::vector<double> breaks(xs.begin() + 1, xs.end() - 1);
  std::vector<Piece> pieces;
  pieces.reserve(n - 1);
  double lip = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double s = (us[i + 1] - us[i]) / (xs[i + 1] - xs[i]);
    lip = std::max(lip, std::fabs(s));
    // The last piece is anchored at its right node so both ends interpolate exactly.
    if (i + 2 == n && i > 0) pieces.push_back(LinearPiece{xs[i + 1], us[i + 1], s});
    else pieces.push_back(LinearPiece{xs[i], us[i], s});
  }
  return PiecewiseFunction(std::move(breaks), std::move(pieces), lip);
}

}  // namespace hjminmax
