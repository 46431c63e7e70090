// Sampled u(t, x) on a space-time grid.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hjminmax/errors.hpp"

namespace hjminmax {

struct SolutionField {
  std::vector<double> times;
  std::vector<double> x_grid;
  std::vector<std::vector<double>> u;  // u[time][space]
  std::string scheme;                  // minmax_1step, iterated(n), min_oracle, fd_viscosity
  double lip_space = 0.0;
  double lip_time = 0.0;

  const std::vector<double>& at_time(double t, double tol = 1e-12) const {
    for (std::size_t k = 0; k < times.size(); ++k)
      if (std::fabs(times[k] - t) <= tol * (1.0 + std::fabs(t))) return u[k];
    throw ConfigError("field '" + scheme + "' has no slice at t = " + std::to_string(t));
  }

  bool has_time(double t, double tol = 1e-12) const {
    return std::any_of(times.begin(), times.end(),
                       [&](double s) { return std::fabs(s - t) <= tol * (1.0 + std::fabs(t)); });
  }
};

inline std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> xs(n);
  for (std::size_t k = 0; k < n; ++k) xs[k] = n == 1 ? a : a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1);
  if (n > 1) xs.back() = b;
  return xs;
}

// Uniform grid with spacing h over [a, b] padded by at least pad on each side.
struct PaddedGrid {
  std::vector<double> x;
  std::size_t first = 0;  // index of a
  std::size_t count = 0;  // nodes inside [a, b]

  std::vector<double> window(const std::vector<double>& row) const {
    return {row.begin() + static_cast<std::ptrdiff_t>(first), row.begin() + static_cast<std::ptrdiff_t>(first + count)};
  }
};

inline PaddedGrid padded_grid(double a, double b, std::size_t n, double pad) {
  PaddedGrid g;
  const double h = (b - a) / static_cast<double>(n - 1);
  const auto extra = static_cast<std::size_t>(std::ceil(pad / h - 1e-9));
  g.first = extra;
  g.count = n;
  const std::size_t total = n + 2 * extra;
  g.x.resize(total);
  for (std::size_t k = 0; k < total; ++k)
    g.x[k] = a + h * (static_cast<double>(k) - static_cast<double>(extra));
  g.x[extra] = a;
  g.x[extra + n - 1] = b;
  return g;
}

// Restricts every slice of a field to the unpadded window.
inline SolutionField trim(const SolutionField& f, const PaddedGrid& g) {
  SolutionField out = f;
  out.x_grid = g.window(f.x_grid);
  for (auto& row : out.u) row = g.window(row);
  return out;
}

}  // namespace hjminmax
