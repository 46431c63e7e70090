// Minmax selector: bottleneck value between the two deep-negative ends of the fiber.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <numeric>
#include <optional>
#include <vector>

#include "hjminmax/errors.hpp"
#include "hjminmax/generating_family.hpp"

namespace hjminmax {

struct Cell {
  std::size_t i = 0;  // x0 index (row)
  std::size_t j = 0;  // y0 index (column)
  bool operator==(const Cell&) const = default;
};

// Row-major grid of values with two terminal sets.
struct BottleneckProblem {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> terminal;  // 0 none, 1 first set, 2 second set

  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

struct BottleneckResult {
  bool connected = false;
  double value = 0.0;
  std::size_t last_cell = 0;
  std::vector<Cell> path;
};

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), 0u); }
  std::uint32_t find(std::uint32_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
  }

 private:
  std::vector<std::uint32_t> parent_;
  std::vector<std::uint32_t> size_;
};

// Order-preserving map from double to unsigned.
inline std::uint64_t sort_key(double d) {
  std::uint64_t b;
  std::memcpy(&b, &d, sizeof b);
  return (b & 0x8000000000000000ull) ? ~b : (b | 0x8000000000000000ull);
}

// Cell indices sorted by value, equal values in row-major order (stable LSD radix sort).
inline std::vector<std::uint32_t> sorted_cells(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::uint64_t> keys(n), keys2(n);
  std::vector<std::uint32_t> idx(n), idx2(n);
  for (std::size_t k = 0; k < n; ++k) {
    keys[k] = sort_key(values[k]);
    idx[k] = static_cast<std::uint32_t>(k);
  }
  constexpr int kBits = 16;
  constexpr std::size_t kBuckets = std::size_t{1} << kBits;
  std::vector<std::uint32_t> count(kBuckets);
  for (int shift = 0; shift < 64; shift += kBits) {
    std::fill(count.begin(), count.end(), 0u);
    bool trivial = true;
    const std::uint64_t first = (keys[0] >> shift) & (kBuckets - 1);
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint64_t d = (keys[k] >> shift) & (kBuckets - 1);
      ++count[d];
      trivial = trivial && d == first;
    }
    if (trivial) continue;
    std::uint32_t sum = 0;
    for (auto& c : count) {
      const std::uint32_t c0 = c;
      c = sum;
      sum += c0;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint64_t d = (keys[k] >> shift) & (kBuckets - 1);
      const std::uint32_t at = count[d]++;
      keys2[at] = keys[k];
      idx2[at] = idx[k];
    }
    keys.swap(keys2);
    idx.swap(idx2);
  }
  return idx;
}

// Shortest 4-connected path from set 1 to set 2 through cells with value <= level.
inline std::vector<Cell> bfs_path(const BottleneckProblem& g, double level) {
  const std::size_t n = g.values.size();
  std::vector<std::int64_t> prev(n, -2);
  std::deque<std::size_t> q;
  for (std::size_t k = 0; k < n; ++k)
    if (g.terminal[k] == 1 && g.values[k] <= level) {
      prev[k] = -1;
      q.push_back(k);
    }
  while (!q.empty()) {
    const std::size_t k = q.front();
    q.pop_front();
    if (g.terminal[k] == 2) {
      std::vector<Cell> path;
      for (std::int64_t c = static_cast<std::int64_t>(k); c >= 0; c = prev[c])
        path.push_back({static_cast<std::size_t>(c) / g.cols, static_cast<std::size_t>(c) % g.cols});
      std::reverse(path.begin(), path.end());
      return path;
    }
    const std::size_t i = k / g.cols, j = k % g.cols;
    const std::size_t nb[4] = {i > 0 ? k - g.cols : n, i + 1 < g.rows ? k + g.cols : n, j > 0 ? k - 1 : n,
                               j + 1 < g.cols ? k + 1 : n};
    for (std::size_t m : nb)
      if (m < n && prev[m] == -2 && g.values[m] <= level) {
        prev[m] = static_cast<std::int64_t>(k);
        q.push_back(m);
      }
  }
  return {};
}

}  // namespace detail

// Kruskal sweep: activate cells by ascending value, uniting 4-neighbours, until the
// two terminal sets share a component. The value is that of the last activated cell.
inline BottleneckResult bottleneck_union_find(const BottleneckProblem& g, bool want_path = true) {
  const std::size_t n = g.values.size();
  BottleneckResult res;
  if (n == 0) return res;
  const auto order = detail::sorted_cells(g.values);
  detail::UnionFind uf(n + 2);
  const auto A = static_cast<std::uint32_t>(n), B = static_cast<std::uint32_t>(n + 1);
  std::vector<std::uint8_t> active(n, 0);
  for (const std::uint32_t k : order) {
    active[k] = 1;
    if (g.terminal[k] == 1) uf.unite(k, A);
    if (g.terminal[k] == 2) uf.unite(k, B);
    const std::size_t i = k / g.cols, j = k % g.cols;
    if (i > 0 && active[k - g.cols]) uf.unite(k, static_cast<std::uint32_t>(k - g.cols));
    if (i + 1 < g.rows && active[k + g.cols]) uf.unite(k, static_cast<std::uint32_t>(k + g.cols));
    if (j > 0 && active[k - 1]) uf.unite(k, k - 1);
    if (j + 1 < g.cols && active[k + 1]) uf.unite(k, k + 1);
    if (uf.find(A) == uf.find(B)) {
      res.connected = true;
      res.value = g.values[k];
      res.last_cell = k;
      break;
    }
  }
  if (res.connected && want_path) res.path = detail::bfs_path(g, res.value);
  return res;
}

// Reference bottleneck: for each distinct level in ascending order, breadth-first search
// from the first terminal set through cells at or below it.
inline std::optional<double> exhaustive_bottleneck(const BottleneckProblem& g) {
  std::vector<double> levels = g.values;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  for (double lv : levels)
    if (!detail::bfs_path(g, lv).empty()) return lv;
  return std::nullopt;
}

// Sampled fiber at one x. Values are relative to base = S(x; x, center_y0).
struct FiberGrid {
  FiberBox box;
  double x = 0.0;
  double base = 0.0;
  std::vector<double> u;  // x0 - x
  std::vector<double> w;  // y0 - center_y0
  BottleneckProblem grid;

  double x0(std::size_t i) const { return x + u[i]; }
  double y0(std::size_t j) const { return box.center_y0 + w[j]; }
};

struct MinmaxResult {
  double value = 0.0;     // grid bottleneck value of S
  double selected = 0.0;  // matched critical value when within tolerance, else value
  std::vector<Cell> path;
  std::vector<double> path_x0;
  std::vector<double> path_y0;
  std::optional<CriticalPoint> matched_critical;
  double match_gap = std::numeric_limits<double>::infinity();
  double tolerance = 0.0;
  bool refined = false;
  bool warning = false;  // gap above tolerance after refinement
  int resolution = 0;
  std::size_t critical_count = 0;
  FiberBox box;
};

struct MinmaxOptions {
  bool want_path = true;
  bool allow_refine = true;
  int max_doublings = 5;
  int n_seeds = 64;
};

namespace detail {

// Builds u/w axes with lines through the critical coordinates and the kinks of v.
inline FiberGrid build_fiber_grid(const OneStepFamily& fam, double x, const FiberBox& box,
                                  const std::vector<CriticalPoint>& crit) {
  FiberGrid fg;
  fg.box = box;
  fg.x = x;
  std::vector<double> eu, ew;
  for (const auto& c : crit) {
    eu.push_back(c.x0 - x);
    ew.push_back(c.y0 - box.center_y0);
  }
  const auto& br = fam.datum().breakpoints();
  auto lo = std::lower_bound(br.begin(), br.end(), x - box.core_x0);
  for (auto it = lo; it != br.end() && *it <= x + box.core_x0; ++it) eu.push_back(*it - x);
  fg.u = graded_axis(box.core_x0, box.radius_x0, box.resolution, eu);
  fg.w = graded_axis(box.core_y0, box.radius_y0, box.resolution, ew);
  const std::size_t nu = fg.u.size(), nw = fg.w.size();
  fg.base = fam.S(x, x, box.center_y0);
  std::vector<double> col(nu), row(nw), y0s(nw);
  const PiecewiseFunction& v = fam.datum();
  for (std::size_t i = 0; i < nu; ++i) col[i] = v(x + fg.u[i]) - fg.base;
  for (std::size_t j = 0; j < nw; ++j) {
    y0s[j] = box.center_y0 + fg.w[j];
    row[j] = fam.phi(x, y0s[j]);
  }
  fg.grid.rows = nu;
  fg.grid.cols = nw;
  fg.grid.values.resize(nu * nw);
  fg.grid.terminal.assign(nu * nw, 0);
  for (std::size_t i = 0; i < nu; ++i) {
    const double dx0 = -fg.u[i];
    double* out = fg.grid.values.data() + i * nw;
    for (std::size_t j = 0; j < nw; ++j) out[j] = col[i] + row[j] + dx0 * y0s[j];
  }
  return fg;
}

inline void mark_terminals(FiberGrid& fg, double lambda) {
  auto& g = fg.grid;
  auto mark = [&](std::size_t i, std::size_t j) {
    const std::size_t k = i * g.cols + j;
    if (g.values[k] > -lambda) return;
    if (fg.u[i] > 0 && fg.w[j] > 0) g.terminal[k] = 1;
    if (fg.u[i] < 0 && fg.w[j] < 0) g.terminal[k] = 2;
  };
  for (std::size_t j = 0; j < g.cols; ++j) {
    mark(0, j);
    mark(g.rows - 1, j);
  }
  for (std::size_t i = 0; i < g.rows; ++i) {
    mark(i, 0);
    mark(i, g.cols - 1);
  }
}

// Grid-scale tolerance: K2 (hu^2 + hw^2) on the core, K2 the largest sampled second
// derivative of S there (second differences straddling a kink of v are skipped).
inline double calibrate_tolerance(const FiberGrid& fg, const OneStepFamily& fam) {
  const auto& g = fg.grid;
  const auto& br = fam.datum().breakpoints();
  auto in_core_u = [&](std::size_t i) { return std::fabs(fg.u[i]) <= fg.box.core_x0 * (1 + 1e-12); };
  auto in_core_w = [&](std::size_t j) { return std::fabs(fg.w[j]) <= fg.box.core_y0 * (1 + 1e-12); };
  double hu = 0.0, hw = 0.0, k2 = 1.0;  // the mixed derivative of S is exactly -1
  for (std::size_t i = 0; i + 1 < g.rows; ++i)
    if (in_core_u(i) && in_core_u(i + 1)) hu = std::max(hu, fg.u[i + 1] - fg.u[i]);
  for (std::size_t j = 0; j + 1 < g.cols; ++j)
    if (in_core_w(j) && in_core_w(j + 1)) hw = std::max(hw, fg.w[j + 1] - fg.w[j]);
  auto second = [](double fm, double f0, double fp, double hm, double hp) {
    return 2.0 * ((fp - f0) / hp - (f0 - fm) / hm) / (hp + hm);
  };
  const std::size_t jstep = std::max<std::size_t>(1, g.cols / 64);
  const std::size_t istep = std::max<std::size_t>(1, g.rows / 64);
  for (std::size_t i = 1; i + 1 < g.rows; ++i) {
    if (!in_core_u(i - 1) || !in_core_u(i + 1)) continue;
    const double a = fg.x0(i - 1), b = fg.x0(i + 1);
    auto it = std::upper_bound(br.begin(), br.end(), a);
    const bool kink = it != br.end() && *it < b;
    for (std::size_t j = 1; j + 1 < g.cols; j += jstep) {
      if (!in_core_w(j)) continue;
      if (!kink)
        k2 = std::max(k2, std::fabs(second(g.at(i - 1, j), g.at(i, j), g.at(i + 1, j), fg.u[i] - fg.u[i - 1],
                                           fg.u[i + 1] - fg.u[i])));
    }
  }
  for (std::size_t i = 0; i < g.rows; i += istep) {
    if (!in_core_u(i)) continue;
    for (std::size_t j = 1; j + 1 < g.cols; ++j) {
      if (!in_core_w(j - 1) || !in_core_w(j + 1)) continue;
      k2 = std::max(k2, std::fabs(second(g.at(i, j - 1), g.at(i, j), g.at(i, j + 1), fg.w[j] - fg.w[j - 1],
                                         fg.w[j + 1] - fg.w[j])));
    }
  }
  return k2 * (hu * hu + hw * hw) + 1e-8;
}

}  // namespace detail

// Adapts the box to the critical points at x (25% margin) and certifies its ring.
inline FiberBox local_box(const OneStepFamily& fam, double x, const FiberBox& box,
                          const std::vector<CriticalPoint>& crit, int max_doublings) {
  FiberBox b = box;
  double umax = 0.0, wmax = 0.0;
  for (const auto& c : crit) {
    umax = std::max(umax, std::fabs(c.x0 - x));
    wmax = std::max(wmax, std::fabs(c.y0 - b.center_y0));
  }
  b.core_x0 = std::max(b.core_x0, 1.25 * umax);
  b.core_y0 = std::max(b.core_y0, 1.25 * wmax);
  b.radius_x0 = std::max(b.radius_x0, 2.0 * b.core_x0);
  b.radius_y0 = std::max(b.radius_y0, 2.0 * b.core_y0);
  double lam = 0.0;
  if (!certify_at(fam, x, b, crit, max_doublings, &lam))
    throw CertificationError("minmax: cannot separate the deep ends of Q at x = " + std::to_string(x));
  b.lambda = lam;
  return b;
}

inline MinmaxResult minmax(const OneStepFamily& fam, double x, const FiberBox& box, const MinmaxOptions& opt = {}) {
  const auto crit = critical_points(fam, x, default_sweep(fam, x, opt.n_seeds));
  FiberBox b = local_box(fam, x, box, crit, opt.max_doublings);
  MinmaxResult res;
  for (int pass = 0; pass < 2; ++pass) {
    FiberGrid fg = detail::build_fiber_grid(fam, x, b, crit);
    detail::mark_terminals(fg, b.lambda);
    const BottleneckResult bn = bottleneck_union_find(fg.grid, opt.want_path);
    if (!bn.connected)
      throw CertificationError("minmax: terminal sets never connect at x = " + std::to_string(x));
    res = MinmaxResult{};
    res.value = bn.value + fg.base;
    res.resolution = b.resolution;
    res.box = b;
    res.critical_count = crit.size();
    res.path = bn.path;
    for (const auto& c : res.path) {
      res.path_x0.push_back(fg.x0(c.i));
      res.path_y0.push_back(fg.y0(c.j));
    }
    res.tolerance = detail::calibrate_tolerance(fg, fam);
    for (const auto& c : crit) {
      const double gap = std::fabs(c.value - res.value);
      if (gap < res.match_gap) {
        res.match_gap = gap;
        res.matched_critical = c;
      }
    }
    res.refined = pass == 1;
    if (res.match_gap <= res.tolerance || !opt.allow_refine || pass == 1) break;
    b.resolution = 2 * b.resolution - 1;
  }
  res.warning = !(res.match_gap <= res.tolerance);
  res.selected = res.warning ? res.value : res.matched_critical->value;
  return res;
}

// Min over enumerated critical values; valid for Hamiltonians convex in p.
inline double min_select(const OneStepFamily& fam, double x) {
  if (!fam.model().convex_in_p()) throw ConfigError("min_select requires a Hamiltonian flagged convex_in_p");
  const auto crit = critical_points(fam, x);
  if (crit.empty()) throw NumericError("min_select: no critical points at x = " + std::to_string(x));
  double m = crit.front().value;
  for (const auto& c : crit) m = std::min(m, c.value);
  return m;
}

struct StabilityGap {
  double value_gap = 0.0;    // |R_A(x) - R_B(x)|
  double sup_norm = 0.0;     // sup over the fiber grid of |S_A - S_B|
  double grid_modulus = 0.0; // larger of the two selector tolerances
  bool holds() const { return value_gap <= sup_norm + 2.0 * grid_modulus; }
};

inline StabilityGap stability_gap(const OneStepFamily& famA, const OneStepFamily& famB, double x, const FiberBox& box,
                                  const MinmaxOptions& opt = {}) {
  MinmaxOptions o = opt;
  o.want_path = false;
  const MinmaxResult a = minmax(famA, x, box, o);
  const MinmaxResult b = minmax(famB, x, box, o);
  StabilityGap g;
  g.value_gap = std::fabs(a.selected - b.selected);
  g.grid_modulus = std::max(a.tolerance, b.tolerance);
  // Sup norm over the union of both grids' core and tails, sampled on A's axes.
  const auto critA = critical_points(famA, x);
  const FiberGrid fg = detail::build_fiber_grid(famA, x, a.box, critA);
  for (std::size_t i = 0; i < fg.u.size(); ++i)
    for (std::size_t j = 0; j < fg.w.size(); ++j) {
      const double x0 = fg.x0(i), y0 = fg.y0(j);
      g.sup_norm = std::max(g.sup_norm, std::fabs(famA.S(x, x0, y0) - famB.S(x, x0, y0)));
    }
  return g;
}

}  // namespace hjminmax
