#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hjminmax/oracles.hpp"

using namespace hjminmax;

namespace {

HamiltonianModel quadratic() { return HamiltonianModel::from_string("p^2/2", 1.0, std::nullopt, {true, true}); }
HamiltonianModel cubic() { return HamiltonianModel::from_string("-p^3+p^2+p", 14.0, 2.0, {true, false}); }

PiecewiseFunction minus_abs() { return PiecewiseFunction({0.0}, {LinearPiece{0.0, 0.0, 1.0}, LinearPiece{0.0, 0.0, -1.0}}); }
PiecewiseFunction plus_abs() { return PiecewiseFunction({0.0}, {LinearPiece{0.0, 0.0, -1.0}, LinearPiece{0.0, 0.0, 1.0}}); }

// Tent of height 0.25 on [-0.5, 0.5].
PiecewiseFunction hat() {
  return PiecewiseFunction({-0.5, 0.0, 0.5}, {LinearPiece{-0.5, 0.0, 0.0}, LinearPiece{-0.5, 0.0, 0.5},
                                              LinearPiece{0.5, 0.0, -0.5}, LinearPiece{0.5, 0.0, 0.0}});
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double e = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) e = std::max(e, std::fabs(a[k] - b[k]));
  return e;
}

}  // namespace

TEST(FD, TransportShiftsDatum) {
  const auto m = HamiltonianModel::from_string("p", 1.0, std::nullopt, {true, true});
  const auto v = hat();
  const FDConfig cfg{.dx = 1e-3};
  const auto xs = linspace(-1.0, 1.0, 201);
  const auto f = fd_viscosity(m, v, 0.4, xs, cfg);
  std::vector<double> exact;
  for (double x : xs) exact.push_back(v(x - 0.4));
  EXPECT_LE(sup_diff(f.at_time(0.4), exact), 5 * cfg.dx);
}

TEST(FD, ZeroHamiltonianKeepsDatum) {
  const auto m = HamiltonianModel::from_string("0", 1.0, std::nullopt, {true, true});
  const auto v = hat();
  const auto xs = linspace(-1.0, 1.0, 101);
  const auto f = fd_viscosity(m, v, 1.0, xs, {.dx = 1e-2});
  std::vector<double> exact;
  for (double x : xs) exact.push_back(v(x));
  EXPECT_LE(sup_diff(f.at_time(1.0), exact), 1e-14);
}

TEST(FD, ConvexConcaveKink) {
  const auto m = quadratic();
  const FDConfig cfg{.dx = 1e-3};
  const auto f = fd_viscosity(m, minus_abs(), 1.0, {-0.5, 0.0, 0.5}, cfg);
  EXPECT_NEAR(f.at_time(1.0)[1], -0.5, 5 * cfg.dx);
}

TEST(FD, PlaneWaves) {
  const FDConfig cfg{.dx = 1e-3};
  const auto xs = linspace(-1.0, 1.0, 41);
  for (double a : {-1.0, 0.5, 1.0})
    for (const auto& m : {quadratic(), cubic()}) {
      const auto f = fd_viscosity(m, PiecewiseFunction::linear(a), 0.3, xs, cfg, {0.1, 0.3});
      for (std::size_t k = 0; k < xs.size(); ++k) EXPECT_NEAR(f.at_time(0.3)[k], a * xs[k] - 0.3 * m.value(0, 0, a), 5 * cfg.dx);
    }
}

TEST(FD, OutputTimesAreHit) {
  const auto f = fd_viscosity(quadratic(), plus_abs(), 0.5, linspace(-1, 1, 11), {.dx = 1e-2}, {0.0, 0.125, 0.5});
  ASSERT_EQ(f.times.size(), 3u);
  EXPECT_TRUE(f.has_time(0.125));
  EXPECT_EQ(f.scheme, "fd_viscosity");
}

TEST(FD, ConfigErrors) {
  const auto xs = linspace(-1, 1, 11);
  EXPECT_THROW(fd_viscosity(quadratic(), plus_abs(), 0.5, xs, {.dx = 1e-2, .cfl = 1.5}), ConfigError);
  EXPECT_THROW(fd_viscosity(quadratic(), plus_abs(), 0.5, xs, {.dx = 1e-2, .cfl = 0.9, .alpha = 0.1}), ConfigError);
  EXPECT_THROW(fd_viscosity(quadratic(), plus_abs(), 0.5, xs, {.dx = 0.0}), ConfigError);
}

TEST(LaxOleinik, ConcaveKinkGivesMinusHalf) {
  const auto xs = linspace(-2.0, 2.0, 401);
  const auto f = lax_oleinik_min(quadratic(), minus_abs(), 0.0, 1.0, xs, 4);
  EXPECT_NEAR(f.at_time(1.0)[200], -0.5, 1e-12);
}

TEST(LaxOleinik, ConvexKinkStaysAtZero) {
  const auto xs = linspace(-2.0, 2.0, 401);
  const auto f = lax_oleinik_min(quadratic(), plus_abs(), 0.0, 1.0, xs, 4);
  EXPECT_NEAR(f.at_time(1.0)[200], 0.0, 1e-12);
}

TEST(LaxOleinik, PlaneWave) {
  const auto xs = linspace(-2.0, 2.0, 201);
  const auto f = lax_oleinik_min(quadratic(), PiecewiseFunction::linear(0.5), 0.0, 1.0, xs, 5);
  for (std::size_t k = 40; k < 160; ++k) EXPECT_NEAR(f.at_time(1.0)[k], 0.5 * xs[k] - 0.125, 1e-12);
}

TEST(LaxOleinik, GeneralConvexHamiltonianUsesFlow) {
  // Same Hamiltonian without the momentum-only flag goes through the flow-based stage cost.
  const auto m = HamiltonianModel::from_string("p^2/2", 1.0, std::nullopt, {.p_only = false, .convex_in_p = true});
  const auto xs = linspace(-2.0, 2.0, 81);
  const auto f = lax_oleinik_min(m, minus_abs(), 0.0, 1.0, xs, 2, {.step = 1e-2});
  EXPECT_NEAR(f.at_time(1.0)[40], -0.5, 1e-6);
}

TEST(LaxOleinik, RequiresConvexFlag) {
  EXPECT_THROW(lax_oleinik_min(cubic(), minus_abs(), 0.0, 0.1, linspace(-1, 1, 11), 1), ConfigError);
}

TEST(Compare, ReportsWorstPoint) {
  SolutionField a, b;
  a.times = b.times = {0.0, 1.0};
  a.x_grid = b.x_grid = {0.0, 0.5, 1.0};
  a.u = {{0, 0, 0}, {1, 2, 3}};
  b.u = {{0, 0, 0}, {1, 2.5, 3}};
  const auto r = compare(a, b);
  EXPECT_DOUBLE_EQ(r.sup_error, 0.5);
  EXPECT_DOUBLE_EQ(r.worst_t, 1.0);
  EXPECT_DOUBLE_EQ(r.worst_x, 0.5);
  ASSERT_EQ(r.per_time.size(), 2u);
  EXPECT_DOUBLE_EQ(r.per_time[1], 0.5);
  b.times = {0.0, 0.5};
  EXPECT_THROW(compare(a, b), ConfigError);
}

TEST(Property, OraclesAgreeOnConvexScenario) {
  const auto m = quadratic();
  const auto v = minus_abs();
  const double dx = 1e-3;
  const auto xs = linspace(-1.0, 1.0, 201);
  const auto fd = fd_viscosity(m, v, 1.0, xs, {.dx = dx});
  const auto wide = padded_grid(-1.0, 1.0, 201, 1.5);
  const auto lo = trim(lax_oleinik_min(m, v, 0.0, 1.0, wide.x, 4), wide);
  EXPECT_LE(sup_diff(fd.at_time(1.0), lo.at_time(1.0)), 5 * dx + 0.01);
}

TEST(Property, LaxFriedrichsUpdateIsMonotone) {
  const auto m = cubic();
  const double dx = 1e-2, alpha = 9.0, dt = 0.9 * dx / alpha;
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> s(-1.4, 1.4), bump(0.0, 1e-3);
  for (int k = 0; k < 500; ++k) {
    const double u0 = 0.0, um = -s(rng) * dx, up = s(rng) * dx;
    const double base = lf_update(m, 0.0, 0.0, um, u0, up, dx, dt, alpha);
    EXPECT_LE(base, lf_update(m, 0.0, 0.0, um + bump(rng), u0, up, dx, dt, alpha) + 1e-15);
    EXPECT_LE(base, lf_update(m, 0.0, 0.0, um, u0 + bump(rng), up, dx, dt, alpha) + 1e-15);
    EXPECT_LE(base, lf_update(m, 0.0, 0.0, um, u0, up + bump(rng), dx, dt, alpha) + 1e-15);
  }
}

TEST(Property, MomentumWindowForPOnly) {
  const auto w = momentum_window(cubic(), 1.5, 0.3, -1, 1);
  EXPECT_DOUBLE_EQ(w.radius, 1.5);
  EXPECT_EQ(w.max_dxH, 0.0);
  EXPECT_NEAR(w.max_dpH, 8.75, 1e-12);
}
