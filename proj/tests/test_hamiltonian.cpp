#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hjminmax/hamiltonian.hpp"

using namespace hjminmax;

namespace {

HamiltonianModel rotation() { return HamiltonianModel::from_string("x^2+p^2", 2.0); }

// Closed-form rotation flow for H = x^2 + p^2.
PhasePoint rotate(double t, PhasePoint z) {
  return {z.x * std::cos(2 * t) + z.y * std::sin(2 * t), -z.x * std::sin(2 * t) + z.y * std::cos(2 * t)};
}

}  // namespace

TEST(Flow, RotationQuarterTurn) {
  const auto z = flow(rotation(), 0.0, std::numbers::pi / 4, {1.0, 0.0}, {.step = 1e-4});
  EXPECT_NEAR(z.x, 0.0, 1e-8);
  EXPECT_NEAR(z.y, -1.0, 1e-8);
}

TEST(Flow, RotationMatchesClosedForm) {
  const auto m = rotation();
  for (double t : {0.05, 0.3, 1.1}) {
    const PhasePoint z0{0.7, -0.4};
    const auto z = flow(m, 0.0, t, z0, {.step = 1e-4});
    const auto e = rotate(t, z0);
    EXPECT_NEAR(z.x, e.x, 1e-10);
    EXPECT_NEAR(z.y, e.y, 1e-10);
  }
}

TEST(Flow, ZeroHamiltonianIsIdentity) {
  const auto m = HamiltonianModel::from_string("0", 1.0, std::nullopt, {.p_only = true, .convex_in_p = true});
  const auto z = flow(m, 0.0, 3.0, {0.25, -1.5}, {});
  EXPECT_EQ(z.x, 0.25);
  EXPECT_EQ(z.y, -1.5);
}

TEST(Flow, PlaneWaveCharacteristics) {
  const auto m = HamiltonianModel::from_string("p^2/2", 1.0, std::nullopt, {true, true});
  const auto z = flow(m, 0.0, 0.4, {0.1, 0.5}, {});
  EXPECT_NEAR(z.x, 0.3, 1e-12);
  EXPECT_NEAR(z.y, 0.5, 1e-15);
}

TEST(Flow, ReverseTimeInvertsForward) {
  const auto m = HamiltonianModel::from_string("sin(x)*p^2/2+t*p", 2.0);
  const PhasePoint z0{0.3, 0.8};
  const auto z1 = flow(m, 0.0, 0.5, z0, {.step = 1e-3});
  const auto z2 = flow(m, 0.5, 0.0, z1, {.step = 1e-3});
  EXPECT_NEAR(z2.x, z0.x, 1e-11);
  EXPECT_NEAR(z2.y, z0.y, 1e-11);
}

TEST(Flow, ActionOfPOnlyHamiltonian) {
  // Along a straight characteristic the action is tau * (y H'(y) - H(y)).
  const auto m = HamiltonianModel::from_string("-p^3+p^2+p", 8.0, 2.0, {true, false});
  const double y = 0.6, tau = 0.2;
  const auto r = flow_with_action(m, 0.0, tau, {0.0, y}, {});
  const double h = -y * y * y + y * y + y, hp = -3 * y * y + 2 * y + 1;
  EXPECT_NEAR(r.action, tau * (y * hp - h), 1e-12);
}

TEST(AlphaInverse, RotationResidual) {
  const auto m = rotation();
  const double t = 0.1, X = 0.6, y = 0.3;
  ASSERT_LT(t, m.delta_H());
  const double x0 = alpha_inverse(m, 0.0, t, X, y, {.step = 1e-4});
  EXPECT_LE(std::fabs(flow(m, 0.0, t, {x0, y}, {.step = 1e-4}).x - X), 1e-10);
  // The rotation inverts in closed form: x0 = (X - y sin 2t) / cos 2t.
  EXPECT_NEAR(x0, (X - y * std::sin(2 * t)) / std::cos(2 * t), 1e-9);
}

TEST(AlphaInverse, RejectsLongSteps) {
  const auto m = rotation();
  EXPECT_THROW(alpha_inverse(m, 0.0, 0.5, 0.1, 0.1, {}), NumericError);
}

TEST(GeneratingFunction, POnlyIsMinusTauH) {
  const auto m = HamiltonianModel::from_string("-p^3+p^2+p", 8.0, 2.0, {true, false});
  for (double y : {-1.0, 0.0, 0.4, 1.3})
    EXPECT_NEAR(generating_function_phi(m, 0.1, 0.4, 0.7, y, {}), -0.3 * (-y * y * y + y * y + y), 1e-14);
}

TEST(GeneratingFunction, QuadratureAgreesWithClosedForm) {
  const auto m = HamiltonianModel::from_string("p^2/2", 1.0, std::nullopt, {true, true});
  EXPECT_NEAR(phi_quadrature(m, 0.0, 0.5, 0.2, 0.8, {}), -0.5 * 0.32, 1e-10);
}

TEST(GeneratingFunction, DerivativeIdentitiesForRotation) {
  const auto m = rotation();
  const std::vector<PhasePoint> pts{{0.3, 0.1}, {-0.5, 0.4}, {0.9, -0.7}};
  const auto rep = verify_phi_derivatives(m, 0.0, 0.1, pts, {.step = 1e-4}, 1e-4);
  EXPECT_TRUE(rep.pass(1e-5)) << rep.max_ds_error << " " << rep.max_dt_error;
}

TEST(Bounds, RotationHessianMeasuresTwo) {
  const double c = measure_cH(rotation(), {.t_lo = 0, .t_hi = 1, .x_lo = -1, .x_hi = 1, .p_lo = -1, .p_hi = 1}, 9);
  EXPECT_NEAR(c, 2.0, 1e-6);
}

TEST(Bounds, UnderstatedBoundIsRejected) {
  const auto m = HamiltonianModel::from_string("x^2+p^2", 1.0);
  EXPECT_THROW(check_cH_bound(m, {.t_lo = 0, .t_hi = 1, .x_lo = -1, .x_hi = 1, .p_lo = -1, .p_hi = 1}, 9), ConfigError);
}

TEST(Model, MomentumExtensionIsLinearBeyondSupport) {
  const auto m = HamiltonianModel::from_string("-p^3+p^2+p", 8.0, 1.5, {true, false});
  const double hp = -3 * 2.25 + 3 + 1, h = -3.375 + 2.25 + 1.5;
  EXPECT_NEAR(m.value(0, 0, 2.5), h + hp * 1.0, 1e-12);
  EXPECT_NEAR(m.dp(0, 0, 2.5), hp, 1e-12);
  EXPECT_EQ(m.value(0, 0, 1.2), -1.728 + 1.44 + 1.2);
}

TEST(Model, POnlyFlagIsChecked) {
  EXPECT_THROW(HamiltonianModel::from_string("x*p", 1.0, std::nullopt, {.p_only = true}), ConfigError);
  EXPECT_THROW(HamiltonianModel::from_string("p", 0.0), ConfigError);
}

TEST(Property, RotationConservesRadius) {
  const auto m = rotation();
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> d(-2.0, 2.0), tt(0.0, 3.0);
  for (int k = 0; k < 50; ++k) {
    const PhasePoint z0{d(rng), d(rng)};
    const auto z = flow(m, 0.0, tt(rng), z0, {.step = 1e-3});
    EXPECT_NEAR(std::hypot(z.x, z.y), std::hypot(z0.x, z0.y), 1e-7);
  }
}

TEST(Property, FlowComposes) {
  const auto m = HamiltonianModel::from_string("cos(x)*p^2/2+0.1*t*x", 2.0);
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    const PhasePoint z0{d(rng), d(rng)};
    const auto direct = flow(m, 0.0, 0.6, z0, {.step = 1e-3});
    const auto split = flow(m, 0.25, 0.6, flow(m, 0.0, 0.25, z0, {.step = 1e-3}), {.step = 1e-3});
    EXPECT_NEAR(direct.x, split.x, 1e-9);
    EXPECT_NEAR(direct.y, split.y, 1e-9);
  }
}
